//! Mid-training checkpoints. A checkpoint captures the entire epoch-loop
//! state: current weights and velocities, the best-epoch snapshot, the rng,
//! the live hyperparameter values and the error log. Resuming from one and
//! finishing produces bit-identical results to a run that was never
//! interrupted.
//!
//! Layout, all on one file:
//!
//! ```text
//! training_checkpoint 1
//! work <work_id>
//! progress <epochs_completed> <total_epochs>
//! rng <state>
//! hyper <momentum> <learning_rate> <weight_decay>
//! errors <hex>...
//! best (none | <epoch> <error-hex>)
//! <genome block with the current weights>
//! v <edge_id> <hex>...     one velocity line per edge
//! b <edge_id> <hex>...     best weights, present when best is not none
//! ```
//!
//! Writes go through a sibling temp file and a rename, so a crash never
//! leaves a torn checkpoint behind.

use super::{BestSnapshot, CheckpointOptions, HyperState, LoopState, TrainError, TrainOptions};
use crate::determinism::{hexfloat_decode, hexfloat_encode, PortableRng};
use crate::genome::{parse_block, serialize_genome, CnnGenome, Fitness};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub(super) fn write(
    genome: &CnnGenome,
    state: &LoopState,
    copts: &CheckpointOptions,
    topts: &TrainOptions,
) -> Result<(), TrainError> {
    let mut out = String::new();
    writeln!(out, "training_checkpoint 1").unwrap();
    writeln!(out, "work {}", copts.work_id).unwrap();
    writeln!(out, "progress {} {}", state.epoch, topts.epochs).unwrap();
    writeln!(out, "rng {}", state.rng.state()).unwrap();
    writeln!(
        out,
        "hyper {} {} {}",
        hex(state.hyper.momentum),
        hex(state.hyper.learning_rate),
        hex(state.hyper.weight_decay),
    )
    .unwrap();
    out.push_str("errors");
    for &e in &state.epoch_errors {
        out.push(' ');
        out.push_str(&hex(e));
    }
    out.push('\n');
    match &state.best {
        Some(best) => writeln!(out, "best {} {}", best.epoch, hex(best.error)).unwrap(),
        None => out.push_str("best none\n"),
    }
    out.push_str(&serialize_genome(genome));
    for edge in genome.edges() {
        write!(out, "v {}", edge.innovation_id).unwrap();
        for &v in edge.velocity.values() {
            out.push(' ');
            out.push_str(&hex(v));
        }
        out.push('\n');
    }
    if let Some(best) = &state.best {
        for (edge, weights) in genome.edges().iter().zip(&best.weights) {
            write!(out, "b {}", edge.innovation_id).unwrap();
            for &w in weights {
                out.push(' ');
                out.push_str(&hex(w));
            }
            out.push('\n');
        }
    }

    let tmp = sibling_tmp(&copts.path);
    let io = |source| TrainError::CheckpointIo { path: copts.path.clone(), source };
    fs::write(&tmp, out).map_err(io)?;
    fs::rename(&tmp, &copts.path).map_err(io)?;
    Ok(())
}

/// Loads a checkpoint, replacing `genome`'s weights and velocities with the
/// saved ones, and returns the loop state to continue from. The checkpoint
/// must belong to the same work unit, the same total-epoch budget and the
/// same topology.
pub(super) fn resume(
    genome: &mut CnnGenome,
    copts: &CheckpointOptions,
    topts: &TrainOptions,
) -> Result<LoopState, TrainError> {
    let text = fs::read_to_string(&copts.path)
        .map_err(|source| TrainError::CheckpointIo { path: copts.path.clone(), source })?;
    let parsed = parse_checkpoint(&text)
        .map_err(|message| TrainError::CheckpointFormat { path: copts.path.clone(), message })?;

    let mismatch = |message: String| TrainError::CheckpointMismatch { path: copts.path.clone(), message };
    if parsed.work_id != copts.work_id {
        return Err(mismatch(format!(
            "written for work unit {}, resuming work unit {}",
            parsed.work_id, copts.work_id
        )));
    }
    if parsed.total_epochs != topts.epochs {
        return Err(mismatch(format!(
            "written for a {}-epoch run, resuming a {}-epoch run",
            parsed.total_epochs, topts.epochs
        )));
    }
    if !same_structure(genome, &parsed.genome) {
        return Err(mismatch("genome structure differs from the checkpointed one".to_string()));
    }

    let mut restored = parsed.genome;
    for (edge, velocity) in restored.edges_mut().iter_mut().zip(&parsed.velocities) {
        edge.velocity.values_mut().copy_from_slice(velocity);
    }
    *genome = restored;
    Ok(LoopState {
        epoch: parsed.epochs_done,
        rng: parsed.rng,
        hyper: parsed.hyper,
        epoch_errors: parsed.errors,
        best: parsed.best.map(|(epoch, error)| BestSnapshot {
            epoch,
            error,
            weights: parsed.best_weights.expect("validated with best"),
        }),
    })
}

fn hex(v: f64) -> String {
    hexfloat_encode(v).expect("checkpoint values are finite")
}

fn sibling_tmp(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

/// True when the two genomes describe the same network, weights aside.
fn same_structure(a: &CnnGenome, b: &CnnGenome) -> bool {
    a.genome_id() == b.genome_id()
        && a.nodes() == b.nodes()
        && a.edges().len() == b.edges().len()
        && a.edges().iter().zip(b.edges()).all(|(x, y)| {
            x.innovation_id == y.innovation_id
                && x.input_node_id == y.input_node_id
                && x.output_node_id == y.output_node_id
                && x.enabled == y.enabled
                && x.weights.width() == y.weights.width()
                && x.weights.height() == y.weights.height()
        })
}

struct Parsed {
    work_id: u64,
    epochs_done: u32,
    total_epochs: u32,
    rng: PortableRng,
    hyper: HyperState,
    errors: Vec<f64>,
    best: Option<(u32, f64)>,
    genome: CnnGenome,
    velocities: Vec<Vec<f64>>,
    best_weights: Option<Vec<Vec<f64>>>,
}

fn parse_checkpoint(text: &str) -> Result<Parsed, String> {
    let mut lines = text.lines().enumerate().peekable();
    let mut next = |what: &str| -> Result<(usize, &str), String> {
        lines.next().ok_or_else(|| format!("missing {what}"))
    };

    let (_, head) = next("header")?;
    if head != "training_checkpoint 1" {
        return Err(format!("not a training checkpoint: first line {head:?}"));
    }
    let work_id = field_u64(next("work line")?, "work")?;
    let (pline_no, pline) = next("progress line")?;
    let progress: Vec<&str> = pline.split(' ').collect();
    if progress.len() != 3 || progress[0] != "progress" {
        return Err(format!("line {}: expected `progress <done> <total>`", pline_no + 1));
    }
    let epochs_done: u32 = progress[1].parse().map_err(|_| format!("bad epoch count {:?}", progress[1]))?;
    let total_epochs: u32 = progress[2].parse().map_err(|_| format!("bad epoch total {:?}", progress[2]))?;

    let rng_state = field_u64(next("rng line")?, "rng")?;
    let rng = PortableRng::from_state(rng_state).map_err(|e| e.to_string())?;

    let (hline_no, hline) = next("hyper line")?;
    let hfields: Vec<&str> = hline.split(' ').collect();
    if hfields.len() != 4 || hfields[0] != "hyper" {
        return Err(format!("line {}: expected `hyper <momentum> <learning_rate> <weight_decay>`", hline_no + 1));
    }
    let hyper = HyperState {
        momentum: decode(hfields[1])?,
        learning_rate: decode(hfields[2])?,
        weight_decay: decode(hfields[3])?,
    };

    let (eline_no, eline) = next("errors line")?;
    let mut etokens = eline.split(' ');
    if etokens.next() != Some("errors") {
        return Err(format!("line {}: expected `errors ...`", eline_no + 1));
    }
    let errors: Vec<f64> = etokens.map(decode).collect::<Result<_, _>>()?;
    if errors.len() != epochs_done as usize {
        return Err(format!(
            "{} epoch errors recorded but progress says {epochs_done}",
            errors.len()
        ));
    }

    let (bline_no, bline) = next("best line")?;
    let bfields: Vec<&str> = bline.split(' ').collect();
    let best: Option<(u32, f64)> = match bfields.as_slice() {
        ["best", "none"] => None,
        ["best", epoch, error] => Some((
            epoch.parse().map_err(|_| format!("bad best epoch {epoch:?}"))?,
            decode(error)?,
        )),
        _ => return Err(format!("line {}: expected `best none` or `best <epoch> <error>`", bline_no + 1)),
    };

    let genome = parse_block(&mut lines).map_err(|e| e.to_string())?;
    if genome.fitness() != Fitness::Unevaluated {
        return Err("checkpointed genome should be mid-training, not evaluated".to_string());
    }

    let mut velocities = Vec::with_capacity(genome.edges().len());
    for edge in genome.edges() {
        velocities.push(value_row(&mut lines, "v", edge.innovation_id, edge.weights.len())?);
    }
    let best_weights = match best {
        Some(_) => {
            let mut rows = Vec::with_capacity(genome.edges().len());
            for edge in genome.edges() {
                rows.push(value_row(&mut lines, "b", edge.innovation_id, edge.weights.len())?);
            }
            Some(rows)
        }
        None => None,
    };
    if let Some((n, line)) = lines.next() {
        return Err(format!("line {}: unexpected trailing line {line:?}", n + 1));
    }

    Ok(Parsed {
        work_id,
        epochs_done,
        total_epochs,
        rng,
        hyper,
        errors,
        best,
        genome,
        velocities,
        best_weights,
    })
}

fn field_u64((line_no, line): (usize, &str), keyword: &str) -> Result<u64, String> {
    match line.split(' ').collect::<Vec<_>>().as_slice() {
        [k, value] if *k == keyword => {
            value.parse().map_err(|_| format!("line {}: bad {keyword} value {value:?}", line_no + 1))
        }
        _ => Err(format!("line {}: expected `{keyword} <value>`", line_no + 1)),
    }
}

fn decode(token: &str) -> Result<f64, String> {
    hexfloat_decode(token).map_err(|e| e.to_string())
}

fn value_row<'a, I>(
    lines: &mut std::iter::Peekable<I>,
    keyword: &str,
    edge_id: u64,
    expect: usize,
) -> Result<Vec<f64>, String>
where
    I: Iterator<Item = (usize, &'a str)>,
{
    let (line_no, line) = lines
        .next()
        .ok_or_else(|| format!("missing `{keyword}` line for edge {edge_id}"))?;
    let mut tokens = line.split(' ');
    if tokens.next() != Some(keyword) {
        return Err(format!("line {}: expected `{keyword}` line for edge {edge_id}", line_no + 1));
    }
    let id: u64 = tokens
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| format!("line {}: missing edge id", line_no + 1))?;
    if id != edge_id {
        return Err(format!("line {}: `{keyword}` line for edge {id}, expected {edge_id}", line_no + 1));
    }
    let values: Vec<f64> = tokens.map(decode).collect::<Result<_, _>>()?;
    if values.len() != expect {
        return Err(format!(
            "line {}: edge {edge_id} carries {} values, expected {expect}",
            line_no + 1,
            values.len()
        ));
    }
    Ok(values)
}
