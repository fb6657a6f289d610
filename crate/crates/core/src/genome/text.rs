//! Line-oriented genome text, the canonical wire and checkpoint form.
//!
//! ```text
//! genome <id> <fitness-hex|unevaluated> <best_epoch> <provenance> <init_mode>
//! node <id> <input|hidden|output> <size_x> <size_y> <num>/<den>
//! edge <id> <input_node> <output_node> <0|1> <conv_x> <conv_y>
//! w <hex> <hex> ...
//! ```
//!
//! Nodes and edges appear in innovation order; every `edge` line is followed
//! by exactly one `w` line carrying its full filter in row-major order,
//! weights as canonical hexfloats. Velocities are deliberately absent: a
//! deserialized genome always starts training from zero momentum. Because
//! every field has one canonical rendering, serialization is byte-stable and
//! suitable for hashing.

use super::{
    CnnGenome, Depth, EdgeGene, Fitness, GenomeError, Matrix, NodeGene, NodeType, Provenance,
    WeightInitMode,
};
use crate::determinism::{hexfloat_decode, hexfloat_encode};
use std::fmt::Write as _;
use std::iter::Peekable;

pub fn serialize_genome(genome: &CnnGenome) -> String {
    let mut out = String::new();
    let fitness = match genome.fitness() {
        Fitness::Evaluated(v) => hexfloat_encode(v).expect("fitness is finite"),
        Fitness::Unevaluated => "unevaluated".to_string(),
    };
    writeln!(
        out,
        "genome {} {} {} {} {}",
        genome.genome_id(),
        fitness,
        genome.best_epoch(),
        genome.generated_by().as_str(),
        genome.weight_init_mode().as_str(),
    )
    .unwrap();
    for node in genome.nodes() {
        writeln!(
            out,
            "node {} {} {} {} {}",
            node.innovation_id,
            node.node_type.as_str(),
            node.size_x,
            node.size_y,
            node.depth,
        )
        .unwrap();
    }
    for edge in genome.edges() {
        writeln!(
            out,
            "edge {} {} {} {} {} {}",
            edge.innovation_id,
            edge.input_node_id,
            edge.output_node_id,
            u8::from(edge.enabled),
            edge.weights.width(),
            edge.weights.height(),
        )
        .unwrap();
        out.push('w');
        for &v in edge.weights.values() {
            out.push(' ');
            out.push_str(&hexfloat_encode(v).expect("weights are finite"));
        }
        out.push('\n');
    }
    out
}

/// Parses one complete genome; trailing content is an error.
pub fn deserialize_genome(text: &str) -> Result<CnnGenome, GenomeError> {
    let mut lines = text.lines().enumerate().peekable();
    let genome = parse_block(&mut lines)?;
    if let Some((idx, line)) = lines.next() {
        return Err(parse_err(idx + 1, format!("unexpected trailing line {line:?}")));
    }
    Ok(genome)
}

/// Parses a genome block from an enumerated line stream, consuming exactly
/// the lines that belong to it. Container formats (checkpoints, work units)
/// interleave genome blocks with their own records and rely on this stopping
/// at the first foreign line.
pub(crate) fn parse_block<'a, I>(lines: &mut Peekable<I>) -> Result<CnnGenome, GenomeError>
where
    I: Iterator<Item = (usize, &'a str)>,
{
    let (idx, header) = lines
        .next()
        .ok_or_else(|| parse_err(0, "expected genome header, found end of input"))?;
    let line_no = idx + 1;
    let fields: Vec<&str> = header.split(' ').collect();
    if fields.len() != 6 || fields[0] != "genome" {
        return Err(parse_err(line_no, "expected `genome <id> <fitness> <best_epoch> <provenance> <init_mode>`"));
    }
    let genome_id = parse_u64(fields[1], line_no, "genome id")?;
    let fitness = if fields[2] == "unevaluated" {
        Fitness::Unevaluated
    } else {
        Fitness::Evaluated(
            hexfloat_decode(fields[2]).map_err(|e| parse_err(line_no, format!("bad fitness: {e}")))?,
        )
    };
    let best_epoch = parse_u64(fields[3], line_no, "best epoch")? as u32;
    let provenance = Provenance::parse(fields[4])
        .ok_or_else(|| parse_err(line_no, format!("unknown provenance {:?}", fields[4])))?;
    let init_mode = WeightInitMode::parse(fields[5])
        .ok_or_else(|| parse_err(line_no, format!("unknown weight init mode {:?}", fields[5])))?;

    let mut nodes = Vec::new();
    while let Some((_, line)) = lines.peek() {
        if !line.starts_with("node ") {
            break;
        }
        let (idx, line) = lines.next().unwrap();
        nodes.push(parse_node(line, idx + 1)?);
    }

    let mut edges = Vec::new();
    while let Some((_, line)) = lines.peek() {
        if !line.starts_with("edge ") {
            break;
        }
        let (idx, line) = lines.next().unwrap();
        let (edge_fields, want) = parse_edge_header(line, idx + 1)?;
        let (widx, wline) = lines
            .next()
            .ok_or_else(|| parse_err(idx + 2, "expected `w` line after edge"))?;
        edges.push(parse_edge_weights(edge_fields, want, wline, widx + 1)?);
    }

    let mut genome = CnnGenome::new(genome_id, nodes, edges, init_mode)?;
    genome.set_fitness(fitness);
    genome.set_best_epoch(best_epoch);
    genome.set_generated_by(provenance);
    Ok(genome)
}

fn parse_node(line: &str, line_no: usize) -> Result<NodeGene, GenomeError> {
    let fields: Vec<&str> = line.split(' ').collect();
    if fields.len() != 6 {
        return Err(parse_err(line_no, "expected `node <id> <type> <size_x> <size_y> <depth>`"));
    }
    let node_type = NodeType::parse(fields[2])
        .ok_or_else(|| parse_err(line_no, format!("unknown node type {:?}", fields[2])))?;
    let depth = Depth::parse(fields[5])
        .map_err(|e| parse_err(line_no, format!("bad depth: {e}")))?;
    Ok(NodeGene {
        innovation_id: parse_u64(fields[1], line_no, "node id")?,
        node_type,
        size_x: parse_u32(fields[3], line_no, "size_x")?,
        size_y: parse_u32(fields[4], line_no, "size_y")?,
        depth,
    })
}

struct EdgeFields {
    innovation_id: u64,
    input_node_id: u64,
    output_node_id: u64,
    enabled: bool,
}

fn parse_edge_header(line: &str, line_no: usize) -> Result<(EdgeFields, (usize, usize)), GenomeError> {
    let fields: Vec<&str> = line.split(' ').collect();
    if fields.len() != 7 {
        return Err(parse_err(
            line_no,
            "expected `edge <id> <input> <output> <enabled> <conv_x> <conv_y>`",
        ));
    }
    let enabled = match fields[4] {
        "0" => false,
        "1" => true,
        other => return Err(parse_err(line_no, format!("enabled flag must be 0 or 1, got {other:?}"))),
    };
    let conv_x = parse_u32(fields[5], line_no, "conv_x")? as usize;
    let conv_y = parse_u32(fields[6], line_no, "conv_y")? as usize;
    if conv_x == 0 || conv_y == 0 {
        return Err(parse_err(line_no, "filter dimensions must be positive"));
    }
    Ok((
        EdgeFields {
            innovation_id: parse_u64(fields[1], line_no, "edge id")?,
            input_node_id: parse_u64(fields[2], line_no, "input node id")?,
            output_node_id: parse_u64(fields[3], line_no, "output node id")?,
            enabled,
        },
        (conv_x, conv_y),
    ))
}

fn parse_edge_weights(
    fields: EdgeFields,
    (conv_x, conv_y): (usize, usize),
    wline: &str,
    line_no: usize,
) -> Result<EdgeGene, GenomeError> {
    let mut tokens = wline.split(' ');
    if tokens.next() != Some("w") {
        return Err(parse_err(line_no, "expected `w` line after edge"));
    }
    let mut weights = Matrix::zeros(conv_x, conv_y);
    let slots = weights.values_mut();
    let mut filled = 0usize;
    for token in tokens {
        if filled == slots.len() {
            return Err(parse_err(line_no, format!("expected {} weights, found more", slots.len())));
        }
        slots[filled] = hexfloat_decode(token)
            .map_err(|e| parse_err(line_no, format!("bad weight: {e}")))?;
        filled += 1;
    }
    if filled != slots.len() {
        return Err(parse_err(
            line_no,
            format!("expected {} weights, found {filled}", slots.len()),
        ));
    }
    Ok(EdgeGene {
        innovation_id: fields.innovation_id,
        input_node_id: fields.input_node_id,
        output_node_id: fields.output_node_id,
        enabled: fields.enabled,
        weights,
        velocity: Matrix::zeros(conv_x, conv_y),
    })
}

fn parse_u64(token: &str, line_no: usize, what: &str) -> Result<u64, GenomeError> {
    token
        .parse::<u64>()
        .map_err(|_| parse_err(line_no, format!("bad {what} {token:?}")))
}

fn parse_u32(token: &str, line_no: usize, what: &str) -> Result<u32, GenomeError> {
    token
        .parse::<u32>()
        .map_err(|_| parse_err(line_no, format!("bad {what} {token:?}")))
}

fn parse_err(line: usize, message: impl Into<String>) -> GenomeError {
    GenomeError::Parse { line, message: message.into() }
}
