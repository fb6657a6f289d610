//! The unit of distributed work and its result, as self-describing text.
//! A unit carries everything a worker needs (genome with weights, seed,
//! epochs, hyperparameters), so evaluating one is a pure function and any
//! two honest evaluations produce byte-identical trained genomes. Results
//! are compared by a digest over that canonical text.

use crate::determinism::hexfloat_encode;
use crate::evolution::{SearchConfig, WorkItem};
use crate::genome::{parse_block, serialize_genome, CnnGenome, Fitness, GenomeError};
use crate::textio::{failure, field_u64, field_values, take_line, ParseFailure};
use crate::training::Hyperparameters;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorkError {
    #[error("work text line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Genome(#[from] GenomeError),
}

impl From<ParseFailure> for WorkError {
    fn from(f: ParseFailure) -> Self {
        WorkError::Parse {
            line: f.line,
            message: f.message,
        }
    }
}

/// Lowercase hex SHA-256 of the canonical genome text. The quorum check
/// compares these, never in-memory structures.
pub fn genome_digest(genome_text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(genome_text.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in hasher.finalize() {
        write!(out, "{byte:02x}").unwrap();
    }
    out
}

/// One training assignment as shipped to a worker.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkUnit {
    pub work_id: u64,
    pub training_seed: u64,
    pub epochs: u32,
    /// Copies of this unit that must agree before the result counts.
    pub quorum: u32,
    pub hyper: Hyperparameters,
    pub genome: CnnGenome,
}

impl WorkUnit {
    pub fn new(item: WorkItem, config: &SearchConfig) -> WorkUnit {
        WorkUnit {
            work_id: item.work_id,
            training_seed: item.training_seed,
            epochs: config.epochs,
            quorum: config.quorum,
            hyper: config.hyper,
            genome: item.genome,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("work_unit 1\n");
        writeln!(out, "work_id {}", self.work_id).unwrap();
        writeln!(out, "seed {}", self.training_seed).unwrap();
        writeln!(out, "epochs {}", self.epochs).unwrap();
        writeln!(out, "quorum {}", self.quorum).unwrap();
        let h = &self.hyper;
        let values = [
            h.momentum,
            h.momentum_scale,
            h.momentum_limit,
            h.learning_rate,
            h.learning_rate_scale,
            h.learning_rate_limit,
            h.weight_decay,
            h.weight_decay_scale,
            h.weight_decay_limit,
        ];
        let values: Vec<String> = values
            .iter()
            .map(|&v| hexfloat_encode(v).expect("hyperparameters are finite"))
            .collect();
        writeln!(out, "hyper {}", values.join(" ")).unwrap();
        out.push_str(&serialize_genome(&self.genome));
        out
    }

    pub fn from_text(text: &str) -> Result<WorkUnit, WorkError> {
        let mut lines = text.lines().enumerate().peekable();
        let (_, magic) = take_line(&mut lines)?;
        if magic != "work_unit 1" {
            return Err(failure(1, "expected `work_unit 1`").into());
        }
        let work_id = field_u64(&mut lines, "work_id")?;
        let training_seed = field_u64(&mut lines, "seed")?;
        let epochs = field_u64(&mut lines, "epochs")? as u32;
        let quorum = field_u64(&mut lines, "quorum")? as u32;
        if quorum == 0 {
            return Err(failure(5, "quorum must be at least 1").into());
        }
        let (line, values) = field_values(&mut lines, "hyper", 9)?;
        let mut h = [0.0f64; 9];
        for (slot, token) in h.iter_mut().zip(&values) {
            *slot = crate::textio::parse_hex(token, line)?;
        }
        let hyper = Hyperparameters {
            momentum: h[0],
            momentum_scale: h[1],
            momentum_limit: h[2],
            learning_rate: h[3],
            learning_rate_scale: h[4],
            learning_rate_limit: h[5],
            weight_decay: h[6],
            weight_decay_scale: h[7],
            weight_decay_limit: h[8],
        };
        let genome = parse_block(&mut lines)?;
        if let Some((idx, _)) = lines.next() {
            return Err(failure(idx + 1, "trailing content").into());
        }
        Ok(WorkUnit {
            work_id,
            training_seed,
            epochs,
            quorum,
            hyper,
            genome,
        })
    }
}

/// A trained genome coming back from a worker. The digest is recomputed
/// and checked on receipt, so a result that lies about its own content
/// never reaches quorum counting.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkResult {
    pub work_id: u64,
    pub digest: String,
    pub genome: CnnGenome,
}

impl WorkResult {
    /// Wraps a trained genome, deriving the digest from its canonical text.
    pub fn from_trained(work_id: u64, genome: CnnGenome) -> WorkResult {
        assert!(
            genome.fitness() != Fitness::Unevaluated,
            "a result must carry a trained genome"
        );
        let digest = genome_digest(&serialize_genome(&genome));
        WorkResult {
            work_id,
            digest,
            genome,
        }
    }

    pub fn fitness(&self) -> f64 {
        match self.genome.fitness() {
            Fitness::Evaluated(f) => f,
            Fitness::Unevaluated => unreachable!("results always carry trained genomes"),
        }
    }

    pub fn best_epoch(&self) -> u32 {
        self.genome.best_epoch()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("work_result 1\n");
        writeln!(out, "work_id {}", self.work_id).unwrap();
        writeln!(out, "digest {}", self.digest).unwrap();
        out.push_str(&serialize_genome(&self.genome));
        out
    }

    /// Parses and verifies a result: the digest line must match the genome
    /// text it arrived with, and the genome must carry a fitness.
    pub fn from_text(text: &str) -> Result<WorkResult, WorkError> {
        let mut lines = text.lines().enumerate().peekable();
        let (_, magic) = take_line(&mut lines)?;
        if magic != "work_result 1" {
            return Err(failure(1, "expected `work_result 1`").into());
        }
        let work_id = field_u64(&mut lines, "work_id")?;
        let (line, digest) = field_values(&mut lines, "digest", 1)?;
        let digest = digest.into_iter().next().unwrap();
        if digest.len() != 64 || !digest.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()) {
            return Err(failure(line, "digest must be 64 lowercase hex digits").into());
        }
        let genome = parse_block(&mut lines)?;
        if let Some((idx, _)) = lines.next() {
            return Err(failure(idx + 1, "trailing content").into());
        }
        if genome.fitness() == Fitness::Unevaluated {
            return Err(failure(line, "result genome carries no fitness").into());
        }
        if genome_digest(&serialize_genome(&genome)) != digest {
            return Err(failure(line, "digest does not match the genome text").into());
        }
        Ok(WorkResult {
            work_id,
            digest,
            genome,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{SearchConfig, SearchState};

    fn sample_unit() -> WorkUnit {
        let mut state = SearchState::new(SearchConfig {
            population_size: 3,
            input_x: 6,
            input_y: 6,
            classes: 2,
            quorum: 2,
            ..SearchConfig::default()
        });
        let config = state.config().clone();
        WorkUnit::new(state.generate_work(), &config)
    }

    #[test]
    fn units_round_trip_byte_for_byte() {
        let unit = sample_unit();
        let text = unit.to_text();
        let back = WorkUnit::from_text(&text).unwrap();
        assert_eq!(back, unit);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn results_round_trip_and_verify_their_digest() {
        let unit = sample_unit();
        let mut trained = unit.genome.clone();
        trained.set_fitness(Fitness::Evaluated(7.5));
        trained.set_best_epoch(3);
        let result = WorkResult::from_trained(unit.work_id, trained);
        assert_eq!(result.fitness(), 7.5);
        assert_eq!(result.best_epoch(), 3);
        let text = result.to_text();
        let back = WorkResult::from_text(&text).unwrap();
        assert_eq!(back, result);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn digests_are_a_pure_function_of_the_text() {
        let a = genome_digest("genome text\n");
        let b = genome_digest("genome text\n");
        let c = genome_digest("genome text \n");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 64);
        assert!(a.bytes().all(|b| b.is_ascii_hexdigit()));
    }

    #[test]
    fn known_digest_vector() {
        // SHA-256 of the empty string, pinned so the hash choice can never
        // drift silently.
        assert_eq!(
            genome_digest(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn tampered_results_are_refused() {
        let unit = sample_unit();
        let mut trained = unit.genome.clone();
        trained.set_fitness(Fitness::Evaluated(7.5));
        let result = WorkResult::from_trained(unit.work_id, trained);
        let good = result.to_text();

        // Flip a weight without refreshing the digest: caught on parse.
        let tampered = good.replacen("work_id", "work_id", 1); // identity guard
        assert_eq!(tampered, good);
        let mut genome = result.genome.clone();
        let w = genome.edges_mut()[0].weights.values_mut();
        w[0] += 1.0;
        let mut lying = WorkResult {
            work_id: result.work_id,
            digest: result.digest.clone(),
            genome,
        };
        assert!(WorkResult::from_text(&lying.to_text()).is_err());

        // Refreshing the digest makes it parseable again; disagreement is
        // then the quorum layer's to catch.
        lying.digest = genome_digest(&serialize_genome(&lying.genome));
        assert!(WorkResult::from_text(&lying.to_text()).is_ok());
        assert_ne!(lying.digest, result.digest);
    }

    #[test]
    fn untrained_results_are_refused() {
        let unit = sample_unit();
        let text = format!(
            "work_result 1\nwork_id {}\ndigest {}\n{}",
            unit.work_id,
            genome_digest(&serialize_genome(&unit.genome)),
            serialize_genome(&unit.genome),
        );
        let err = WorkResult::from_text(&text).unwrap_err();
        assert!(err.to_string().contains("no fitness"), "{err}");
    }

    #[test]
    fn malformed_units_are_refused() {
        let good = sample_unit().to_text();
        for bad in [
            good.replacen("work_unit 1", "work_unit 2", 1),
            good.replacen("seed", "sed", 1),
            good.replacen("quorum 2", "quorum 0", 1),
            format!("{good}trailing\n"),
            good.lines().take(3).collect::<Vec<_>>().join("\n") + "\n",
        ] {
            assert!(WorkUnit::from_text(&bad).is_err());
        }
    }
}
