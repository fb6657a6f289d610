//! Fresh-weight initialization. Filters are drawn from a centered normal
//! whose width follows the rectifier-aware rule: for a node whose enabled
//! incoming filters hold `n` weights in total, each of those weights is
//! drawn with standard deviation `sqrt(2 / n)`.
//!
//! `sqrt` is exempt from the portable-math rule: IEEE 754 requires it to be
//! correctly rounded, so every platform agrees bit for bit.

use crate::determinism::PortableRng;
use crate::genome::{CnnGenome, EdgeId};

/// Which reading of the variance rule to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SigmaRule {
    /// Variance `2 / n`, the standard rectifier initialization.
    #[default]
    Standard,
    /// Variance `sqrt(2 / n)`, a wider alternative kept behind a switch for
    /// comparison runs.
    LiteralVariance,
}

impl SigmaRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            SigmaRule::Standard => "standard",
            SigmaRule::LiteralVariance => "literal-variance",
        }
    }

    pub fn parse(text: &str) -> Option<SigmaRule> {
        match text {
            "standard" => Some(SigmaRule::Standard),
            "literal-variance" => Some(SigmaRule::LiteralVariance),
            _ => None,
        }
    }
}

pub fn he_sigma(fan_in: usize, rule: SigmaRule) -> f64 {
    let variance = 2.0 / fan_in as f64;
    match rule {
        SigmaRule::Standard => variance.sqrt(),
        SigmaRule::LiteralVariance => variance.sqrt().sqrt(),
    }
}

/// Zeroes every filter and velocity, then redraws the enabled filters.
/// Draw order is fixed: nodes in innovation order, each node's enabled
/// incoming edges in innovation order, filters row-major. One rng therefore
/// yields one exact set of weights on every platform.
pub fn initialize_weights(genome: &mut CnnGenome, rng: &mut PortableRng, rule: SigmaRule) {
    let mut draws: Vec<(EdgeId, f64)> = Vec::new();
    for node in genome.nodes() {
        let fan_in = genome.enabled_fan_in(node.innovation_id);
        if fan_in == 0 {
            continue;
        }
        let sigma = he_sigma(fan_in, rule);
        for edge in genome.edges() {
            if edge.enabled && edge.output_node_id == node.innovation_id {
                draws.push((edge.innovation_id, sigma));
            }
        }
    }
    for edge in genome.edges_mut() {
        edge.weights.fill(0.0);
        edge.velocity.fill(0.0);
    }
    for (id, sigma) in draws {
        let edge = genome.edge_mut(id).expect("edge listed above");
        for w in edge.weights.values_mut() {
            *w = rng.normal() * sigma;
        }
    }
}
