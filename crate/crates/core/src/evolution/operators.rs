//! Structural mutation. A child is a copy of its parent passed through a
//! fixed number of operators drawn from a weighted distribution. Weights are
//! small integers, so every probability is an exact rational of the weight
//! total; the draw consumes one `below(total)` call.
//!
//! Operators that create filter entries (split, add, growth after a resize)
//! draw them immediately from the fan-in-scaled normal, using the mutating
//! rng, so a mutation child leaves the operator pipeline with a complete
//! weight set: inherited values where the parent had them, fresh values for
//! new structure.

use super::InnovationRegistry;
use crate::determinism::PortableRng;
use crate::genome::{
    conv_size, CnnGenome, Depth, EdgeGene, EdgeId, GenomeId, Matrix, NodeGene, NodeId, NodeType,
    Provenance,
};
use crate::training::{he_sigma, SigmaRule};

/// Integer weights for the operator draw; probabilities are weight/total.
/// The defaults put the odds at 2, 4, 4, 8, 2, 1 and 1 out of 22.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperatorWeights {
    pub disable_edge: u32,
    pub enable_edge: u32,
    pub split_edge: u32,
    pub add_edge: u32,
    pub change_size: u32,
    pub change_size_x: u32,
    pub change_size_y: u32,
}

impl Default for OperatorWeights {
    fn default() -> Self {
        OperatorWeights {
            disable_edge: 2,
            enable_edge: 4,
            split_edge: 4,
            add_edge: 8,
            change_size: 2,
            change_size_x: 1,
            change_size_y: 1,
        }
    }
}

impl OperatorWeights {
    pub fn total(&self) -> u32 {
        self.as_array().iter().sum()
    }

    pub fn as_array(&self) -> [u32; 7] {
        [
            self.disable_edge,
            self.enable_edge,
            self.split_edge,
            self.add_edge,
            self.change_size,
            self.change_size_x,
            self.change_size_y,
        ]
    }

    pub fn from_array(values: [u32; 7]) -> OperatorWeights {
        OperatorWeights {
            disable_edge: values[0],
            enable_edge: values[1],
            split_edge: values[2],
            add_edge: values[3],
            change_size: values[4],
            change_size_x: values[5],
            change_size_y: values[6],
        }
    }

    pub fn draw(&self, rng: &mut PortableRng) -> MutationOperator {
        const OPERATORS: [MutationOperator; 7] = [
            MutationOperator::DisableEdge,
            MutationOperator::EnableEdge,
            MutationOperator::SplitEdge,
            MutationOperator::AddEdge,
            MutationOperator::ChangeSize,
            MutationOperator::ChangeSizeX,
            MutationOperator::ChangeSizeY,
        ];
        let total = self.total();
        assert!(total > 0, "operator weights must not all be zero");
        let mut k = rng.below(u64::from(total));
        for (op, weight) in OPERATORS.into_iter().zip(self.as_array()) {
            let weight = u64::from(weight);
            if k < weight {
                return op;
            }
            k -= weight;
        }
        unreachable!("draw below total always lands in a bucket");
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationOperator {
    DisableEdge,
    EnableEdge,
    SplitEdge,
    AddEdge,
    ChangeSize,
    ChangeSizeX,
    ChangeSizeY,
}

impl MutationOperator {
    pub fn provenance(&self) -> Provenance {
        match self {
            MutationOperator::DisableEdge => Provenance::DisableEdge,
            MutationOperator::EnableEdge => Provenance::EnableEdge,
            MutationOperator::SplitEdge => Provenance::SplitEdge,
            MutationOperator::AddEdge => Provenance::AddEdge,
            MutationOperator::ChangeSize => Provenance::ChangeSize,
            MutationOperator::ChangeSizeX => Provenance::ChangeSizeX,
            MutationOperator::ChangeSizeY => Provenance::ChangeSizeY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MutationSettings {
    /// Operators applied per child.
    pub mutations: u32,
    /// Attempts at building a fully reachable child before reporting
    /// failure, and also the redraw budget when a drawn operator is
    /// inapplicable.
    pub retry_budget: u32,
    pub weights: OperatorWeights,
    pub sigma_rule: SigmaRule,
    /// Candidate adjustments for the resize operators.
    pub size_deltas: Vec<i64>,
}

impl Default for MutationSettings {
    fn default() -> Self {
        MutationSettings {
            mutations: 3,
            retry_budget: 32,
            weights: OperatorWeights::default(),
            sigma_rule: SigmaRule::Standard,
            size_deltas: vec![-2, -1, 1, 2],
        }
    }
}

/// Builds a mutation child of `parent`. Returns `None` only if every
/// attempt ended with an output node cut off from the input, so the caller
/// can try a different parent.
pub fn mutate(
    parent: &CnnGenome,
    child_id: GenomeId,
    settings: &MutationSettings,
    registry: &mut InnovationRegistry,
    rng: &mut PortableRng,
) -> Option<CnnGenome> {
    for _ in 0..settings.retry_budget {
        let mut child = parent.child_of(child_id, Provenance::Initial);
        let mut last_applied = None;
        for _ in 0..settings.mutations {
            let mut applied = None;
            for _ in 0..settings.retry_budget {
                let op = settings.weights.draw(rng);
                if apply_operator(&mut child, op, registry, rng, settings) {
                    applied = Some(op);
                    break;
                }
            }
            match applied {
                Some(op) => last_applied = Some(op),
                None => break,
            }
        }
        let Some(op) = last_applied else { continue };
        if child.is_fully_reachable() {
            child.set_generated_by(op.provenance());
            debug_assert!(child.validate().is_ok());
            return Some(child);
        }
    }
    None
}

/// Applies one operator; false means it was inapplicable (or degenerated to
/// a no-op) and the caller should redraw.
pub fn apply_operator(
    child: &mut CnnGenome,
    op: MutationOperator,
    registry: &mut InnovationRegistry,
    rng: &mut PortableRng,
    settings: &MutationSettings,
) -> bool {
    match op {
        MutationOperator::DisableEdge => set_random_edge(child, rng, true, false),
        MutationOperator::EnableEdge => set_random_edge(child, rng, false, true),
        MutationOperator::SplitEdge => split_edge(child, registry, rng, settings.sigma_rule),
        MutationOperator::AddEdge => add_edge(child, registry, rng, settings.sigma_rule),
        MutationOperator::ChangeSize => change_size(child, rng, settings, true, true),
        MutationOperator::ChangeSizeX => change_size(child, rng, settings, true, false),
        MutationOperator::ChangeSizeY => change_size(child, rng, settings, false, true),
    }
}

/// Picks an edge with `enabled == from` uniformly and flips it to `to`.
fn set_random_edge(child: &mut CnnGenome, rng: &mut PortableRng, from: bool, to: bool) -> bool {
    let candidates: Vec<EdgeId> = child
        .edges()
        .iter()
        .filter(|e| e.enabled == from)
        .map(|e| e.innovation_id)
        .collect();
    if candidates.is_empty() {
        return false;
    }
    let pick = candidates[rng.below(candidates.len() as u64) as usize];
    child.edge_mut(pick).expect("picked from edge list").enabled = to;
    true
}

/// Disables a random enabled edge and routes around it through a new node
/// sized at the floor-average of the endpoints, at their depth midpoint.
fn split_edge(
    child: &mut CnnGenome,
    registry: &mut InnovationRegistry,
    rng: &mut PortableRng,
    sigma_rule: SigmaRule,
) -> bool {
    let candidates: Vec<EdgeId> = child
        .edges()
        .iter()
        .filter(|e| e.enabled)
        .map(|e| e.innovation_id)
        .collect();
    if candidates.is_empty() {
        return false;
    }
    let pick = candidates[rng.below(candidates.len() as u64) as usize];
    let (input_id, output_id) = {
        let e = child.edge(pick).expect("picked from edge list");
        (e.input_node_id, e.output_node_id)
    };
    let input = child.node(input_id).expect("endpoint exists").clone();
    let output = child.node(output_id).expect("endpoint exists").clone();
    let Ok(depth) = Depth::midpoint(input.depth, output.depth) else {
        // Depth precision exhausted on this lane; treat as inapplicable.
        return false;
    };
    let node = NodeGene {
        innovation_id: registry.node_innovation(),
        node_type: NodeType::Hidden,
        size_x: ((input.size_x + output.size_x) / 2).max(1),
        size_y: ((input.size_y + output.size_y) / 2).max(1),
        depth,
    };

    child.edge_mut(pick).expect("picked from edge list").enabled = false;
    let node_id = node.innovation_id;
    child.add_node(node.clone()).expect("fresh node id");
    let first = registry.edge_innovation(input_id, node_id);
    let second = registry.edge_innovation(node_id, output_id);
    child
        .add_edge(EdgeGene::zeroed(first, &input, &node, true))
        .expect("new pair into fresh node");
    child
        .add_edge(EdgeGene::zeroed(second, &node, &output, true))
        .expect("new pair out of fresh node");
    // Structure is final; draw the two new filters, lower innovation first.
    let mut new_ids = [first, second];
    new_ids.sort_unstable();
    for id in new_ids {
        draw_filter(child, id, rng, sigma_rule);
    }
    true
}

/// Connects a uniformly chosen unconnected depth-ordered node pair. A pair
/// joined by a disabled edge still counts as connected.
fn add_edge(
    child: &mut CnnGenome,
    registry: &mut InnovationRegistry,
    rng: &mut PortableRng,
    sigma_rule: SigmaRule,
) -> bool {
    let mut eligible: Vec<(NodeId, NodeId)> = Vec::new();
    for a in child.nodes() {
        for b in child.nodes() {
            if a.depth < b.depth
                && !child.edges().iter().any(|e| {
                    e.input_node_id == a.innovation_id && e.output_node_id == b.innovation_id
                })
            {
                eligible.push((a.innovation_id, b.innovation_id));
            }
        }
    }
    if eligible.is_empty() {
        return false;
    }
    let (from, to) = eligible[rng.below(eligible.len() as u64) as usize];
    let id = registry.edge_innovation(from, to);
    let input = child.node(from).expect("listed above").clone();
    let output = child.node(to).expect("listed above").clone();
    child
        .add_edge(EdgeGene::zeroed(id, &input, &output, true))
        .expect("pair was unconnected");
    draw_filter(child, id, rng, sigma_rule);
    true
}

/// Resizes a uniformly chosen hidden node by one of the configured deltas
/// (clamped at 1) on the selected axes. Incident filters are re-dimensioned
/// around their top-left corner; entries the parent never had are drawn
/// fresh on enabled edges.
fn change_size(
    child: &mut CnnGenome,
    rng: &mut PortableRng,
    settings: &MutationSettings,
    touch_x: bool,
    touch_y: bool,
) -> bool {
    let hidden = child.hidden_node_ids();
    if hidden.is_empty() {
        return false;
    }
    let node_id = hidden[rng.below(hidden.len() as u64) as usize];
    let delta = settings.size_deltas[rng.below(settings.size_deltas.len() as u64) as usize];
    let node = child.node(node_id).expect("picked from node list");
    let resized = |size: u32| -> u32 { (i64::from(size) + delta).max(1) as u32 };
    let new_x = if touch_x { resized(node.size_x) } else { node.size_x };
    let new_y = if touch_y { resized(node.size_y) } else { node.size_y };
    if new_x == node.size_x && new_y == node.size_y {
        return false;
    }
    resize_node(child, node_id, new_x, new_y, rng, settings.sigma_rule);
    true
}

/// Applies new dimensions to a node and re-dimensions every incident
/// filter, keeping the overlapping top-left weights and drawing fresh ones
/// for grown regions of enabled edges. Velocities reset to zero.
fn resize_node(
    child: &mut CnnGenome,
    node_id: NodeId,
    new_x: u32,
    new_y: u32,
    rng: &mut PortableRng,
    sigma_rule: SigmaRule,
) {
    {
        let node = child.node_mut(node_id).expect("resize target exists");
        node.size_x = new_x;
        node.size_y = new_y;
    }
    let incident: Vec<EdgeId> = child
        .edges()
        .iter()
        .filter(|e| e.input_node_id == node_id || e.output_node_id == node_id)
        .map(|e| e.innovation_id)
        .collect();
    // Pass 1: reshape all incident filters, remembering the old extents.
    let mut old_dims = Vec::with_capacity(incident.len());
    for &id in &incident {
        let (input_id, output_id) = {
            let e = child.edge(id).expect("incident edge");
            (e.input_node_id, e.output_node_id)
        };
        let input = child.node(input_id).expect("endpoint exists");
        let output = child.node(output_id).expect("endpoint exists");
        let want_x = conv_size(input.size_x, output.size_x) as usize;
        let want_y = conv_size(input.size_y, output.size_y) as usize;
        let edge = child.edge_mut(id).expect("incident edge");
        let old = std::mem::replace(&mut edge.weights, Matrix::zeros(want_x, want_y));
        for y in 0..old.height().min(want_y) {
            for x in 0..old.width().min(want_x) {
                edge.weights.set(x, y, old.at(x, y));
            }
        }
        edge.velocity = Matrix::zeros(want_x, want_y);
        old_dims.push((old.width(), old.height()));
    }
    // Pass 2: with the structure settled, fill grown regions of enabled
    // filters, edges in innovation order, entries row-major.
    for (&id, &(old_w, old_h)) in incident.iter().zip(&old_dims) {
        let edge = child.edge(id).expect("incident edge");
        if !edge.enabled {
            continue;
        }
        let sigma = he_sigma(child.enabled_fan_in(edge.output_node_id), sigma_rule);
        let (w, h) = (edge.weights.width(), edge.weights.height());
        let edge = child.edge_mut(id).expect("incident edge");
        for y in 0..h {
            for x in 0..w {
                if x >= old_w || y >= old_h {
                    edge.weights.set(x, y, rng.normal() * sigma);
                }
            }
        }
    }
}

/// Redraws an entire (new) filter from the fan-in-scaled normal.
fn draw_filter(child: &mut CnnGenome, edge_id: EdgeId, rng: &mut PortableRng, sigma_rule: SigmaRule) {
    let output_id = child.edge(edge_id).expect("edge exists").output_node_id;
    let sigma = he_sigma(child.enabled_fan_in(output_id), sigma_rule);
    let edge = child.edge_mut(edge_id).expect("edge exists");
    for w in edge.weights.values_mut() {
        *w = rng.normal() * sigma;
    }
}
