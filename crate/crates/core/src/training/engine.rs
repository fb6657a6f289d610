//! Forward, backward and weight-update passes over one genome.
//!
//! Edges run in the deterministic schedule order (input-node depth, then
//! edge innovation). The schedule is chopped into groups that share an input
//! depth; before a group fires, the hidden nodes at that depth are finalized
//! by applying the activation to their accumulated sums. Output nodes skip
//! the activation and feed a softmax.
//!
//! Convolution treats each dimension independently: when an edge grows a
//! dimension, the input is zero-padded by `filter_len - 1` on the leading
//! side; when it shrinks or keeps it, no padding is used. Both cases are the
//! single rule `out[o] += w[f] * in[o + f - pad]` with out-of-range input
//! indices contributing nothing.

use super::HyperState;
use crate::determinism::{portable_exp, portable_ln};
use crate::genome::{CnnGenome, Matrix, NodeId, NodeType};
use std::collections::BTreeMap;
use std::ops::Range;

pub const ACTIVATION_LEAK: f64 = 0.1;
pub const ACTIVATION_CEILING: f64 = 5.5;

/// Leaky rectifier with a leaky ceiling: slope 0.1 below zero and above 5.5,
/// identity in between.
pub fn activate(x: f64) -> f64 {
    if x < 0.0 {
        ACTIVATION_LEAK * x
    } else if x <= ACTIVATION_CEILING {
        x
    } else {
        ACTIVATION_CEILING + ACTIVATION_LEAK * (x - ACTIVATION_CEILING)
    }
}

/// Slope of `activate`; exactly 1 at both kinks.
pub fn activate_derivative(x: f64) -> f64 {
    if (0.0..=ACTIVATION_CEILING).contains(&x) {
        1.0
    } else {
        ACTIVATION_LEAK
    }
}

struct Group {
    /// Range into the schedule; all edges here share one input-node depth.
    edges: Range<usize>,
    /// Hidden node positions finalized before this group fires.
    finalize: Vec<usize>,
}

/// Reusable evaluation state for one genome topology. Build once per
/// training or evaluation run; the genome's structure (not its weights) must
/// stay fixed while the engine lives.
pub struct Engine {
    schedule: Vec<usize>,
    groups: Vec<Group>,
    /// Per edge index: (input node position, output node position).
    edge_nodes: Vec<(usize, usize)>,
    input_pos: usize,
    /// Output node positions in innovation order; position k is class k.
    outputs: Vec<usize>,
    sums: Vec<Matrix>,
    values: Vec<Matrix>,
    deltas: Vec<Matrix>,
    gradients: Vec<Matrix>,
    probs: Vec<f64>,
}

impl Engine {
    pub fn new(genome: &CnnGenome) -> Engine {
        let node_pos: BTreeMap<NodeId, usize> = genome
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, n)| (n.innovation_id, i))
            .collect();
        let schedule = genome.sorted_edge_schedule();
        let edge_nodes: Vec<(usize, usize)> = genome
            .edges()
            .iter()
            .map(|e| (node_pos[&e.input_node_id], node_pos[&e.output_node_id]))
            .collect();

        let mut groups = Vec::new();
        let mut start = 0;
        while start < schedule.len() {
            let depth_of = |slot: usize| {
                let edge = &genome.edges()[schedule[slot]];
                genome.node(edge.input_node_id).expect("endpoint exists").depth
            };
            let depth = depth_of(start);
            let mut end = start + 1;
            while end < schedule.len() && depth_of(end) == depth {
                end += 1;
            }
            let mut finalize: Vec<usize> = schedule[start..end]
                .iter()
                .map(|&e| edge_nodes[e].0)
                .filter(|&p| genome.nodes()[p].node_type == NodeType::Hidden)
                .collect();
            finalize.sort_unstable();
            finalize.dedup();
            groups.push(Group { edges: start..end, finalize });
            start = end;
        }

        let buffer = |n: &crate::genome::NodeGene| Matrix::zeros(n.size_x as usize, n.size_y as usize);
        Engine {
            edge_nodes,
            input_pos: node_pos[&genome.input_node().innovation_id],
            outputs: genome
                .nodes()
                .iter()
                .enumerate()
                .filter(|(_, n)| n.node_type == NodeType::Output)
                .map(|(i, _)| i)
                .collect(),
            sums: genome.nodes().iter().map(buffer).collect(),
            values: genome.nodes().iter().map(buffer).collect(),
            deltas: genome.nodes().iter().map(buffer).collect(),
            gradients: genome
                .edges()
                .iter()
                .map(|e| Matrix::zeros(e.weights.width(), e.weights.height()))
                .collect(),
            probs: Vec::new(),
            schedule,
            groups,
        }
    }

    /// Forward pass; leaves class probabilities in `self.probs`.
    fn forward(&mut self, genome: &CnnGenome, image: &Matrix) {
        let input = &mut self.values[self.input_pos];
        assert_eq!((input.width(), input.height()), (image.width(), image.height()), "image dims");
        input.values_mut().copy_from_slice(image.values());
        for (i, sum) in self.sums.iter_mut().enumerate() {
            if i != self.input_pos {
                sum.fill(0.0);
            }
        }
        for group in &self.groups {
            for &p in &group.finalize {
                for (v, &s) in self.values[p].values_mut().iter_mut().zip(self.sums[p].values()) {
                    *v = activate(s);
                }
            }
            for &e in &self.schedule[group.edges.clone()] {
                let (ip, op) = self.edge_nodes[e];
                conv_forward(&self.values[ip], &genome.edges()[e].weights, &mut self.sums[op]);
            }
        }
        let mut max = f64::NEG_INFINITY;
        for &o in &self.outputs {
            max = max.max(self.sums[o].at(0, 0));
        }
        self.probs.clear();
        let mut z = 0.0;
        for &o in &self.outputs {
            let e = portable_exp(self.sums[o].at(0, 0) - max);
            self.probs.push(e);
            z += e;
        }
        for p in &mut self.probs {
            *p /= z;
        }
    }

    /// Cross-entropy of the current probabilities against `label`.
    pub fn loss(&self, label: u8) -> f64 {
        -portable_ln(self.probs[label as usize])
    }

    /// Backward pass from softmax cross-entropy; fills `self.gradients` for
    /// every scheduled edge.
    fn backward(&mut self, genome: &CnnGenome, label: u8) {
        for (i, delta) in self.deltas.iter_mut().enumerate() {
            if i != self.input_pos {
                delta.fill(0.0);
            }
        }
        for (k, &o) in self.outputs.iter().enumerate() {
            let target = if k == usize::from(label) { 1.0 } else { 0.0 };
            self.deltas[o].set(0, 0, self.probs[k] - target);
        }
        for group in self.groups.iter().rev() {
            for &e in self.schedule[group.edges.clone()].iter().rev() {
                let (ip, op) = self.edge_nodes[e];
                conv_gradient(&self.values[ip], &self.deltas[op], &mut self.gradients[e]);
                if ip != self.input_pos {
                    let (dout, din) = two_mut(&mut self.deltas, op, ip);
                    conv_backward_input(dout, &genome.edges()[e].weights, din);
                }
            }
            for &p in &group.finalize {
                for (d, &s) in self.deltas[p].values_mut().iter_mut().zip(self.sums[p].values()) {
                    *d *= activate_derivative(s);
                }
            }
        }
    }

    /// Nesterov-style momentum step with multiplicative weight decay, applied
    /// to every scheduled edge in schedule order.
    fn update(&self, genome: &mut CnnGenome, hyper: &HyperState) {
        let mu = hyper.momentum;
        let eta = hyper.learning_rate;
        let lambda = hyper.weight_decay;
        for &e in &self.schedule {
            let edge = &mut genome.edges_mut()[e];
            let gradient = self.gradients[e].values();
            let weights = edge.weights.values_mut();
            let velocity = edge.velocity.values_mut();
            for k in 0..gradient.len() {
                let v_prev = velocity[k];
                let v_next = mu * v_prev - eta * gradient[k];
                weights[k] += -mu * v_prev + (1.0 + mu) * v_next;
                weights[k] -= weights[k] * lambda;
                velocity[k] = v_next;
            }
        }
    }

    /// One stochastic step on a single example; returns its pre-update loss.
    pub fn train_example(
        &mut self,
        genome: &mut CnnGenome,
        image: &Matrix,
        label: u8,
        hyper: &HyperState,
    ) -> f64 {
        self.forward(genome, image);
        let loss = self.loss(label);
        self.backward(genome, label);
        self.update(genome, hyper);
        loss
    }

    /// Forward-only evaluation; returns class probabilities.
    pub fn infer(&mut self, genome: &CnnGenome, image: &Matrix) -> &[f64] {
        self.forward(genome, image);
        &self.probs
    }

    /// Highest-probability class, lowest index on ties.
    pub fn predicted_class(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        best
    }

    /// Forward pass plus loss without a weight update, for gradient checks
    /// and diagnostics.
    pub fn example_loss(&mut self, genome: &CnnGenome, image: &Matrix, label: u8) -> f64 {
        self.forward(genome, image);
        self.loss(label)
    }

    /// Forward and backward on one example without a weight update; returns
    /// the loss and leaves per-edge gradients readable through `gradient`.
    pub fn example_gradients(&mut self, genome: &CnnGenome, image: &Matrix, label: u8) -> f64 {
        self.forward(genome, image);
        let loss = self.loss(label);
        self.backward(genome, label);
        loss
    }

    /// Loss gradient from the latest backward pass for the edge at `index`
    /// in genome edge order. Disabled edges hold zeros.
    pub fn gradient(&self, index: usize) -> &Matrix {
        &self.gradients[index]
    }
}

fn two_mut<T>(v: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = v.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = v.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

/// Leading-side zero padding for one dimension: full padding when the edge
/// grows the dimension, none otherwise.
fn pad_for(filter_len: usize, in_len: usize, out_len: usize) -> isize {
    if out_len > in_len {
        filter_len as isize - 1
    } else {
        0
    }
}

/// Output positions `o` in `[0, out_len)` whose input index `o + shift`
/// lands in `[0, in_len)`; returns the first valid `o` and the run length.
fn overlap(out_len: usize, in_len: usize, shift: isize) -> (usize, usize) {
    let start = if shift < 0 { (-shift) as usize } else { 0 };
    let end = (in_len as isize - shift).clamp(0, out_len as isize) as usize;
    (start, end.saturating_sub(start))
}

/// `output[o] += sum_f filter[f] * input[o + f - pad]`, per dimension.
fn conv_forward(input: &Matrix, filter: &Matrix, output: &mut Matrix) {
    let px = pad_for(filter.width(), input.width(), output.width());
    let py = pad_for(filter.height(), input.height(), output.height());
    for fy in 0..filter.height() {
        let sy = fy as isize - py;
        let (oy0, ny) = overlap(output.height(), input.height(), sy);
        for fx in 0..filter.width() {
            let w = filter.at(fx, fy);
            let sx = fx as isize - px;
            let (ox0, nx) = overlap(output.width(), input.width(), sx);
            for oy in oy0..oy0 + ny {
                let iy = (oy as isize + sy) as usize;
                let in_row = &input.row(iy)[(ox0 as isize + sx) as usize..][..nx];
                let out_row = &mut output.row_mut(oy)[ox0..ox0 + nx];
                for k in 0..nx {
                    out_row[k] += w * in_row[k];
                }
            }
        }
    }
}

/// `d_filter[f] = sum_o delta_out[o] * input[o + f - pad]`; overwrites.
fn conv_gradient(input: &Matrix, delta_out: &Matrix, d_filter: &mut Matrix) {
    let px = pad_for(d_filter.width(), input.width(), delta_out.width());
    let py = pad_for(d_filter.height(), input.height(), delta_out.height());
    for fy in 0..d_filter.height() {
        let sy = fy as isize - py;
        let (oy0, ny) = overlap(delta_out.height(), input.height(), sy);
        for fx in 0..d_filter.width() {
            let sx = fx as isize - px;
            let (ox0, nx) = overlap(delta_out.width(), input.width(), sx);
            let mut acc = 0.0;
            for oy in oy0..oy0 + ny {
                let iy = (oy as isize + sy) as usize;
                let in_row = &input.row(iy)[(ox0 as isize + sx) as usize..][..nx];
                let delta_row = &delta_out.row(oy)[ox0..ox0 + nx];
                for k in 0..nx {
                    acc += delta_row[k] * in_row[k];
                }
            }
            d_filter.set(fx, fy, acc);
        }
    }
}

/// `d_input[o + f - pad] += filter[f] * delta_out[o]`; accumulates.
fn conv_backward_input(delta_out: &Matrix, filter: &Matrix, d_input: &mut Matrix) {
    let px = pad_for(filter.width(), d_input.width(), delta_out.width());
    let py = pad_for(filter.height(), d_input.height(), delta_out.height());
    for fy in 0..filter.height() {
        let sy = fy as isize - py;
        let (oy0, ny) = overlap(delta_out.height(), d_input.height(), sy);
        for fx in 0..filter.width() {
            let w = filter.at(fx, fy);
            let sx = fx as isize - px;
            let (ox0, nx) = overlap(delta_out.width(), d_input.width(), sx);
            for oy in oy0..oy0 + ny {
                let iy = (oy as isize + sy) as usize;
                let delta_row = &delta_out.row(oy)[ox0..ox0 + nx];
                let din_row = &mut d_input.row_mut(iy)[(ox0 as isize + sx) as usize..][..nx];
                for k in 0..nx {
                    din_row[k] += w * delta_row[k];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::determinism::PortableRng;
    use crate::genome::{Depth, EdgeGene, NodeGene, WeightInitMode};

    /// input 6x5 -> hidden 3x4 (shrink x, shrink y) -> hidden 8x2 (grow x,
    /// shrink y) -> 3 outputs, with skip edges, one disabled edge.
    fn rig() -> (CnnGenome, Matrix) {
        let nodes = vec![
            NodeGene { innovation_id: 0, node_type: NodeType::Input, size_x: 6, size_y: 5, depth: Depth::ZERO },
            NodeGene { innovation_id: 1, node_type: NodeType::Output, size_x: 1, size_y: 1, depth: Depth::ONE },
            NodeGene { innovation_id: 2, node_type: NodeType::Output, size_x: 1, size_y: 1, depth: Depth::ONE },
            NodeGene { innovation_id: 3, node_type: NodeType::Output, size_x: 1, size_y: 1, depth: Depth::ONE },
            NodeGene { innovation_id: 4, node_type: NodeType::Hidden, size_x: 3, size_y: 4, depth: Depth::parse("1/4").unwrap() },
            NodeGene { innovation_id: 5, node_type: NodeType::Hidden, size_x: 8, size_y: 2, depth: Depth::parse("1/2").unwrap() },
        ];
        let by_id = |id: u64| nodes.iter().find(|n| n.innovation_id == id).unwrap();
        let edges = vec![
            EdgeGene::zeroed(0, by_id(0), by_id(4), true),
            EdgeGene::zeroed(1, by_id(0), by_id(5), true),
            EdgeGene::zeroed(2, by_id(4), by_id(5), true),
            EdgeGene::zeroed(3, by_id(4), by_id(1), true),
            EdgeGene::zeroed(4, by_id(5), by_id(1), true),
            EdgeGene::zeroed(5, by_id(5), by_id(2), true),
            EdgeGene::zeroed(6, by_id(5), by_id(3), true),
            EdgeGene::zeroed(7, by_id(0), by_id(3), true),
            EdgeGene::zeroed(8, by_id(4), by_id(2), false),
        ];
        let mut genome = CnnGenome::new(1, nodes, edges, WeightInitMode::Randomized).unwrap();
        let mut rng = PortableRng::new(4242);
        let ids: Vec<u64> = genome.edges().iter().map(|e| e.innovation_id).collect();
        for id in ids {
            for w in genome.edge_mut(id).unwrap().weights.values_mut() {
                *w = rng.normal() * 0.35;
            }
        }
        let mut image = Matrix::zeros(6, 5);
        for v in image.values_mut() {
            *v = rng.uniform_real();
        }
        (genome, image)
    }

    /// Direct per-output-pixel convolution with explicit padded input, an
    /// independent check on the windowed row arithmetic.
    fn naive_forward(genome: &CnnGenome, image: &Matrix) -> Vec<f64> {
        use std::collections::BTreeMap;
        let mut value: BTreeMap<u64, Matrix> = BTreeMap::new();
        let mut pending: BTreeMap<u64, Matrix> = BTreeMap::new();
        value.insert(genome.input_node().innovation_id, image.clone());
        for node in genome.nodes() {
            if node.node_type != NodeType::Input {
                pending.insert(node.innovation_id, Matrix::zeros(node.size_x as usize, node.size_y as usize));
            }
        }
        // Process nodes in depth order, activating each before reading it.
        let mut node_order: Vec<&NodeGene> = genome.nodes().iter().collect();
        node_order.sort_by(|a, b| a.depth.cmp(&b.depth).then(a.innovation_id.cmp(&b.innovation_id)));
        for node in node_order {
            if node.node_type != NodeType::Input {
                let sums = pending[&node.innovation_id].clone();
                let mut out = sums.clone();
                if node.node_type == NodeType::Hidden {
                    for v in out.values_mut() {
                        *v = activate(*v);
                    }
                }
                value.insert(node.innovation_id, out);
            }
            for edge in genome.edges().iter().filter(|e| e.enabled && e.input_node_id == node.innovation_id) {
                let input = value[&node.innovation_id].clone();
                let target = genome.node(edge.output_node_id).unwrap();
                let (tw, th) = (target.size_x as usize, target.size_y as usize);
                let kx = edge.weights.width();
                let ky = edge.weights.height();
                let px = if tw > input.width() { kx as isize - 1 } else { 0 };
                let py = if th > input.height() { ky as isize - 1 } else { 0 };
                let acc = pending.get_mut(&edge.output_node_id).unwrap();
                for oy in 0..th {
                    for ox in 0..tw {
                        let mut s = 0.0;
                        for fy in 0..ky {
                            for fx in 0..kx {
                                let ix = ox as isize + fx as isize - px;
                                let iy = oy as isize + fy as isize - py;
                                if ix >= 0 && iy >= 0 && (ix as usize) < input.width() && (iy as usize) < input.height() {
                                    s += edge.weights.at(fx, fy) * input.at(ix as usize, iy as usize);
                                }
                            }
                        }
                        acc.set(ox, oy, acc.at(ox, oy) + s);
                    }
                }
            }
        }
        let scores: Vec<f64> = genome
            .output_node_ids()
            .iter()
            .map(|id| value[id].at(0, 0))
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|&s| portable_exp(s - max)).collect();
        let z: f64 = exps.iter().sum();
        exps.iter().map(|&e| e / z).collect()
    }

    #[test]
    fn activation_shape() {
        assert_eq!(activate(-2.0), -0.2);
        assert_eq!(activate(0.0), 0.0);
        assert_eq!(activate(3.25), 3.25);
        assert_eq!(activate(5.5), 5.5);
        assert_eq!(activate(7.5), 5.5 + 0.2);
        assert_eq!(activate_derivative(-0.001), 0.1);
        assert_eq!(activate_derivative(0.0), 1.0);
        assert_eq!(activate_derivative(5.5), 1.0);
        assert_eq!(activate_derivative(5.500001), 0.1);
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let (genome, image) = rig();
        let mut engine = Engine::new(&genome);
        let fast = engine.infer(&genome, &image).to_vec();
        let naive = naive_forward(&genome, &image);
        assert_eq!(fast.len(), 3);
        for (a, b) in fast.iter().zip(&naive) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
        let sum: f64 = fast.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (mut genome, image) = rig();
        let label = 2u8;
        let mut engine = Engine::new(&genome);
        engine.forward(&genome, &image);
        engine.backward(&genome, label);
        let analytic: Vec<Matrix> = engine.gradients.clone();

        let edge_ids: Vec<u64> = genome
            .edges()
            .iter()
            .filter(|e| e.enabled)
            .map(|e| e.innovation_id)
            .collect();
        let h = 1e-6;
        let mut checked = 0usize;
        for id in edge_ids {
            let idx = genome.edges().iter().position(|e| e.innovation_id == id).unwrap();
            let n = genome.edge(id).unwrap().weights.len();
            // Every weight of small filters; a stride through large ones.
            let stride = (n / 7).max(1);
            for k in (0..n).step_by(stride) {
                let w0 = genome.edge(id).unwrap().weights.values()[k];
                genome.edge_mut(id).unwrap().weights.values_mut()[k] = w0 + h;
                let up = engine.example_loss(&genome, &image, label);
                genome.edge_mut(id).unwrap().weights.values_mut()[k] = w0 - h;
                let down = engine.example_loss(&genome, &image, label);
                genome.edge_mut(id).unwrap().weights.values_mut()[k] = w0;
                let fd = (up - down) / (2.0 * h);
                let got = analytic[idx].values()[k];
                assert!(
                    (got - fd).abs() <= 1e-6 + 1e-4 * fd.abs(),
                    "edge {id} weight {k}: analytic {got} vs fd {fd}"
                );
                checked += 1;
            }
        }
        assert!(checked > 40, "checked {checked} weights");
    }

    #[test]
    fn disabled_edges_carry_no_signal() {
        let (mut genome, image) = rig();
        let mut engine = Engine::new(&genome);
        let before = engine.infer(&genome, &image).to_vec();
        genome.edge_mut(8).unwrap().weights.fill(123.0);
        let after = engine.infer(&genome, &image).to_vec();
        assert_eq!(before, after);
    }

    #[test]
    fn update_moves_weights_toward_lower_loss() {
        let (mut genome, image) = rig();
        let label = 1u8;
        let mut engine = Engine::new(&genome);
        let hyper = HyperState { momentum: 0.0, learning_rate: 0.01, weight_decay: 0.0 };
        let first = engine.train_example(&mut genome, &image, label, &hyper);
        let mut last = first;
        for _ in 0..20 {
            last = engine.train_example(&mut genome, &image, label, &hyper);
        }
        assert!(last < first * 0.9, "loss {first} -> {last}");
    }

    #[test]
    fn velocity_accumulates_with_momentum() {
        let (mut genome, image) = rig();
        let mut engine = Engine::new(&genome);
        let hyper = HyperState { momentum: 0.9, learning_rate: 0.001, weight_decay: 0.0 };
        engine.train_example(&mut genome, &image, 0, &hyper);
        let v1: f64 = genome.edges()[0].velocity.values().iter().map(|v| v.abs()).sum();
        engine.train_example(&mut genome, &image, 0, &hyper);
        let v2: f64 = genome.edges()[0].velocity.values().iter().map(|v| v.abs()).sum();
        assert!(v1 > 0.0);
        assert!(v2 > v1, "momentum should build velocity on a repeated example");
    }

    #[test]
    fn prediction_breaks_ties_toward_lowest_class() {
        let (genome, image) = rig();
        // Zero weights: every class scores 0, probabilities tie exactly.
        let mut zeroed = genome.clone();
        let ids: Vec<u64> = zeroed.edges().iter().map(|e| e.innovation_id).collect();
        for id in ids {
            zeroed.edge_mut(id).unwrap().weights.fill(0.0);
        }
        let mut engine = Engine::new(&zeroed);
        let probs = engine.infer(&zeroed, &image).to_vec();
        assert!(probs.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(engine.predicted_class(), 0);
    }

    #[test]
    fn grow_only_edges_pad_correctly() {
        // 2x1 input growing to 4x1: filter 3x1, pad 2. Hand-check against
        // out[o] = sum_f w[f] * in[o + f - 2].
        let input = Matrix::from_rows(2, 1, vec![5.0, 7.0]);
        let filter = Matrix::from_rows(3, 1, vec![2.0, 3.0, 4.0]);
        let mut out = Matrix::zeros(4, 1);
        conv_forward(&input, &filter, &mut out);
        // o=0: f=2 -> in[0]*4 = 20
        // o=1: f=1 -> in[0]*3 = 15, f=2 -> in[1]*4 = 28, total 43
        // o=2: f=0 -> in[0]*2 = 10, f=1 -> in[1]*3 = 21, total 31
        // o=3: f=0 -> in[1]*2 = 14
        assert_eq!(out.values(), &[20.0, 43.0, 31.0, 14.0]);
    }

    #[test]
    fn shrink_edges_use_valid_windows() {
        // 4x1 input shrinking to 2x1: filter 3x1, no padding.
        let input = Matrix::from_rows(4, 1, vec![1.0, 2.0, 3.0, 4.0]);
        let filter = Matrix::from_rows(3, 1, vec![10.0, 100.0, 1000.0]);
        let mut out = Matrix::zeros(2, 1);
        conv_forward(&input, &filter, &mut out);
        assert_eq!(out.values(), &[3210.0, 4320.0]);
    }
}
