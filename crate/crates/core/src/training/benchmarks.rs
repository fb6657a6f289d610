//! Fixed reference topologies for calibrating the trainer. Weight counts
//! for a 28x28 input with 10 classes: 7,840 / 8,260 / 12,285.

use crate::genome::{CnnGenome, Depth, EdgeGene, NodeGene, NodeId, NodeType, WeightInitMode};

struct Builder {
    nodes: Vec<NodeGene>,
    edges: Vec<EdgeGene>,
}

impl Builder {
    fn new(input_x: u32, input_y: u32) -> Builder {
        Builder {
            nodes: vec![NodeGene {
                innovation_id: 0,
                node_type: NodeType::Input,
                size_x: input_x,
                size_y: input_y,
                depth: Depth::ZERO,
            }],
            edges: Vec::new(),
        }
    }

    /// Adds `count` nodes of one size at one depth; returns their ids.
    fn layer(&mut self, count: u32, size_x: u32, size_y: u32, depth: &str) -> Vec<NodeId> {
        let node_type = if depth == "1/1" { NodeType::Output } else { NodeType::Hidden };
        let depth = Depth::parse(depth).unwrap();
        let first = self.nodes.len() as NodeId;
        for i in 0..u64::from(count) {
            self.nodes.push(NodeGene {
                innovation_id: first + i,
                node_type,
                size_x,
                size_y,
                depth,
            });
        }
        (first..first + u64::from(count)).collect()
    }

    /// Connects ordered (from, to) pairs, lowest pair first, stopping after
    /// `limit` edges.
    fn connect(&mut self, from: &[NodeId], to: &[NodeId], limit: usize) {
        let mut remaining = limit;
        for &a in from {
            for &b in to {
                if remaining == 0 {
                    return;
                }
                let id = self.edges.len() as u64;
                let input = self.nodes.iter().find(|n| n.innovation_id == a).unwrap();
                let output = self.nodes.iter().find(|n| n.innovation_id == b).unwrap();
                self.edges.push(EdgeGene::zeroed(id, input, output, true));
                remaining -= 1;
            }
        }
    }

    fn build(self) -> CnnGenome {
        CnnGenome::new(0, self.nodes, self.edges, WeightInitMode::Randomized)
            .expect("benchmark topology is valid")
    }
}

/// Input wired straight to one output per class.
pub fn one_layer(input_x: u32, input_y: u32, classes: u32) -> CnnGenome {
    let mut b = Builder::new(input_x, input_y);
    let outputs = b.layer(classes, 1, 1, "1/1");
    b.connect(&[0], &outputs, usize::MAX);
    b.build()
}

/// Input, ten 5x5 hidden nodes, one output per class, fully connected.
pub fn two_layer(input_x: u32, input_y: u32, classes: u32) -> CnnGenome {
    let mut b = Builder::new(input_x, input_y);
    let hidden = b.layer(10, 5, 5, "1/2");
    let outputs = b.layer(classes, 1, 1, "1/1");
    b.connect(&[0], &hidden, usize::MAX);
    b.connect(&hidden, &outputs, usize::MAX);
    b.build()
}

/// A LeNet-5-shaped ladder: five 10x10 nodes, thirty-one 5x5 nodes reached
/// by 80 edges, ten 1x1 nodes reached by 300 edges, then one output per
/// class. The edge budgets keep the classic connection counts; they leave
/// the last 5x5 node with no outgoing edges, which the trainer tolerates.
pub fn modified_lenet(input_x: u32, input_y: u32, classes: u32) -> CnnGenome {
    let mut b = Builder::new(input_x, input_y);
    let l2 = b.layer(5, 10, 10, "1/4");
    let l3 = b.layer(31, 5, 5, "1/2");
    let l4 = b.layer(10, 1, 1, "3/4");
    let outputs = b.layer(classes, 1, 1, "1/1");
    b.connect(&[0], &l2, usize::MAX);
    b.connect(&l2, &l3, 80);
    b.connect(&l3, &l4, 300);
    b.connect(&l4, &outputs, usize::MAX);
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::NodeType;

    #[test]
    fn one_layer_weight_count() {
        let g = one_layer(28, 28, 10);
        assert_eq!(g.weight_count(), 7_840);
        assert_eq!(g.nodes().len(), 11);
        assert_eq!(g.edges().len(), 10);
        assert!(g.is_fully_reachable());
        // Each filter spans the full input.
        assert_eq!(g.edges()[0].weights.width(), 28);
        assert_eq!(g.edges()[0].weights.height(), 28);
    }

    #[test]
    fn two_layer_weight_count() {
        let g = two_layer(28, 28, 10);
        assert_eq!(g.weight_count(), 8_260);
        assert_eq!(g.nodes().len(), 21);
        assert_eq!(g.edges().len(), 110);
        assert!(g.is_fully_reachable());
        // 24x24 filters into the hidden layer, 5x5 filters out of it.
        assert_eq!(g.edges()[0].weights.width(), 24);
        assert_eq!(g.edges()[10].weights.width(), 5);
    }

    #[test]
    fn modified_lenet_weight_count() {
        let g = modified_lenet(28, 28, 10);
        assert_eq!(g.weight_count(), 12_285);
        assert_eq!(g.nodes().len(), 1 + 5 + 31 + 10 + 10);
        assert_eq!(g.edges().len(), 5 + 80 + 300 + 100);
        assert!(g.is_fully_reachable());
    }

    #[test]
    fn modified_lenet_leaves_one_stranded_node() {
        let g = modified_lenet(28, 28, 10);
        // 31 nodes at 5x5 but only 300 of 310 forward slots: the highest
        // 5x5 node (innovation 36) feeds nothing.
        let outgoing = |id| g.edges().iter().filter(|e| e.input_node_id == id).count();
        assert_eq!(outgoing(36), 0);
        assert_eq!(outgoing(35), 10);
        let incoming = |id| g.edges().iter().filter(|e| e.output_node_id == id).count();
        assert_eq!(incoming(36), 2, "edges 80 arrive from the first two 10x10 nodes");
    }

    #[test]
    fn class_outputs_sit_in_innovation_order() {
        let g = two_layer(28, 28, 10);
        let outputs = g.output_node_ids();
        assert_eq!(outputs, (11..=20).collect::<Vec<_>>());
        assert!(g
            .nodes()
            .iter()
            .filter(|n| n.node_type == NodeType::Output)
            .all(|n| n.size_x == 1 && n.size_y == 1));
    }
}
