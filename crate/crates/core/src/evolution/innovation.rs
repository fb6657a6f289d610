//! Master-side innovation numbering. Node innovations are always fresh.
//! Edge innovations are remembered per ordered node pair for the life of
//! the search, so the same connection arising in different lineages gets
//! the same id; crossover relies on that to align genes.

use crate::genome::{EdgeId, NodeId};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InnovationRegistry {
    next_node: NodeId,
    next_edge: EdgeId,
    edge_history: BTreeMap<(NodeId, NodeId), EdgeId>,
}

impl InnovationRegistry {
    pub fn new() -> InnovationRegistry {
        InnovationRegistry::default()
    }

    /// Rebuilds a registry from checkpointed parts.
    pub fn from_parts(
        next_node: NodeId,
        next_edge: EdgeId,
        edge_history: BTreeMap<(NodeId, NodeId), EdgeId>,
    ) -> InnovationRegistry {
        InnovationRegistry { next_node, next_edge, edge_history }
    }

    pub fn node_innovation(&mut self) -> NodeId {
        let id = self.next_node;
        self.next_node += 1;
        id
    }

    /// The edge id for this ordered pair: remembered if ever issued before,
    /// fresh (and recorded) otherwise.
    pub fn edge_innovation(&mut self, input: NodeId, output: NodeId) -> EdgeId {
        if let Some(&id) = self.edge_history.get(&(input, output)) {
            return id;
        }
        let id = self.next_edge;
        self.next_edge += 1;
        self.edge_history.insert((input, output), id);
        id
    }

    pub fn next_node(&self) -> NodeId {
        self.next_node
    }

    pub fn next_edge(&self) -> EdgeId {
        self.next_edge
    }

    /// Ordered view of the pair history, for checkpoints.
    pub fn edge_history(&self) -> &BTreeMap<(NodeId, NodeId), EdgeId> {
        &self.edge_history
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_are_always_fresh() {
        let mut r = InnovationRegistry::new();
        assert_eq!(r.node_innovation(), 0);
        assert_eq!(r.node_innovation(), 1);
        assert_eq!(r.node_innovation(), 2);
    }

    #[test]
    fn edge_pairs_are_remembered_forever() {
        let mut r = InnovationRegistry::new();
        let a = r.edge_innovation(0, 5);
        let b = r.edge_innovation(0, 6);
        assert_eq!((a, b), (0, 1));
        // The same structural connection appearing later, in any lineage,
        // reuses the original id.
        assert_eq!(r.edge_innovation(0, 5), a);
        assert_eq!(r.edge_innovation(0, 6), b);
        // Direction matters.
        assert_eq!(r.edge_innovation(5, 0), 2);
        assert_eq!(r.next_edge(), 3);
    }

    #[test]
    fn checkpoint_parts_round_trip() {
        let mut r = InnovationRegistry::new();
        r.node_innovation();
        r.edge_innovation(0, 1);
        r.edge_innovation(1, 2);
        let back = InnovationRegistry::from_parts(
            r.next_node(),
            r.next_edge(),
            r.edge_history().clone(),
        );
        assert_eq!(back, r);
    }
}
