//! CNN genomes: a directed acyclic graph of sized nodes joined by
//! convolution edges. Node and edge genes carry innovation ids assigned by
//! the search master, which is what lets crossover align structure between
//! independently evolved parents.
//!
//! The key size rule: an edge from an a_x * a_y node to a b_x * b_y node has
//! a filter of conv(a_x, b_x) * conv(a_y, b_y) weights where
//! conv(i, o) = |o - i| + 1. A dimension may shrink (valid convolution) or
//! grow (zero-padded full convolution); 1x1 output nodes make single scalars.

mod depth;
mod dot;
mod matrix;
mod text;

pub use depth::{Depth, DepthError};
pub use dot::genome_to_dot;
pub use matrix::Matrix;
pub use text::{deserialize_genome, serialize_genome};
pub(crate) use text::parse_block;

use crate::determinism::HexfloatError;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

pub type NodeId = u64;
pub type EdgeId = u64;
pub type GenomeId = u64;

/// Filter extent along one dimension for an edge between sizes `in_d` and
/// `out_d`.
pub fn conv_size(in_d: u32, out_d: u32) -> u32 {
    in_d.abs_diff(out_d) + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeType {
    Input,
    Hidden,
    Output,
}

impl NodeType {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeType::Input => "input",
            NodeType::Hidden => "hidden",
            NodeType::Output => "output",
        }
    }

    pub fn parse(text: &str) -> Option<NodeType> {
        match text {
            "input" => Some(NodeType::Input),
            "hidden" => Some(NodeType::Hidden),
            "output" => Some(NodeType::Output),
            _ => None,
        }
    }
}

/// How a genome entered the population; kept for the per-operator insertion
/// statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Provenance {
    Initial,
    Crossover,
    DisableEdge,
    EnableEdge,
    SplitEdge,
    AddEdge,
    ChangeSize,
    ChangeSizeX,
    ChangeSizeY,
}

impl Provenance {
    pub const ALL: [Provenance; 9] = [
        Provenance::Initial,
        Provenance::Crossover,
        Provenance::DisableEdge,
        Provenance::EnableEdge,
        Provenance::SplitEdge,
        Provenance::AddEdge,
        Provenance::ChangeSize,
        Provenance::ChangeSizeX,
        Provenance::ChangeSizeY,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Initial => "initial",
            Provenance::Crossover => "crossover",
            Provenance::DisableEdge => "disable_edge",
            Provenance::EnableEdge => "enable_edge",
            Provenance::SplitEdge => "split_edge",
            Provenance::AddEdge => "add_edge",
            Provenance::ChangeSize => "change_size",
            Provenance::ChangeSizeX => "change_size_x",
            Provenance::ChangeSizeY => "change_size_y",
        }
    }

    pub fn parse(text: &str) -> Option<Provenance> {
        Provenance::ALL.into_iter().find(|p| p.as_str() == text)
    }
}

/// Initial weight policy for generated children.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightInitMode {
    /// Every enabled filter is redrawn from the He-style distribution.
    Randomized,
    /// Filters inherit trained parent weights where innovation and
    /// dimensions match; the rest are drawn fresh.
    Epigenetic,
}

impl WeightInitMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            WeightInitMode::Randomized => "randomized",
            WeightInitMode::Epigenetic => "epigenetic",
        }
    }

    pub fn parse(text: &str) -> Option<WeightInitMode> {
        match text {
            "randomized" => Some(WeightInitMode::Randomized),
            "epigenetic" => Some(WeightInitMode::Epigenetic),
            _ => None,
        }
    }
}

/// Training error sum, or the placeholder for genomes whose evaluation is
/// still outstanding. The placeholder compares greater than every real value
/// so it always sorts to the worst end of a population.
#[derive(Debug, Clone, Copy)]
pub enum Fitness {
    Evaluated(f64),
    Unevaluated,
}

impl Fitness {
    pub fn value(&self) -> Option<f64> {
        match self {
            Fitness::Evaluated(v) => Some(*v),
            Fitness::Unevaluated => None,
        }
    }

    pub fn is_evaluated(&self) -> bool {
        matches!(self, Fitness::Evaluated(_))
    }
}

impl PartialEq for Fitness {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for Fitness {}

impl Ord for Fitness {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        match (self, other) {
            (Fitness::Evaluated(a), Fitness::Evaluated(b)) => a.total_cmp(b),
            (Fitness::Evaluated(_), Fitness::Unevaluated) => Ordering::Less,
            (Fitness::Unevaluated, Fitness::Evaluated(_)) => Ordering::Greater,
            (Fitness::Unevaluated, Fitness::Unevaluated) => Ordering::Equal,
        }
    }
}

impl PartialOrd for Fitness {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeGene {
    pub innovation_id: NodeId,
    pub node_type: NodeType,
    pub size_x: u32,
    pub size_y: u32,
    pub depth: Depth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGene {
    pub innovation_id: EdgeId,
    pub input_node_id: NodeId,
    pub output_node_id: NodeId,
    pub enabled: bool,
    /// conv_x * conv_y filter, row-major, y-major ordering.
    pub weights: Matrix,
    /// Momentum state, same shape as `weights`. Never serialized; training
    /// starts it at zero.
    pub velocity: Matrix,
}

impl EdgeGene {
    /// A zero-weight edge of the correct filter dimensions for its endpoint
    /// node sizes.
    pub fn zeroed(
        innovation_id: EdgeId,
        input: &NodeGene,
        output: &NodeGene,
        enabled: bool,
    ) -> EdgeGene {
        let cx = conv_size(input.size_x, output.size_x) as usize;
        let cy = conv_size(input.size_y, output.size_y) as usize;
        EdgeGene {
            innovation_id,
            input_node_id: input.innovation_id,
            output_node_id: output.innovation_id,
            enabled,
            weights: Matrix::zeros(cx, cy),
            velocity: Matrix::zeros(cx, cy),
        }
    }
}

#[derive(Debug, Error)]
pub enum GenomeError {
    #[error("genome must have exactly one input node")]
    InputCount,
    #[error("genome must have at least one output node")]
    NoOutputs,
    #[error("duplicate node innovation {0}")]
    DuplicateNode(NodeId),
    #[error("duplicate edge innovation {0}")]
    DuplicateEdge(EdgeId),
    #[error("node {0} has a zero dimension")]
    ZeroSize(NodeId),
    #[error("output node {0} must be 1x1")]
    OutputSize(NodeId),
    #[error("node {0} depth is outside the legal range for its type")]
    DepthRange(NodeId),
    #[error("edge {edge} references missing node {node}")]
    MissingNode { edge: EdgeId, node: NodeId },
    #[error("edge {edge} does not strictly increase depth")]
    DepthOrder { edge: EdgeId },
    #[error("edge {edge} filter is {got_x}x{got_y} but node sizes require {want_x}x{want_y}")]
    FilterDims {
        edge: EdgeId,
        got_x: usize,
        got_y: usize,
        want_x: usize,
        want_y: usize,
    },
    #[error("nodes {input} -> {output} are joined by more than one edge")]
    DuplicatePair { input: NodeId, output: NodeId },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Hexfloat(#[from] HexfloatError),
    #[error(transparent)]
    Depth(#[from] DepthError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnGenome {
    genome_id: GenomeId,
    nodes: Vec<NodeGene>,
    edges: Vec<EdgeGene>,
    fitness: Fitness,
    best_epoch: u32,
    generated_by: Provenance,
    weight_init_mode: WeightInitMode,
}

impl CnnGenome {
    /// Builds and validates a genome. Genes may arrive in any order; they are
    /// kept sorted by innovation id.
    pub fn new(
        genome_id: GenomeId,
        mut nodes: Vec<NodeGene>,
        mut edges: Vec<EdgeGene>,
        weight_init_mode: WeightInitMode,
    ) -> Result<CnnGenome, GenomeError> {
        nodes.sort_by_key(|n| n.innovation_id);
        edges.sort_by_key(|e| e.innovation_id);
        let genome = CnnGenome {
            genome_id,
            nodes,
            edges,
            fitness: Fitness::Unevaluated,
            best_epoch: 0,
            generated_by: Provenance::Initial,
            weight_init_mode,
        };
        genome.validate()?;
        Ok(genome)
    }

    pub fn genome_id(&self) -> GenomeId {
        self.genome_id
    }

    pub fn set_genome_id(&mut self, id: GenomeId) {
        self.genome_id = id;
    }

    pub fn fitness(&self) -> Fitness {
        self.fitness
    }

    pub fn set_fitness(&mut self, fitness: Fitness) {
        self.fitness = fitness;
    }

    pub fn best_epoch(&self) -> u32 {
        self.best_epoch
    }

    pub fn set_best_epoch(&mut self, epoch: u32) {
        self.best_epoch = epoch;
    }

    pub fn generated_by(&self) -> Provenance {
        self.generated_by
    }

    pub fn set_generated_by(&mut self, provenance: Provenance) {
        self.generated_by = provenance;
    }

    pub fn weight_init_mode(&self) -> WeightInitMode {
        self.weight_init_mode
    }

    pub fn set_weight_init_mode(&mut self, mode: WeightInitMode) {
        self.weight_init_mode = mode;
    }

    pub fn nodes(&self) -> &[NodeGene] {
        &self.nodes
    }

    pub fn edges(&self) -> &[EdgeGene] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeGene> {
        self.nodes
            .binary_search_by_key(&id, |n| n.innovation_id)
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut NodeGene> {
        self.nodes
            .binary_search_by_key(&id, |n| n.innovation_id)
            .ok()
            .map(|i| &mut self.nodes[i])
    }

    pub fn edge(&self, id: EdgeId) -> Option<&EdgeGene> {
        self.edges
            .binary_search_by_key(&id, |e| e.innovation_id)
            .ok()
            .map(|i| &self.edges[i])
    }

    pub fn edge_mut(&mut self, id: EdgeId) -> Option<&mut EdgeGene> {
        self.edges
            .binary_search_by_key(&id, |e| e.innovation_id)
            .ok()
            .map(|i| &mut self.edges[i])
    }

    /// Mutable view of every edge gene for weight and velocity updates.
    /// Callers must leave innovation ids, endpoints and filter shapes alone.
    pub(crate) fn edges_mut(&mut self) -> &mut [EdgeGene] {
        &mut self.edges
    }

    /// Inserts a node gene, keeping innovation order.
    pub fn add_node(&mut self, node: NodeGene) -> Result<(), GenomeError> {
        match self.nodes.binary_search_by_key(&node.innovation_id, |n| n.innovation_id) {
            Ok(_) => Err(GenomeError::DuplicateNode(node.innovation_id)),
            Err(pos) => {
                self.nodes.insert(pos, node);
                Ok(())
            }
        }
    }

    /// Inserts an edge gene, keeping innovation order and checking endpoint,
    /// pair-uniqueness, depth and filter-dimension rules.
    pub fn add_edge(&mut self, edge: EdgeGene) -> Result<(), GenomeError> {
        let pos = match self.edges.binary_search_by_key(&edge.innovation_id, |e| e.innovation_id) {
            Ok(_) => return Err(GenomeError::DuplicateEdge(edge.innovation_id)),
            Err(pos) => pos,
        };
        let input = self.node(edge.input_node_id).ok_or(GenomeError::MissingNode {
            edge: edge.innovation_id,
            node: edge.input_node_id,
        })?;
        let output = self.node(edge.output_node_id).ok_or(GenomeError::MissingNode {
            edge: edge.innovation_id,
            node: edge.output_node_id,
        })?;
        if input.depth >= output.depth {
            return Err(GenomeError::DepthOrder { edge: edge.innovation_id });
        }
        let want_x = conv_size(input.size_x, output.size_x) as usize;
        let want_y = conv_size(input.size_y, output.size_y) as usize;
        if edge.weights.width() != want_x || edge.weights.height() != want_y {
            return Err(GenomeError::FilterDims {
                edge: edge.innovation_id,
                got_x: edge.weights.width(),
                got_y: edge.weights.height(),
                want_x,
                want_y,
            });
        }
        if self
            .edges
            .iter()
            .any(|e| e.input_node_id == edge.input_node_id && e.output_node_id == edge.output_node_id)
        {
            return Err(GenomeError::DuplicatePair {
                input: edge.input_node_id,
                output: edge.output_node_id,
            });
        }
        self.edges.insert(pos, edge);
        Ok(())
    }

    pub fn input_node(&self) -> &NodeGene {
        self.nodes
            .iter()
            .find(|n| n.node_type == NodeType::Input)
            .expect("validated genome has an input node")
    }

    /// Output node ids in innovation order.
    pub fn output_node_ids(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.node_type == NodeType::Output)
            .map(|n| n.innovation_id)
            .collect()
    }

    pub fn hidden_node_ids(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.node_type == NodeType::Hidden)
            .map(|n| n.innovation_id)
            .collect()
    }

    /// Number of trainable weights across enabled edges.
    pub fn weight_count(&self) -> usize {
        self.edges
            .iter()
            .filter(|e| e.enabled)
            .map(|e| e.weights.len())
            .sum()
    }

    /// Total genes, the complexity measure used to break fitness ties.
    pub fn gene_count(&self) -> usize {
        self.nodes.len() + self.edges.len()
    }

    /// Sum of enabled incoming filter sizes for a node; the fan-in `n` of the
    /// He-style initialization rule.
    pub fn enabled_fan_in(&self, node_id: NodeId) -> usize {
        self.edges
            .iter()
            .filter(|e| e.enabled && e.output_node_id == node_id)
            .map(|e| e.weights.len())
            .sum()
    }

    /// Nodes reachable from the input along enabled edges.
    pub fn reachable_from_input(&self) -> BTreeSet<NodeId> {
        let input_id = self.input_node().innovation_id;
        let mut adjacency: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for edge in self.edges.iter().filter(|e| e.enabled) {
            adjacency.entry(edge.input_node_id).or_default().push(edge.output_node_id);
        }
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        seen.insert(input_id);
        queue.push_back(input_id);
        while let Some(id) = queue.pop_front() {
            if let Some(next) = adjacency.get(&id) {
                for &n in next {
                    if seen.insert(n) {
                        queue.push_back(n);
                    }
                }
            }
        }
        seen
    }

    /// True when every output node is fed by some enabled path from the
    /// input. Hidden nodes may be vestigial; outputs may not.
    pub fn is_fully_reachable(&self) -> bool {
        let reachable = self.reachable_from_input();
        self.nodes
            .iter()
            .filter(|n| n.node_type == NodeType::Output)
            .all(|n| reachable.contains(&n.innovation_id))
    }

    /// Enabled edge indices ordered by (input node depth, edge innovation).
    /// Processing edges in this order completes every node's inputs before
    /// any of its outgoing edges fire, because a node's incoming edges sort
    /// under a strictly smaller input depth than its outgoing ones.
    pub fn sorted_edge_schedule(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.edges.len())
            .filter(|&i| self.edges[i].enabled)
            .collect();
        order.sort_by(|&a, &b| {
            let ea = &self.edges[a];
            let eb = &self.edges[b];
            let da = self.node(ea.input_node_id).expect("endpoint exists").depth;
            let db = self.node(eb.input_node_id).expect("endpoint exists").depth;
            da.cmp(&db).then(ea.innovation_id.cmp(&eb.innovation_id))
        });
        order
    }

    /// Copies this genome as a fresh, unevaluated child.
    pub fn child_of(&self, genome_id: GenomeId, provenance: Provenance) -> CnnGenome {
        let mut child = self.clone();
        child.genome_id = genome_id;
        child.fitness = Fitness::Unevaluated;
        child.best_epoch = 0;
        child.generated_by = provenance;
        child
    }

    /// Full structural integrity check: node/edge ordering and uniqueness,
    /// type and size rules, strict depth increase along edges, filter
    /// dimension agreement and pair uniqueness.
    pub fn validate(&self) -> Result<(), GenomeError> {
        let mut input_count = 0usize;
        let mut output_count = 0usize;
        for (i, node) in self.nodes.iter().enumerate() {
            if i > 0 && self.nodes[i - 1].innovation_id >= node.innovation_id {
                return Err(GenomeError::DuplicateNode(node.innovation_id));
            }
            if node.size_x == 0 || node.size_y == 0 {
                return Err(GenomeError::ZeroSize(node.innovation_id));
            }
            match node.node_type {
                NodeType::Input => {
                    input_count += 1;
                    if node.depth != Depth::ZERO {
                        return Err(GenomeError::DepthRange(node.innovation_id));
                    }
                }
                NodeType::Output => {
                    output_count += 1;
                    if node.depth != Depth::ONE {
                        return Err(GenomeError::DepthRange(node.innovation_id));
                    }
                    if node.size_x != 1 || node.size_y != 1 {
                        return Err(GenomeError::OutputSize(node.innovation_id));
                    }
                }
                NodeType::Hidden => {
                    if node.depth <= Depth::ZERO || node.depth >= Depth::ONE {
                        return Err(GenomeError::DepthRange(node.innovation_id));
                    }
                }
            }
        }
        if input_count != 1 {
            return Err(GenomeError::InputCount);
        }
        if output_count == 0 {
            return Err(GenomeError::NoOutputs);
        }
        let mut pairs = BTreeSet::new();
        for (i, edge) in self.edges.iter().enumerate() {
            if i > 0 && self.edges[i - 1].innovation_id >= edge.innovation_id {
                return Err(GenomeError::DuplicateEdge(edge.innovation_id));
            }
            let input = self.node(edge.input_node_id).ok_or(GenomeError::MissingNode {
                edge: edge.innovation_id,
                node: edge.input_node_id,
            })?;
            let output = self.node(edge.output_node_id).ok_or(GenomeError::MissingNode {
                edge: edge.innovation_id,
                node: edge.output_node_id,
            })?;
            if input.depth >= output.depth {
                return Err(GenomeError::DepthOrder { edge: edge.innovation_id });
            }
            let want_x = conv_size(input.size_x, output.size_x) as usize;
            let want_y = conv_size(input.size_y, output.size_y) as usize;
            for m in [&edge.weights, &edge.velocity] {
                if m.width() != want_x || m.height() != want_y {
                    return Err(GenomeError::FilterDims {
                        edge: edge.innovation_id,
                        got_x: m.width(),
                        got_y: m.height(),
                        want_x,
                        want_y,
                    });
                }
            }
            if !pairs.insert((edge.input_node_id, edge.output_node_id)) {
                return Err(GenomeError::DuplicatePair {
                    input: edge.input_node_id,
                    output: edge.output_node_id,
                });
            }
        }
        Ok(())
    }
}
