//! Graphviz rendering for eyeballing evolved topologies. Disabled edges and
//! nodes with no enabled path from the input are drawn dashed.

use super::CnnGenome;
use std::fmt::Write as _;

pub fn genome_to_dot(genome: &CnnGenome) -> String {
    let reachable = genome.reachable_from_input();
    let mut out = String::new();
    writeln!(out, "digraph genome_{} {{", genome.genome_id()).unwrap();
    out.push_str("  rankdir=LR;\n  node [shape=box];\n");
    for node in genome.nodes() {
        let style = if reachable.contains(&node.innovation_id) { "" } else { ", style=dashed" };
        writeln!(
            out,
            "  n{} [label=\"{} {} {}x{}\"{}];",
            node.innovation_id,
            node.innovation_id,
            node.node_type.as_str(),
            node.size_x,
            node.size_y,
            style,
        )
        .unwrap();
    }
    for edge in genome.edges() {
        let style = if edge.enabled { "" } else { ", style=dashed" };
        writeln!(
            out,
            "  n{} -> n{} [label=\"e{} {}x{}\"{}];",
            edge.input_node_id,
            edge.output_node_id,
            edge.innovation_id,
            edge.weights.width(),
            edge.weights.height(),
            style,
        )
        .unwrap();
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_every_gene_once() {
        let mut g = super::super::tests::small_genome();
        g.edge_mut(3).unwrap().enabled = false;
        let dot = genome_to_dot(&g);
        assert!(dot.starts_with("digraph genome_7 {"));
        assert_eq!(dot.matches("[label=\"").count(), 8, "4 nodes + 4 edges");
        assert!(dot.contains("n0 [label=\"0 input 4x4\"];"));
        assert!(dot.contains("n3 -> n2 [label=\"e3 2x2\", style=dashed];"));
        assert!(dot.ends_with("}\n"));
    }

    #[test]
    fn unreachable_nodes_are_dashed() {
        let mut g = super::super::tests::small_genome();
        g.edge_mut(1).unwrap().enabled = false;
        let dot = genome_to_dot(&g);
        assert!(dot.contains("n3 [label=\"3 hidden 2x2\", style=dashed];"));
        assert!(dot.contains("n0 [label=\"0 input 4x4\"];"));
    }
}
