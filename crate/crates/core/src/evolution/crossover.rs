//! Recombination of two evaluated genomes. The child takes the union of
//! both edge sets; an edge both parents carry comes through enabled, an
//! edge only one parent carries survives a biased coin (favoring the fitter
//! parent's genes) or arrives disabled. Node sizes come from the fitter
//! parent wherever the parents disagree.

use crate::determinism::PortableRng;
use crate::genome::{CnnGenome, EdgeGene, GenomeId, Provenance};
use crate::training::{he_sigma, SigmaRule};

/// Orders a pair by fitness (lower error wins), breaking ties by fewer
/// genes, then by lower genome id. Returns (more fit, less fit).
pub fn rank_parents<'a>(a: &'a CnnGenome, b: &'a CnnGenome) -> (&'a CnnGenome, &'a CnnGenome) {
    let key = |g: &CnnGenome| (g.fitness(), g.gene_count(), g.genome_id());
    if key(a) <= key(b) {
        (a, b)
    } else {
        (b, a)
    }
}

/// Builds a crossover child with zeroed filters sized from its own node
/// dimensions. An edge carried by one parent only stays enabled with
/// probability `more_fit_rate` or `less_fit_rate` (by which parent carries
/// it) and arrives disabled otherwise. Weight content comes afterwards,
/// from [`initialize_child_weights`] or a full fresh draw, depending on the
/// configured weight initialization mode.
pub fn crossover(
    a: &CnnGenome,
    b: &CnnGenome,
    child_id: GenomeId,
    more_fit_rate: f64,
    less_fit_rate: f64,
    rng: &mut PortableRng,
) -> CnnGenome {
    let (better, worse) = rank_parents(a, b);

    // Nodes: union by innovation, the fitter parent's copy on conflicts.
    let mut nodes = better.nodes().to_vec();
    for node in worse.nodes() {
        if !nodes.iter().any(|n| n.innovation_id == node.innovation_id) {
            nodes.push(node.clone());
        }
    }
    nodes.sort_by_key(|n| n.innovation_id);

    // Edges: union by innovation ascending. Shared edges come through
    // enabled; single-parent edges spend one uniform draw each.
    let mut edge_plan: Vec<(u64, bool)> = Vec::new();
    let mut bi = 0;
    let mut wi = 0;
    while bi < better.edges().len() || wi < worse.edges().len() {
        // A missing side compares greater, so the present side is taken.
        let b_id = better.edges().get(bi).map_or(u64::MAX, |e| e.innovation_id);
        let w_id = worse.edges().get(wi).map_or(u64::MAX, |e| e.innovation_id);
        match b_id.cmp(&w_id) {
            std::cmp::Ordering::Equal => {
                edge_plan.push((b_id, true));
                bi += 1;
                wi += 1;
            }
            std::cmp::Ordering::Less => {
                edge_plan.push((b_id, rng.uniform_real() < more_fit_rate));
                bi += 1;
            }
            std::cmp::Ordering::Greater => {
                edge_plan.push((w_id, rng.uniform_real() < less_fit_rate));
                wi += 1;
            }
        }
    }

    let edges = edge_plan
        .into_iter()
        .map(|(id, enabled)| {
            let donor = better.edge(id).or_else(|| worse.edge(id)).expect("edge from union");
            if let (Some(be), Some(we)) = (better.edge(id), worse.edge(id)) {
                assert!(
                    be.input_node_id == we.input_node_id
                        && be.output_node_id == we.output_node_id,
                    "innovation {id} disagrees on endpoints between parents; \
                     the innovation history is corrupt"
                );
            }
            let input = nodes
                .iter()
                .find(|n| n.innovation_id == donor.input_node_id)
                .expect("union holds both endpoints");
            let output = nodes
                .iter()
                .find(|n| n.innovation_id == donor.output_node_id)
                .expect("union holds both endpoints");
            EdgeGene::zeroed(id, input, output, enabled)
        })
        .collect();

    let mut child = CnnGenome::new(child_id, nodes, edges, better.weight_init_mode())
        .expect("union of two valid genomes is valid");
    child.set_generated_by(Provenance::Crossover);
    // Both parents carry the primordial direct input->output edges, so
    // those are shared and enabled: every output is reachable.
    debug_assert!(child.is_fully_reachable());
    child
}

/// Fills a crossover child's filters in place: an edge copies the parent
/// filter with the same innovation and dimensions (fitter parent first);
/// an enabled edge with no such donor gets a fresh fan-in-scaled draw, a
/// disabled one keeps zeros. Velocities stay zero throughout. Draw order is
/// node-major by innovation, then incoming edges by innovation, entries
/// row-major.
pub fn initialize_child_weights(
    child: &mut CnnGenome,
    a: &CnnGenome,
    b: &CnnGenome,
    rng: &mut PortableRng,
    sigma_rule: SigmaRule,
) {
    let (better, worse) = rank_parents(a, b);
    let node_ids: Vec<u64> = child.nodes().iter().map(|n| n.innovation_id).collect();
    for node_id in node_ids {
        let sigma = he_sigma(child.enabled_fan_in(node_id), sigma_rule);
        let edge_ids: Vec<(u64, bool)> = child
            .edges()
            .iter()
            .filter(|e| e.output_node_id == node_id)
            .map(|e| (e.innovation_id, e.enabled))
            .collect();
        for (edge_id, enabled) in edge_ids {
            let (w, h) = {
                let e = child.edge(edge_id).expect("listed above");
                (e.weights.width(), e.weights.height())
            };
            let donor = [better, worse].into_iter().find_map(|parent| {
                parent
                    .edge(edge_id)
                    .filter(|e| e.weights.width() == w && e.weights.height() == h)
            });
            let edge = child.edge_mut(edge_id).expect("listed above");
            match donor {
                Some(parent_edge) => {
                    edge.weights.values_mut().copy_from_slice(parent_edge.weights.values());
                }
                None if enabled => {
                    for value in edge.weights.values_mut() {
                        *value = rng.normal() * sigma;
                    }
                }
                // A disabled edge with no matching donor stays zero; there
                // is nothing to resurrect.
                None => {}
            }
        }
    }
}
