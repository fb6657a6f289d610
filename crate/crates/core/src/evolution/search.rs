//! The asynchronous search itself: a state machine that hands out training
//! assignments on request and folds finished genomes back in, in whatever
//! order they return. The very first assignment is the minimal network;
//! until the population is full every further assignment mutates a
//! uniformly random member (evaluated or not) and a placeholder holds its
//! slot. After that, children come from crossover (at the configured rate,
//! given two evaluated parents) or from mutation, and must beat the current
//! worst member to survive.
//!
//! The whole state round-trips through a line-oriented text checkpoint,
//! byte-stable across save/load, so a master can stop and resume without
//! disturbing the trajectory. Assignments in flight are deliberately not
//! part of the checkpoint; their results are simply re-derived by future
//! work.

use super::crossover::{crossover, initialize_child_weights};
use super::operators::{mutate, MutationSettings, OperatorWeights};
use super::population::{InsertOutcome, Population};
use super::InnovationRegistry;
use crate::determinism::{hexfloat_encode, PortableRng};
use crate::genome::{
    parse_block, serialize_genome, CnnGenome, Depth, EdgeGene, GenomeError, GenomeId, NodeGene,
    NodeId, NodeType, Provenance, WeightInitMode,
};
use crate::textio::{
    field_u64, field_values, field_values_variable, parse_hex, parse_u64, take_line, ParseFailure,
};
use crate::training::{initialize_weights, Hyperparameters, SigmaRule};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

/// Everything that shapes a search run. Serialized into checkpoints so a
/// resumed master cannot silently run with different settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub population_size: usize,
    /// Probability that a full-population child is bred by crossover.
    pub crossover_rate: f64,
    /// Operators applied to each mutation child.
    pub mutations_per_genome: u32,
    /// Training epochs per assignment.
    pub epochs: u32,
    pub hyper: Hyperparameters,
    pub weight_init: WeightInitMode,
    pub sigma_rule: SigmaRule,
    pub operator_weights: OperatorWeights,
    /// Candidate adjustments for the resize operators.
    pub size_deltas: Vec<i64>,
    /// Chance that an edge present only in the fitter parent stays enabled.
    pub more_fit_crossover_rate: f64,
    /// Chance that an edge present only in the less fit parent stays enabled.
    pub less_fit_crossover_rate: f64,
    pub input_x: u32,
    pub input_y: u32,
    pub classes: u32,
    /// Matching results required to accept an assignment's outcome.
    pub quorum: u32,
    pub seed: u64,
    /// Budget for mutation retries and operator redraws.
    pub retry_budget: u32,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            population_size: 20,
            crossover_rate: 0.2,
            mutations_per_genome: 3,
            epochs: 10,
            hyper: Hyperparameters::default(),
            weight_init: WeightInitMode::Epigenetic,
            sigma_rule: SigmaRule::Standard,
            operator_weights: OperatorWeights::default(),
            size_deltas: vec![-2, -1, 1, 2],
            more_fit_crossover_rate: 0.8,
            less_fit_crossover_rate: 0.4,
            input_x: 28,
            input_y: 28,
            classes: 10,
            quorum: 1,
            seed: 42,
            retry_budget: 32,
        }
    }
}

impl SearchConfig {
    fn mutation_settings(&self) -> MutationSettings {
        MutationSettings {
            mutations: self.mutations_per_genome,
            retry_budget: self.retry_budget,
            weights: self.operator_weights,
            sigma_rule: self.sigma_rule,
            size_deltas: self.size_deltas.clone(),
        }
    }
}

/// One training assignment: a genome to train and the seed that fixes its
/// shuffle order. Wire concerns (epochs, quorum) live in the config.
#[derive(Debug, Clone)]
pub struct WorkItem {
    pub work_id: u64,
    pub training_seed: u64,
    pub genome: CnnGenome,
}

#[derive(Debug, Error)]
pub enum SearchStateError {
    #[error("search checkpoint line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Genome(#[from] GenomeError),
}

impl From<ParseFailure> for SearchStateError {
    fn from(f: ParseFailure) -> Self {
        SearchStateError::Parse {
            line: f.line,
            message: f.message,
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> SearchStateError {
    SearchStateError::Parse {
        line,
        message: message.into(),
    }
}

/// The smallest valid network for a problem: the input node wired straight
/// to one output node per class. Registers its innovations, so the search
/// builds it exactly once and clones it afterwards.
pub fn minimal_genome(
    registry: &mut InnovationRegistry,
    input_x: u32,
    input_y: u32,
    classes: u32,
) -> CnnGenome {
    let input = NodeGene {
        innovation_id: registry.node_innovation(),
        node_type: NodeType::Input,
        size_x: input_x,
        size_y: input_y,
        depth: Depth::ZERO,
    };
    let mut nodes = vec![input.clone()];
    let mut edges = Vec::new();
    for _ in 0..classes {
        let output = NodeGene {
            innovation_id: registry.node_innovation(),
            node_type: NodeType::Output,
            size_x: 1,
            size_y: 1,
            depth: Depth::ONE,
        };
        let edge_id = registry.edge_innovation(input.innovation_id, output.innovation_id);
        edges.push(EdgeGene::zeroed(edge_id, &input, &output, true));
        nodes.push(output);
    }
    CnnGenome::new(0, nodes, edges, WeightInitMode::Epigenetic)
        .expect("the minimal structure is always valid")
}

#[derive(Debug, Clone)]
pub struct SearchState {
    config: SearchConfig,
    rng: PortableRng,
    registry: InnovationRegistry,
    population: Population,
    /// The minimal network, genome id 0. Issued (as a clone with fresh
    /// weights) on the first request and whenever breeding dead-ends.
    template: CnnGenome,
    next_genome_id: GenomeId,
    next_work_id: u64,
    /// Trained genomes that entered the population.
    insertions: u64,
    /// Trained genomes received, whether or not they entered.
    completed_trainings: u64,
}

impl SearchState {
    pub fn new(config: SearchConfig) -> SearchState {
        let mut registry = InnovationRegistry::new();
        let mut template =
            minimal_genome(&mut registry, config.input_x, config.input_y, config.classes);
        template.set_weight_init_mode(config.weight_init);
        SearchState {
            rng: PortableRng::new(config.seed),
            registry,
            population: Population::new(config.population_size),
            template,
            next_genome_id: 1,
            next_work_id: 1,
            insertions: 0,
            completed_trainings: 0,
            config,
        }
    }

    pub fn config(&self) -> &SearchConfig {
        &self.config
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn registry(&self) -> &InnovationRegistry {
        &self.registry
    }

    pub fn insertions(&self) -> u64 {
        self.insertions
    }

    pub fn completed_trainings(&self) -> u64 {
        self.completed_trainings
    }

    pub fn best(&self) -> Option<&CnnGenome> {
        self.population.best()
    }

    /// Builds the next assignment. Infallible: if every mutation attempt
    /// dead-ends it falls back to a fresh minimal network.
    pub fn generate_work(&mut self) -> WorkItem {
        let genome = self.build_child();
        let training_seed = self.rng.next();
        let work_id = self.next_work_id;
        self.next_work_id += 1;
        WorkItem {
            work_id,
            training_seed,
            genome,
        }
    }

    /// Folds a trained genome back in and reports where it landed.
    pub fn insert_result(&mut self, genome: CnnGenome) -> InsertOutcome {
        self.completed_trainings += 1;
        let outcome = self.population.offer(genome);
        if outcome != InsertOutcome::Rejected {
            self.insertions += 1;
        }
        outcome
    }

    fn build_child(&mut self) -> CnnGenome {
        let child_id = self.next_genome_id;
        self.next_genome_id += 1;
        if !self.population.is_full() {
            // Ramp-up: the first request gets the minimal network, later
            // ones mutate a random member; each holds its slot with an
            // unevaluated copy.
            let child = if self.population.is_empty() {
                self.initial_child(child_id)
            } else {
                self.bred_child(child_id, false)
            };
            self.population.push_placeholder(child.clone());
            return child;
        }
        self.bred_child(child_id, true)
    }

    /// Breeds from the current population: a crossover coin first (when
    /// allowed and two evaluated parents exist), then mutation, re-picking
    /// parents when a lineage dead-ends.
    fn bred_child(&mut self, child_id: GenomeId, allow_crossover: bool) -> CnnGenome {
        if allow_crossover
            && self.population.evaluated().len() >= 2
            && self.rng.uniform_real() < self.config.crossover_rate
        {
            return self.crossover_child(child_id);
        }
        for _ in 0..self.config.retry_budget {
            if let Some(child) = self.mutated_child(child_id) {
                return child;
            }
        }
        self.initial_child(child_id)
    }

    fn initial_child(&mut self, child_id: GenomeId) -> CnnGenome {
        let mut child = self.template.child_of(child_id, Provenance::Initial);
        initialize_weights(&mut child, &mut self.rng, self.config.sigma_rule);
        child
    }

    /// Uniform pick of a distinct parent pair from the evaluated members.
    fn pick_parents(&mut self) -> (CnnGenome, CnnGenome) {
        let pool = self.population.evaluated();
        let n = pool.len() as u64;
        let i = self.rng.below(n) as usize;
        let mut j = self.rng.below(n - 1) as usize;
        if j >= i {
            j += 1;
        }
        (pool[i].clone(), pool[j].clone())
    }

    fn crossover_child(&mut self, child_id: GenomeId) -> CnnGenome {
        let (a, b) = self.pick_parents();
        let mut child = crossover(
            &a,
            &b,
            child_id,
            self.config.more_fit_crossover_rate,
            self.config.less_fit_crossover_rate,
            &mut self.rng,
        );
        match self.config.weight_init {
            WeightInitMode::Epigenetic => {
                initialize_child_weights(&mut child, &a, &b, &mut self.rng, self.config.sigma_rule);
            }
            WeightInitMode::Randomized => {
                initialize_weights(&mut child, &mut self.rng, self.config.sigma_rule);
            }
        }
        child
    }

    /// Mutates a uniformly random member; the pool includes unevaluated
    /// placeholders, whose structures are as breedable as any.
    fn mutated_child(&mut self, child_id: GenomeId) -> Option<CnnGenome> {
        let i = self.rng.below(self.population.len() as u64) as usize;
        let parent = self.population.members()[i].clone();
        let settings = self.config.mutation_settings();
        let mut child = mutate(&parent, child_id, &settings, &mut self.registry, &mut self.rng)?;
        if self.config.weight_init == WeightInitMode::Randomized {
            initialize_weights(&mut child, &mut self.rng, self.config.sigma_rule);
        }
        Some(child)
    }

    /// Serializes the whole search, byte-stable across a load/save cycle.
    pub fn to_checkpoint_text(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        out.push_str("search_state 1\n");
        writeln!(out, "population_size {}", c.population_size).unwrap();
        writeln!(out, "crossover_rate {}", hex(c.crossover_rate)).unwrap();
        writeln!(out, "mutations {}", c.mutations_per_genome).unwrap();
        writeln!(out, "epochs {}", c.epochs).unwrap();
        writeln!(out, "input {} {}", c.input_x, c.input_y).unwrap();
        writeln!(out, "classes {}", c.classes).unwrap();
        writeln!(out, "quorum {}", c.quorum).unwrap();
        writeln!(out, "seed {}", c.seed).unwrap();
        writeln!(out, "retry_budget {}", c.retry_budget).unwrap();
        writeln!(out, "weight_init {}", c.weight_init.as_str()).unwrap();
        writeln!(out, "sigma_rule {}", c.sigma_rule.as_str()).unwrap();
        let weights: Vec<String> = c
            .operator_weights
            .as_array()
            .iter()
            .map(|w| w.to_string())
            .collect();
        writeln!(out, "operator_weights {}", weights.join(" ")).unwrap();
        let deltas: Vec<String> = c.size_deltas.iter().map(|d| d.to_string()).collect();
        writeln!(out, "size_deltas {}", deltas.join(" ")).unwrap();
        writeln!(
            out,
            "parent_rates {} {}",
            hex(c.more_fit_crossover_rate),
            hex(c.less_fit_crossover_rate)
        )
        .unwrap();
        let h = &c.hyper;
        let hyper = [
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
        let hyper: Vec<String> = hyper.iter().map(|&v| hex(v)).collect();
        writeln!(out, "hyper {}", hyper.join(" ")).unwrap();
        writeln!(out, "rng {}", self.rng.state()).unwrap();
        writeln!(out, "next_genome {}", self.next_genome_id).unwrap();
        writeln!(out, "next_work {}", self.next_work_id).unwrap();
        writeln!(out, "insertions {}", self.insertions).unwrap();
        writeln!(out, "completed {}", self.completed_trainings).unwrap();
        let counts: Vec<String> = self
            .population
            .inserted_counts()
            .iter()
            .map(|n| n.to_string())
            .collect();
        writeln!(out, "counts {}", counts.join(" ")).unwrap();
        writeln!(
            out,
            "registry {} {}",
            self.registry.next_node(),
            self.registry.next_edge()
        )
        .unwrap();
        writeln!(out, "history {}", self.registry.edge_history().len()).unwrap();
        for (&(input, output), &edge) in self.registry.edge_history() {
            writeln!(out, "pair {input} {output} {edge}").unwrap();
        }
        out.push_str("template\n");
        out.push_str(&serialize_genome(&self.template));
        writeln!(out, "population {}", self.population.len()).unwrap();
        for member in self.population.members() {
            out.push_str(&serialize_genome(member));
        }
        out
    }

    pub fn from_checkpoint_text(text: &str) -> Result<SearchState, SearchStateError> {
        let mut lines = text.lines().enumerate().peekable();
        let (_, magic) = take_line(&mut lines)?;
        if magic != "search_state 1" {
            return Err(parse_err(1, "expected `search_state 1`"));
        }
        let population_size = field_u64(&mut lines, "population_size")? as usize;
        let (line, rate) = field_values(&mut lines, "crossover_rate", 1)?;
        let crossover_rate = parse_hex(&rate[0], line)?;
        let mutations_per_genome = field_u64(&mut lines, "mutations")? as u32;
        let epochs = field_u64(&mut lines, "epochs")? as u32;
        let (line, input) = field_values(&mut lines, "input", 2)?;
        let input_x = parse_u64(&input[0], line)? as u32;
        let input_y = parse_u64(&input[1], line)? as u32;
        let classes = field_u64(&mut lines, "classes")? as u32;
        let quorum = field_u64(&mut lines, "quorum")? as u32;
        let seed = field_u64(&mut lines, "seed")?;
        let retry_budget = field_u64(&mut lines, "retry_budget")? as u32;
        let (line, mode) = field_values(&mut lines, "weight_init", 1)?;
        let weight_init = WeightInitMode::parse(&mode[0])
            .ok_or_else(|| parse_err(line, "unknown weight_init"))?;
        let (line, rule) = field_values(&mut lines, "sigma_rule", 1)?;
        let sigma_rule =
            SigmaRule::parse(&rule[0]).ok_or_else(|| parse_err(line, "unknown sigma_rule"))?;
        let (line, weights) = field_values(&mut lines, "operator_weights", 7)?;
        let mut weight_array = [0u32; 7];
        for (slot, token) in weight_array.iter_mut().zip(&weights) {
            *slot = parse_u64(token, line)? as u32;
        }
        let operator_weights = OperatorWeights::from_array(weight_array);
        let (line, deltas) = field_values_variable(&mut lines, "size_deltas")?;
        let size_deltas = deltas
            .iter()
            .map(|t| {
                t.parse::<i64>()
                    .map_err(|_| parse_err(line, format!("`{t}` is not an integer")))
            })
            .collect::<Result<Vec<i64>, _>>()?;
        if size_deltas.is_empty() {
            return Err(parse_err(line, "size_deltas must not be empty"));
        }
        let (line, rates) = field_values(&mut lines, "parent_rates", 2)?;
        let more_fit_crossover_rate = parse_hex(&rates[0], line)?;
        let less_fit_crossover_rate = parse_hex(&rates[1], line)?;
        let (line, hyper) = field_values(&mut lines, "hyper", 9)?;
        let mut h = [0.0f64; 9];
        for (slot, token) in h.iter_mut().zip(&hyper) {
            *slot = parse_hex(token, line)?;
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
        let (line, rng_state) = field_values(&mut lines, "rng", 1)?;
        let rng = PortableRng::from_state(parse_u64(&rng_state[0], line)?)
            .map_err(|e| parse_err(line, e.to_string()))?;
        let next_genome_id = field_u64(&mut lines, "next_genome")?;
        let next_work_id = field_u64(&mut lines, "next_work")?;
        let insertions = field_u64(&mut lines, "insertions")?;
        let completed_trainings = field_u64(&mut lines, "completed")?;
        let (line, counts) = field_values(&mut lines, "counts", Provenance::ALL.len())?;
        let mut inserted_counts = [0u64; Provenance::ALL.len()];
        for (slot, token) in inserted_counts.iter_mut().zip(&counts) {
            *slot = parse_u64(token, line)?;
        }
        let (line, registry_counters) = field_values(&mut lines, "registry", 2)?;
        let next_node = parse_u64(&registry_counters[0], line)?;
        let next_edge = parse_u64(&registry_counters[1], line)?;
        let pair_count = field_u64(&mut lines, "history")?;
        let mut history: BTreeMap<(NodeId, NodeId), u64> = BTreeMap::new();
        for _ in 0..pair_count {
            let (line, pair) = field_values(&mut lines, "pair", 3)?;
            let key = (parse_u64(&pair[0], line)?, parse_u64(&pair[1], line)?);
            if history.insert(key, parse_u64(&pair[2], line)?).is_some() {
                return Err(parse_err(line, "duplicate history pair"));
            }
        }
        let registry = InnovationRegistry::from_parts(next_node, next_edge, history);
        let (idx, marker) = take_line(&mut lines)?;
        if marker != "template" {
            return Err(parse_err(idx + 1, "expected `template`"));
        }
        let template = parse_block(&mut lines)?;
        let member_count = field_u64(&mut lines, "population")? as usize;
        if member_count > population_size {
            return Err(parse_err(0, "population exceeds its configured size"));
        }
        let mut members = Vec::with_capacity(member_count);
        for _ in 0..member_count {
            members.push(parse_block(&mut lines)?);
        }
        if let Some((idx, _)) = lines.next() {
            return Err(parse_err(idx + 1, "trailing content"));
        }
        if template.input_node().size_x != input_x
            || template.input_node().size_y != input_y
            || template.output_node_ids().len() != classes as usize
        {
            return Err(parse_err(0, "template does not match the configured problem"));
        }
        let config = SearchConfig {
            population_size,
            crossover_rate,
            mutations_per_genome,
            epochs,
            hyper,
            weight_init,
            sigma_rule,
            operator_weights,
            size_deltas,
            more_fit_crossover_rate,
            less_fit_crossover_rate,
            input_x,
            input_y,
            classes,
            quorum,
            seed,
            retry_budget,
        };
        Ok(SearchState {
            config,
            rng,
            registry,
            population: Population::from_parts(population_size, members, inserted_counts),
            template,
            next_genome_id,
            next_work_id,
            insertions,
            completed_trainings,
        })
    }
}

fn hex(v: f64) -> String {
    hexfloat_encode(v).expect("search state values are finite")
}
