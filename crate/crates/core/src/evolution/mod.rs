//! The evolutionary search over network topologies: innovation-numbered
//! structural genes, weighted mutation operators, fitness-biased crossover,
//! a bounded population, and the asynchronous state machine that ties them
//! together.

mod crossover;
mod innovation;
mod operators;
mod population;
mod search;

pub use crossover::{crossover, initialize_child_weights, rank_parents};
pub use innovation::InnovationRegistry;
pub use operators::{
    apply_operator, mutate, MutationOperator, MutationSettings, OperatorWeights,
};
pub use population::{InsertOutcome, Population};
pub use search::{minimal_genome, SearchConfig, SearchState, SearchStateError, WorkItem};
