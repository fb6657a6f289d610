//! Evolves convolutional neural network topologies with an asynchronous
//! master/worker search. Genomes are graphs of filter-size nodes and
//! innovation-numbered convolution edges; workers train candidates with a
//! deterministic from-scratch backprop trainer so identical work units yield
//! byte-identical results on any host, which makes results verifiable by
//! digest quorum.

pub mod cli;
pub mod data;
pub mod determinism;
pub mod distribution;
pub mod evolution;
pub mod genome;
pub mod training;

pub(crate) mod textio;
