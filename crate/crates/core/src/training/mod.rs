//! Weight training: per-example stochastic gradient descent with momentum
//! and weight decay over a fixed genome topology.
//!
//! Every epoch shuffles the example order, runs one forward/backward/update
//! cycle per image and records the summed cross-entropy as the epoch error.
//! The lowest epoch error becomes the genome's fitness and the weights from
//! that epoch are the ones it keeps. All arithmetic on the result path uses
//! the portable primitives, so a seed fixes the whole trajectory bit for bit
//! on any platform.

mod benchmarks;
mod checkpoint;
mod engine;
mod init;

pub use benchmarks::{modified_lenet, one_layer, two_layer};
pub use engine::{activate, activate_derivative, Engine, ACTIVATION_CEILING, ACTIVATION_LEAK};
pub use init::{he_sigma, initialize_weights, SigmaRule};

use crate::data::Dataset;
use crate::determinism::{fisher_yates_shuffle, PortableRng};
use crate::genome::{CnnGenome, Fitness, Matrix};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

/// Initial optimizer settings plus their per-epoch schedule. After each
/// epoch every value is multiplied by its `_scale` and clamped at its
/// `_limit` (a ceiling for momentum, floors for the other two).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub momentum: f64,
    pub momentum_scale: f64,
    pub momentum_limit: f64,
    pub learning_rate: f64,
    pub learning_rate_scale: f64,
    pub learning_rate_limit: f64,
    pub weight_decay: f64,
    pub weight_decay_scale: f64,
    pub weight_decay_limit: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            momentum: 0.5,
            momentum_scale: 1.10,
            momentum_limit: 0.99,
            learning_rate: 0.001,
            learning_rate_scale: 0.98,
            learning_rate_limit: 0.00001,
            weight_decay: 0.00001,
            weight_decay_scale: 0.98,
            weight_decay_limit: 0.000001,
        }
    }
}

/// The live optimizer values for the current epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperState {
    pub momentum: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl HyperState {
    pub fn initial(params: &Hyperparameters) -> HyperState {
        HyperState {
            momentum: params.momentum,
            learning_rate: params.learning_rate,
            weight_decay: params.weight_decay,
        }
    }

    /// Advances the schedule by one epoch.
    pub fn step(&mut self, params: &Hyperparameters) {
        self.momentum = (self.momentum * params.momentum_scale).min(params.momentum_limit);
        self.learning_rate =
            (self.learning_rate * params.learning_rate_scale).max(params.learning_rate_limit);
        self.weight_decay =
            (self.weight_decay * params.weight_decay_scale).max(params.weight_decay_limit);
    }
}

/// Periodic mid-training snapshots for crash recovery. Resuming from one
/// reproduces the uninterrupted run bit for bit.
#[derive(Debug, Clone)]
pub struct CheckpointOptions {
    pub path: PathBuf,
    /// Write after every multiple of this many completed epochs.
    pub every_epochs: u32,
    /// Stamped into the file; resume refuses a checkpoint for another unit.
    pub work_id: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub epochs: u32,
    /// Seeds the example-order shuffle.
    pub seed: u64,
    pub hyper: Hyperparameters,
    pub checkpoint: Option<CheckpointOptions>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Lowest epoch error, or `f64::MAX` when training aborted on a
    /// non-finite loss (or ran zero epochs).
    pub fitness: f64,
    pub best_epoch: u32,
    /// Summed cross-entropy per completed epoch.
    pub epoch_errors: Vec<f64>,
    pub aborted: bool,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("checkpoint {path}: {source}")]
    CheckpointIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint {path}: {message}")]
    CheckpointFormat { path: PathBuf, message: String },
    #[error("checkpoint {path}: {message}")]
    CheckpointMismatch { path: PathBuf, message: String },
}

pub(crate) struct BestSnapshot {
    pub epoch: u32,
    pub error: f64,
    /// Weight values per edge, parallel to the genome's edge order.
    pub weights: Vec<Vec<f64>>,
}

/// Everything the epoch loop carries between epochs; exactly the state a
/// checkpoint persists.
pub(crate) struct LoopState {
    pub epoch: u32,
    pub rng: PortableRng,
    pub hyper: HyperState,
    pub epoch_errors: Vec<f64>,
    pub best: Option<BestSnapshot>,
}

impl LoopState {
    fn fresh(options: &TrainOptions) -> LoopState {
        LoopState {
            epoch: 0,
            rng: PortableRng::new(options.seed),
            hyper: HyperState::initial(&options.hyper),
            epoch_errors: Vec::new(),
            best: None,
        }
    }
}

pub(crate) fn snapshot_weights(genome: &CnnGenome) -> Vec<Vec<f64>> {
    genome.edges().iter().map(|e| e.weights.values().to_vec()).collect()
}

fn restore_weights(genome: &mut CnnGenome, weights: &[Vec<f64>]) {
    for (edge, saved) in genome.edges_mut().iter_mut().zip(weights) {
        edge.weights.values_mut().copy_from_slice(saved);
        edge.velocity.fill(0.0);
    }
}

/// Trains `genome` in place and stamps its fitness and best epoch. The
/// weights left in the genome are the best epoch's snapshot, with velocities
/// cleared. If a checkpoint file from an earlier attempt exists it takes
/// over the entire training state, including the weights.
pub fn train(
    genome: &mut CnnGenome,
    data: &Dataset,
    options: &TrainOptions,
) -> Result<TrainReport, TrainError> {
    assert!(!data.is_empty(), "training data must not be empty");
    let mut state = match &options.checkpoint {
        Some(c) if c.path.exists() => checkpoint::resume(genome, c, options)?,
        _ => LoopState::fresh(options),
    };
    let fallback = snapshot_weights(genome);
    let mut engine = Engine::new(genome);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut image = Matrix::zeros(data.width(), data.height());
    let mut aborted = false;

    'epochs: while state.epoch < options.epochs {
        // Reset to the identity before shuffling so the epoch's order is a
        // pure function of the rng state; a resumed run needs nothing else.
        for (i, slot) in order.iter_mut().enumerate() {
            *slot = i;
        }
        fisher_yates_shuffle(&mut order, &mut state.rng);
        let mut error = 0.0;
        for &i in &order {
            data.image_into(i, &mut image);
            let loss = engine.train_example(genome, &image, data.label(i), &state.hyper);
            error += loss;
            if !loss.is_finite() {
                aborted = true;
                break 'epochs;
            }
        }
        state.epoch_errors.push(error);
        if state.best.as_ref().map_or(true, |b| error < b.error) {
            state.best = Some(BestSnapshot {
                epoch: state.epoch,
                error,
                weights: snapshot_weights(genome),
            });
        }
        state.epoch += 1;
        state.hyper.step(&options.hyper);
        if let Some(c) = &options.checkpoint {
            if c.every_epochs > 0 && state.epoch % c.every_epochs == 0 {
                checkpoint::write(genome, &state, c, options)?;
            }
        }
    }

    let (fitness, best_epoch) = match (&state.best, aborted) {
        (Some(best), false) => (best.error, best.epoch),
        // Aborted runs report the worst possible fitness but still carry
        // finite weights: the best snapshot if an epoch finished, otherwise
        // whatever the genome started with.
        (Some(_), true) | (None, _) => (f64::MAX, 0),
    };
    match &state.best {
        Some(best) => restore_weights(genome, &best.weights),
        None => restore_weights(genome, &fallback),
    }
    genome.set_fitness(Fitness::Evaluated(fitness));
    genome.set_best_epoch(best_epoch);
    Ok(TrainReport { fitness, best_epoch, epoch_errors: state.epoch_errors, aborted })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub error_sum: f64,
    pub correct: usize,
    pub total: usize,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Forward-only pass over a labeled set: summed cross-entropy plus
/// prediction accuracy, ties predicting the lowest class.
pub fn evaluate(genome: &CnnGenome, data: &Dataset) -> Evaluation {
    let mut engine = Engine::new(genome);
    let mut image = Matrix::zeros(data.width(), data.height());
    let mut error_sum = 0.0;
    let mut correct = 0usize;
    for i in 0..data.len() {
        data.image_into(i, &mut image);
        engine.infer(genome, &image);
        error_sum += engine.loss(data.label(i));
        if engine.predicted_class() == usize::from(data.label(i)) {
            correct += 1;
        }
    }
    Evaluation { error_sum, correct, total: data.len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::serialize_genome;

    /// 4x4 two-class images: class 0 lights the left half, class 1 the
    /// right, at per-example brightness levels.
    pub(crate) fn halves_dataset(n: usize) -> Dataset {
        let (rows, cols) = (4usize, 4usize);
        let mut images = Vec::with_capacity(n * rows * cols);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let label = (i % 2) as u8;
            let bright = 140 + ((i * 37) % 100) as u8;
            for _y in 0..rows {
                for x in 0..cols {
                    let lit = if label == 0 { x < cols / 2 } else { x >= cols / 2 };
                    images.push(if lit { bright } else { 0 });
                }
            }
            labels.push(label);
        }
        Dataset::from_parts(images, labels, rows, cols, 0).unwrap()
    }

    fn trained_pair(seed: u64, epochs: u32) -> (CnnGenome, TrainReport, Dataset) {
        let data = halves_dataset(64);
        let mut genome = one_layer(4, 4, 2);
        let mut rng = PortableRng::new(11);
        initialize_weights(&mut genome, &mut rng, SigmaRule::Standard);
        let options = TrainOptions {
            epochs,
            seed,
            hyper: Hyperparameters { learning_rate: 0.01, ..Default::default() },
            checkpoint: None,
        };
        let report = train(&mut genome, &data, &options).unwrap();
        (genome, report, data)
    }

    #[test]
    fn hyper_schedule_follows_closed_form() {
        let params = Hyperparameters::default();
        let mut state = HyperState::initial(&params);
        for _ in 0..5 {
            state.step(&params);
        }
        // Momentum is still below its 0.99 ceiling after five epochs.
        assert!((state.momentum - 0.5 * 1.10f64.powi(5)).abs() < 1e-12);
        for _ in 0..5 {
            state.step(&params);
        }
        assert_eq!(state.momentum, 0.99, "ceiling reached during epochs 6-10");
        assert!((state.learning_rate - 0.001 * 0.98f64.powi(10)).abs() < 1e-15);
        for _ in 0..500 {
            state.step(&params);
        }
        assert_eq!(state.momentum, 0.99);
        assert_eq!(state.learning_rate, 0.00001);
        assert_eq!(state.weight_decay, 0.000001);
    }

    #[test]
    fn learns_the_halves_task() {
        let (genome, report, data) = trained_pair(5, 12);
        assert!(!report.aborted);
        assert_eq!(report.epoch_errors.len(), 12);
        let first = report.epoch_errors[0];
        let last = *report.epoch_errors.last().unwrap();
        assert!(last < first * 0.5, "error {first} -> {last}");
        let eval = evaluate(&genome, &data);
        assert!(eval.accuracy() >= 0.95, "accuracy {}", eval.accuracy());
    }

    #[test]
    fn fitness_is_the_minimum_epoch_error() {
        let (genome, report, _) = trained_pair(5, 12);
        let min = report.epoch_errors.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(report.fitness, min);
        let at_best = report.epoch_errors[report.best_epoch as usize];
        assert_eq!(at_best, report.fitness);
        assert_eq!(genome.fitness(), Fitness::Evaluated(min));
        assert_eq!(genome.best_epoch(), report.best_epoch);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let (g1, r1, _) = trained_pair(9, 6);
        let (g2, r2, _) = trained_pair(9, 6);
        let (_g3, r3, _) = trained_pair(10, 6);
        assert_eq!(serialize_genome(&g1), serialize_genome(&g2));
        assert_eq!(r1.epoch_errors, r2.epoch_errors);
        assert_ne!(
            r1.epoch_errors, r3.epoch_errors,
            "a different shuffle order should change the trajectory"
        );
        assert_eq!(g1.fitness(), g2.fitness());
    }

    #[test]
    fn exploding_weights_abort_with_worst_fitness() {
        // A hidden layer lets the blow-up compound: one-layer nets stay
        // finite because their gradients are bounded by the input pixels.
        let data = halves_dataset(16);
        let mut genome = two_layer(4, 4, 2);
        let mut rng = PortableRng::new(3);
        initialize_weights(&mut genome, &mut rng, SigmaRule::Standard);
        let options = TrainOptions {
            epochs: 5,
            seed: 1,
            hyper: Hyperparameters { learning_rate: 1e160, ..Default::default() },
            checkpoint: None,
        };
        let report = train(&mut genome, &data, &options).unwrap();
        assert!(report.aborted);
        assert_eq!(report.fitness, f64::MAX);
        assert_eq!(report.best_epoch, 0);
        assert_eq!(genome.fitness(), Fitness::Evaluated(f64::MAX));
        // The genome must still serialize: weights stay finite.
        let text = serialize_genome(&genome);
        assert!(text.contains("0x1.fffffffffffffp+1023"));
    }

    #[test]
    fn zero_epochs_reports_worst_fitness_without_touching_weights() {
        let data = halves_dataset(8);
        let mut genome = one_layer(4, 4, 2);
        let mut rng = PortableRng::new(3);
        initialize_weights(&mut genome, &mut rng, SigmaRule::Standard);
        let before = snapshot_weights(&genome);
        let options = TrainOptions {
            epochs: 0,
            seed: 1,
            hyper: Hyperparameters::default(),
            checkpoint: None,
        };
        let report = train(&mut genome, &data, &options).unwrap();
        assert_eq!(report.fitness, f64::MAX);
        assert!(!report.aborted);
        assert_eq!(snapshot_weights(&genome), before);
    }

    #[test]
    fn evaluation_counts_ties_for_the_lowest_class() {
        let data = halves_dataset(10);
        let genome = one_layer(4, 4, 2);
        // All-zero weights tie every class; argmax resolves to class 0, so
        // exactly the class-0 examples count as correct.
        let eval = evaluate(&genome, &data);
        assert_eq!(eval.correct, 5);
        assert_eq!(eval.total, 10);
    }
}
