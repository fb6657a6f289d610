//! The worker's side of the bargain: fetch a unit, train it (checkpointing
//! locally so a crash costs at most a few epochs), report the result, ask
//! for more. Evaluating a unit is a pure function of its text plus the
//! dataset, which is what lets redundant copies agree digest for digest.

use super::protocol::{read_message, write_message, Message, ProtocolError};
use super::work::{WorkError, WorkResult, WorkUnit};
use crate::data::Dataset;
use crate::distribution::MasterError;
use crate::training::{train, CheckpointOptions, TrainError, TrainOptions};
use std::fs;
use std::net::TcpStream;
use std::path::PathBuf;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;
use thiserror::Error;

/// Where a worker parks its mid-training state, and how often.
#[derive(Debug, Clone)]
pub struct WorkerCheckpointing {
    /// One slot file per worker; a new unit displaces a stale checkpoint.
    pub path: PathBuf,
    pub every_epochs: u32,
}

pub const DEFAULT_CHECKPOINT_EPOCHS: u32 = 5;

#[derive(Debug, Clone)]
pub struct WorkerOptions {
    pub checkpointing: Option<WorkerCheckpointing>,
    /// Fault-injection hook: adds this to the first enabled weight of every
    /// trained genome before reporting, simulating a corrupt host whose
    /// results must lose quorum votes.
    pub perturb_first_weight: Option<f64>,
    /// Disconnect cleanly after this many acknowledged results, like a
    /// volunteer host leaving mid-run. `None` stays until shutdown.
    pub unit_limit: Option<u64>,
    pub max_connect_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for WorkerOptions {
    fn default() -> Self {
        WorkerOptions {
            checkpointing: None,
            perturb_first_weight: None,
            unit_limit: None,
            max_connect_attempts: 6,
            initial_backoff: Duration::from_millis(50),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkerSummary {
    pub units_completed: u64,
}

#[derive(Debug, Error)]
pub enum WorkerError {
    #[error("could not reach {addr} after {attempts} attempts: {source}")]
    Connect {
        addr: String,
        attempts: u32,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Work(#[from] WorkError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Master(#[from] MasterError),
    #[error("master sent {0} out of turn")]
    UnexpectedMessage(&'static str),
}

/// Trains one unit to completion: the pure (unit, dataset) -> result
/// function at the heart of quorum validation. An existing checkpoint for
/// the same unit is resumed bit-exactly.
pub fn evaluate_work_unit(
    unit: &WorkUnit,
    data: &Dataset,
    checkpoint: Option<CheckpointOptions>,
) -> Result<WorkResult, TrainError> {
    let mut genome = unit.genome.clone();
    let options = TrainOptions {
        epochs: unit.epochs,
        seed: unit.training_seed,
        hyper: unit.hyper,
        checkpoint,
    };
    train(&mut genome, data, &options)?;
    Ok(WorkResult::from_trained(unit.work_id, genome))
}

fn checkpoint_options(unit: &WorkUnit, options: &WorkerOptions) -> Option<CheckpointOptions> {
    options.checkpointing.as_ref().map(|c| CheckpointOptions {
        path: c.path.clone(),
        every_epochs: c.every_epochs,
        work_id: unit.work_id,
    })
}

/// Trains a unit, surviving stale or corrupt local checkpoints by
/// restarting the unit fresh, and applies the fault-injection hook.
fn train_unit(
    unit: &WorkUnit,
    data: &Dataset,
    options: &WorkerOptions,
) -> Result<WorkResult, WorkerError> {
    let checkpoint = checkpoint_options(unit, options);
    let outcome = match evaluate_work_unit(unit, data, checkpoint.clone()) {
        Err(
            TrainError::CheckpointFormat { .. }
            | TrainError::CheckpointMismatch { .. }
            | TrainError::CheckpointIo { .. },
        ) => {
            if let Some(c) = &checkpoint {
                let _ = fs::remove_file(&c.path);
            }
            evaluate_work_unit(unit, data, checkpoint)
        }
        outcome => outcome,
    };
    let mut result = outcome?;
    if let Some(delta) = options.perturb_first_weight {
        let genome = &mut result.genome;
        let edge = genome
            .edges_mut()
            .iter_mut()
            .find(|e| e.enabled)
            .expect("every issued genome has an enabled edge");
        edge.weights.values_mut()[0] += delta;
        result = WorkResult::from_trained(result.work_id, result.genome);
    }
    Ok(result)
}

fn discard_checkpoint(options: &WorkerOptions) {
    if let Some(c) = &options.checkpointing {
        let _ = fs::remove_file(&c.path);
    }
}

fn connect_with_backoff(addr: &str, options: &WorkerOptions) -> Result<TcpStream, WorkerError> {
    let attempts = options.max_connect_attempts.max(1);
    let mut delay = options.initial_backoff;
    let mut last = None;
    for attempt in 0..attempts {
        match TcpStream::connect(addr) {
            Ok(stream) => return Ok(stream),
            Err(e) => last = Some(e),
        }
        if attempt + 1 < attempts {
            thread::sleep(delay);
            delay = delay.saturating_mul(2);
        }
    }
    Err(WorkerError::Connect {
        addr: addr.to_string(),
        attempts,
        source: last.expect("at least one attempt ran"),
    })
}

/// Requests, trains, and reports until the master says shutdown. Lost
/// connections reconnect with exponential backoff; an unacknowledged
/// result is re-sent on the new connection, a few times, then dropped so
/// a master that keeps refusing it cannot wedge the worker.
pub fn run_worker(
    addr: &str,
    data: &Dataset,
    options: &WorkerOptions,
) -> Result<WorkerSummary, WorkerError> {
    let mut completed = 0u64;
    // The trained-but-unacknowledged result, carried across reconnects.
    let mut pending: Option<String> = None;
    let mut resends = 0u32;
    'sessions: loop {
        let mut stream = connect_with_backoff(addr, options)?;
        loop {
            if let Some(text) = pending.clone() {
                match report(&mut stream, &text)? {
                    true => {
                        pending = None;
                        completed += 1;
                        discard_checkpoint(options);
                        if options.unit_limit.is_some_and(|n| completed >= n) {
                            return Ok(WorkerSummary {
                                units_completed: completed,
                            });
                        }
                    }
                    false => {
                        resends += 1;
                        if resends > 3 {
                            pending = None;
                        }
                        continue 'sessions;
                    }
                }
            }
            match write_message(&mut stream, &Message::RequestWork)
                .and_then(|_| read_message(&mut stream))
            {
                Ok(Some(Message::WorkUnit(text))) => {
                    let unit = WorkUnit::from_text(&text)?;
                    let result = train_unit(&unit, data, options)?;
                    pending = Some(result.to_text());
                    resends = 0;
                }
                Ok(Some(Message::Shutdown)) => {
                    return Ok(WorkerSummary {
                        units_completed: completed,
                    })
                }
                Ok(Some(_)) => return Err(WorkerError::UnexpectedMessage("a reply")),
                Ok(None) | Err(ProtocolError::Io(_)) => continue 'sessions,
                Err(e) => return Err(e.into()),
            }
        }
    }
}

/// Sends one result and waits for the ack. `Ok(false)` asks the caller to
/// reconnect and retry.
fn report(stream: &mut TcpStream, text: &str) -> Result<bool, WorkerError> {
    match write_message(stream, &Message::ReportResult(text.to_string()))
        .and_then(|_| read_message(stream))
    {
        Ok(Some(Message::Ack)) => Ok(true),
        Ok(Some(_)) => Err(WorkerError::UnexpectedMessage("a reply")),
        Ok(None) | Err(ProtocolError::Io(_)) => Ok(false),
        Err(e) => Err(e.into()),
    }
}

/// Runs the master and `workers` training threads in one process, to
/// budget exhaustion. Each thread owns a checkpoint slot under
/// `checkpoint_dir` when one is given. Units in flight when the budget
/// fills still report, so the received total can overshoot the budget by
/// up to `workers - 1`.
pub fn run_in_process(
    master: &Mutex<super::MasterState>,
    data: &Dataset,
    workers: usize,
    checkpoint_dir: Option<&std::path::Path>,
    checkpoint_epochs: u32,
) -> Result<(), WorkerError> {
    assert!(workers > 0, "at least one worker thread is required");
    thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|slot| {
                scope.spawn(move || -> Result<(), WorkerError> {
                    let options = WorkerOptions {
                        checkpointing: checkpoint_dir.map(|dir| WorkerCheckpointing {
                            path: dir.join(format!("worker-{slot}.training")),
                            every_epochs: checkpoint_epochs,
                        }),
                        ..WorkerOptions::default()
                    };
                    let requester = master.lock().unwrap().register_requester();
                    loop {
                        let unit = master.lock().unwrap().next_assignment(requester);
                        let Some(unit) = unit else {
                            return Ok(());
                        };
                        let result = train_unit(&unit, data, &options)?;
                        master.lock().unwrap().receive_result(result)?;
                        discard_checkpoint(&options);
                    }
                })
            })
            .collect();
        for handle in handles {
            handle.join().expect("worker threads do not panic")?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{MasterOptions, MasterState};
    use crate::evolution::SearchConfig;
    use tempfile::tempdir;

    /// A tiny deterministic dataset: 8 images, 2 classes, 6x6.
    fn tiny_dataset() -> Dataset {
        let mut pixels = Vec::new();
        let mut labels = Vec::new();
        for i in 0..8u8 {
            for p in 0..36u8 {
                pixels.push(i.wrapping_mul(31).wrapping_add(p.wrapping_mul(7)));
            }
            labels.push(i % 2);
        }
        Dataset::from_parts(pixels, labels, 6, 6, 0).unwrap()
    }

    fn unit_for(config: &SearchConfig) -> WorkUnit {
        let mut state = crate::evolution::SearchState::new(config.clone());
        WorkUnit::new(state.generate_work(), config)
    }

    fn small_config() -> SearchConfig {
        SearchConfig {
            population_size: 3,
            input_x: 6,
            input_y: 6,
            classes: 2,
            epochs: 6,
            seed: 33,
            ..SearchConfig::default()
        }
    }

    #[test]
    fn evaluation_is_a_pure_function() {
        let data = tiny_dataset();
        let unit = unit_for(&small_config());
        let a = evaluate_work_unit(&unit, &data, None).unwrap();
        let b = evaluate_work_unit(&unit, &data, None).unwrap();
        assert_eq!(a.digest, b.digest);
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn kill_and_resume_reproduces_the_uninterrupted_digest() {
        let data = tiny_dataset();
        let unit = unit_for(&small_config());
        assert_eq!(unit.epochs, 6);
        let uninterrupted = evaluate_work_unit(&unit, &data, None).unwrap();

        // A finished run leaves its last periodic checkpoint behind; with a
        // 6-epoch unit saved every 4 epochs that file is the epoch-4 state,
        // byte for byte what a worker killed after epoch 4 would leave.
        let dir = tempdir().unwrap();
        let path = dir.path().join("slot.training");
        let checkpoint = CheckpointOptions {
            path: path.clone(),
            every_epochs: 4,
            work_id: unit.work_id,
        };
        evaluate_work_unit(&unit, &data, Some(checkpoint.clone())).unwrap();
        assert!(path.exists());

        let resumed = evaluate_work_unit(&unit, &data, Some(checkpoint)).unwrap();
        assert_eq!(resumed.digest, uninterrupted.digest);
        assert_eq!(resumed.to_text(), uninterrupted.to_text());
    }

    #[test]
    fn corrupt_local_checkpoints_restart_the_unit() {
        let data = tiny_dataset();
        let unit = unit_for(&small_config());
        let clean = evaluate_work_unit(&unit, &data, None).unwrap();

        let dir = tempdir().unwrap();
        let path = dir.path().join("slot.training");
        fs::write(&path, "not a checkpoint\n").unwrap();
        let options = WorkerOptions {
            checkpointing: Some(WorkerCheckpointing {
                path: path.clone(),
                every_epochs: 100,
            }),
            ..WorkerOptions::default()
        };
        let result = train_unit(&unit, &data, &options).unwrap();
        assert_eq!(result.digest, clean.digest);
    }

    #[test]
    fn a_stale_checkpoint_for_another_unit_is_displaced() {
        let data = tiny_dataset();
        let config = small_config();
        let mut state = crate::evolution::SearchState::new(config.clone());
        let first = WorkUnit::new(state.generate_work(), &config);
        let second = WorkUnit::new(state.generate_work(), &config);
        assert_ne!(first.work_id, second.work_id);

        let dir = tempdir().unwrap();
        let options = WorkerOptions {
            checkpointing: Some(WorkerCheckpointing {
                path: dir.path().join("slot.training"),
                every_epochs: 2,
            }),
            ..WorkerOptions::default()
        };
        // Leave a checkpoint for the first unit behind, then train the
        // second through the same slot.
        train_unit(&first, &data, &options).unwrap();
        let viaslot = train_unit(&second, &data, &options).unwrap();
        let clean = evaluate_work_unit(&second, &data, None).unwrap();
        assert_eq!(viaslot.digest, clean.digest);
    }

    #[test]
    fn the_perturbation_hook_changes_the_digest_but_stays_valid() {
        let data = tiny_dataset();
        let unit = unit_for(&small_config());
        let honest = evaluate_work_unit(&unit, &data, None).unwrap();
        let options = WorkerOptions {
            perturb_first_weight: Some(1e-3),
            ..WorkerOptions::default()
        };
        let corrupt = train_unit(&unit, &data, &options).unwrap();
        assert_ne!(corrupt.digest, honest.digest);
        // Still parses and self-verifies: only quorum can catch it.
        assert!(WorkResult::from_text(&corrupt.to_text()).is_ok());
    }

    #[test]
    fn in_process_run_reaches_the_budget() {
        let data = tiny_dataset();
        let master = Mutex::new(
            MasterState::new(
                small_config(),
                MasterOptions {
                    budget: 12,
                    ..MasterOptions::default()
                },
            )
            .unwrap(),
        );
        run_in_process(&master, &data, 2, None, DEFAULT_CHECKPOINT_EPOCHS).unwrap();
        let master = master.into_inner().unwrap();
        let received = master.results_received();
        // One unit can be in flight when the budget fills.
        assert!((12..=13).contains(&received), "received {received}");
        assert_eq!(master.search().completed_trainings(), received);
        assert!(master.search().best().is_some());
        assert_eq!(master.open_units(), 0);
    }

    #[test]
    fn an_unreachable_master_fails_cleanly_after_bounded_retries() {
        let data = tiny_dataset();
        let options = WorkerOptions {
            max_connect_attempts: 2,
            initial_backoff: Duration::from_millis(1),
            ..WorkerOptions::default()
        };
        // A listener dropped before the call guarantees a closed port.
        let closed = {
            let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
            listener.local_addr().unwrap().to_string()
        };
        let err = run_worker(&closed, &data, &options).unwrap_err();
        match err {
            WorkerError::Connect { attempts, .. } => assert_eq!(attempts, 2),
            other => panic!("expected Connect, got {other:?}"),
        }
    }
}
