//! The master's half of the asynchronous protocol, with no transport
//! attached: hand out assignments, validate returning results against
//! their quorum, fold validated genomes into the search, and keep the
//! checkpoint and statistics files current. Transports (threads, sockets)
//! serialize their calls into this one state machine.
//!
//! Assignments in flight are deliberately absent from the checkpoint. A
//! resumed master re-derives equivalent work; orphaned ramp-up
//! placeholders stay behind as breeding material until evicted.

use super::quorum::{QuorumVerdict, UnitTracker};
use super::work::{WorkError, WorkResult, WorkUnit};
use crate::evolution::{InsertOutcome, SearchConfig, SearchState, SearchStateError};
use crate::genome::{Fitness, Provenance};
use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const DEFAULT_CHECKPOINT_EVERY: u64 = 25;

/// Runtime knobs that live outside the checkpoint: where durability goes
/// and when to stop. Resuming with a larger budget continues a run.
#[derive(Debug, Clone)]
pub struct MasterOptions {
    /// Total results to accept before answering requests with shutdown.
    pub budget: u64,
    pub checkpoint_path: Option<PathBuf>,
    /// Insertions between periodic checkpoint writes.
    pub checkpoint_every: u64,
    pub stats_path: Option<PathBuf>,
}

impl Default for MasterOptions {
    fn default() -> Self {
        MasterOptions {
            budget: u64::MAX,
            checkpoint_path: None,
            checkpoint_every: DEFAULT_CHECKPOINT_EVERY,
            stats_path: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum MasterError {
    #[error(transparent)]
    Work(#[from] WorkError),
    #[error(transparent)]
    Search(#[from] SearchStateError),
    #[error("master checkpoint: {0}")]
    CheckpointFormat(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("work {work_id} returned genome {got}, expected {expected}")]
    WrongGenome {
        work_id: u64,
        got: u64,
        expected: u64,
    },
}

/// One entry in the validation audit trail.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationEvent {
    /// A digest reached quorum; the canonical result went to the search.
    Validated {
        work_id: u64,
        digest: String,
        agreeing: u32,
        outcome: InsertOutcome,
    },
    /// A result whose digest lost (or whose round collapsed).
    Flagged { work_id: u64, digest: String },
    /// A round collapsed without agreement; the unit went out again.
    Reissued { work_id: u64 },
    /// A result for a unit that is no longer open.
    Late { work_id: u64, digest: String },
}

impl fmt::Display for ValidationEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationEvent::Validated {
                work_id,
                digest,
                agreeing,
                outcome,
            } => {
                let outcome = match outcome {
                    InsertOutcome::ReplacedPlaceholder => "replaced-placeholder",
                    InsertOutcome::Inserted => "inserted",
                    InsertOutcome::Rejected => "rejected",
                };
                write!(f, "work {work_id} validated x{agreeing} {outcome} digest {digest}")
            }
            ValidationEvent::Flagged { work_id, digest } => {
                write!(f, "work {work_id} flagged invalid digest {digest}")
            }
            ValidationEvent::Reissued { work_id } => write!(f, "work {work_id} reissued"),
            ValidationEvent::Late { work_id, digest } => {
                write!(f, "work {work_id} late result digest {digest}")
            }
        }
    }
}

pub struct MasterState {
    search: SearchState,
    options: MasterOptions,
    /// Every parseable result received, validated or not; the budget
    /// counts these.
    results_received: u64,
    /// Assignments ready to hand out; quorum copies of a unit queue here.
    queue: VecDeque<WorkUnit>,
    open: BTreeMap<u64, UnitTracker>,
    events: Vec<ValidationEvent>,
    stats: Option<fs::File>,
    next_requester: u64,
}

impl MasterState {
    pub fn new(config: SearchConfig, options: MasterOptions) -> Result<MasterState, MasterError> {
        Self::assemble(SearchState::new(config), options)
    }

    /// Rebuilds a master from checkpoint text. The statistics file, if
    /// configured, is truncated to the checkpoint's insertion count so the
    /// stream continues without duplicate records.
    pub fn from_checkpoint_text(
        text: &str,
        options: MasterOptions,
    ) -> Result<MasterState, MasterError> {
        let mut parts = text.splitn(3, '\n');
        if parts.next() != Some("master_state 1") {
            return Err(MasterError::CheckpointFormat(
                "expected `master_state 1`".into(),
            ));
        }
        let received = parts
            .next()
            .and_then(|l| l.strip_prefix("received "))
            .and_then(|v| v.parse::<u64>().ok())
            .ok_or_else(|| MasterError::CheckpointFormat("expected `received <count>`".into()))?;
        let rest = parts
            .next()
            .ok_or_else(|| MasterError::CheckpointFormat("truncated".into()))?;
        let search = SearchState::from_checkpoint_text(rest)?;
        let mut master = Self::assemble(search, options)?;
        master.results_received = received;
        Ok(master)
    }

    pub fn from_checkpoint_file(
        path: &Path,
        options: MasterOptions,
    ) -> Result<MasterState, MasterError> {
        let text = fs::read_to_string(path).map_err(|source| MasterError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_checkpoint_text(&text, options)
    }

    fn assemble(search: SearchState, options: MasterOptions) -> Result<MasterState, MasterError> {
        let stats = match &options.stats_path {
            Some(path) => Some(open_stats(path, search.insertions()).map_err(|source| {
                MasterError::Io {
                    path: path.clone(),
                    source,
                }
            })?),
            None => None,
        };
        Ok(MasterState {
            search,
            options,
            results_received: 0,
            queue: VecDeque::new(),
            open: BTreeMap::new(),
            events: Vec::new(),
            stats,
            next_requester: 0,
        })
    }

    /// Issues an identity for one work consumer (a connection, a thread).
    /// Identities keep redundant copies of a unit on distinct consumers.
    pub fn register_requester(&mut self) -> u64 {
        self.next_requester += 1;
        self.next_requester
    }

    pub fn search(&self) -> &SearchState {
        &self.search
    }

    pub fn events(&self) -> &[ValidationEvent] {
        &self.events
    }

    pub fn results_received(&self) -> u64 {
        self.results_received
    }

    pub fn budget_exhausted(&self) -> bool {
        self.results_received >= self.options.budget
    }

    /// Open units plus queued assignments; zero once every handed-out
    /// assignment has resolved.
    pub fn open_units(&self) -> usize {
        self.open.len()
    }

    /// The next assignment for `requester`, or `None` once the budget is
    /// spent (the transport answers with shutdown). Queued copies come
    /// first, skipping units the requester already holds a copy of; when
    /// nothing queued is eligible, a fresh unit is bred. Never blocks on
    /// outstanding results.
    pub fn next_assignment(&mut self, requester: u64) -> Option<WorkUnit> {
        if self.budget_exhausted() {
            return None;
        }
        let eligible = self.queue.iter().position(|u| {
            self.open
                .get(&u.work_id)
                .map_or(true, |t| t.eligible(requester))
        });
        if let Some(pos) = eligible {
            let unit = self.queue.remove(pos).expect("position is in range");
            if let Some(tracker) = self.open.get_mut(&unit.work_id) {
                tracker.assign(requester);
            }
            return Some(unit);
        }
        let item = self.search.generate_work();
        let unit = WorkUnit::new(item, self.search.config());
        let mut tracker = UnitTracker::new(unit.clone());
        tracker.assign(requester);
        self.open.insert(unit.work_id, tracker);
        for _ in 1..unit.quorum {
            self.queue.push_back(unit.clone());
        }
        Some(unit)
    }

    /// Absorbs a result off the wire. A parse failure or a result carrying
    /// the wrong genome is a protocol violation: the error closes the
    /// offending connection and the lost assignment is re-queued.
    pub fn receive_result_text(&mut self, text: &str) -> Result<(), MasterError> {
        let result = WorkResult::from_text(text)?;
        if let Some(tracker) = self.open.get(&result.work_id) {
            let expected = tracker.unit().genome.genome_id();
            if result.genome.genome_id() != expected {
                self.queue.push_back(tracker.unit().clone());
                return Err(MasterError::WrongGenome {
                    work_id: result.work_id,
                    got: result.genome.genome_id(),
                    expected,
                });
            }
        }
        self.receive_result(result)
    }

    /// Counts the result against the budget and runs quorum validation.
    pub fn receive_result(&mut self, result: WorkResult) -> Result<(), MasterError> {
        self.results_received += 1;
        let work_id = result.work_id;
        let Some(tracker) = self.open.get_mut(&work_id) else {
            self.events.push(ValidationEvent::Late {
                work_id,
                digest: result.digest,
            });
            return Ok(());
        };
        match tracker.add(result) {
            QuorumVerdict::Pending { extra_assignments } => {
                let unit = tracker.unit().clone();
                for _ in 0..extra_assignments {
                    self.queue.push_back(unit.clone());
                }
                Ok(())
            }
            QuorumVerdict::Valid {
                canonical,
                agreeing,
                flagged,
            } => {
                self.open.remove(&work_id);
                self.queue.retain(|u| u.work_id != work_id);
                for r in flagged {
                    self.events.push(ValidationEvent::Flagged {
                        work_id,
                        digest: r.digest,
                    });
                }
                self.accept(canonical, agreeing)
            }
            QuorumVerdict::AllFlagged { flagged } => {
                for r in flagged {
                    self.events.push(ValidationEvent::Flagged {
                        work_id,
                        digest: r.digest,
                    });
                }
                tracker.reissue();
                let unit = tracker.unit().clone();
                self.queue.retain(|u| u.work_id != work_id);
                for _ in 0..unit.quorum {
                    self.queue.push_back(unit.clone());
                }
                self.events.push(ValidationEvent::Reissued { work_id });
                Ok(())
            }
        }
    }

    /// Hands the validated canonical result to the search and keeps the
    /// statistics and checkpoint files current.
    fn accept(&mut self, result: WorkResult, agreeing: u32) -> Result<(), MasterError> {
        let digest = result.digest.clone();
        let work_id = result.work_id;
        let provenance = result.genome.generated_by();
        let fitness = result.fitness();
        let best_epoch = result.best_epoch();
        let outcome = self.search.insert_result(result.genome);
        self.events.push(ValidationEvent::Validated {
            work_id,
            digest,
            agreeing,
            outcome,
        });
        if outcome == InsertOutcome::Rejected {
            return Ok(());
        }
        self.append_stats_row(provenance, fitness, best_epoch)?;
        if self.search.insertions() % self.options.checkpoint_every == 0 {
            self.save_checkpoint()?;
        }
        Ok(())
    }

    fn append_stats_row(
        &mut self,
        provenance: Provenance,
        fitness: f64,
        best_epoch: u32,
    ) -> Result<(), MasterError> {
        let Some(file) = &mut self.stats else {
            return Ok(());
        };
        // Members sort evaluated-first, so the evaluated block is a prefix.
        let mut best = f64::MAX;
        let mut worst = f64::MAX;
        let mut sum = 0.0;
        let mut count = 0usize;
        for g in self.search.population().members() {
            if let Fitness::Evaluated(f) = g.fitness() {
                if count == 0 {
                    best = f;
                }
                worst = f;
                sum += f;
                count += 1;
            }
        }
        let avg = if count == 0 { f64::MAX } else { sum / count as f64 };
        let row = format!(
            "{},{},{},{},{},{},{}\n",
            self.search.insertions(),
            provenance.as_str(),
            fitness,
            best_epoch,
            best,
            avg,
            worst
        );
        let path = self.options.stats_path.clone().unwrap_or_default();
        file.write_all(row.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|source| MasterError::Io { path, source })
    }

    pub fn to_checkpoint_text(&self) -> String {
        format!(
            "master_state 1\nreceived {}\n{}",
            self.results_received,
            self.search.to_checkpoint_text()
        )
    }

    /// Writes the checkpoint atomically (temp file, then rename). A no-op
    /// without a configured path.
    pub fn save_checkpoint(&self) -> Result<(), MasterError> {
        let Some(path) = &self.options.checkpoint_path else {
            return Ok(());
        };
        let io_err = |source| MasterError::Io {
            path: path.clone(),
            source,
        };
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_checkpoint_text()).map_err(io_err)?;
        fs::rename(&tmp, path).map_err(io_err)
    }
}

/// Opens the statistics stream in append mode, first cutting any stale
/// tail: a resumed run keeps exactly the header plus one row per insertion
/// already in the checkpoint.
fn open_stats(path: &Path, keep_rows: u64) -> Result<fs::File, std::io::Error> {
    const HEADER: &str = "insertion,provenance,fitness,best_epoch,pop_best,pop_avg,pop_worst\n";
    let mut kept = String::from(HEADER);
    if path.exists() {
        let reader = BufReader::new(fs::File::open(path)?);
        for line in reader.lines().skip(1).take(keep_rows as usize) {
            kept.push_str(&line?);
            kept.push('\n');
        }
    }
    fs::write(path, kept)?;
    fs::OpenOptions::new().append(true).open(path)
}
