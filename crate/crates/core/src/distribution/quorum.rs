//! Redundant-evaluation validation. Each open unit collects results until
//! some digest appears `quorum` times; the master keeps enough assignments
//! outstanding that agreement stays reachable, and gives up on a round once
//! `2 * quorum - 1` results disagree, at which point everything collected
//! is flagged and the unit starts a fresh round.

use super::work::WorkResult;
use super::WorkUnit;
use std::collections::BTreeSet;

/// What the tracker concluded after absorbing one result.
#[derive(Debug, PartialEq)]
pub enum QuorumVerdict {
    /// Agreement is still possible. `extra_assignments` copies of the unit
    /// must be queued to keep it possible (0 or 1).
    Pending { extra_assignments: u32 },
    /// A digest reached quorum. The agreeing results' shared outcome is
    /// canonical; `flagged` holds the disagreeing results.
    Valid {
        canonical: WorkResult,
        agreeing: u32,
        flagged: Vec<WorkResult>,
    },
    /// The round burned through `2 * quorum - 1` results with no agreement:
    /// every result is flagged and the unit must be reissued from scratch.
    AllFlagged { flagged: Vec<WorkResult> },
}

/// One work unit's validation state across its outstanding copies.
#[derive(Debug, Clone)]
pub struct UnitTracker {
    unit: WorkUnit,
    /// Assignments handed out (or queued) for the current round.
    issued: u32,
    /// Requesters holding a copy this round. Copies of one unit go to
    /// distinct requesters, so no single machine can outvote the others
    /// with its own agreeing duplicates.
    assigned_to: BTreeSet<u64>,
    results: Vec<WorkResult>,
}

impl UnitTracker {
    /// Opens a unit whose first round starts with `quorum` assignments.
    pub fn new(unit: WorkUnit) -> UnitTracker {
        let issued = unit.quorum;
        UnitTracker {
            unit,
            issued,
            assigned_to: BTreeSet::new(),
            results: Vec::new(),
        }
    }

    pub fn unit(&self) -> &WorkUnit {
        &self.unit
    }

    /// Whether this requester may take a copy in the current round.
    pub fn eligible(&self, requester: u64) -> bool {
        !self.assigned_to.contains(&requester)
    }

    /// Records that a copy went to this requester.
    pub fn assign(&mut self, requester: u64) {
        self.assigned_to.insert(requester);
    }

    /// Starts a fresh round after a failed one: collected results are gone,
    /// previous holders may participate again, `quorum` new assignments go
    /// out.
    pub fn reissue(&mut self) {
        self.results.clear();
        self.assigned_to.clear();
        self.issued = self.unit.quorum;
    }

    fn multiplicity(&self, digest: &str) -> u32 {
        self.results.iter().filter(|r| r.digest == digest).count() as u32
    }

    /// Absorbs one result and reports the unit's fate. After `Valid` or
    /// `AllFlagged` the caller must close or reissue the unit; `add` assumes
    /// an open round.
    pub fn add(&mut self, result: WorkResult) -> QuorumVerdict {
        let quorum = self.unit.quorum;
        self.results.push(result);
        let digest = self.results.last().unwrap().digest.clone();
        if self.multiplicity(&digest) >= quorum {
            let mut agreeing = Vec::new();
            let mut flagged = Vec::new();
            for r in self.results.drain(..) {
                if r.digest == digest {
                    agreeing.push(r);
                } else {
                    flagged.push(r);
                }
            }
            return QuorumVerdict::Valid {
                canonical: agreeing.pop().expect("quorum counted at least one"),
                agreeing: quorum,
                flagged,
            };
        }
        if self.results.len() as u32 >= 2 * quorum - 1 {
            return QuorumVerdict::AllFlagged {
                flagged: std::mem::take(&mut self.results),
            };
        }
        // Keep agreement reachable: the best case is every outstanding
        // assignment returning the current majority digest.
        let best = self
            .results
            .iter()
            .map(|r| self.multiplicity(&r.digest))
            .max()
            .unwrap_or(0);
        let outstanding = self.issued - self.results.len() as u32;
        let extra_assignments = (quorum - best).saturating_sub(outstanding);
        self.issued += extra_assignments;
        QuorumVerdict::Pending { extra_assignments }
    }
}
