//! The surviving genomes, kept sorted from best to worst. Ordering is
//! fitness first (lower epoch error is better), then fewer genes, then the
//! older genome id; unevaluated placeholders sort after everything
//! evaluated. A full population only accepts a genome that beats its
//! current worst member.

use crate::genome::{CnnGenome, Fitness, GenomeId, Provenance};

/// What happened to a trained genome offered to the population.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    /// It replaced its own ramp-up placeholder.
    ReplacedPlaceholder,
    /// It entered the population, evicting the worst member if full.
    Inserted,
    /// It was no better than the current worst member.
    Rejected,
}

#[derive(Debug, Clone)]
pub struct Population {
    capacity: usize,
    members: Vec<CnnGenome>,
    /// Genomes that entered the population, tallied by provenance in
    /// [`Provenance::ALL`] order. Placeholders count once, at push time.
    inserted_counts: [u64; Provenance::ALL.len()],
}

fn sort_key(genome: &CnnGenome) -> (Fitness, usize, GenomeId) {
    (genome.fitness(), genome.gene_count(), genome.genome_id())
}

fn tally_slot(provenance: Provenance) -> usize {
    Provenance::ALL
        .iter()
        .position(|&p| p == provenance)
        .expect("ALL covers every variant")
}

impl Population {
    pub fn new(capacity: usize) -> Population {
        assert!(capacity > 0, "a population needs at least one slot");
        Population {
            capacity,
            members: Vec::with_capacity(capacity),
            inserted_counts: [0; Provenance::ALL.len()],
        }
    }

    /// Rebuilds a population from checkpointed members; re-sorts so the
    /// invariant never depends on serialized order.
    pub fn from_parts(
        capacity: usize,
        mut members: Vec<CnnGenome>,
        inserted_counts: [u64; Provenance::ALL.len()],
    ) -> Population {
        assert!(capacity > 0 && members.len() <= capacity);
        members.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
        Population {
            capacity,
            members,
            inserted_counts,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.members.len() >= self.capacity
    }

    /// Members, best first.
    pub fn members(&self) -> &[CnnGenome] {
        &self.members
    }

    /// Members with a fitness, best first. The selection pool for parents.
    pub fn evaluated(&self) -> Vec<&CnnGenome> {
        self.members.iter().filter(|g| g.fitness().is_evaluated()).collect()
    }

    pub fn best(&self) -> Option<&CnnGenome> {
        self.members.first().filter(|g| g.fitness().is_evaluated())
    }

    pub fn inserted_counts(&self) -> &[u64; Provenance::ALL.len()] {
        &self.inserted_counts
    }

    pub fn inserted_count(&self, provenance: Provenance) -> u64 {
        self.inserted_counts[tally_slot(provenance)]
    }

    /// Reserves a ramp-up slot with an untrained genome. The slot's tally
    /// happens here; the trained result later swaps in without recounting.
    pub fn push_placeholder(&mut self, genome: CnnGenome) {
        assert!(!self.is_full(), "placeholders only exist during ramp-up");
        assert!(!genome.fitness().is_evaluated(), "a placeholder is unevaluated");
        self.inserted_counts[tally_slot(genome.generated_by())] += 1;
        self.insert_sorted(genome);
    }

    /// Offers a trained genome. It first looks for its own placeholder;
    /// otherwise it must beat the worst member to enter.
    pub fn offer(&mut self, genome: CnnGenome) -> InsertOutcome {
        assert!(genome.fitness().is_evaluated(), "only trained genomes are offered");
        if let Some(at) = self
            .members
            .iter()
            .position(|g| g.genome_id() == genome.genome_id() && !g.fitness().is_evaluated())
        {
            self.members.remove(at);
            self.insert_sorted(genome);
            return InsertOutcome::ReplacedPlaceholder;
        }
        if self.members.iter().any(|g| g.genome_id() == genome.genome_id()) {
            // A duplicate report for a genome already settled; keep the
            // first copy.
            return InsertOutcome::Rejected;
        }
        if self.is_full() {
            let worst = self.members.last().expect("full population");
            if sort_key(&genome) >= sort_key(worst) {
                return InsertOutcome::Rejected;
            }
            self.members.pop();
        }
        self.inserted_counts[tally_slot(genome.generated_by())] += 1;
        self.insert_sorted(genome);
        InsertOutcome::Inserted
    }

    fn insert_sorted(&mut self, genome: CnnGenome) {
        let key = sort_key(&genome);
        let at = self.members.partition_point(|g| sort_key(g) < key);
        self.members.insert(at, genome);
    }
}
