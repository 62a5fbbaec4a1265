use std::cmp::Ordering;

use propgen_core::dsl::{parse, print};

use super::Individual;

/// Whitespace-collapsed canonical print, or the collapsed raw text when the
/// program does not parse.
pub fn dedup_key(program_text: &str) -> String {
    let text = match parse(program_text) {
        Ok(p) => print(&p),
        Err(_) => program_text.to_string(),
    };
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Fitness descending, then earlier generation, then lower id.
fn rank_order(a: &Individual, b: &Individual) -> Ordering {
    let fa = a.fitness.unwrap_or(f64::NEG_INFINITY);
    let fb = b.fitness.unwrap_or(f64::NEG_INFINITY);
    fb.total_cmp(&fa)
        .then(a.generation_born.cmp(&b.generation_born))
        .then(a.id.cmp(&b.id))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Insertion {
    Added,
    Duplicate,
    /// Ranked below the capacity cutoff.
    Rejected,
    Unevaluated,
}

/// Capacity-bounded, rank-sorted set of evaluated individuals.
#[derive(Debug, Clone, PartialEq)]
pub struct EliteArchive {
    capacity: usize,
    members: Vec<Individual>,
    keys: Vec<String>,
}

impl EliteArchive {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "archive capacity must be positive");
        EliteArchive {
            capacity,
            members: Vec::new(),
            keys: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Members by rank, best first.
    pub fn members(&self) -> &[Individual] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn best(&self) -> Option<&Individual> {
        self.members.first()
    }

    pub fn best_fitness(&self) -> Option<f64> {
        self.best().and_then(|b| b.fitness)
    }

    pub fn mean_fitness(&self) -> Option<f64> {
        if self.members.is_empty() {
            return None;
        }
        let sum: f64 = self.members.iter().filter_map(|m| m.fitness).sum();
        Some(sum / self.members.len() as f64)
    }

    pub fn contains_program(&self, program_text: &str) -> bool {
        let key = dedup_key(program_text);
        self.keys.contains(&key)
    }

    pub fn insert(&mut self, ind: Individual) -> Insertion {
        if ind.fitness.is_none() {
            return Insertion::Unevaluated;
        }
        let key = dedup_key(&ind.program_text);
        if self.keys.contains(&key) {
            return Insertion::Duplicate;
        }
        let pos = self
            .members
            .partition_point(|m| rank_order(m, &ind) == Ordering::Less);
        if pos >= self.capacity {
            return Insertion::Rejected;
        }
        self.members.insert(pos, ind);
        self.keys.insert(pos, key);
        self.members.truncate(self.capacity);
        self.keys.truncate(self.capacity);
        Insertion::Added
    }

    /// Size, order and uniqueness invariants; `Err` names the first broken one.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.members.len() > self.capacity {
            return Err(format!("{} members over capacity {}", self.members.len(), self.capacity));
        }
        for w in self.members.windows(2) {
            if rank_order(&w[0], &w[1]) != Ordering::Less {
                return Err(format!("ids {} and {} out of order", w[0].id, w[1].id));
            }
        }
        let mut keys = self.keys.clone();
        keys.sort();
        keys.dedup();
        if keys.len() != self.keys.len() {
            return Err("duplicate program in archive".into());
        }
        if self.members.iter().any(|m| m.fitness.is_none()) {
            return Err("unevaluated member".into());
        }
        Ok(())
    }
}
