//! Proportional prioritized replay over a sum tree.

use rand::Rng;

use crate::error::{Error, Result};

/// Binary sum tree over leaf priorities; grows by doubling.
#[derive(Debug, Clone)]
struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new() -> Self {
        Self {
            leaves: 1,
            nodes: vec![0.0; 2],
        }
    }

    fn grow(&mut self, priorities: &[f64]) {
        self.leaves *= 2;
        self.nodes = vec![0.0; 2 * self.leaves];
        self.nodes[self.leaves..self.leaves + priorities.len()].copy_from_slice(priorities);
        for i in (1..self.leaves).rev() {
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
        }
    }

    fn set(&mut self, i: usize, p: f64) {
        let mut at = self.leaves + i;
        self.nodes[at] = p;
        while at > 1 {
            at /= 2;
            self.nodes[at] = self.nodes[2 * at] + self.nodes[2 * at + 1];
        }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    /// Leaf whose cumulative range contains `mass`.
    fn find(&self, mut mass: f64, len: usize) -> usize {
        let mut at = 1;
        while at < self.leaves {
            let left = self.nodes[2 * at];
            if mass < left {
                at *= 2;
            } else {
                mass -= left;
                at = 2 * at + 1;
            }
        }
        // Rounding can walk past the populated prefix.
        (at - self.leaves).min(len - 1)
    }
}

#[derive(Debug, Clone)]
pub struct Sampled {
    pub index: usize,
    /// Importance weight normalized by the batch maximum.
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct PrioritizedReplay<I> {
    capacity: usize,
    alpha: f64,
    beta: f64,
    items: Vec<I>,
    /// `p^alpha` per stored item.
    scaled: Vec<f64>,
    tree: SumTree,
    next: usize,
    max_priority: f64,
}

pub const PRIORITY_FLOOR: f64 = 1e-6;

impl<I> PrioritizedReplay<I> {
    pub fn new(capacity: usize, alpha: f64, beta: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            alpha,
            beta,
            items: Vec::new(),
            scaled: Vec::new(),
            tree: SumTree::new(),
            next: 0,
            max_priority: 1.0,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, index: usize) -> Option<&I> {
        self.items.get(index)
    }

    /// Stores `item` at the current maximum priority, evicting the oldest
    /// item when full.
    pub fn push(&mut self, item: I) {
        let p = self.max_priority.powf(self.alpha);
        if self.items.len() < self.capacity {
            if self.items.len() == self.tree.leaves {
                self.tree.grow(&self.scaled);
            }
            self.items.push(item);
            self.scaled.push(p);
            self.tree.set(self.items.len() - 1, p);
        } else {
            self.items[self.next] = item;
            self.scaled[self.next] = p;
            self.tree.set(self.next, p);
            self.next = (self.next + 1) % self.capacity;
        }
    }

    /// `n` draws (with replacement) proportional to `p^alpha`, one per
    /// equal-mass stratum.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Sampled>> {
        if self.items.is_empty() {
            return Err(Error::Contract("sampling from an empty replay buffer".into()));
        }
        let total = self.tree.total();
        let len = self.items.len();
        let stratum = total / n as f64;
        let mut out: Vec<Sampled> = (0..n)
            .map(|i| {
                let mass = stratum * (i as f64 + rng.random::<f64>());
                let index = self.tree.find(mass.min(total * (1.0 - 1e-12)), len);
                let prob = self.scaled[index] / total;
                Sampled {
                    index,
                    weight: (len as f64 * prob).powf(-self.beta),
                }
            })
            .collect();
        let max = out.iter().map(|s| s.weight).fold(0.0, f64::max);
        for s in &mut out {
            s.weight /= max;
        }
        Ok(out)
    }

    /// Sets the priority of `index` to `|td_error| + PRIORITY_FLOOR`.
    pub fn update(&mut self, index: usize, td_error: f64) -> Result<()> {
        if index >= self.items.len() {
            return Err(Error::Contract(format!("replay index {index} out of range")));
        }
        let priority = td_error.abs() + PRIORITY_FLOOR;
        if !priority.is_finite() {
            return Err(Error::Contract("non-finite priority".into()));
        }
        self.max_priority = self.max_priority.max(priority);
        let p = priority.powf(self.alpha);
        self.scaled[index] = p;
        self.tree.set(index, p);
        Ok(())
    }

    pub fn priority_mass(&self, index: usize) -> f64 {
        self.scaled[index]
    }
}
