use std::collections::HashSet;
use std::sync::Arc;

use rand::Rng;

use super::trajectory::{Trajectory, TrajectoryStore, Transition};

/// Transition memory with membership-based priority.
///
/// Transitions from trajectories whose score equals the best score seen so
/// far are *marked*. A batch slot is drawn from the marked pool with
/// probability `ρ` and from the whole buffer otherwise. When full, the
/// oldest unmarked transition is overwritten; marked transitions are only
/// overwritten when nothing else is left.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    slots: Vec<Arc<Transition>>,
    marked: Vec<bool>,
    pool: Vec<usize>,
    marked_trajectories: HashSet<u64>,
    episode_slots: Vec<usize>,
    capacity: usize,
    cursor: usize,
    best_score: Option<f64>,
}

/// One sampled transition and whether it came through the priority route.
#[derive(Clone, Debug)]
pub struct Sampled {
    pub transition: Arc<Transition>,
    pub prioritized: bool,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        ReplayBuffer {
            slots: Vec::with_capacity(capacity.min(1 << 16)),
            marked: Vec::new(),
            pool: Vec::new(),
            marked_trajectories: HashSet::new(),
            episode_slots: Vec::new(),
            capacity,
            cursor: 0,
            best_score: None,
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn best_score(&self) -> Option<f64> {
        self.best_score
    }

    /// Transitions eligible for the priority route.
    pub fn pool_len(&self) -> usize {
        self.pool.len()
    }

    pub fn is_marked_trajectory(&self, id: u64) -> bool {
        self.marked_trajectories.contains(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<Transition>> {
        self.slots.iter()
    }

    /// Appends a transition of the running episode. Returns its slot.
    pub fn push(&mut self, t: Arc<Transition>) -> usize {
        let slot = if self.slots.len() < self.capacity {
            self.slots.push(t);
            self.marked.push(false);
            self.slots.len() - 1
        } else {
            let n = self.capacity;
            let slot = (0..n)
                .map(|k| (self.cursor + k) % n)
                .find(|&s| !self.marked[s])
                .unwrap_or(self.cursor);
            if self.marked[slot] {
                self.marked[slot] = false;
                self.pool.retain(|&s| s != slot);
            }
            self.slots[slot] = t;
            self.cursor = (slot + 1) % n;
            slot
        };
        self.episode_slots.push(slot);
        slot
    }

    /// Closes the running episode: registers the trajectory in `store` and
    /// updates the marks if its score reaches the best seen so far.
    pub fn end_episode(&mut self, store: &mut TrajectoryStore, trajectory: Trajectory) -> Arc<Trajectory> {
        let score = trajectory.score;
        let id = trajectory.id;
        let is_new_best = self.best_score.is_none_or(|b| score > b);
        if is_new_best {
            for &s in &self.pool {
                self.marked[s] = false;
            }
            self.pool.clear();
            self.marked_trajectories.clear();
            self.best_score = Some(score);
        }
        if is_new_best || self.best_score == Some(score) {
            self.marked_trajectories.insert(id);
            for &s in &self.episode_slots {
                if self.slots[s].trajectory_id == id && !self.marked[s] {
                    self.marked[s] = true;
                    self.pool.push(s);
                }
            }
        }
        self.episode_slots.clear();
        store.insert(trajectory)
    }

    /// Draws `batch_size` transitions with replacement. Empty when the buffer is empty.
    pub fn sample_batch<R: Rng + ?Sized>(&self, batch_size: usize, rho: f64, rng: &mut R) -> Vec<Sampled> {
        if self.slots.is_empty() {
            return Vec::new();
        }
        (0..batch_size)
            .map(|_| {
                if !self.pool.is_empty() && rng.gen::<f64>() < rho {
                    let s = self.pool[rng.gen_range(0..self.pool.len())];
                    Sampled {
                        transition: self.slots[s].clone(),
                        prioritized: true,
                    }
                } else {
                    Sampled {
                        transition: self.slots[rng.gen_range(0..self.slots.len())].clone(),
                        prioritized: false,
                    }
                }
            })
            .collect()
    }
}
