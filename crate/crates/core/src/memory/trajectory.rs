use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;
use std::sync::Arc;

use crate::text::{Seq, Vocabulary};

/// One stored environment step.
#[derive(Clone, Debug)]
pub struct Transition {
    /// `[a_{t-2}; SEP; a_{t-1}; SEP; o_t]`.
    pub context: Seq,
    pub observation: Seq,
    /// Valid commands at `observation`.
    pub valid: Arc<[Seq]>,
    /// Index of the command taken, into `valid`.
    pub action: usize,
    pub reward: f64,
    pub next_observation: Seq,
    /// Valid commands at `next_observation`; empty when terminal.
    pub next_valid: Arc<[Seq]>,
    pub terminal: bool,
    pub trajectory_id: u64,
    pub step: usize,
}

impl Transition {
    pub fn action_tokens(&self) -> &Seq {
        &self.valid[self.action]
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub id: u64,
    pub steps: Vec<Arc<Transition>>,
    /// Cumulative reward.
    pub score: f64,
}

impl Trajectory {
    pub fn new(id: u64, steps: Vec<Arc<Transition>>) -> Self {
        let score = steps.iter().map(|t| t.reward).sum();
        Trajectory { id, steps, score }
    }

    /// Number of actions.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Walkthrough-style text: a `score <u> length <l>` header, then one command per line.
    pub fn dump(&self, vocab: &Vocabulary) -> String {
        let mut out = format!("score {} length {}\n", self.score, self.len());
        for t in &self.steps {
            let _ = writeln!(out, "{}", vocab.detokenize(t.action_tokens()));
        }
        out
    }
}

/// Total-order key for scores. `-0.0` and `0.0` are the same score.
#[derive(Clone, Copy, Debug)]
pub struct ScoreKey(f64);

impl ScoreKey {
    pub fn new(score: f64) -> Self {
        ScoreKey(if score == 0.0 { 0.0 } else { score })
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl PartialEq for ScoreKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ScoreKey {}

impl PartialOrd for ScoreKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ScoreKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Every completed trajectory, indexed by score.
///
/// When over capacity the oldest trajectory is evicted, except that the
/// shortest trajectory of each score is never evicted, so the set of unique
/// scores only grows.
#[derive(Clone, Debug)]
pub struct TrajectoryStore {
    by_id: HashMap<u64, Arc<Trajectory>>,
    by_score: BTreeMap<ScoreKey, Vec<u64>>,
    order: VecDeque<u64>,
    capacity: usize,
}

impl TrajectoryStore {
    pub fn new(capacity: usize) -> Self {
        TrajectoryStore {
            by_id: HashMap::new(),
            by_score: BTreeMap::new(),
            order: VecDeque::new(),
            capacity: capacity.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn insert(&mut self, trajectory: Trajectory) -> Arc<Trajectory> {
        let t = Arc::new(trajectory);
        self.by_score.entry(ScoreKey::new(t.score)).or_default().push(t.id);
        self.order.push_back(t.id);
        self.by_id.insert(t.id, t.clone());
        while self.by_id.len() > self.capacity {
            if !self.evict_one() {
                break;
            }
        }
        t
    }

    fn representative(&self, key: ScoreKey) -> Option<u64> {
        self.by_score
            .get(&key)?
            .iter()
            .copied()
            .min_by_key(|id| (self.by_id[id].len(), *id))
    }

    fn evict_one(&mut self) -> bool {
        let victim = self.order.iter().position(|id| {
            let key = ScoreKey::new(self.by_id[id].score);
            self.representative(key) != Some(*id)
        });
        let Some(pos) = victim else { return false };
        let id = self.order.remove(pos).unwrap();
        let t = self.by_id.remove(&id).unwrap();
        let key = ScoreKey::new(t.score);
        if let Some(ids) = self.by_score.get_mut(&key) {
            ids.retain(|&x| x != id);
        }
        true
    }

    /// Unique scores in ascending order.
    pub fn unique_scores(&self) -> Vec<f64> {
        self.by_score.keys().map(|k| k.get()).collect()
    }

    pub fn with_score(&self, score: f64) -> Vec<Arc<Trajectory>> {
        self.by_score
            .get(&ScoreKey::new(score))
            .map(|ids| ids.iter().map(|id| self.by_id[id].clone()).collect())
            .unwrap_or_default()
    }

    pub fn get(&self, id: u64) -> Option<&Arc<Trajectory>> {
        self.by_id.get(&id)
    }

    pub fn max_score(&self) -> Option<f64> {
        self.by_score.keys().next_back().map(|k| k.get())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<Trajectory>> {
        self.order.iter().map(|id| &self.by_id[id])
    }
}
