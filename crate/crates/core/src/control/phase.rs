use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    /// Return towards the frontier with the imitation policy.
    Exploit,
    /// Explore from wherever the agent is.
    Explore,
}

/// Per-run controller state.
///
/// `t` counts the actions already taken in the current episode, so a fresh
/// episode starts at `t = 0` and the exploit phase can last at most
/// `limit - explore_budget = l_max` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseState {
    pub phase: Phase,
    pub t: usize,
    pub score: f64,
    /// `M`: best score in the current trajectory buffer.
    pub max_score: f64,
    pub l_max: usize,
    /// `T`: episode step limit.
    pub limit: usize,
    /// `R`: exploration steps guaranteed after a full exploit phase.
    pub explore_budget: usize,
    pub retrain_every: usize,
    pub since_retrain: usize,
    latched: bool,
}

impl PhaseState {
    pub fn new(explore_budget: usize, initial_limit: usize, retrain_every: usize) -> Result<Self> {
        if initial_limit == 0 {
            return Err(Error::Config("episode limit must be positive".into()));
        }
        if retrain_every == 0 {
            return Err(Error::Config("retrain interval must be positive".into()));
        }
        Ok(PhaseState {
            phase: Phase::Explore,
            t: 0,
            score: 0.0,
            max_score: 0.0,
            l_max: 0,
            limit: initial_limit,
            explore_budget,
            retrain_every,
            since_retrain: 0,
            latched: false,
        })
    }

    pub fn begin_episode(&mut self) {
        self.t = 0;
        self.score = 0.0;
        self.latched = false;
        self.phase = Phase::Explore;
    }

    /// Exploit while the episode is behind `M` and `t < T - R`. The first
    /// failure of that test latches exploration for the rest of the episode.
    pub fn select_phase(&mut self) -> Phase {
        let bound = self.limit.saturating_sub(self.explore_budget);
        let exploit = !self.latched && self.score < self.max_score && self.t < bound;
        if !exploit {
            self.latched = true;
        }
        self.phase = if exploit { Phase::Exploit } else { Phase::Explore };
        self.phase
    }

    /// `λ` used during the exploit phase: `1 / (2T)` with the current `T`.
    pub fn exploit_lambda(&self) -> f64 {
        1.0 / (2.0 * self.limit as f64)
    }

    pub fn record_step(&mut self, reward: f64) {
        self.t += 1;
        self.score += reward;
    }

    pub fn episode_over(&self) -> bool {
        self.t >= self.limit
    }

    /// Counts a finished episode; true when a retrain is due.
    pub fn end_episode(&mut self) -> bool {
        self.since_retrain += 1;
        self.since_retrain >= self.retrain_every
    }

    /// Takes `M` and `l_max` from a fresh buffer and sets `T = l_max + R`.
    pub fn apply_retrain(&mut self, max_score: f64, l_max: usize) {
        self.max_score = max_score;
        self.l_max = l_max;
        self.limit = (l_max + self.explore_budget).max(1);
        self.since_retrain = 0;
    }
}

/// `λ · explore + (1 - λ) · exploit`, elementwise.
pub fn mixture_distribution(lambda: f64, explore: &[f64], exploit: &[f64]) -> Result<Vec<f64>> {
    if explore.len() != exploit.len() {
        return Err(Error::SupportMismatch(explore.len(), exploit.len()));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("mixture weight {lambda} outside [0, 1]")));
    }
    Ok(explore
        .iter()
        .zip(exploit)
        .map(|(p, q)| lambda * p + (1.0 - lambda) * q)
        .collect())
}
