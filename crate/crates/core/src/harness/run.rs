use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::config::ExperimentConfig;
use crate::control::{substream, Agent, EpisodeLog, Variant};
use crate::env::{generate_game, Environment, GameSpec};
use crate::error::Result;
use rand::Rng;

/// Episodes in the trailing window of `Avg`.
pub const AVG_WINDOW: usize = 100;

/// Mean of the last `min(window, len)` scores; 0 for an empty slice.
pub fn trailing_mean(scores: &[f64], window: usize) -> f64 {
    let tail = &scores[scores.len().saturating_sub(window)..];
    if tail.is_empty() {
        0.0
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

/// One training run.
#[derive(Clone, Debug)]
pub struct RunMetrics {
    pub variant: Variant,
    pub seed: u64,
    pub game_max: f64,
    pub episodes: Vec<EpisodeLog>,
    pub wall_clock: Duration,
}

impl RunMetrics {
    pub fn scores(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.score).collect()
    }

    /// `Avg`: mean score over the final `min(100, E)` episodes.
    pub fn avg(&self) -> f64 {
        trailing_mean(&self.scores(), AVG_WINDOW)
    }

    /// `Max`: best score of any episode.
    pub fn max(&self) -> f64 {
        self.episodes.iter().map(|e| e.score).fold(0.0, f64::max)
    }

    /// Running `Avg` after each episode.
    pub fn avg_curve(&self) -> Vec<f64> {
        let s = self.scores();
        (1..=s.len()).map(|i| trailing_mean(&s[..i], AVG_WINDOW)).collect()
    }

    pub fn normalized(&self) -> f64 {
        self.avg() / self.game_max
    }
}

/// Game played by run `seed`: the configured layout seed offset by the run seed.
pub fn game_for_seed(spec: &GameSpec, seed: u64) -> GameSpec {
    GameSpec {
        seed: spec.seed.wrapping_add(seed),
        ..spec.clone()
    }
}

/// Stream of the run RNG reserved for environment dynamics.
const ENV_STREAM: u64 = 4;

/// Trains `variant` for `config.episodes` episodes with master seed `seed`.
pub fn run_seed(config: &ExperimentConfig, variant: Variant, seed: u64) -> Result<RunMetrics> {
    run_seed_with(config, variant, seed, |_| {})
}

/// As [`run_seed`], calling `on_episode` after every episode.
pub fn run_seed_with(
    config: &ExperimentConfig,
    variant: Variant,
    seed: u64,
    mut on_episode: impl FnMut(&EpisodeLog),
) -> Result<RunMetrics> {
    let start = Instant::now();
    let mut game = generate_game(&game_for_seed(&config.game, seed))?;
    game.reseed_dynamics(substream(seed, ENV_STREAM).gen());
    let agent_cfg = ExperimentConfig {
        variant,
        ..config.clone()
    }
    .agent_config();
    let mut agent = Agent::new(
        game.vocab().len(),
        &agent_cfg,
        config.invdy.clone(),
        config.il.clone(),
        seed,
    )?;
    let mut episodes = Vec::with_capacity(config.episodes);
    for _ in 0..config.episodes {
        let log = agent.run_episode(&mut game)?;
        on_episode(&log);
        episodes.push(log);
    }
    Ok(RunMetrics {
        variant,
        seed,
        game_max: game.max_score(),
        episodes,
        wall_clock: start.elapsed(),
    })
}

/// Runs the configured variant on every seed, in parallel.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunMetrics>> {
    run_grid(config, &[config.variant])
}

/// Runs every `(variant, seed)` pair in parallel. Results are ordered by
/// variant, then seed, regardless of completion order.
pub fn run_grid(config: &ExperimentConfig, variants: &[Variant]) -> Result<Vec<RunMetrics>> {
    config.validate()?;
    let jobs: Vec<(Variant, u64)> = variants
        .iter()
        .flat_map(|&v| config.seeds.iter().map(move |&s| (v, s)))
        .collect();
    jobs.par_iter().map(|&(v, s)| run_seed(config, v, s)).collect()
}
