//! Score- and length-biased trajectory sampling for self-imitation.
//!
//! A score `u` is drawn from the unique scores `U` seen so far with
//! `P(u) ∝ exp(β1 (u − μ_U) / σ_U)`; then a trajectory with that score is
//! drawn with `P(τ | u) ∝ exp(−β2 (l_τ − μ_L) / σ_L)` over the multiset `L`
//! of their lengths. `σ` is the population standard deviation; when it is 0
//! every standardized value is taken as 0, i.e. the draw is uniform.

use std::sync::Arc;

use rand::Rng;

use super::trajectory::{Trajectory, TrajectoryStore};
use crate::error::{Error, Result};
use crate::nn::{sample_index, softmax_stable};

fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if values.len() < 2 || sd == 0.0 || !sd.is_finite() {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / sd).collect()
}

/// Selection probabilities over `scores` (treated as the unique-score set).
pub fn score_probabilities(scores: &[f64], beta1: f64) -> Vec<f64> {
    let logits: Vec<f64> = standardize(scores).iter().map(|z| beta1 * z).collect();
    softmax_stable(&logits)
}

/// Selection probabilities over trajectories with the given lengths.
pub fn length_probabilities(lengths: &[usize], beta2: f64) -> Vec<f64> {
    let lengths: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
    let logits: Vec<f64> = standardize(&lengths).iter().map(|z| -beta2 * z).collect();
    softmax_stable(&logits)
}

pub fn sample_score<R: Rng + ?Sized>(store: &TrajectoryStore, beta1: f64, rng: &mut R) -> Result<f64> {
    let scores = store.unique_scores();
    if scores.is_empty() {
        return Err(Error::Empty("trajectory store"));
    }
    let p = score_probabilities(&scores, beta1);
    Ok(scores[sample_index(&p, rng.gen())])
}

pub fn sample_trajectory<R: Rng + ?Sized>(
    store: &TrajectoryStore,
    score: f64,
    beta2: f64,
    rng: &mut R,
) -> Result<Arc<Trajectory>> {
    let candidates = store.with_score(score);
    if candidates.is_empty() {
        return Err(Error::NoSuchScore(score));
    }
    let lengths: Vec<usize> = candidates.iter().map(|t| t.len()).collect();
    let p = length_probabilities(&lengths, beta2);
    Ok(candidates[sample_index(&p, rng.gen())].clone())
}

/// The `k` trajectories π_il is trained on, with their maximum score and length.
#[derive(Clone, Debug)]
pub struct TrajectoryBuffer {
    pub trajectories: Vec<Arc<Trajectory>>,
    pub max_score: f64,
    pub max_len: usize,
}

impl TrajectoryBuffer {
    pub fn new(trajectories: Vec<Arc<Trajectory>>) -> Self {
        let max_score = trajectories.iter().map(|t| t.score).fold(f64::NEG_INFINITY, f64::max);
        let max_len = trajectories.iter().map(|t| t.len()).max().unwrap_or(0);
        TrajectoryBuffer {
            trajectories,
            max_score,
            max_len,
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// Draws `k` (score, trajectory) pairs with replacement.
pub fn refresh_buffer<R: Rng + ?Sized>(
    store: &TrajectoryStore,
    k: usize,
    beta1: f64,
    beta2: f64,
    rng: &mut R,
) -> Result<TrajectoryBuffer> {
    if store.is_empty() {
        return Err(Error::Empty("trajectory store"));
    }
    let trajectories = (0..k)
        .map(|_| {
            let u = sample_score(store, beta1, rng)?;
            sample_trajectory(store, u, beta2, rng)
        })
        .collect::<Result<_>>()?;
    Ok(TrajectoryBuffer::new(trajectories))
}
