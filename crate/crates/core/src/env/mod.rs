//! Synthetic text-adventure games with state-dependent command sets.

mod generate;
mod spec;

use std::sync::Arc;

pub use generate::{generate_game, Position, TextGame};
pub use spec::GameSpec;

use crate::error::Result;
use crate::text::{Seq, Vocabulary};

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub tokens: Seq,
    pub raw_text: String,
}

/// One command from the current valid set. `id` is its index in that set.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionCandidate {
    pub id: usize,
    pub tokens: Seq,
    pub text: Arc<str>,
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    /// Empty exactly when `done`.
    pub valid_actions: Vec<ActionCandidate>,
}

/// Episodic environment with a dynamic valid-action set.
pub trait Environment {
    fn reset(&mut self) -> Result<StepResult>;

    /// Fails with [`Error::InvalidAction`](crate::Error::InvalidAction) for a
    /// command outside the current valid set.
    fn step(&mut self, action: &ActionCandidate) -> Result<StepResult>;

    fn vocab(&self) -> &Vocabulary;

    fn max_score(&self) -> f64;
}
