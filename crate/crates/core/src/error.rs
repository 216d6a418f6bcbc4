use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid game spec: {0}")]
    InvalidSpec(String),

    #[error("action {0} is not in the current valid action set")]
    InvalidAction(String),

    #[error("episode is over; call reset first")]
    EpisodeOver,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("token id {id} outside vocabulary of size {vocab}")]
    OutOfVocab { id: usize, vocab: usize },

    #[error("no trajectory with score {0}")]
    NoSuchScore(f64),

    #[error("distributions have different supports ({0} vs {1})")]
    SupportMismatch(usize, usize),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("unknown variant `{0}`; valid variants: xtx, xtx-uniform, xtx-nomix, drrn, lambda0, lambda05, lambda1")]
    UnknownVariant(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
