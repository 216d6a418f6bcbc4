//! Experience storage: completed trajectories for self-imitation and a
//! prioritized transition replay for TD training.

mod replay;
mod sampling;
mod trajectory;

pub use replay::{ReplayBuffer, Sampled};
pub use sampling::{
    length_probabilities, refresh_buffer, sample_score, sample_trajectory, score_probabilities, TrajectoryBuffer,
};
pub use trajectory::{ScoreKey, Trajectory, TrajectoryStore, Transition};
