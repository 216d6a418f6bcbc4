//! The episodic controller: phase switching, the policy mixture, episode
//! limits and the retraining cadence.

mod agent;
mod phase;
mod variant;

pub use agent::{substream, Agent, ControlConfig, EpisodeLog};
pub use phase::{mixture_distribution, Phase, PhaseState};
pub use variant::{ExploreSource, Variant};
