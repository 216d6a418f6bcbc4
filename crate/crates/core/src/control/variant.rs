use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// The agent and its ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Two phases, mixture `1/(2T)` then the exploration policy.
    Xtx,
    /// As `Xtx`, but the second phase picks commands uniformly at random.
    XtxUniform,
    /// As `Xtx`, with a pure imitation first phase (`λ = 0`).
    XtxNoMix,
    /// TD learning only: no auxiliary losses, no priority, no phases, fixed `T`.
    Drrn,
    /// Single phase, imitation policy only.
    Lambda0,
    /// Single phase, even mixture.
    Lambda05,
    /// Single phase, exploration policy only.
    Lambda1,
}

/// Where the exploration share of the mixture comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExploreSource {
    InvDy,
    Uniform,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Xtx,
        Variant::XtxUniform,
        Variant::XtxNoMix,
        Variant::Drrn,
        Variant::Lambda0,
        Variant::Lambda05,
        Variant::Lambda1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Xtx => "xtx",
            Variant::XtxUniform => "xtx-uniform",
            Variant::XtxNoMix => "xtx-nomix",
            Variant::Drrn => "drrn",
            Variant::Lambda0 => "lambda0",
            Variant::Lambda05 => "lambda05",
            Variant::Lambda1 => "lambda1",
        }
    }

    pub fn uses_phases(self) -> bool {
        matches!(self, Variant::Xtx | Variant::XtxUniform | Variant::XtxNoMix)
    }

    /// Fixed mixture weight of the single-phase variants.
    pub fn global_lambda(self) -> Option<f64> {
        match self {
            Variant::Drrn | Variant::Lambda1 => Some(1.0),
            Variant::Lambda05 => Some(0.5),
            Variant::Lambda0 => Some(0.0),
            _ => None,
        }
    }

    /// Mixture weight in the exploit phase given `1/(2T)`.
    pub fn exploit_lambda(self, scheduled: f64) -> f64 {
        match self {
            Variant::XtxNoMix => 0.0,
            _ => scheduled,
        }
    }

    pub fn explore_source(self) -> ExploreSource {
        match self {
            Variant::XtxUniform => ExploreSource::Uniform,
            _ => ExploreSource::InvDy,
        }
    }

    /// Whether the exploration network is ever consulted, and so worth training.
    pub fn trains_invdy(self) -> bool {
        self != Variant::Lambda0
    }

    /// Whether the imitation policy is ever consulted.
    pub fn trains_il(self) -> bool {
        !matches!(self, Variant::Drrn | Variant::Lambda1)
    }

    /// Whether `T` follows the trajectory buffer.
    pub fn schedules_limit(self) -> bool {
        self != Variant::Drrn
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}
