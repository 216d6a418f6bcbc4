use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Parameters of a generated room-chain game.
///
/// Rooms `0..depth` form a chain. Each room offers `branching` commands; one
/// advances to the next room, up to `deadend_exits` of the others (in rooms
/// listed in `deadend_positions`) drop into an absorbing pit, and the rest
/// leave the state unchanged. Advancing out of room `depth - 1` ends the game.
#[derive(Clone, Debug, PartialEq)]
pub struct GameSpec {
    pub depth: usize,
    pub branching: usize,
    /// Rooms whose advancing command uses words found nowhere earlier in the game.
    pub bottleneck_positions: Vec<usize>,
    /// Score delta paid by the advancing command of a room.
    pub reward_positions: BTreeMap<usize, f64>,
    pub deadend_positions: Vec<usize>,
    /// Number of pit commands in each dead-end room.
    pub deadend_exits: usize,
    pub stochastic: bool,
    /// Probability that a command has no effect (stochastic games only).
    pub p_slip: f64,
    /// Probability of appending one irrelevant sentence to an observation
    /// (stochastic games only).
    pub distractor_rate: f64,
    pub seed: u64,
}

impl Default for GameSpec {
    fn default() -> Self {
        GameSpec {
            depth: 2,
            branching: 3,
            bottleneck_positions: Vec::new(),
            reward_positions: BTreeMap::new(),
            deadend_positions: Vec::new(),
            deadend_exits: 1,
            stochastic: false,
            p_slip: 0.0,
            distractor_rate: 0.0,
            seed: 0,
        }
    }
}

impl GameSpec {
    /// The reference benchmark: eight rooms, five commands each, a novel
    /// command needed to leave room 4, +5 for leaving room 3 and +10 for
    /// finishing. Rooms 1 through 7 each hide two pits.
    pub fn bottleneck_chain(seed: u64) -> Self {
        GameSpec {
            depth: 8,
            branching: 5,
            bottleneck_positions: vec![4],
            reward_positions: BTreeMap::from([(3, 5.0), (7, 10.0)]),
            deadend_positions: (1..8).collect(),
            deadend_exits: 2,
            seed,
            ..GameSpec::default()
        }
    }

    /// [`GameSpec::bottleneck_chain`] with slips and distractor sentences.
    pub fn stochastic_bottleneck_chain(seed: u64) -> Self {
        GameSpec {
            stochastic: true,
            p_slip: 0.1,
            distractor_rate: 0.3,
            ..GameSpec::bottleneck_chain(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.depth == 0 {
            return bad("depth must be at least 1".into());
        }
        if self.branching == 0 {
            return bad("branching must be at least 1".into());
        }
        for &b in &self.bottleneck_positions {
            if b >= self.depth {
                return bad(format!("bottleneck {b} outside [0, {})", self.depth));
            }
        }
        let mut sorted = self.bottleneck_positions.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.bottleneck_positions.len() {
            return bad("duplicate bottleneck position".into());
        }
        if sorted.len() > super::generate::NOVEL_COMMANDS.len() {
            return bad(format!(
                "at most {} bottlenecks supported",
                super::generate::NOVEL_COMMANDS.len()
            ));
        }
        for (&s, &r) in &self.reward_positions {
            if s >= self.depth {
                return bad(format!("reward position {s} outside [0, {})", self.depth));
            }
            if !r.is_finite() {
                return bad(format!("reward at {s} is not finite"));
            }
        }
        let rewarding = self.reward_positions.values().filter(|r| **r != 0.0).count();
        if rewarding >= self.depth {
            return bad("rewards must be sparse: fewer rewarding rooms than rooms".into());
        }
        for &d in &self.deadend_positions {
            if d >= self.depth {
                return bad(format!("dead-end position {d} outside [0, {})", self.depth));
            }
        }
        if !self.deadend_positions.is_empty() && self.deadend_exits + 1 > self.branching {
            return bad(format!(
                "{} pit commands plus the advancing one exceed branching {}",
                self.deadend_exits, self.branching
            ));
        }
        if self.branching > super::generate::COMMON_COMMANDS.len() {
            return bad(format!(
                "branching {} exceeds the {} available commands",
                self.branching,
                super::generate::COMMON_COMMANDS.len()
            ));
        }
        for (name, p) in [("p_slip", self.p_slip), ("distractor_rate", self.distractor_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} not in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Cumulative reward after each advancing step along the chain.
    pub fn prefix_scores(&self) -> Vec<f64> {
        let mut acc = 0.0;
        (0..self.depth)
            .map(|s| {
                acc += self.reward_positions.get(&s).copied().unwrap_or(0.0);
                acc
            })
            .collect()
    }

    /// Number of advancing steps of the best walkthrough: the longest chain
    /// prefix whose cumulative reward is maximal (0 when no prefix beats 0).
    pub fn walkthrough_len(&self) -> usize {
        let mut best = (0.0, 0);
        for (i, &s) in self.prefix_scores().iter().enumerate() {
            if s >= best.0 {
                best = (s, i + 1);
            }
        }
        best.1
    }

    pub fn max_score(&self) -> f64 {
        self.prefix_scores().into_iter().fold(0.0, f64::max)
    }

    /// Mean number of steps between consecutive rewards along the walkthrough.
    pub fn mean_reward_gap(&self) -> Option<f64> {
        let len = self.walkthrough_len();
        let steps: Vec<usize> = self
            .reward_positions
            .iter()
            .filter(|(&s, &r)| r != 0.0 && s < len)
            .map(|(&s, _)| s + 1)
            .collect();
        if steps.is_empty() {
            return None;
        }
        let mut prev = 0;
        let gaps: Vec<usize> = steps
            .iter()
            .map(|&s| {
                let g = s - prev;
                prev = s;
                g
            })
            .collect();
        Some(gaps.iter().sum::<usize>() as f64 / gaps.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_specs_are_valid() {
        GameSpec::bottleneck_chain(0).validate().unwrap();
        GameSpec::stochastic_bottleneck_chain(0).validate().unwrap();
        assert_eq!(GameSpec::bottleneck_chain(0).max_score(), 15.0);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let ok = GameSpec::bottleneck_chain(0);
        let cases = [
            GameSpec { depth: 0, ..ok.clone() },
            GameSpec {
                bottleneck_positions: vec![8],
                ..ok.clone()
            },
            GameSpec {
                deadend_exits: 5,
                ..ok.clone()
            },
            GameSpec {
                p_slip: 1.5,
                ..ok.clone()
            },
            GameSpec {
                reward_positions: (0..8).map(|s| (s, 1.0)).collect(),
                ..ok.clone()
            },
        ];
        for spec in cases {
            let err = spec.validate().unwrap_err();
            assert!(matches!(err, Error::InvalidSpec(_)), "{err}");
        }
    }

    #[test]
    fn walkthrough_length_prefers_reaching_the_end() {
        let spec = GameSpec {
            depth: 8,
            reward_positions: BTreeMap::from([(3, 5.0)]),
            ..GameSpec::default()
        };
        assert_eq!(spec.walkthrough_len(), 8);
        let negative_tail = GameSpec {
            depth: 4,
            reward_positions: BTreeMap::from([(1, 5.0), (3, -2.0)]),
            ..GameSpec::default()
        };
        assert_eq!(negative_tail.walkthrough_len(), 3);
        assert_eq!(negative_tail.max_score(), 5.0);
    }

    #[test]
    fn reward_gap_statistic() {
        assert_eq!(GameSpec::bottleneck_chain(0).mean_reward_gap(), Some(4.0));
    }
}
