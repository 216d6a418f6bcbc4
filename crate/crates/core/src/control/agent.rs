use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::phase::{mixture_distribution, Phase, PhaseState};
use super::variant::{ExploreSource, Variant};
use crate::env::{Environment, StepResult};
use crate::error::{Error, Result};
use crate::memory::{refresh_buffer, ReplayBuffer, Trajectory, TrajectoryBuffer, TrajectoryStore, Transition};
use crate::nn::sample_index;
use crate::policy::{build_context, IlConfig, IlModel, IntrinsicConfig, InvDyConfig, QNetwork};
use crate::text::Seq;

/// Controller settings.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlConfig {
    pub variant: Variant,
    /// `R`.
    pub explore_steps: usize,
    /// `T` before the first retrain, and forever for variants with a fixed limit.
    pub initial_limit: usize,
    /// `n`: episodes between retrains.
    pub retrain_every: usize,
    /// `k`: trajectories per buffer.
    pub k: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub rho: f64,
    pub td_batch: usize,
    pub intrinsic: IntrinsicConfig,
    pub replay_capacity: usize,
    pub store_capacity: usize,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            variant: Variant::Xtx,
            explore_steps: 50,
            initial_limit: 50,
            retrain_every: 10,
            k: 10,
            beta1: 1.0,
            beta2: 10_000.0,
            rho: 0.5,
            td_batch: 64,
            intrinsic: IntrinsicConfig::default(),
            replay_capacity: 100_000,
            store_capacity: 10_000,
        }
    }
}

impl ControlConfig {
    /// The settings actually used by `variant`: the TD-only baseline drops
    /// the auxiliary losses and the replay priority.
    pub fn effective(&self) -> ControlConfig {
        let mut c = self.clone();
        if c.variant == Variant::Drrn {
            c.intrinsic = IntrinsicConfig::ZERO;
            c.rho = 0.0;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsic.validate()?;
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        if self.k == 0 || self.td_batch == 0 || self.retrain_every == 0 || self.initial_limit == 0 {
            return Err(Error::Config(
                "k, td batch, retrain interval and episode limit must be positive".into(),
            ));
        }
        if !(self.beta1.is_finite() && self.beta2.is_finite()) {
            return Err(Error::Config("beta1 and beta2 must be finite".into()));
        }
        Ok(())
    }
}

/// Independent random streams of one run.
#[derive(Clone, Debug)]
struct Streams {
    act: ChaCha8Rng,
    replay: ChaCha8Rng,
    imitation: ChaCha8Rng,
}

/// Derives stream `stream` of the run seeded with `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One record per finished episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub score: f64,
    pub length: usize,
    pub phase1_steps: usize,
    pub max_seen: f64,
    /// `T` in force during the episode.
    pub limit: usize,
    /// Mean total TD objective over the episode's updates (0 when none ran).
    pub td_loss: f64,
    /// `M` after a retrain at the end of this episode.
    pub retrained: Option<f64>,
}

/// Both policies, the memories and the phase machine of one run.
pub struct Agent {
    pub invdy: QNetwork,
    pub il: IlModel,
    pub replay: ReplayBuffer,
    pub store: TrajectoryStore,
    pub state: PhaseState,
    pub buffer: Option<TrajectoryBuffer>,
    config: ControlConfig,
    streams: Streams,
    episodes: usize,
    max_seen: f64,
}

impl Agent {
    pub fn new(vocab: usize, config: &ControlConfig, invdy: InvDyConfig, il: IlConfig, seed: u64) -> Result<Self> {
        let config = config.effective();
        config.validate()?;
        let mut init = substream(seed, 0);
        let invdy = QNetwork::new(vocab, invdy, &mut init)?;
        let il = IlModel::new(vocab, il, &mut init)?;
        let state = PhaseState::new(config.explore_steps, config.initial_limit, config.retrain_every)?;
        Ok(Agent {
            invdy,
            il,
            replay: ReplayBuffer::new(config.replay_capacity),
            store: TrajectoryStore::new(config.store_capacity),
            state,
            buffer: None,
            streams: Streams {
                act: substream(seed, 1),
                replay: substream(seed, 2),
                imitation: substream(seed, 3),
            },
            config,
            episodes: 0,
            max_seen: f64::NEG_INFINITY,
        })
    }

    pub fn config(&self) -> &ControlConfig {
        &self.config
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }

    /// Action distribution over `valid` for the current phase.
    pub fn action_distribution(&self, phase: Phase, context: &Seq, obs: &Seq, valid: &[Seq]) -> Result<Vec<f64>> {
        let variant = self.config.variant;
        let (lambda, source) = match variant.global_lambda() {
            Some(l) => (l, ExploreSource::InvDy),
            None => match phase {
                Phase::Exploit => (
                    variant.exploit_lambda(self.state.exploit_lambda()),
                    ExploreSource::InvDy,
                ),
                Phase::Explore => (1.0, variant.explore_source()),
            },
        };
        let explore = match source {
            ExploreSource::Uniform => vec![1.0 / valid.len() as f64; valid.len()],
            ExploreSource::InvDy if lambda > 0.0 => self.invdy.policy_distribution(obs, valid)?,
            ExploreSource::InvDy => vec![0.0; valid.len()],
        };
        if lambda == 1.0 {
            return Ok(explore);
        }
        let exploit = self.il.il_distribution(context, valid)?;
        mixture_distribution(lambda, &explore, &exploit)
    }

    /// Plays one episode, training the exploration network after every step.
    pub fn run_episode<E: Environment>(&mut self, env: &mut E) -> Result<EpisodeLog> {
        let variant = self.config.variant;
        self.state.begin_episode();
        let id = self.episodes as u64;
        let limit = self.state.limit;
        let mut current: StepResult = env.reset()?;
        let mut valid: Arc<[Seq]> = current.valid_actions.iter().map(|a| a.tokens.clone()).collect();
        let mut history: [Option<Seq>; 2] = [None, None];
        let mut steps = Vec::new();
        let mut phase1 = 0;
        let (mut td_total, mut td_count) = (0.0, 0usize);

        while !self.state.episode_over() {
            let obs = current.observation.tokens.clone();
            let context = build_context(history[0].as_deref(), history[1].as_deref(), &obs);
            let phase = if variant.uses_phases() {
                self.state.select_phase()
            } else {
                Phase::Explore
            };
            if phase == Phase::Exploit {
                phase1 += 1;
            }
            let dist = self.action_distribution(phase, &context, &obs, &valid)?;
            let idx = sample_index(&dist, self.streams.act.gen());
            let next = env.step(&current.valid_actions[idx])?;
            let next_valid: Arc<[Seq]> = next.valid_actions.iter().map(|a| a.tokens.clone()).collect();
            let t = Arc::new(Transition {
                context,
                observation: obs,
                valid: valid.clone(),
                action: idx,
                reward: next.reward,
                next_observation: next.observation.tokens.clone(),
                next_valid: next_valid.clone(),
                terminal: next.done,
                trajectory_id: id,
                step: self.state.t,
            });
            self.replay.push(t.clone());
            steps.push(t);
            self.state.record_step(next.reward);

            if variant.trains_invdy() {
                let batch: Vec<Arc<Transition>> = self
                    .replay
                    .sample_batch(self.config.td_batch, self.config.rho, &mut self.streams.replay)
                    .into_iter()
                    .map(|s| s.transition)
                    .collect();
                let report = self.invdy.td_update(&batch, &self.config.intrinsic)?;
                td_total += report.total;
                td_count += 1;
            }

            history = [history[1].take(), Some(valid[idx].clone())];
            let done = next.done;
            current = next;
            valid = next_valid;
            if done {
                break;
            }
        }

        let trajectory = self.replay.end_episode(&mut self.store, Trajectory::new(id, steps));
        self.max_seen = self.max_seen.max(trajectory.score);
        self.episodes += 1;
        let mut log = EpisodeLog {
            episode: self.episodes,
            score: trajectory.score,
            length: trajectory.len(),
            phase1_steps: phase1,
            max_seen: self.max_seen,
            limit,
            td_loss: if td_count > 0 { td_total / td_count as f64 } else { 0.0 },
            retrained: None,
        };
        if self.state.end_episode() {
            log.retrained = self.maybe_retrain()?;
        }
        Ok(log)
    }

    /// Refreshes the trajectory buffer, refits the imitation policy and
    /// reschedules `T`. Returns the new `M`, or `None` when nothing ran.
    pub fn maybe_retrain(&mut self) -> Result<Option<f64>> {
        let variant = self.config.variant;
        if !variant.schedules_limit() || self.store.is_empty() {
            self.state.since_retrain = 0;
            return Ok(None);
        }
        let c = &self.config;
        let buffer = refresh_buffer(&self.store, c.k, c.beta1, c.beta2, &mut self.streams.imitation)?;
        if variant.trains_il() {
            self.il.train_il(&buffer, &mut self.streams.imitation)?;
        }
        self.state.apply_retrain(buffer.max_score, buffer.max_len);
        let m = buffer.max_score;
        self.buffer = Some(buffer);
        Ok(Some(m))
    }
}
