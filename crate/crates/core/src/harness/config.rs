//! Experiment configuration as sectioned `key = value` text.
//!
//! ```text
//! # comment
//! [experiment]
//! variant = xtx
//! episodes = 2000
//! seeds = 0, 1, 2
//!
//! [game]
//! preset = bottleneck_chain
//! p_slip = 0.1
//! ```
//!
//! Sections are `experiment`, `game`, `agent`, `invdy` and `il`. Every key is
//! optional; unknown sections or keys are errors. In `[game]`, `preset` is
//! applied first wherever it appears, then the remaining keys override it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::control::{ControlConfig, Variant};
use crate::env::GameSpec;
use crate::error::{Error, Result};
use crate::nn::{EncoderKind, Init, Optimizer, OptimizerKind};
use crate::policy::{IlConfig, InvDyConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub variant: Variant,
    /// `E`: episodes per run.
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub game: GameSpec,
    pub agent: ControlConfig,
    pub invdy: InvDyConfig,
    pub il: IlConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            variant: Variant::Xtx,
            episodes: 2000,
            seeds: vec![0, 1, 2],
            game: GameSpec::bottleneck_chain(0),
            agent: ControlConfig::default(),
            invdy: InvDyConfig::default(),
            il: IlConfig::default(),
        }
    }
}

fn err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {line}: {msg}"))
}

fn parse<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| err(line, format!("bad value `{v}` for `{key}`")))
}

fn parse_list<T: FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(line, key, s))
        .collect()
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(err(line, format!("bad boolean `{v}` for `{key}`"))),
    }
}

fn parse_encoder(line: usize, v: &str) -> Result<EncoderKind> {
    match v.trim() {
        "mean" => Ok(EncoderKind::Mean),
        "gru" => Ok(EncoderKind::Gru),
        _ => Err(err(line, format!("encoder must be `mean` or `gru`, got `{v}`"))),
    }
}

fn encoder_name(k: EncoderKind) -> &'static str {
    match k {
        EncoderKind::Mean => "mean",
        EncoderKind::Gru => "gru",
    }
}

fn parse_optimizer(line: usize, v: &str) -> Result<OptimizerKind> {
    match v.trim() {
        "adam" => Ok(OptimizerKind::adam()),
        "sgd" => Ok(OptimizerKind::Sgd),
        _ => Err(err(line, format!("optimizer must be `adam` or `sgd`, got `{v}`"))),
    }
}

fn optimizer_name(k: OptimizerKind) -> &'static str {
    match k {
        OptimizerKind::Sgd => "sgd",
        OptimizerKind::Adam { .. } => "adam",
    }
}

fn init_scale(init: Init) -> f64 {
    match init {
        Init::Zeros => 0.0,
        Init::Uniform(s) => s,
    }
}

fn scale_init(s: f64) -> Init {
    if s == 0.0 {
        Init::Zeros
    } else {
        Init::Uniform(s)
    }
}

fn preset(line: usize, name: &str) -> Result<GameSpec> {
    match name.trim() {
        "bottleneck_chain" => Ok(GameSpec::bottleneck_chain(0)),
        "stochastic_bottleneck_chain" => Ok(GameSpec::stochastic_bottleneck_chain(0)),
        _ => Err(err(
            line,
            format!("unknown preset `{name}`; expected bottleneck_chain or stochastic_bottleneck_chain"),
        )),
    }
}

fn rewards(line: usize, v: &str) -> Result<BTreeMap<usize, f64>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let (k, r) = pair
                .split_once(':')
                .ok_or_else(|| err(line, format!("reward `{pair}` is not room:delta")))?;
            Ok((parse(line, "rewards", k)?, parse(line, "rewards", r)?))
        })
        .collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        text.parse()
    }

    pub fn validate(&self) -> Result<()> {
        self.game.validate()?;
        self.agent.validate()?;
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        Ok(())
    }

    /// Same config with the variant applied to the agent section.
    pub fn agent_config(&self) -> ControlConfig {
        ControlConfig {
            variant: self.variant,
            ..self.agent.clone()
        }
    }

    fn set(&mut self, section: &str, key: &str, v: &str, line: usize) -> Result<()> {
        let (a, inv, il, g) = (&mut self.agent, &mut self.invdy, &mut self.il, &mut self.game);
        match (section, key) {
            ("experiment", "variant") => self.variant = v.parse()?,
            ("experiment", "episodes") => self.episodes = parse(line, key, v)?,
            ("experiment", "seeds") => self.seeds = parse_list(line, key, v)?,

            ("game", "preset") => {}
            ("game", "depth") => g.depth = parse(line, key, v)?,
            ("game", "branching") => g.branching = parse(line, key, v)?,
            ("game", "bottlenecks") => g.bottleneck_positions = parse_list(line, key, v)?,
            ("game", "rewards") => g.reward_positions = rewards(line, v)?,
            ("game", "deadends") => g.deadend_positions = parse_list(line, key, v)?,
            ("game", "deadend_exits") => g.deadend_exits = parse(line, key, v)?,
            ("game", "stochastic") => g.stochastic = parse_bool(line, key, v)?,
            ("game", "p_slip") => g.p_slip = parse(line, key, v)?,
            ("game", "distractor_rate") => g.distractor_rate = parse(line, key, v)?,
            ("game", "seed") => g.seed = parse(line, key, v)?,

            ("agent", "beta1") => a.beta1 = parse(line, key, v)?,
            ("agent", "beta2") => a.beta2 = parse(line, key, v)?,
            ("agent", "k") => a.k = parse(line, key, v)?,
            ("agent", "rho") => a.rho = parse(line, key, v)?,
            ("agent", "alpha1") => a.intrinsic.alpha1 = parse(line, key, v)?,
            ("agent", "alpha2") => a.intrinsic.alpha2 = parse(line, key, v)?,
            ("agent", "alpha3") => a.intrinsic.alpha3 = parse(line, key, v)?,
            ("agent", "explore_steps") => a.explore_steps = parse(line, key, v)?,
            ("agent", "initial_limit") => a.initial_limit = parse(line, key, v)?,
            ("agent", "retrain_every") => a.retrain_every = parse(line, key, v)?,
            ("agent", "batch") => a.td_batch = parse(line, key, v)?,
            ("agent", "replay_capacity") => a.replay_capacity = parse(line, key, v)?,
            ("agent", "store_capacity") => a.store_capacity = parse(line, key, v)?,

            ("invdy", "gamma") => inv.gamma = parse(line, key, v)?,
            ("invdy", "lr") => inv.lr = parse(line, key, v)?,
            ("invdy", "hidden") => inv.hidden = parse(line, key, v)?,
            ("invdy", "embed_dim") => inv.embed_dim = parse(line, key, v)?,
            ("invdy", "encoder") => inv.encoder = parse_encoder(line, v)?,
            ("invdy", "init_scale") => inv.init = scale_init(parse(line, key, v)?),
            ("invdy", "optimizer") => inv.optimizer.kind = parse_optimizer(line, v)?,
            ("invdy", "clip_norm") => inv.optimizer.clip_norm = clip(line, v)?,

            ("il", "lr") => il.lr = parse(line, key, v)?,
            ("il", "batch") => il.batch_size = parse(line, key, v)?,
            ("il", "passes") => il.passes = parse(line, key, v)?,
            ("il", "hidden") => il.hidden = parse(line, key, v)?,
            ("il", "embed_dim") => il.embed_dim = parse(line, key, v)?,
            ("il", "encoder") => il.encoder = parse_encoder(line, v)?,
            ("il", "warm_start") => il.warm_start = parse_bool(line, key, v)?,
            ("il", "init_scale") => il.init = scale_init(parse(line, key, v)?),
            ("il", "optimizer") => il.optimizer.kind = parse_optimizer(line, v)?,
            ("il", "clip_norm") => il.optimizer.clip_norm = clip(line, v)?,

            ("experiment" | "game" | "agent" | "invdy" | "il", _) => {
                return Err(err(line, format!("unknown key `{key}` in [{section}]")))
            }
            _ => return Err(err(line, format!("unknown section [{section}]"))),
        }
        Ok(())
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let (a, inv, il, g) = (&self.agent, &self.invdy, &self.il, &self.game);
        let clip_text = |o: &Optimizer| o.clip_norm.map_or("none".to_string(), |c| c.to_string());
        let mut s = String::new();
        let _ = writeln!(s, "[experiment]");
        let _ = writeln!(s, "variant = {}", self.variant);
        let _ = writeln!(s, "episodes = {}", self.episodes);
        let _ = writeln!(s, "seeds = {}", join(&self.seeds));
        let _ = writeln!(s, "\n[game]");
        let _ = writeln!(s, "depth = {}", g.depth);
        let _ = writeln!(s, "branching = {}", g.branching);
        let _ = writeln!(s, "bottlenecks = {}", join(&g.bottleneck_positions));
        let r: Vec<String> = g.reward_positions.iter().map(|(k, v)| format!("{k}:{v}")).collect();
        let _ = writeln!(s, "rewards = {}", r.join(", "));
        let _ = writeln!(s, "deadends = {}", join(&g.deadend_positions));
        let _ = writeln!(s, "deadend_exits = {}", g.deadend_exits);
        let _ = writeln!(s, "stochastic = {}", g.stochastic);
        let _ = writeln!(s, "p_slip = {}", g.p_slip);
        let _ = writeln!(s, "distractor_rate = {}", g.distractor_rate);
        let _ = writeln!(s, "seed = {}", g.seed);
        let _ = writeln!(s, "\n[agent]");
        let _ = writeln!(s, "beta1 = {}", a.beta1);
        let _ = writeln!(s, "beta2 = {}", a.beta2);
        let _ = writeln!(s, "k = {}", a.k);
        let _ = writeln!(s, "rho = {}", a.rho);
        let _ = writeln!(s, "alpha1 = {}", a.intrinsic.alpha1);
        let _ = writeln!(s, "alpha2 = {}", a.intrinsic.alpha2);
        let _ = writeln!(s, "alpha3 = {}", a.intrinsic.alpha3);
        let _ = writeln!(s, "explore_steps = {}", a.explore_steps);
        let _ = writeln!(s, "initial_limit = {}", a.initial_limit);
        let _ = writeln!(s, "retrain_every = {}", a.retrain_every);
        let _ = writeln!(s, "batch = {}", a.td_batch);
        let _ = writeln!(s, "replay_capacity = {}", a.replay_capacity);
        let _ = writeln!(s, "store_capacity = {}", a.store_capacity);
        let _ = writeln!(s, "\n[invdy]");
        let _ = writeln!(s, "gamma = {}", inv.gamma);
        let _ = writeln!(s, "lr = {}", inv.lr);
        let _ = writeln!(s, "hidden = {}", inv.hidden);
        let _ = writeln!(s, "embed_dim = {}", inv.embed_dim);
        let _ = writeln!(s, "encoder = {}", encoder_name(inv.encoder));
        let _ = writeln!(s, "init_scale = {}", init_scale(inv.init));
        let _ = writeln!(s, "optimizer = {}", optimizer_name(inv.optimizer.kind));
        let _ = writeln!(s, "clip_norm = {}", clip_text(&inv.optimizer));
        let _ = writeln!(s, "\n[il]");
        let _ = writeln!(s, "lr = {}", il.lr);
        let _ = writeln!(s, "batch = {}", il.batch_size);
        let _ = writeln!(s, "passes = {}", il.passes);
        let _ = writeln!(s, "hidden = {}", il.hidden);
        let _ = writeln!(s, "embed_dim = {}", il.embed_dim);
        let _ = writeln!(s, "encoder = {}", encoder_name(il.encoder));
        let _ = writeln!(s, "warm_start = {}", il.warm_start);
        let _ = writeln!(s, "init_scale = {}", init_scale(il.init));
        let _ = writeln!(s, "optimizer = {}", optimizer_name(il.optimizer.kind));
        let _ = writeln!(s, "clip_norm = {}", clip_text(&il.optimizer));
        s
    }
}

fn clip(line: usize, v: &str) -> Result<Option<f64>> {
    match v.trim() {
        "none" => Ok(None),
        x => Ok(Some(parse(line, "clip_norm", x)?)),
    }
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut section = String::new();
        let mut game_preset = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.split('#').next().unwrap_or("").trim();
            if l.is_empty() {
                continue;
            }
            if let Some(name) = l.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, format!("bad section header `{l}`")))?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected `key = value`, got `{l}`")))?;
            if section.is_empty() {
                return Err(err(line, "key outside any section"));
            }
            let k = k.trim().to_string();
            if section == "game" && k == "preset" {
                game_preset = Some(preset(line, v)?);
            }
            entries.push((line, section.clone(), k, v.trim().to_string()));
        }
        let mut cfg = ExperimentConfig::default();
        if let Some(p) = game_preset {
            cfg.game = p;
        }
        for (line, section, k, v) in entries {
            cfg.set(&section, &k, &v, line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
