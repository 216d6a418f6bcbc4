//! Exploration policy: a relevance-network Q-function trained by TD learning,
//! with an inverse-dynamics auxiliary loss whose value doubles as an
//! intrinsic reward.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::memory::Transition;
use crate::nn::{
    argmax, softmax_stable, EncoderKind, Init, Mlp, Optimizer, ParamStore, SequenceEncoder, Tape, TokenDecoder, Var,
    INIT_SCALE,
};
use crate::text::{Seq, Token};

#[derive(Clone, Debug, PartialEq)]
pub struct InvDyConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub encoder: EncoderKind,
    pub gamma: f64,
    pub lr: f64,
    pub init: Init,
    pub optimizer: Optimizer,
}

impl Default for InvDyConfig {
    fn default() -> Self {
        InvDyConfig {
            embed_dim: 128,
            hidden: 128,
            encoder: EncoderKind::Mean,
            gamma: 0.9,
            lr: 1e-4,
            init: Init::Uniform(INIT_SCALE),
            optimizer: Optimizer::default(),
        }
    }
}

/// Loss weights: `α1` scales the intrinsic reward, `α2` the inverse-dynamics
/// loss and `α3` the decoder loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntrinsicConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl Default for IntrinsicConfig {
    fn default() -> Self {
        IntrinsicConfig {
            alpha1: 1.0,
            alpha2: 1.0,
            alpha3: 1.0,
        }
    }
}

impl IntrinsicConfig {
    /// Plain TD learning.
    pub const ZERO: IntrinsicConfig = IntrinsicConfig {
        alpha1: 0.0,
        alpha2: 0.0,
        alpha3: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        Ok(())
    }

    fn needs_inverse(&self) -> bool {
        self.alpha1 > 0.0 || self.alpha2 > 0.0
    }
}

/// Batch means of the loss components of one update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TdReport {
    pub td: f64,
    pub inv: f64,
    pub dec: f64,
    pub total: f64,
    /// Mean intrinsic bonus `α1 · L_inv` added to the game reward.
    pub bonus: f64,
}

/// `Q(o, a) = q([f_o(o); f_a(a)])`, plus the inverse-dynamics head `g_inv`
/// and the action decoder shared by both auxiliary losses.
#[derive(Clone, Debug)]
pub struct QNetwork {
    store: ParamStore,
    f_o: SequenceEncoder,
    f_a: SequenceEncoder,
    q: Mlp,
    g_inv: Mlp,
    decoder: TokenDecoder,
    config: InvDyConfig,
}

/// Per-tape memo of encodings, so a batch touching the same observation or
/// command many times encodes it once.
#[derive(Default)]
struct Memo {
    obs: HashMap<Seq, Var>,
    act: HashMap<Seq, Var>,
    q: HashMap<(Var, Var), Var>,
    inv: HashMap<(Var, Var, Seq), Var>,
    dec: HashMap<Var, Var>,
}

impl QNetwork {
    pub fn new<R: Rng + ?Sized>(vocab: usize, config: InvDyConfig, rng: &mut R) -> Result<Self> {
        if !(config.gamma > 0.0 && config.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1], got {}", config.gamma)));
        }
        if config.hidden == 0 || config.embed_dim == 0 || vocab == 0 {
            return Err(Error::Config("network sizes must be positive".into()));
        }
        let (e, h, init) = (config.embed_dim, config.hidden, config.init);
        let mut store = ParamStore::new();
        let f_o = SequenceEncoder::new(&mut store, "f_o", config.encoder, vocab, e, h, init, rng);
        let f_a = SequenceEncoder::new(&mut store, "f_a", config.encoder, vocab, e, h, init, rng);
        let q = Mlp::new(&mut store, "q", &[2 * h, h, 1], init, rng);
        let g_inv = Mlp::new(&mut store, "g_inv", &[2 * h, h, h], init, rng);
        let decoder = TokenDecoder::new(&mut store, "dec", vocab, e, h, init, rng);
        Ok(QNetwork {
            store,
            f_o,
            f_a,
            q,
            g_inv,
            decoder,
            config,
        })
    }

    pub fn config(&self) -> &InvDyConfig {
        &self.config
    }

    pub fn gamma(&self) -> f64 {
        self.config.gamma
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn encode_observation(&self, tape: &mut Tape, obs: &[Token]) -> Result<Var> {
        self.f_o.forward(tape, obs)
    }

    pub fn encode_action(&self, tape: &mut Tape, action: &[Token]) -> Result<Var> {
        self.f_a.forward(tape, action)
    }

    /// Q-value node from already encoded observation and action.
    pub fn q_from_encodings(&self, tape: &mut Tape, obs: Var, action: Var) -> Result<Var> {
        let x = tape.concat(&[obs, action]);
        self.q.forward(tape, x)
    }

    /// `L_inv` node: decoder NLL of `action` conditioned on `g_inv([f_o(o); f_o(o')])`.
    pub fn inv_loss_from_encodings(&self, tape: &mut Tape, obs: Var, next: Var, action: &[Token]) -> Result<Var> {
        let x = tape.concat(&[obs, next]);
        let cond = self.g_inv.forward(tape, x)?;
        self.decoder.nll(tape, cond, action)
    }

    /// `L_dec` node: decoder NLL of `action` conditioned on its own encoding.
    pub fn dec_loss_from_encoding(&self, tape: &mut Tape, encoded: Var, action: &[Token]) -> Result<Var> {
        self.decoder.nll(tape, encoded, action)
    }

    pub fn q_values(&self, obs: &[Token], valid: &[Seq]) -> Result<Vec<f64>> {
        if valid.is_empty() {
            return Err(Error::Empty("valid action set"));
        }
        let mut tape = Tape::new(self.store.params());
        let o = self.encode_observation(&mut tape, obs)?;
        let mut out = Vec::with_capacity(valid.len());
        for a in valid {
            let av = self.encode_action(&mut tape, a)?;
            let q = self.q_from_encodings(&mut tape, o, av)?;
            out.push(tape.scalar(q));
        }
        tape.check()?;
        Ok(out)
    }

    /// Softmax over the Q-values of the valid set.
    pub fn policy_distribution(&self, obs: &[Token], valid: &[Seq]) -> Result<Vec<f64>> {
        Ok(softmax_stable(&self.q_values(obs, valid)?))
    }

    /// Highest-valued command, ties to the lowest index.
    pub fn greedy_action(&self, obs: &[Token], valid: &[Seq]) -> Result<usize> {
        let q = self.q_values(obs, valid)?;
        Ok(argmax(&q).expect("non-empty"))
    }

    pub fn inv_dynamics_loss(&self, obs: &[Token], action: &[Token], next: &[Token]) -> Result<f64> {
        let mut tape = Tape::new(self.store.params());
        let o = self.encode_observation(&mut tape, obs)?;
        let n = self.encode_observation(&mut tape, next)?;
        let l = self.inv_loss_from_encodings(&mut tape, o, n, action)?;
        tape.check()?;
        Ok(tape.scalar(l))
    }

    pub fn decoder_loss(&self, action: &[Token]) -> Result<f64> {
        let mut tape = Tape::new(self.store.params());
        let a = self.encode_action(&mut tape, action)?;
        let l = self.dec_loss_from_encoding(&mut tape, a, action)?;
        tape.check()?;
        Ok(tape.scalar(l))
    }

    /// Records the batch objective `L_TD + α2 L_inv + α3 L_dec` (each a batch
    /// mean) on `tape`.
    ///
    /// The TD targets are read off the tape as constants, so no gradient flows
    /// through them. Passing `targets` replaces them with fixed values, which
    /// makes the objective an ordinary function of the parameters.
    pub fn objective(
        &self,
        tape: &mut Tape,
        batch: &[Arc<Transition>],
        intrinsic: &IntrinsicConfig,
        targets: Option<&[f64]>,
    ) -> Result<(Var, TdReport)> {
        if batch.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        if let Some(t) = targets {
            if t.len() != batch.len() {
                return Err(Error::Shape(format!(
                    "{} targets for {} transitions",
                    t.len(),
                    batch.len()
                )));
            }
        }
        let mut memo = Memo::default();
        let mut td_terms = Vec::with_capacity(batch.len());
        let mut inv_terms = Vec::new();
        let mut dec_terms = Vec::new();
        let mut bonus = 0.0;
        for (i, t) in batch.iter().enumerate() {
            let action = t.action_tokens();
            let o = self.memo_obs(tape, &mut memo, &t.observation)?;
            let a = self.memo_act(tape, &mut memo, action)?;
            let q = self.memo_q(tape, &mut memo, o, a)?;

            let mut reward = t.reward;
            let next = if intrinsic.needs_inverse() || targets.is_none() && !t.terminal {
                Some(self.memo_obs(tape, &mut memo, &t.next_observation)?)
            } else {
                None
            };
            if intrinsic.needs_inverse() {
                let n = next.expect("encoded");
                let key = (o, n, t.valid[t.action].clone());
                let l = match memo.inv.get(&key) {
                    Some(&l) => l,
                    None => {
                        let l = self.inv_loss_from_encodings(tape, o, n, action)?;
                        memo.inv.insert(key, l);
                        l
                    }
                };
                let b = intrinsic.alpha1 * tape.scalar(l);
                reward += b;
                bonus += b;
                if intrinsic.alpha2 > 0.0 {
                    inv_terms.push(l);
                }
            }
            if intrinsic.alpha3 > 0.0 {
                let l = match memo.dec.get(&a) {
                    Some(&l) => l,
                    None => {
                        let l = self.dec_loss_from_encoding(tape, a, action)?;
                        memo.dec.insert(a, l);
                        l
                    }
                };
                dec_terms.push(l);
            }

            let y = match targets {
                Some(t) => t[i],
                None if t.terminal || t.next_valid.is_empty() => reward,
                None => {
                    let n = next.expect("encoded");
                    let mut best = f64::NEG_INFINITY;
                    for cand in t.next_valid.iter() {
                        let av = self.memo_act(tape, &mut memo, cand)?;
                        let qn = self.memo_q(tape, &mut memo, n, av)?;
                        best = best.max(tape.scalar(qn));
                    }
                    reward + self.config.gamma * best
                }
            };
            let y = tape.constant(y);
            let diff = tape.sub(q, y)?;
            td_terms.push(tape.square(diff));
        }
        tape.check()?;

        let scale = 1.0 / batch.len() as f64;
        let mut report = TdReport {
            bonus: bonus * scale,
            ..TdReport::default()
        };
        let td = tape.sum(&td_terms)?;
        let td = tape.scale(td, scale);
        report.td = tape.scalar(td);
        let mut parts = vec![td];
        if !inv_terms.is_empty() {
            let s = tape.sum(&inv_terms)?;
            let mean = tape.scale(s, scale);
            report.inv = tape.scalar(mean);
            parts.push(tape.scale(mean, intrinsic.alpha2));
        }
        if !dec_terms.is_empty() {
            let s = tape.sum(&dec_terms)?;
            let mean = tape.scale(s, scale);
            report.dec = tape.scalar(mean);
            parts.push(tape.scale(mean, intrinsic.alpha3));
        }
        let total = tape.sum(&parts)?;
        report.total = tape.scalar(total);
        Ok((total, report))
    }

    /// TD targets `r + α1 L_inv + γ max_{a'} Q(o', a')` (just the reward part
    /// when terminal) under the current parameters.
    pub fn td_targets(&self, batch: &[Arc<Transition>], intrinsic: &IntrinsicConfig) -> Result<Vec<f64>> {
        let mut tape = Tape::new(self.store.params());
        let mut memo = Memo::default();
        let mut out = Vec::with_capacity(batch.len());
        for t in batch {
            let mut r = t.reward;
            let o = self.memo_obs(&mut tape, &mut memo, &t.observation)?;
            let n = self.memo_obs(&mut tape, &mut memo, &t.next_observation)?;
            if intrinsic.alpha1 > 0.0 {
                let l = self.inv_loss_from_encodings(&mut tape, o, n, t.action_tokens())?;
                r += intrinsic.alpha1 * tape.scalar(l);
            }
            if !t.terminal && !t.next_valid.is_empty() {
                let mut best = f64::NEG_INFINITY;
                for cand in t.next_valid.iter() {
                    let av = self.memo_act(&mut tape, &mut memo, cand)?;
                    let qn = self.memo_q(&mut tape, &mut memo, n, av)?;
                    best = best.max(tape.scalar(qn));
                }
                r += self.config.gamma * best;
            }
            out.push(r);
        }
        tape.check()?;
        Ok(out)
    }

    /// One optimizer step on the batch objective.
    pub fn td_update(&mut self, batch: &[Arc<Transition>], intrinsic: &IntrinsicConfig) -> Result<TdReport> {
        self.store.zero_grad();
        let mut grads = std::mem::take(self.store.grads_mut());
        let result = (|| {
            let mut tape = Tape::new(self.store.params());
            let (loss, report) = self.objective(&mut tape, batch, intrinsic, None)?;
            tape.backward(loss, &mut grads)?;
            Ok::<_, Error>(report)
        })();
        *self.store.grads_mut() = grads;
        let report = result?;
        self.config.optimizer.step(&mut self.store, self.config.lr)?;
        Ok(report)
    }

    fn memo_obs(&self, tape: &mut Tape, memo: &mut Memo, obs: &Seq) -> Result<Var> {
        if let Some(&v) = memo.obs.get(obs) {
            return Ok(v);
        }
        let v = self.encode_observation(tape, obs)?;
        memo.obs.insert(obs.clone(), v);
        Ok(v)
    }

    fn memo_act(&self, tape: &mut Tape, memo: &mut Memo, act: &Seq) -> Result<Var> {
        if let Some(&v) = memo.act.get(act) {
            return Ok(v);
        }
        let v = self.encode_action(tape, act)?;
        memo.act.insert(act.clone(), v);
        Ok(v)
    }

    fn memo_q(&self, tape: &mut Tape, memo: &mut Memo, o: Var, a: Var) -> Result<Var> {
        if let Some(&v) = memo.q.get(&(o, a)) {
            return Ok(v);
        }
        let v = self.q_from_encodings(tape, o, a)?;
        memo.q.insert((o, a), v);
        Ok(v)
    }
}
