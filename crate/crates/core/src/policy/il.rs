//! Exploitation policy: scores each valid command against a short history
//! context and is fit by cross-entropy to commands from good past episodes.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::memory::{TrajectoryBuffer, Transition};
use crate::nn::{
    softmax_stable, EncoderKind, Init, Linear, Optimizer, ParamStore, SequenceEncoder, Tape, Var, INIT_SCALE,
};
use crate::text::{Seq, Token};

/// Builds `[a_{t-2}; SEP; a_{t-1}; SEP; o_t]`. Missing history is the one-token PAD command.
pub fn build_context(prev2: Option<&[Token]>, prev1: Option<&[Token]>, obs: &[Token]) -> Seq {
    let pad = [Token::PAD];
    let a2 = prev2.unwrap_or(&pad);
    let a1 = prev1.unwrap_or(&pad);
    let mut out = Vec::with_capacity(a2.len() + a1.len() + obs.len() + 2);
    out.extend_from_slice(a2);
    out.push(Token::SEP);
    out.extend_from_slice(a1);
    out.push(Token::SEP);
    out.extend_from_slice(obs);
    out.into()
}

/// Splits a context back into its three segments.
pub fn split_context(context: &[Token]) -> Result<[&[Token]; 3]> {
    let mut it = context
        .iter()
        .enumerate()
        .filter(|(_, t)| **t == Token::SEP)
        .map(|(i, _)| i);
    let (Some(i), Some(j)) = (it.next(), it.next()) else {
        return Err(Error::Shape("context needs two separators".into()));
    };
    let parts = [&context[..i], &context[i + 1..j], &context[j + 1..]];
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Shape("context has an empty segment".into()));
    }
    Ok(parts)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IlConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub encoder: EncoderKind,
    pub lr: f64,
    pub batch_size: usize,
    pub passes: usize,
    /// Keep the previous round's weights instead of reinitializing.
    pub warm_start: bool,
    pub init: Init,
    pub optimizer: Optimizer,
}

impl Default for IlConfig {
    fn default() -> Self {
        IlConfig {
            embed_dim: 128,
            hidden: 128,
            encoder: EncoderKind::Mean,
            lr: 1e-3,
            batch_size: 64,
            passes: 40,
            warm_start: false,
            init: Init::Uniform(INIT_SCALE),
            optimizer: Optimizer::default(),
        }
    }
}

/// One supervised example: the context, the valid set there, and the index taken.
#[derive(Clone, Debug)]
pub struct IlExample {
    pub context: Seq,
    pub valid: Arc<[Seq]>,
    pub action: usize,
}

impl From<&Transition> for IlExample {
    fn from(t: &Transition) -> Self {
        IlExample {
            context: t.context.clone(),
            valid: t.valid.clone(),
            action: t.action,
        }
    }
}

/// Every single-step example of every trajectory in the buffer.
pub fn examples(buffer: &TrajectoryBuffer) -> Vec<IlExample> {
    buffer
        .trajectories
        .iter()
        .flat_map(|t| t.steps.iter().map(|s| IlExample::from(s.as_ref())))
        .collect()
}

/// `score(c, a) = h(c) · f_a(a)` where `h(c) = tanh(W [e(a_{t-2}); e(a_{t-1}); e(o_t)] + b)`.
#[derive(Clone, Debug)]
pub struct IlModel {
    store: ParamStore,
    segment: SequenceEncoder,
    mix: Linear,
    f_a: SequenceEncoder,
    config: IlConfig,
}

#[derive(Default)]
struct Memo {
    ctx: HashMap<Seq, Var>,
    act: HashMap<Seq, Var>,
}

impl IlModel {
    pub fn new<R: Rng + ?Sized>(vocab: usize, config: IlConfig, rng: &mut R) -> Result<Self> {
        if config.hidden == 0 || config.embed_dim == 0 || vocab == 0 || config.batch_size == 0 {
            return Err(Error::Config("network sizes and batch size must be positive".into()));
        }
        let (e, h, init) = (config.embed_dim, config.hidden, config.init);
        let mut store = ParamStore::new();
        let segment = SequenceEncoder::new(&mut store, "il.seg", config.encoder, vocab, e, h, init, rng);
        let mix = Linear::new(&mut store, "il.mix", 3 * h, h, init, rng);
        let f_a = SequenceEncoder::new(&mut store, "il.f_a", config.encoder, vocab, e, h, init, rng);
        Ok(IlModel {
            store,
            segment,
            mix,
            f_a,
            config,
        })
    }

    pub fn config(&self) -> &IlConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut IlConfig {
        &mut self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn encode_context(&self, tape: &mut Tape, context: &[Token]) -> Result<Var> {
        let parts = split_context(context)?;
        let mut enc = Vec::with_capacity(3);
        for p in parts {
            enc.push(self.segment.forward(tape, p)?);
        }
        let x = tape.concat(&enc);
        let h = self.mix.forward(tape, x)?;
        Ok(tape.tanh(h))
    }

    pub fn encode_action(&self, tape: &mut Tape, action: &[Token]) -> Result<Var> {
        self.f_a.forward(tape, action)
    }

    pub fn scores(&self, context: &[Token], valid: &[Seq]) -> Result<Vec<f64>> {
        if valid.is_empty() {
            return Err(Error::Empty("valid action set"));
        }
        let mut tape = Tape::new(self.store.params());
        let c = self.encode_context(&mut tape, context)?;
        let mut out = Vec::with_capacity(valid.len());
        for a in valid {
            let av = self.encode_action(&mut tape, a)?;
            let s = tape.dot(c, av)?;
            out.push(tape.scalar(s));
        }
        tape.check()?;
        Ok(out)
    }

    /// Softmax of the scores, restricted to `valid`.
    pub fn il_distribution(&self, context: &[Token], valid: &[Seq]) -> Result<Vec<f64>> {
        Ok(softmax_stable(&self.scores(context, valid)?))
    }

    /// Records the mean cross-entropy of `batch` on `tape`.
    pub fn objective(&self, tape: &mut Tape, batch: &[&IlExample]) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::Empty("imitation batch"));
        }
        let mut memo = Memo::default();
        let mut terms = Vec::with_capacity(batch.len());
        for ex in batch {
            if ex.action >= ex.valid.len() {
                return Err(Error::Shape(format!(
                    "action {} of {} candidates",
                    ex.action,
                    ex.valid.len()
                )));
            }
            let c = match memo.ctx.get(&ex.context) {
                Some(&v) => v,
                None => {
                    let v = self.encode_context(tape, &ex.context)?;
                    memo.ctx.insert(ex.context.clone(), v);
                    v
                }
            };
            let mut logits = Vec::with_capacity(ex.valid.len());
            for a in ex.valid.iter() {
                let av = match memo.act.get(a) {
                    Some(&v) => v,
                    None => {
                        let v = self.encode_action(tape, a)?;
                        memo.act.insert(a.clone(), v);
                        v
                    }
                };
                logits.push(tape.dot(c, av)?);
            }
            let logits = tape.concat(&logits);
            terms.push(tape.cross_entropy(logits, ex.action)?);
        }
        let s = tape.sum(&terms)?;
        Ok(tape.scale(s, 1.0 / batch.len() as f64))
    }

    /// Mean cross-entropy over `data`, without updating anything.
    pub fn mean_loss(&self, data: &[IlExample]) -> Result<f64> {
        let refs: Vec<&IlExample> = data.iter().collect();
        let mut tape = Tape::new(self.store.params());
        let l = self.objective(&mut tape, &refs)?;
        tape.check()?;
        Ok(tape.scalar(l))
    }

    /// Fits the buffer's examples for `config.passes` shuffled passes.
    /// Returns the mean minibatch loss of each pass.
    pub fn train_il<R: Rng + ?Sized>(&mut self, buffer: &TrajectoryBuffer, rng: &mut R) -> Result<Vec<f64>> {
        let data = examples(buffer);
        self.train_examples(&data, rng)
    }

    pub fn train_examples<R: Rng + ?Sized>(&mut self, data: &[IlExample], rng: &mut R) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Err(Error::Empty("trajectory buffer"));
        }
        if !self.config.warm_start {
            self.store.reinitialize(self.config.init, rng);
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut curve = Vec::with_capacity(self.config.passes);
        for _ in 0..self.config.passes {
            order.shuffle(rng);
            let mut total = 0.0;
            let mut batches = 0;
            for chunk in order.chunks(self.config.batch_size) {
                let batch: Vec<&IlExample> = chunk.iter().map(|&i| &data[i]).collect();
                self.store.zero_grad();
                let mut grads = std::mem::take(self.store.grads_mut());
                let result = (|| {
                    let mut tape = Tape::new(self.store.params());
                    let loss = self.objective(&mut tape, &batch)?;
                    tape.backward(loss, &mut grads)?;
                    Ok::<_, Error>(tape.scalar(loss))
                })();
                *self.store.grads_mut() = grads;
                total += result?;
                self.config.optimizer.step(&mut self.store, self.config.lr)?;
                batches += 1;
            }
            curve.push(total / batches as f64);
        }
        Ok(curve)
    }
}
