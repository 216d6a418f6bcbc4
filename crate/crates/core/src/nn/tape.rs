//! Reverse-mode automatic differentiation over dense vectors.
//!
//! A [`Tape`] records every operation of one forward pass as a node holding
//! its output vector. Parameters are never copied onto the tape: the ops that
//! read them ([`Tape::embed_mean`], [`Tape::linear`]) refer to the store by
//! [`ParamId`], and [`Tape::backward`] accumulates straight into [`Grads`].
//!
//! Subexpressions can be shared: a node used twice receives the sum of both
//! upstream gradients, so a batch loss may reuse one encoding many times.

use crate::error::{Error, Result};
use crate::nn::ops::{log_clamped, softmax_stable, LOG_CLAMP};
use crate::nn::tensor::{Grads, ParamId, Params};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    EmbedMean {
        table: ParamId,
        ids: Vec<usize>,
    },
    Linear {
        w: ParamId,
        b: Option<ParamId>,
        x: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    OneMinus(Var),
    Square(Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    /// Fused GRU step; `cache` holds `z`, `r`, `n` and `Un h + b` back to back.
    Gru {
        weights: GruWeights,
        x: Var,
        h: Var,
        cache: Vec<f64>,
    },
    Dot(Var, Var),
    Sum(Vec<Var>),
    /// `-log softmax(logits)[target]`; `probs` cached for the backward pass.
    CrossEntropy {
        logits: Var,
        target: usize,
        probs: Vec<f64>,
    },
}

/// `(weight, bias)` pairs of a GRU cell in the order
/// `[Wz, Uz, Wr, Ur, Wn, Un]`; input maps take `x`, hidden maps take `h`.
pub type GruWeights = [(ParamId, ParamId); 6];

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p Params,
    nodes: Vec<Node>,
    poisoned: Option<&'static str>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p Params) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(256),
            poisoned: None,
        }
    }

    pub fn params(&self) -> &'p Params {
        self.params
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// The single value of a scalar node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Fails if any node so far produced a NaN or infinity.
    pub fn check(&self) -> Result<()> {
        match self.poisoned {
            Some(op) => Err(Error::NonFinite(op)),
            None => Ok(()),
        }
    }

    fn push(&mut self, value: Vec<f64>, op: Op, name: &'static str) -> Var {
        if self.poisoned.is_none() && value.iter().any(|v| !v.is_finite()) {
            self.poisoned = Some(name);
        }
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn same_len(&self, a: Var, b: Var, what: &str) -> Result<usize> {
        let (la, lb) = (self.value(a).len(), self.value(b).len());
        if la != lb {
            return Err(Error::Shape(format!("{what}: {la} vs {lb}")));
        }
        Ok(la)
    }

    pub fn input(&mut self, values: Vec<f64>) -> Var {
        self.push(values, Op::Input, "input")
    }

    pub fn constant(&mut self, v: f64) -> Var {
        self.input(vec![v])
    }

    /// Mean of the embedding rows `ids` of a `[vocab, dim]` table.
    pub fn embed_mean(&mut self, table: ParamId, ids: &[usize]) -> Result<Var> {
        if ids.is_empty() {
            return Err(Error::Empty("embedding lookup"));
        }
        let t = self.params.get(table);
        let (rows, dim) = (t.shape()[0], t.shape()[1]);
        let mut out = vec![0.0; dim];
        for &id in ids {
            if id >= rows {
                return Err(Error::OutOfVocab { id, vocab: rows });
            }
            for (o, &w) in out.iter_mut().zip(t.row(id)) {
                *o += w;
            }
        }
        let inv = 1.0 / ids.len() as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        Ok(self.push(
            out,
            Op::EmbedMean {
                table,
                ids: ids.to_vec(),
            },
            "embed_mean",
        ))
    }

    /// `W x + b` with `W` of shape `[out, in]`.
    pub fn linear(&mut self, w: ParamId, b: Option<ParamId>, x: Var) -> Result<Var> {
        let wt = self.params.get(w);
        let (rows, cols) = (wt.shape()[0], wt.shape()[1]);
        let xv = &self.nodes[x.0].value;
        if xv.len() != cols {
            return Err(Error::Shape(format!(
                "linear {}: input {} vs weight columns {cols}",
                self.params.name(w),
                xv.len()
            )));
        }
        let mut out = match b {
            Some(b) => self.params.get(b).data().to_vec(),
            None => vec![0.0; rows],
        };
        let wd = wt.data();
        for (r, o) in out.iter_mut().enumerate() {
            let row = &wd[r * cols..(r + 1) * cols];
            *o += dot(row, xv);
        }
        Ok(self.push(out, Op::Linear { w, b, x }, "linear"))
    }

    /// One GRU step as a single node:
    /// `z = σ(Wz x + Uz h)`, `r = σ(Wr x + Ur h)`, `n = tanh(Wn x + r ⊙ (Un h))`,
    /// `h' = (1 - z) ⊙ n + z ⊙ h` (every map with its bias).
    pub fn gru_step(&mut self, weights: &GruWeights, x: Var, h: Var) -> Result<Var> {
        let (xv, hv) = (self.value(x), self.value(h));
        let hidden = hv.len();
        for (i, &(w, b)) in weights.iter().enumerate() {
            let shape = self.params.get(w).shape();
            let cols = if i % 2 == 0 { xv.len() } else { hidden };
            if shape[0] != hidden || shape[1] != cols || self.params.get(b).len() != hidden {
                return Err(Error::Shape(format!(
                    "gru {}: weight {:?} vs input {cols}, hidden {hidden}",
                    self.params.name(w),
                    shape
                )));
            }
        }
        let aff = |i: usize, v: &[f64]| affine(self.params, weights[i], v);
        let (zx, zh, rx, rh, nx, nh) = (aff(0, xv), aff(1, hv), aff(2, xv), aff(3, hv), aff(4, xv), aff(5, hv));
        let mut cache = vec![0.0; 4 * hidden];
        let mut out = vec![0.0; hidden];
        for k in 0..hidden {
            let z = sigmoid(zx[k] + zh[k]);
            let r = sigmoid(rx[k] + rh[k]);
            let n = (nx[k] + r * nh[k]).tanh();
            cache[k] = z;
            cache[hidden + k] = r;
            cache[2 * hidden + k] = n;
            cache[3 * hidden + k] = nh[k];
            out[k] = (1.0 - z) * n + z * hv[k];
        }
        Ok(self.push(
            out,
            Op::Gru {
                weights: *weights,
                x,
                h,
                cache,
            },
            "gru",
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b, "add")?;
        let out = self.zip_map(a, b, |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b), "add"))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b, "sub")?;
        let out = self.zip_map(a, b, |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b), "sub"))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b, "mul")?;
        let out = self.zip_map(a, b, |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b), "mul"))
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect()
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.value(a).iter().map(|&x| f(x)).collect()
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.map(a, f64::tanh);
        self.push(out, Op::Tanh(a), "tanh")
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| 1.0 / (1.0 + (-x).exp()));
        self.push(out, Op::Sigmoid(a), "sigmoid")
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| 1.0 - x);
        self.push(out, Op::OneMinus(a), "one_minus")
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| x * x);
        self.push(out, Op::Square(a), "square")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.map(a, |x| x * c);
        self.push(out, Op::Scale(a, c), "scale")
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut out = Vec::with_capacity(parts.iter().map(|&p| self.value(p).len()).sum());
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        self.push(out, Op::Concat(parts.to_vec()), "concat")
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b, "dot")?;
        let d = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).sum();
        Ok(self.push(vec![d], Op::Dot(a, b), "dot"))
    }

    /// Elementwise sum of equally sized nodes.
    pub fn sum(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::Empty("sum"))?;
        let mut out = self.value(first).to_vec();
        for &p in &parts[1..] {
            self.same_len(first, p, "sum")?;
            for (o, v) in out.iter_mut().zip(self.value(p)) {
                *o += v;
            }
        }
        Ok(self.push(out, Op::Sum(parts.to_vec()), "sum"))
    }

    /// Negative log-likelihood of `target` under `softmax(logits)`, with the
    /// probability clamped below at [`LOG_CLAMP`].
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let n = self.value(logits).len();
        if n == 0 {
            return Err(Error::Empty("cross_entropy logits"));
        }
        if target >= n {
            return Err(Error::Shape(format!("target {target} with {n} classes")));
        }
        let probs = softmax_stable(self.value(logits));
        let loss = -log_clamped(probs[target]);
        Ok(self.push(vec![loss], Op::CrossEntropy { logits, target, probs }, "cross_entropy"))
    }

    /// Accumulates `d output / d param` into `grads`. `output` must be a scalar.
    pub fn backward(&self, output: Var, grads: &mut Grads) -> Result<()> {
        self.check()?;
        if self.value(output).len() != 1 {
            return Err(Error::Shape("backward needs a scalar output".into()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = Vec::with_capacity(output.0 + 1);
        adj.resize_with(output.0 + 1, || None);
        adj[output.0] = Some(vec![1.0]);

        fn acc(adj: &mut [Option<Vec<f64>>], v: Var, len: usize, f: impl Fn(&mut [f64])) {
            let slot = adj[v.0].get_or_insert_with(|| vec![0.0; len]);
            f(slot);
        }

        for i in (0..=output.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::EmbedMean { table, ids } => {
                    let gt = grads.get_mut(*table);
                    let dim = gt.shape()[1];
                    let inv = 1.0 / ids.len() as f64;
                    let data = gt.data_mut();
                    for &id in ids {
                        for (d, &gv) in data[id * dim..(id + 1) * dim].iter_mut().zip(&g) {
                            *d += gv * inv;
                        }
                    }
                }
                Op::Linear { w, b, x } => {
                    let xv = self.value(*x);
                    let cols = xv.len();
                    {
                        let gw = grads.get_mut(*w).data_mut();
                        for (r, &gr) in g.iter().enumerate() {
                            if gr == 0.0 {
                                continue;
                            }
                            for (d, &xj) in gw[r * cols..(r + 1) * cols].iter_mut().zip(xv) {
                                *d += gr * xj;
                            }
                        }
                    }
                    if let Some(b) = b {
                        for (d, &gr) in grads.get_mut(*b).data_mut().iter_mut().zip(&g) {
                            *d += gr;
                        }
                    }
                    let wd = self.params.get(*w).data();
                    acc(&mut adj, *x, cols, |dx| {
                        for (r, &gr) in g.iter().enumerate() {
                            if gr == 0.0 {
                                continue;
                            }
                            for (d, &wrj) in dx.iter_mut().zip(&wd[r * cols..(r + 1) * cols]) {
                                *d += gr * wrj;
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    let n = g.len();
                    acc(&mut adj, *a, n, |d| add_into(d, &g));
                    acc(&mut adj, *b, n, |d| add_into(d, &g));
                }
                Op::Sub(a, b) => {
                    let n = g.len();
                    acc(&mut adj, *a, n, |d| add_into(d, &g));
                    acc(&mut adj, *b, n, |d| d.iter_mut().zip(&g).for_each(|(d, g)| *d -= g));
                }
                Op::Mul(a, b) => {
                    let n = g.len();
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut adj, *a, n, |d| {
                        for k in 0..n {
                            d[k] += g[k] * bv[k];
                        }
                    });
                    acc(&mut adj, *b, n, |d| {
                        for k in 0..n {
                            d[k] += g[k] * av[k];
                        }
                    });
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    acc(&mut adj, *a, g.len(), |d| {
                        for k in 0..g.len() {
                            d[k] += g[k] * (1.0 - y[k] * y[k]);
                        }
                    });
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(&mut adj, *a, g.len(), |d| {
                        for k in 0..g.len() {
                            d[k] += g[k] * y[k] * (1.0 - y[k]);
                        }
                    });
                }
                Op::OneMinus(a) => {
                    acc(&mut adj, *a, g.len(), |d| {
                        d.iter_mut().zip(&g).for_each(|(d, g)| *d -= g)
                    });
                }
                Op::Square(a) => {
                    let x = self.value(*a);
                    acc(&mut adj, *a, g.len(), |d| {
                        for k in 0..g.len() {
                            d[k] += 2.0 * g[k] * x[k];
                        }
                    });
                }
                Op::Scale(a, c) => {
                    acc(&mut adj, *a, g.len(), |d| {
                        d.iter_mut().zip(&g).for_each(|(d, g)| *d += c * g)
                    });
                }
                Op::Gru { weights, x, h, cache } => {
                    let hidden = g.len();
                    let (xv, hv) = (self.value(*x), self.value(*h));
                    let (z, rest) = cache.split_at(hidden);
                    let (r, rest) = rest.split_at(hidden);
                    let (n, nh) = rest.split_at(hidden);
                    let mut dz = vec![0.0; hidden];
                    let mut dr = vec![0.0; hidden];
                    let mut dn = vec![0.0; hidden];
                    let mut dnh = vec![0.0; hidden];
                    let mut dh = vec![0.0; hidden];
                    for k in 0..hidden {
                        let dn_pre = g[k] * (1.0 - z[k]) * (1.0 - n[k] * n[k]);
                        dz[k] = g[k] * (hv[k] - n[k]) * z[k] * (1.0 - z[k]);
                        dr[k] = dn_pre * nh[k] * r[k] * (1.0 - r[k]);
                        dn[k] = dn_pre;
                        dnh[k] = dn_pre * r[k];
                        dh[k] = g[k] * z[k];
                    }
                    let mut dx = vec![0.0; xv.len()];
                    for (i, d) in [&dz, &dz, &dr, &dr, &dn, &dnh].into_iter().enumerate() {
                        let (input, dinput) = if i % 2 == 0 { (xv, &mut dx) } else { (hv, &mut dh) };
                        affine_backward(self.params, grads, weights[i], input, d, dinput);
                    }
                    acc(&mut adj, *x, dx.len(), |d| add_into(d, &dx));
                    acc(&mut adj, *h, hidden, |d| add_into(d, &dh));
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        acc(&mut adj, p, n, |d| add_into(d, &g[off..off + n]));
                        off += n;
                    }
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let n = av.len();
                    acc(&mut adj, *a, n, |d| {
                        d.iter_mut().zip(bv).for_each(|(d, y)| *d += g[0] * y)
                    });
                    acc(&mut adj, *b, n, |d| {
                        d.iter_mut().zip(av).for_each(|(d, x)| *d += g[0] * x)
                    });
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        acc(&mut adj, p, g.len(), |d| add_into(d, &g));
                    }
                }
                Op::CrossEntropy { logits, target, probs } => {
                    // Flat in the clamped region.
                    if probs[*target] < LOG_CLAMP {
                        continue;
                    }
                    acc(&mut adj, *logits, probs.len(), |d| {
                        for (k, (d, &p)) in d.iter_mut().zip(probs).enumerate() {
                            let onehot = if k == *target { 1.0 } else { 0.0 };
                            *d += g[0] * (p - onehot);
                        }
                    });
                }
            }
        }
        Ok(())
    }
}

/// Inner product with four independent accumulators, so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn affine(params: &Params, (w, b): (ParamId, ParamId), x: &[f64]) -> Vec<f64> {
    let wd = params.get(w).data();
    let mut out = params.get(b).data().to_vec();
    for (r, o) in out.iter_mut().enumerate() {
        *o += dot(&wd[r * x.len()..(r + 1) * x.len()], x);
    }
    out
}

/// Accumulates the gradients of `W x + b` given the output adjoint `g`.
fn affine_backward(
    params: &Params,
    grads: &mut Grads,
    (w, b): (ParamId, ParamId),
    x: &[f64],
    g: &[f64],
    dx: &mut [f64],
) {
    let cols = x.len();
    let gw = grads.get_mut(w).data_mut();
    for (r, &gr) in g.iter().enumerate() {
        if gr != 0.0 {
            for (d, &xj) in gw[r * cols..(r + 1) * cols].iter_mut().zip(x) {
                *d += gr * xj;
            }
        }
    }
    add_into(grads.get_mut(b).data_mut(), g);
    let wd = params.get(w).data();
    for (r, &gr) in g.iter().enumerate() {
        if gr != 0.0 {
            for (d, &wrj) in dx.iter_mut().zip(&wd[r * cols..(r + 1) * cols]) {
                *d += gr * wrj;
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::{Init, ParamStore};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shared_node_gradients_add_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let w = store.add("w", &[1, 1], Init::Zeros, &mut rng);
        store.value_mut(w).data_mut()[0] = 3.0;
        let (params, grads) = store.split();
        let mut tape = Tape::new(params);
        let x = tape.input(vec![2.0]);
        let y = tape.linear(w, None, x).unwrap();
        // y * y = (w x)^2, d/dw = 2 w x^2 = 24
        let z = tape.mul(y, y).unwrap();
        tape.backward(z, grads).unwrap();
        assert_eq!(store.grads().get(w).data()[0], 24.0);
    }

    #[test]
    fn shape_errors_are_reported() {
        let store = ParamStore::new();
        let mut tape = Tape::new(store.params());
        let a = tape.input(vec![1.0, 2.0]);
        let b = tape.input(vec![1.0]);
        assert!(matches!(tape.add(a, b), Err(Error::Shape(_))));
        assert!(matches!(tape.cross_entropy(a, 2), Err(Error::Shape(_))));
        assert!(matches!(tape.sum(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn non_finite_poisons_the_tape() {
        let store = ParamStore::new();
        let mut tape = Tape::new(store.params());
        let a = tape.input(vec![1e300]);
        let b = tape.square(a);
        assert!(matches!(tape.check(), Err(Error::NonFinite("square"))));
        let mut grads = Grads::default();
        assert!(tape.backward(b, &mut grads).is_err());
    }
}
