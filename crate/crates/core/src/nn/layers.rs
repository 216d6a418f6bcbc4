use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::tape::{GruWeights, Tape, Var};
use crate::nn::tensor::{Init, ParamId, ParamStore};
use crate::text::Token;

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let w = store.add(&format!("{name}.w"), &[out_dim, in_dim], init, rng);
        let b = store.add(&format!("{name}.b"), &[out_dim], init, rng);
        Linear { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        tape.linear(self.w, Some(self.b), x)
    }
}

/// Affine layers with `tanh` between them and a linear output.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `dims` lists the input width followed by every layer's output width.
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, dims: &[usize], init: Init, rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| Linear::new(store, &format!("{name}.{i}"), d[0], d[1], init, rng))
            .collect();
        Mlp { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, h)?;
            if i + 1 < self.layers.len() {
                h = tape.tanh(h);
            }
        }
        Ok(h)
    }
}

/// Gated recurrent cell:
/// `z = σ(Wz x + Uz h)`, `r = σ(Wr x + Ur h)`, `n = tanh(Wn x + r ⊙ (Un h))`,
/// `h' = (1 - z) ⊙ n + z ⊙ h`.
#[derive(Clone, Debug)]
pub struct GruCell {
    wz: Linear,
    uz: Linear,
    wr: Linear,
    ur: Linear,
    wn: Linear,
    un: Linear,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let mut lin = |part: &str, i: usize| Linear::new(store, &format!("{name}.{part}"), i, hidden, init, rng);
        GruCell {
            wz: lin("wz", in_dim),
            uz: lin("uz", hidden),
            wr: lin("wr", in_dim),
            ur: lin("ur", hidden),
            wn: lin("wn", in_dim),
            un: lin("un", hidden),
            hidden,
        }
    }

    pub fn weights(&self) -> GruWeights {
        [&self.wz, &self.uz, &self.wr, &self.ur, &self.wn, &self.un].map(|l| (l.w, l.b))
    }

    pub fn step(&self, tape: &mut Tape, x: Var, h: Var) -> Result<Var> {
        tape.gru_step(&self.weights(), x, h)
    }

    /// The same step built from elementary tape ops.
    pub fn step_unfused(&self, tape: &mut Tape, x: Var, h: Var) -> Result<Var> {
        let zx = self.wz.forward(tape, x)?;
        let zh = self.uz.forward(tape, h)?;
        let z = tape.add(zx, zh)?;
        let z = tape.sigmoid(z);
        let rx = self.wr.forward(tape, x)?;
        let rh = self.ur.forward(tape, h)?;
        let r = tape.add(rx, rh)?;
        let r = tape.sigmoid(r);
        let nx = self.wn.forward(tape, x)?;
        let nh = self.un.forward(tape, h)?;
        let nh = tape.mul(r, nh)?;
        let n = tape.add(nx, nh)?;
        let n = tape.tanh(n);
        let keep = tape.mul(z, h)?;
        let one_minus_z = tape.one_minus(z);
        let new = tape.mul(one_minus_z, n)?;
        tape.add(new, keep)
    }
}

/// Encoder architecture behind [`SequenceEncoder`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderKind {
    /// `tanh(W · mean(embeddings) + b)`.
    Mean,
    /// Final hidden state of a [`GruCell`] run over the embeddings from `h = 0`.
    Gru,
}

#[derive(Clone, Debug)]
enum EncoderBody {
    Mean(Linear),
    Gru(GruCell),
}

/// Maps a token sequence of any length to a fixed-width vector.
#[derive(Clone, Debug)]
pub struct SequenceEncoder {
    pub embedding: ParamId,
    body: EncoderBody,
    vocab: usize,
    out_dim: usize,
}

impl SequenceEncoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        kind: EncoderKind,
        vocab: usize,
        embed_dim: usize,
        out_dim: usize,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let embedding = store.add(&format!("{name}.embed"), &[vocab, embed_dim], init, rng);
        let body = match kind {
            EncoderKind::Mean => EncoderBody::Mean(Linear::new(
                store,
                &format!("{name}.proj"),
                embed_dim,
                out_dim,
                init,
                rng,
            )),
            EncoderKind::Gru => EncoderBody::Gru(GruCell::new(
                store,
                &format!("{name}.gru"),
                embed_dim,
                out_dim,
                init,
                rng,
            )),
        };
        SequenceEncoder {
            embedding,
            body,
            vocab,
            out_dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn kind(&self) -> EncoderKind {
        match self.body {
            EncoderBody::Mean(_) => EncoderKind::Mean,
            EncoderBody::Gru(_) => EncoderKind::Gru,
        }
    }

    pub fn forward(&self, tape: &mut Tape, tokens: &[Token]) -> Result<Var> {
        if tokens.is_empty() {
            return Err(Error::Empty("token sequence"));
        }
        let ids: Vec<usize> = tokens.iter().map(|t| t.index()).collect();
        if let Some(&id) = ids.iter().find(|&&id| id >= self.vocab) {
            return Err(Error::OutOfVocab { id, vocab: self.vocab });
        }
        match &self.body {
            EncoderBody::Mean(proj) => {
                let m = tape.embed_mean(self.embedding, &ids)?;
                let h = proj.forward(tape, m)?;
                Ok(tape.tanh(h))
            }
            EncoderBody::Gru(cell) => {
                let mut h = tape.input(vec![0.0; self.out_dim]);
                for &id in &ids {
                    let x = tape.embed_mean(self.embedding, &[id])?;
                    h = cell.step(tape, x, h)?;
                }
                Ok(h)
            }
        }
    }
}

/// Autoregressive token decoder: a [`GruCell`] whose initial hidden state is
/// the conditioning vector and whose input at each position is the embedding
/// of the previous token (the separator at position 0).
#[derive(Clone, Debug)]
pub struct TokenDecoder {
    embedding: ParamId,
    cell: GruCell,
    out: Linear,
    vocab: usize,
}

impl TokenDecoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        vocab: usize,
        embed_dim: usize,
        hidden: usize,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let embedding = store.add(&format!("{name}.embed"), &[vocab, embed_dim], init, rng);
        let cell = GruCell::new(store, &format!("{name}.gru"), embed_dim, hidden, init, rng);
        let out = Linear::new(store, &format!("{name}.out"), hidden, vocab, init, rng);
        TokenDecoder {
            embedding,
            cell,
            out,
            vocab,
        }
    }

    pub fn hidden(&self) -> usize {
        self.cell.hidden
    }

    /// Summed negative log-likelihood of `target` given `condition`.
    pub fn nll(&self, tape: &mut Tape, condition: Var, target: &[Token]) -> Result<Var> {
        if target.is_empty() {
            return Err(Error::Empty("decoder target"));
        }
        let mut h = condition;
        let mut prev = Token::SEP.index().min(self.vocab - 1);
        let mut terms = Vec::with_capacity(target.len());
        for &t in target {
            let id = t.index();
            if id >= self.vocab {
                return Err(Error::OutOfVocab { id, vocab: self.vocab });
            }
            let x = tape.embed_mean(self.embedding, &[prev])?;
            h = self.cell.step(tape, x, h)?;
            let logits = self.out.forward(tape, h)?;
            terms.push(tape.cross_entropy(logits, id)?);
            prev = id;
        }
        tape.sum(&terms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;
    use crate::nn::INIT_SCALE;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toks(ids: &[u16]) -> Vec<Token> {
        ids.iter().map(|&i| Token(i)).collect()
    }

    #[test]
    fn zero_weights_encode_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for kind in [EncoderKind::Mean, EncoderKind::Gru] {
            let mut store = ParamStore::new();
            let enc = SequenceEncoder::new(&mut store, "e", kind, 10, 4, 6, Init::Zeros, &mut rng);
            let mut tape = Tape::new(store.params());
            let h = enc.forward(&mut tape, &toks(&[3])).unwrap();
            assert_eq!(tape.value(h), &[0.0; 6]);
        }
    }

    #[test]
    fn encoding_is_fixed_width_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in [EncoderKind::Mean, EncoderKind::Gru] {
            let mut store = ParamStore::new();
            let enc = SequenceEncoder::new(&mut store, "e", kind, 10, 4, 6, Init::Uniform(0.5), &mut rng);
            let mut tape = Tape::new(store.params());
            let a = enc.forward(&mut tape, &toks(&[3, 4, 5])).unwrap();
            let b = enc.forward(&mut tape, &toks(&[3, 4, 5])).unwrap();
            let c = enc.forward(&mut tape, &toks(&[9])).unwrap();
            assert_eq!(tape.value(a), tape.value(b));
            assert_eq!(tape.value(c).len(), 6);
        }
    }

    #[test]
    fn empty_and_out_of_vocab_sequences_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let enc = SequenceEncoder::new(&mut store, "e", EncoderKind::Mean, 10, 4, 6, Init::Zeros, &mut rng);
        let mut tape = Tape::new(store.params());
        assert!(matches!(enc.forward(&mut tape, &[]), Err(Error::Empty(_))));
        assert!(matches!(
            enc.forward(&mut tape, &toks(&[10])),
            Err(Error::OutOfVocab { id: 10, vocab: 10 })
        ));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", &[3, 3], Init::Zeros, &mut rng);
        let w = mlp.layers[0].w;
        for i in 0..3 {
            store.value_mut(w).data_mut()[i * 3 + i] = 1.0;
        }
        let mut tape = Tape::new(store.params());
        let x = tape.input(vec![0.5, -2.0, 7.0]);
        let y = mlp.forward(&mut tape, x).unwrap();
        assert_eq!(tape.value(y), &[0.5, -2.0, 7.0]);
    }

    #[test]
    fn zero_weights_output_the_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", &[3, 2], Init::Zeros, &mut rng);
        store
            .value_mut(mlp.layers[0].b)
            .data_mut()
            .copy_from_slice(&[1.5, -0.25]);
        let mut tape = Tape::new(store.params());
        let x = tape.input(vec![4.0, 5.0, 6.0]);
        let y = mlp.forward(&mut tape, x).unwrap();
        assert_eq!(tape.value(y), &[1.5, -0.25]);
        let bad = tape.input(vec![1.0]);
        assert!(matches!(mlp.forward(&mut tape, bad), Err(Error::Shape(_))));
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for kind in [EncoderKind::Mean, EncoderKind::Gru] {
            let mut store = ParamStore::new();
            let enc = SequenceEncoder::new(&mut store, "e", kind, 8, 3, 4, Init::Uniform(0.5), &mut rng);
            let probe = vec![0.3, -1.2, 0.7, 2.0];
            let report = gradcheck::check(
                &mut store,
                |tape| {
                    let h = enc.forward(tape, &toks(&[2, 5, 2, 7]))?;
                    let p = tape.input(probe.clone());
                    tape.dot(h, p)
                },
                12,
                &mut rng,
            )
            .unwrap();
            assert!(report.max_rel_error < 1e-4, "{kind:?}: {report:?}");
        }
    }

    #[test]
    fn fused_gru_step_matches_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "g", 3, 5, Init::Uniform(0.7), &mut rng);
        let xs = [0.4, -0.9, 1.3];
        let hs = [0.2, -0.5, 0.8, 0.0, -1.1];
        let probe = [1.0, -2.0, 0.5, 0.3, 1.5];
        let mut results = Vec::new();
        for fused in [true, false] {
            store.grads_mut().zero();
            let (params, grads) = store.split();
            let mut tape = Tape::new(params);
            let x = tape.input(xs.to_vec());
            let h = tape.input(hs.to_vec());
            let out = if fused {
                cell.step(&mut tape, x, h)
            } else {
                cell.step_unfused(&mut tape, x, h)
            }
            .unwrap();
            let out = cell.step(&mut tape, x, out).unwrap();
            let p = tape.input(probe.to_vec());
            let loss = tape.dot(out, p).unwrap();
            tape.backward(loss, grads).unwrap();
            let value = tape.value(out).to_vec();
            results.push((value, store.grads().clone()));
        }
        let (a, b) = (&results[0], &results[1]);
        for (u, v) in a.0.iter().zip(&b.0) {
            assert!((u - v).abs() < 1e-14);
        }
        for id in (0..store.params().len()).map(crate::nn::ParamId) {
            for (u, v) in a.1.get(id).data().iter().zip(b.1.get(id).data()) {
                assert!((u - v).abs() < 1e-12, "{u} vs {v}");
            }
        }
    }

    #[test]
    fn decoder_nll_with_one_word_vocab_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let dec = TokenDecoder::new(&mut store, "d", 1, 2, 3, Init::Uniform(INIT_SCALE), &mut rng);
        let mut tape = Tape::new(store.params());
        let c = tape.input(vec![0.1, 0.2, 0.3]);
        let l = dec.nll(&mut tape, c, &[Token(0)]).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
    }
}
