use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{Bound, ModelParams};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::NeuralError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerArch {
    /// Number of area tokens; also the embedding width.
    pub vocab: usize,
    pub heads: usize,
    pub layers: usize,
    /// Feed-forward hidden width.
    pub ff: usize,
    /// Maximum context length.
    pub window: usize,
}

impl Default for TransformerArch {
    fn default() -> Self {
        Self {
            vocab: 26,
            heads: 2,
            layers: 2,
            ff: 8,
            window: 5,
        }
    }
}

impl TransformerArch {
    pub fn d_model(&self) -> usize {
        self.vocab
    }

    pub fn head_dim(&self) -> usize {
        self.vocab / self.heads
    }

    /// Closed-form parameter count (8102 for the defaults).
    pub fn param_count(&self) -> usize {
        let d = self.d_model();
        let attn = 4 * (d * d + d);
        let norms = 4 * d;
        let ff = d * self.ff + self.ff + self.ff * d + d;
        d * self.vocab + self.layers * (attn + norms + ff) + d * self.vocab + self.vocab
    }
}

/// Fixed sinusoidal position encoding, `len x d`.
pub fn position_encoding(len: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; len * d];
    for pos in 0..len {
        for i in 0..d {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 / rate;
            out[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    out
}

/// Causal post-norm encoder over area tokens with a next-area head.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformerModel {
    pub arch: TransformerArch,
    pub params: ModelParams,
}

impl TransformerModel {
    pub fn new(arch: TransformerArch, seed: u64) -> Self {
        assert!(arch.heads > 0 && arch.vocab % arch.heads == 0, "heads must divide the embedding width");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = arch.d_model();
        let mut p = ModelParams::new();
        p.insert_uniform("embed", arch.vocab, d, d, &mut rng);
        for l in 0..arch.layers {
            for m in ["q", "k", "v", "o"] {
                p.insert_uniform(&format!("l{l}.w{m}"), d, d, d, &mut rng);
                p.insert_uniform(&format!("l{l}.b{m}"), 1, d, d, &mut rng);
            }
            p.insert(&format!("l{l}.ln1.gamma"), Tensor::row(vec![1.0; d]));
            p.insert(&format!("l{l}.ln1.beta"), Tensor::row(vec![0.0; d]));
            p.insert_uniform(&format!("l{l}.ff.w1"), d, arch.ff, d, &mut rng);
            p.insert_uniform(&format!("l{l}.ff.b1"), 1, arch.ff, d, &mut rng);
            p.insert_uniform(&format!("l{l}.ff.w2"), arch.ff, d, arch.ff, &mut rng);
            p.insert_uniform(&format!("l{l}.ff.b2"), 1, d, arch.ff, &mut rng);
            p.insert(&format!("l{l}.ln2.gamma"), Tensor::row(vec![1.0; d]));
            p.insert(&format!("l{l}.ln2.beta"), Tensor::row(vec![0.0; d]));
        }
        p.insert_uniform("head.w", d, arch.vocab, d, &mut rng);
        p.insert_uniform("head.b", 1, arch.vocab, d, &mut rng);
        Self { arch, params: p }
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<(), NeuralError> {
        if tokens.is_empty() {
            return Err(NeuralError::EmptySequence);
        }
        if tokens.len() > self.arch.window {
            return Err(NeuralError::Shape(format!(
                "{} tokens exceed the window of {}",
                tokens.len(),
                self.arch.window
            )));
        }
        match tokens.iter().find(|&&t| t >= self.arch.vocab) {
            Some(&t) => Err(NeuralError::BadToken(t, self.arch.vocab)),
            None => Ok(()),
        }
    }

    fn norm(tape: &mut Tape, x: Var, gamma: Var, beta: Var) -> Var {
        let n = tape.layer_norm_rows(x);
        let n = tape.mul_row(n, gamma);
        tape.add_row(n, beta)
    }

    fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Var {
        let y = tape.matmul(x, w);
        tape.add_row(y, b)
    }

    /// Records the forward pass over at most `window` tokens; returns
    /// `len x vocab` logits for the next area at each position.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, tokens: &[usize]) -> Result<Var, NeuralError> {
        self.check_tokens(tokens)?;
        let d = self.arch.d_model();
        let hd = self.arch.head_dim();
        let len = tokens.len();
        let emb = tape.gather_rows(bound.get("embed"), tokens);
        let pe = tape.constant(len, d, position_encoding(len, d));
        let mut x = tape.add(emb, pe);
        let inv_sqrt = 1.0 / (hd as f64).sqrt();
        for l in 0..self.arch.layers {
            let g = |n: &str| bound.get(&format!("l{l}.{n}"));
            let q = Self::linear(tape, x, g("wq"), g("bq"));
            let k = Self::linear(tape, x, g("wk"), g("bk"));
            let v = Self::linear(tape, x, g("wv"), g("bv"));
            let mut heads = Vec::with_capacity(self.arch.heads);
            for h in 0..self.arch.heads {
                let qh = tape.slice_cols(q, h * hd, hd);
                let kh = tape.slice_cols(k, h * hd, hd);
                let vh = tape.slice_cols(v, h * hd, hd);
                let kt = tape.transpose(kh);
                let scores = tape.matmul(qh, kt);
                let scores = tape.scale(scores, inv_sqrt);
                let attn = tape.causal_softmax(scores);
                heads.push(tape.matmul(attn, vh));
            }
            let merged = tape.concat_cols(&heads);
            let attn_out = Self::linear(tape, merged, g("wo"), g("bo"));
            let res = tape.add(x, attn_out);
            x = Self::norm(tape, res, g("ln1.gamma"), g("ln1.beta"));
            let hidden = Self::linear(tape, x, g("ff.w1"), g("ff.b1"));
            let hidden = tape.relu(hidden);
            let ff_out = Self::linear(tape, hidden, g("ff.w2"), g("ff.b2"));
            let res = tape.add(x, ff_out);
            x = Self::norm(tape, res, g("ln2.gamma"), g("ln2.beta"));
        }
        Ok(Self::linear(tape, x, bound.get("head.w"), bound.get("head.b")))
    }

    /// Logits as a plain `len x vocab` tensor.
    pub fn logits(&self, tokens: &[usize]) -> Result<Tensor, NeuralError> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let out = self.forward(&mut tape, &bound, tokens)?;
        Ok(tape.to_tensor(out))
    }

    /// Cross-entropy of each position's logits against the following token.
    /// `window` holds `len + 1` tokens.
    pub fn loss(&self, window: &[usize]) -> Result<(Tape, Bound, Var), NeuralError> {
        if window.len() < 2 {
            return Err(NeuralError::EmptySequence);
        }
        let (inputs, targets) = (&window[..window.len() - 1], &window[1..]);
        if let Some(&t) = targets.iter().find(|&&t| t >= self.arch.vocab) {
            return Err(NeuralError::BadToken(t, self.arch.vocab));
        }
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let logits = self.forward(&mut tape, &bound, inputs)?;
        let loss = tape.cross_entropy(logits, targets);
        Ok((tape, bound, loss))
    }

    /// Distribution over the next area given the visited prefix; only the
    /// last `window` tokens are used.
    pub fn next_distribution(&self, prefix: &[usize]) -> Result<Vec<f64>, NeuralError> {
        let start = prefix.len().saturating_sub(self.arch.window);
        let ctx = &prefix[start..];
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let logits = self.forward(&mut tape, &bound, ctx)?;
        let last = tape.slice_rows(logits, ctx.len() - 1, 1);
        let probs = tape.softmax_rows(last);
        Ok(tape.value(probs).to_vec())
    }

    /// Most likely next area; ties go to the lowest id.
    pub fn predict_next(&self, prefix: &[usize]) -> Result<usize, NeuralError> {
        let p = self.next_distribution(prefix)?;
        let mut best = 0;
        for (i, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_param_count() {
        let arch = TransformerArch::default();
        assert_eq!(arch.param_count(), 8102);
        assert_eq!(TransformerModel::new(arch, 3).params.count(), 8102);
        assert_eq!(TransformerArch::default().head_dim(), 13);
    }

    #[test]
    fn logits_shape() {
        let m = TransformerModel::new(TransformerArch::default(), 1);
        let t = m.logits(&[0, 4, 9, 25, 3]).unwrap();
        assert_eq!(t.dims(), (5, 26));
    }

    #[test]
    fn token_errors() {
        let m = TransformerModel::new(TransformerArch::default(), 1);
        assert!(matches!(m.logits(&[]), Err(NeuralError::EmptySequence)));
        assert!(matches!(m.logits(&[26]), Err(NeuralError::BadToken(26, 26))));
        assert!(matches!(m.logits(&[1; 6]), Err(NeuralError::Shape(_))));
    }
}
