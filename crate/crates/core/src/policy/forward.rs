//! Evaluation, sampling and backpropagation.
//!
//! The hidden pre-activation is `b1 + Σ_k E[c_k] · W1[k]`. [`Prepared`]
//! tabulates `E[v] · W1[k]` for every token/position pair so a forward pass
//! is `K` row additions. Backpropagation mirrors this: per-pair hidden
//! gradients are accumulated and contracted into `dE` and `dW1` once, in
//! [`GradAccumulator::finish`].

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Gradient, PolicyParameters};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vocab::{Token, TokenSequence};

#[derive(Clone, Copy, PartialEq, Debug)]
pub enum Decoding {
    Greedy,
    /// Ancestral sampling at `temperature` with a seeded stream.
    Sample {
        temperature: f64,
        seed: u64,
    },
}

/// A sampled continuation with its untempered per-token log-probabilities.
#[derive(Clone, PartialEq, Debug)]
pub struct Sampled<T> {
    /// Always ends with EOS.
    pub tokens: TokenSequence,
    pub logprobs: Vec<T>,
    /// True when `max_len` was hit and EOS was forced.
    pub truncated: bool,
}

/// Parameters plus projection tables, valid while the parameters are unchanged.
pub struct Prepared<'a, T> {
    params: &'a PolicyParameters<T>,
    table: Vec<T>,
}

struct Activations<T> {
    hidden: Vec<T>,
    logp: Vec<T>,
}

impl<'a, T: Scalar> Prepared<'a, T> {
    pub fn new(params: &'a PolicyParameters<T>) -> Self {
        let dims = params.dims;
        let (k, d, h, v) = (dims.context, dims.embed, dims.hidden, dims.vocab);
        let e = &params.blocks.embedding;
        let w1 = &params.blocks.hidden_w;
        let mut table = vec![T::zero(); v * k * h];
        for tok in 0..v {
            for pos in 0..k {
                let row = &mut table[(tok * k + pos) * h..][..h];
                for i in 0..d {
                    let ev = e[tok * d + i];
                    let wrow = &w1[(pos * d + i) * h..][..h];
                    for (r, &w) in row.iter_mut().zip(wrow) {
                        *r += ev * w;
                    }
                }
            }
        }
        Prepared { params, table }
    }

    pub fn params(&self) -> &PolicyParameters<T> {
        self.params
    }

    fn context_at(&self, seq: &[Token], pos: usize, ctx: &mut Vec<Token>) {
        let k = self.params.dims.context;
        ctx.clear();
        for j in 0..k {
            let idx = pos as isize - k as isize + j as isize;
            ctx.push(if idx < 0 {
                self.params.pad
            } else {
                seq[idx as usize]
            });
        }
    }

    fn forward(&self, ctx: &[Token], act: &mut Activations<T>) {
        let dims = self.params.dims;
        let (k, h, v) = (dims.context, dims.hidden, dims.vocab);
        let b = &self.params.blocks;
        act.hidden.clear();
        act.hidden.extend_from_slice(&b.hidden_b);
        for (pos, tok) in ctx.iter().enumerate() {
            let row = &self.table[(tok.index() * k + pos) * h..][..h];
            for (x, &r) in act.hidden.iter_mut().zip(row) {
                *x += r;
            }
        }
        for x in act.hidden.iter_mut() {
            *x = x.tanh();
        }
        act.logp.clear();
        act.logp.extend_from_slice(&b.output_b);
        for (j, &hj) in act.hidden.iter().enumerate() {
            let row = &b.output_w[j * v..][..v];
            for (l, &w) in act.logp.iter_mut().zip(row) {
                *l += hj * w;
            }
        }
        let max = act.logp.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
        let sum = act.logp.iter().fold(T::zero(), |s, &x| s + (x - max).exp());
        let lse = max + sum.ln();
        for l in act.logp.iter_mut() {
            *l -= lse;
        }
    }

    fn activations(&self) -> Activations<T> {
        let dims = self.params.dims;
        Activations {
            hidden: Vec::with_capacity(dims.hidden),
            logp: Vec::with_capacity(dims.vocab),
        }
    }

    /// Next-token log-probabilities after `seq`.
    pub fn next_logprobs(&self, seq: &[Token]) -> Result<Vec<T>> {
        self.params.check_tokens(seq)?;
        let mut ctx = Vec::new();
        self.context_at(seq, seq.len(), &mut ctx);
        let mut act = self.activations();
        self.forward(&ctx, &mut act);
        Ok(act.logp)
    }

    /// Per-token log-probabilities of `output` given `prompt`.
    pub fn logprob(&self, prompt: &[Token], output: &[Token]) -> Result<(T, Vec<T>)> {
        self.params.check_tokens(prompt)?;
        self.params.check_tokens(output)?;
        let seq: TokenSequence = prompt.iter().chain(output).copied().collect();
        let mut ctx = Vec::with_capacity(self.params.dims.context);
        let mut act = self.activations();
        let mut per = Vec::with_capacity(output.len());
        for (t, &y) in output.iter().enumerate() {
            self.context_at(&seq, prompt.len() + t, &mut ctx);
            self.forward(&ctx, &mut act);
            per.push(act.logp[y.index()]);
        }
        let total = per.iter().fold(T::zero(), |a, &b| a + b);
        Ok((total, per))
    }

    /// Autoregressive decoding. Stops at EOS; after `max_len` tokens without
    /// EOS, EOS is appended and its log-probability recorded. Recorded
    /// log-probabilities are untempered.
    pub fn sample(
        &self,
        prompt: &[Token],
        decoding: Decoding,
        max_len: usize,
    ) -> Result<Sampled<T>> {
        self.params.check_tokens(prompt)?;
        let eos = self.params.eos;
        let (temperature, mut rng) = match decoding {
            Decoding::Greedy => (0.0, None),
            Decoding::Sample { temperature, seed } => {
                if !(temperature > 0.0 && temperature.is_finite()) {
                    return Err(Error::Argument(format!(
                        "temperature must be positive, got {temperature}"
                    )));
                }
                (temperature, Some(ChaCha8Rng::seed_from_u64(seed)))
            }
        };
        let mut seq: TokenSequence = prompt.to_vec();
        let mut ctx = Vec::with_capacity(self.params.dims.context);
        let mut act = self.activations();
        let mut tokens = Vec::new();
        let mut logprobs = Vec::new();
        let mut weights: Vec<f64> = Vec::with_capacity(self.params.dims.vocab);
        loop {
            self.context_at(&seq, seq.len(), &mut ctx);
            self.forward(&ctx, &mut act);
            if tokens.len() == max_len {
                tokens.push(eos);
                logprobs.push(act.logp[eos.index()]);
                return Ok(Sampled {
                    tokens,
                    logprobs,
                    truncated: true,
                });
            }
            let next = match rng.as_mut() {
                None => argmax(&act.logp),
                Some(rng) => {
                    weights.clear();
                    let inv_t = 1.0 / temperature;
                    let max = act
                        .logp
                        .iter()
                        .fold(f64::NEG_INFINITY, |m, x| m.max(x.to_f64_lossy()));
                    weights.extend(
                        act.logp
                            .iter()
                            .map(|l| ((l.to_f64_lossy() - max) * inv_t).exp()),
                    );
                    let total: f64 = weights.iter().sum();
                    let mut u = rng.gen::<f64>() * total;
                    let mut pick = weights.len() - 1;
                    for (i, &w) in weights.iter().enumerate() {
                        if u < w {
                            pick = i;
                            break;
                        }
                        u -= w;
                    }
                    pick
                }
            };
            let tok = Token(next as u16);
            tokens.push(tok);
            logprobs.push(act.logp[next]);
            seq.push(tok);
            if tok == eos {
                return Ok(Sampled {
                    tokens,
                    logprobs,
                    truncated: false,
                });
            }
        }
    }
}

fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Accumulates `Σ w_t ∇ log π(y_t | c_t)` over many sequences.
pub struct GradAccumulator<'p, T> {
    prep: &'p Prepared<'p, T>,
    slots: Vec<T>,
    touched: Vec<bool>,
    grad: Gradient<T>,
    act: Activations<T>,
    dlogits: Vec<T>,
    dpre: Vec<T>,
    ctx: Vec<Token>,
}

impl<'p, T: Scalar> GradAccumulator<'p, T> {
    pub fn new(prep: &'p Prepared<'p, T>) -> Self {
        let dims = prep.params.dims;
        GradAccumulator {
            prep,
            slots: vec![T::zero(); dims.vocab * dims.context * dims.hidden],
            touched: vec![false; dims.vocab * dims.context],
            grad: Gradient::zeros(dims),
            act: prep.activations(),
            dlogits: vec![T::zero(); dims.vocab],
            dpre: vec![T::zero(); dims.hidden],
            ctx: Vec::with_capacity(dims.context),
        }
    }

    /// Adds one sequence and returns its total log-probability (over the
    /// tokens with nonzero weight).
    pub fn add(&mut self, prompt: &[Token], output: &[Token], weights: &[T]) -> Result<T> {
        if weights.len() != output.len() {
            return Err(Error::Argument(format!(
                "{} weights for {} output tokens",
                weights.len(),
                output.len()
            )));
        }
        let params = self.prep.params;
        params.check_tokens(prompt)?;
        params.check_tokens(output)?;
        let dims = params.dims;
        let (k, h, v) = (dims.context, dims.hidden, dims.vocab);
        let seq: TokenSequence = prompt.iter().chain(output).copied().collect();
        let b = &params.blocks;
        let mut total = T::zero();
        for (t, (&y, &w)) in output.iter().zip(weights).enumerate() {
            if w.is_zero() {
                continue;
            }
            self.prep.context_at(&seq, prompt.len() + t, &mut self.ctx);
            self.prep.forward(&self.ctx, &mut self.act);
            total += self.act.logp[y.index()];
            for (dl, &lp) in self.dlogits.iter_mut().zip(&self.act.logp) {
                *dl = -w * lp.exp();
            }
            self.dlogits[y.index()] += w;
            let g = &mut self.grad.blocks;
            for (gb, &dl) in g.output_b.iter_mut().zip(&self.dlogits) {
                *gb += dl;
            }
            for j in 0..h {
                let hj = self.act.hidden[j];
                let wrow = &b.output_w[j * v..][..v];
                let grow = &mut g.output_w[j * v..][..v];
                let mut dh = T::zero();
                for ((gw, &ww), &dl) in grow.iter_mut().zip(wrow).zip(&self.dlogits) {
                    *gw += hj * dl;
                    dh += ww * dl;
                }
                self.dpre[j] = dh * (T::one() - hj * hj);
            }
            for (gb, &dp) in g.hidden_b.iter_mut().zip(&self.dpre) {
                *gb += dp;
            }
            for (pos, tok) in self.ctx.iter().enumerate() {
                let slot = tok.index() * k + pos;
                self.touched[slot] = true;
                for (s, &dp) in self.slots[slot * h..][..h].iter_mut().zip(&self.dpre) {
                    *s += dp;
                }
            }
        }
        Ok(total)
    }

    /// Contracts the per-pair accumulators into the embedding and hidden-weight gradients.
    pub fn finish(mut self) -> Gradient<T> {
        let params = self.prep.params;
        let dims = params.dims;
        let (k, d, h) = (dims.context, dims.embed, dims.hidden);
        let e = &params.blocks.embedding;
        let w1 = &params.blocks.hidden_w;
        for (slot, _) in self.touched.iter().enumerate().filter(|(_, &t)| t) {
            let (tok, pos) = (slot / k, slot % k);
            let s = &self.slots[slot * h..][..h];
            for i in 0..d {
                let ev = e[tok * d + i];
                let wrow = &w1[(pos * d + i) * h..][..h];
                let grow = &mut self.grad.blocks.hidden_w[(pos * d + i) * h..][..h];
                let mut de = T::zero();
                for ((g, &w), &sv) in grow.iter_mut().zip(wrow).zip(s) {
                    *g += ev * sv;
                    de += w * sv;
                }
                self.grad.blocks.embedding[tok * d + i] += de;
            }
        }
        self.grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Role;
    use crate::vocab::Vocabulary;

    fn tiny() -> (Vocabulary, PolicyParameters<f64>) {
        let v = Vocabulary::new(["<pad>", "<eos>", "a", "b", "c"]).unwrap();
        let p = PolicyParameters::init(&v, 2, 3, 4, 1, Role::Interpreter).unwrap();
        (v, p)
    }

    #[test]
    fn total_is_sum_and_probabilities_in_range() {
        let (v, p) = tiny();
        let (total, per) = p
            .logprob(&v.encode("a b").unwrap(), &v.encode("c a <eos>").unwrap())
            .unwrap();
        assert_eq!(total, per.iter().sum::<f64>());
        assert!(per.iter().all(|&l| l <= 0.0 && l.exp() > 0.0));
    }

    #[test]
    fn unknown_tokens_rejected() {
        let (_, p) = tiny();
        assert!(p.logprob(&[Token(9)], &[Token(1)]).is_err());
        assert!(p
            .weighted_logprob_grad(&[], &[Token(1)], &[1.0, 2.0])
            .is_err());
    }

    #[test]
    fn sampled_logprobs_match_recomputation_bitwise() {
        let (v, p) = tiny();
        let prompt = v.encode("a").unwrap();
        for seed in 0..20 {
            let s = p
                .sample(
                    &prompt,
                    Decoding::Sample {
                        temperature: 1.7,
                        seed,
                    },
                    6,
                )
                .unwrap();
            assert_eq!(*s.tokens.last().unwrap(), v.eos());
            let (_, per) = p.logprob(&prompt, &s.tokens).unwrap();
            assert_eq!(per, s.logprobs);
        }
    }

    #[test]
    fn greedy_is_argmax_and_repeatable() {
        let (v, p) = tiny();
        let prompt = v.encode("b c").unwrap();
        let g = p.sample(&prompt, Decoding::Greedy, 5).unwrap();
        assert_eq!(g, p.sample(&prompt, Decoding::Greedy, 5).unwrap());
        let lp = p.prepare().next_logprobs(&prompt).unwrap();
        assert_eq!(g.tokens[0].index(), argmax(&lp));
    }

    #[test]
    fn zero_and_linear_weights() {
        let (v, p) = tiny();
        let (prompt, out) = (v.encode("a").unwrap(), v.encode("b c <eos>").unwrap());
        assert!(p
            .weighted_logprob_grad(&prompt, &out, &[0.0; 3])
            .unwrap()
            .is_zero());
        let full = p.weighted_logprob_grad(&prompt, &out, &[1.0; 3]).unwrap();
        let mut sum = Gradient::zeros(p.dims());
        for t in 0..3 {
            let mut w = [0.0; 3];
            w[t] = 1.0;
            sum.blocks.add_scaled(
                &p.weighted_logprob_grad(&prompt, &out, &w).unwrap().blocks,
                1.0,
            );
        }
        for (a, b) in full.blocks.iter().zip(sum.blocks.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
