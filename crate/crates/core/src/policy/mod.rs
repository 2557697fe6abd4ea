//! Fixed-context autoregressive policy: the `K` most recent tokens are
//! embedded, concatenated, passed through one tanh layer and projected to
//! next-token logits. Gradients are derived by hand.

mod adam;
mod checkpoint;
mod forward;

pub use adam::{apply_update, apply_update_in_place, OptimizerState};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use forward::{Decoding, GradAccumulator, Prepared, Sampled};

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::scalar::Scalar;
use crate::vocab::{Token, TokenSequence, Vocabulary};

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Role {
    Interpreter,
    Reasoner,
}

impl Role {
    pub fn tag(self) -> u8 {
        match self {
            Role::Interpreter => 0,
            Role::Reasoner => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Role> {
        match tag {
            0 => Some(Role::Interpreter),
            1 => Some(Role::Reasoner),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Interpreter => "interpreter",
            Role::Reasoner => "reasoner",
        })
    }
}

/// Context window, embedding width, hidden width, vocabulary size.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Dims {
    pub context: usize,
    pub embed: usize,
    pub hidden: usize,
    pub vocab: usize,
}

impl Dims {
    fn block_lens(&self) -> [usize; 5] {
        let Dims {
            context: k,
            embed: d,
            hidden: h,
            vocab: v,
        } = *self;
        [v * d, k * d * h, h, h * v, v]
    }
}

pub const BLOCK_NAMES: [&str; 5] = ["embedding", "hidden_w", "hidden_b", "output_w", "output_b"];

/// The five parameter arrays, row-major:
/// embedding `V×d`, hidden weights `(K·d)×H`, hidden bias `H`,
/// output weights `H×V`, output bias `V`.
#[derive(Clone, PartialEq, Debug)]
pub struct Blocks<T> {
    pub embedding: Vec<T>,
    pub hidden_w: Vec<T>,
    pub hidden_b: Vec<T>,
    pub output_w: Vec<T>,
    pub output_b: Vec<T>,
}

impl<T: Scalar> Blocks<T> {
    pub fn zeros(dims: Dims) -> Self {
        let [a, b, c, d, e] = dims.block_lens();
        Blocks {
            embedding: vec![T::zero(); a],
            hidden_w: vec![T::zero(); b],
            hidden_b: vec![T::zero(); c],
            output_w: vec![T::zero(); d],
            output_b: vec![T::zero(); e],
        }
    }

    pub fn blocks(&self) -> [&[T]; 5] {
        [
            &self.embedding,
            &self.hidden_w,
            &self.hidden_b,
            &self.output_w,
            &self.output_b,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<T>; 5] {
        [
            &mut self.embedding,
            &mut self.hidden_w,
            &mut self.hidden_b,
            &mut self.output_w,
            &mut self.output_b,
        ]
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.embedding
            .iter()
            .chain(&self.hidden_w)
            .chain(&self.hidden_b)
            .chain(&self.output_w)
            .chain(&self.output_b)
    }

    /// Flat coordinate access across blocks in declaration order.
    pub fn get_mut(&mut self, mut i: usize) -> &mut T {
        for b in self.blocks_mut() {
            if i < b.len() {
                return &mut b[i];
            }
            i -= b.len();
        }
        panic!("coordinate out of range")
    }

    pub fn get(&self, mut i: usize) -> T {
        for b in self.blocks() {
            if i < b.len() {
                return b[i];
            }
            i -= b.len();
        }
        panic!("coordinate out of range")
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.blocks()
            .iter()
            .zip(other.blocks())
            .all(|(a, b)| a.len() == b.len())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for b in self.blocks_mut() {
            for x in b.iter_mut() {
                *x *= s;
            }
        }
    }

    pub fn norm(&self) -> T {
        self.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.iter().all(|x| x.is_zero())
    }
}

/// Gradient with the same shape as the parameters.
#[derive(Clone, PartialEq, Debug)]
pub struct Gradient<T> {
    pub dims: Dims,
    pub blocks: Blocks<T>,
}

impl<T: Scalar> Gradient<T> {
    pub fn zeros(dims: Dims) -> Self {
        Gradient {
            dims,
            blocks: Blocks::zeros(dims),
        }
    }

    pub fn norm(&self) -> T {
        self.blocks.norm()
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.is_zero()
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct PolicyParameters<T> {
    role: Role,
    dims: Dims,
    vocab_hash: [u8; 32],
    pad: Token,
    eos: Token,
    pub blocks: Blocks<T>,
}

impl<T: Scalar> PolicyParameters<T> {
    /// Uniform init scaled by `1/sqrt(fan_in)`; biases zero.
    pub fn init(
        vocab: &Vocabulary,
        context: usize,
        embed: usize,
        hidden: usize,
        seed: u64,
        role: Role,
    ) -> Result<Self> {
        if context == 0 || embed == 0 || hidden == 0 {
            return Err(Error::Argument(format!(
                "policy dimensions must be positive (K={context}, d={embed}, H={hidden})"
            )));
        }
        let dims = Dims {
            context,
            embed,
            hidden,
            vocab: vocab.len(),
        };
        let mut blocks = Blocks::zeros(dims);
        let mut rng = rng_for(seed, &[u64::from(role.tag())]);
        let fill = |b: &mut Vec<T>, fan_in: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for x in b.iter_mut() {
                *x = T::from_f64_lossy(rng.gen_range(-bound..bound));
            }
        };
        fill(&mut blocks.embedding, 1, &mut rng);
        fill(&mut blocks.hidden_w, context * embed, &mut rng);
        fill(&mut blocks.output_w, hidden, &mut rng);
        Ok(PolicyParameters {
            role,
            dims,
            vocab_hash: vocab.content_hash(),
            pad: vocab.pad(),
            eos: vocab.eos(),
            blocks,
        })
    }

    pub(crate) fn from_parts(
        role: Role,
        dims: Dims,
        vocab: &Vocabulary,
        blocks: Blocks<T>,
    ) -> Result<Self> {
        if dims.vocab != vocab.len() {
            return Err(Error::Checkpoint(format!(
                "V={} but vocabulary has {}",
                dims.vocab,
                vocab.len()
            )));
        }
        let expect = Blocks::<T>::zeros(dims);
        if !expect.same_shape(&blocks) {
            return Err(Error::Checkpoint(
                "parameter arrays do not match dims".into(),
            ));
        }
        Ok(PolicyParameters {
            role,
            dims,
            vocab_hash: vocab.content_hash(),
            pad: vocab.pad(),
            eos: vocab.eos(),
            blocks,
        })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn vocab_hash(&self) -> [u8; 32] {
        self.vocab_hash
    }

    pub fn eos(&self) -> Token {
        self.eos
    }

    pub fn pad(&self) -> Token {
        self.pad
    }

    pub fn num_params(&self) -> usize {
        self.blocks.len()
    }

    /// Precomputes per-position projection tables for fast evaluation.
    pub fn prepare(&self) -> Prepared<'_, T> {
        Prepared::new(self)
    }

    /// Log-probability of `output` after `prompt`: `(total, per_token)`.
    pub fn logprob(&self, prompt: &[Token], output: &[Token]) -> Result<(T, Vec<T>)> {
        self.prepare().logprob(prompt, output)
    }

    pub fn sample(
        &self,
        prompt: &[Token],
        decoding: Decoding,
        max_len: usize,
    ) -> Result<Sampled<T>> {
        self.prepare().sample(prompt, decoding, max_len)
    }

    /// `Σ_t weights[t] · ∇ log π(output[t] | context_t)`.
    pub fn weighted_logprob_grad(
        &self,
        prompt: &[Token],
        output: &[Token],
        weights: &[T],
    ) -> Result<Gradient<T>> {
        let prep = self.prepare();
        let mut acc = GradAccumulator::new(&prep);
        acc.add(prompt, output, weights)?;
        Ok(acc.finish())
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> PolicyParameters<U> {
        let c = |b: &[T]| {
            b.iter()
                .map(|x| U::from_f64_lossy(x.to_f64_lossy()))
                .collect::<Vec<U>>()
        };
        PolicyParameters {
            role: self.role,
            dims: self.dims,
            vocab_hash: self.vocab_hash,
            pad: self.pad,
            eos: self.eos,
            blocks: Blocks {
                embedding: c(&self.blocks.embedding),
                hidden_w: c(&self.blocks.hidden_w),
                hidden_b: c(&self.blocks.hidden_b),
                output_w: c(&self.blocks.output_w),
                output_b: c(&self.blocks.output_b),
            },
        }
    }

    pub(crate) fn check_tokens(&self, seq: &[Token]) -> Result<()> {
        match seq.iter().find(|t| t.index() >= self.dims.vocab) {
            Some(t) => Err(Error::TokenOutOfRange(t.index(), self.dims.vocab)),
            None => Ok(()),
        }
    }
}

/// Appends EOS when missing.
pub fn with_eos(mut seq: TokenSequence, eos: Token) -> TokenSequence {
    if seq.last() != Some(&eos) {
        seq.push(eos);
    }
    seq
}
