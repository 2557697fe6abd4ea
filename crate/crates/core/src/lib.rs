//! Decoupled interpreter/reasoner training on procedurally generated
//! geometry problems.
//!
//! An *interpreter* policy reads a scene channel (drawing commands, possibly
//! with the question drawn in) and writes a textual description; a *reasoner*
//! policy reads the description with the question and choices and writes a
//! derivation ending in `answer (X)`. Training runs in three stages:
//! supervised fine-tuning of both, then group-relative policy optimization of
//! the interpreter against the frozen reasoner, then of the reasoner against
//! the frozen interpreter.

pub mod config;
pub mod error;
pub mod geo;
pub mod gradcheck;
pub mod grpo;
pub mod pipeline;
pub mod policy;
pub mod prompt;
pub mod reward;
pub mod rng;
pub mod scalar;
pub mod sft;
pub mod trainlog;
pub mod vocab;
pub mod workflow;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use vocab::{Token, TokenSequence, Vocabulary};

/// Policy parameters at training precision.
pub type Policy = policy::PolicyParameters<f64>;
pub type Gradient = policy::Gradient<f64>;
pub type OptimizerState = policy::OptimizerState<f64>;
pub type RolloutGroup = grpo::RolloutGroup<f64>;

/// Single-precision variants, for inference experiments.
pub type Policy32 = policy::PolicyParameters<f32>;
pub type Gradient32 = policy::Gradient<f32>;
