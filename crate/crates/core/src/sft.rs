//! Supervised fine-tuning of both policies on the generated corpus.

use rand::seq::SliceRandom;

use crate::config::{DataConfig, ExperimentConfig, TrainingConfig};
use crate::error::{Error, Result};
use crate::geo::{build_splits, CorpusRecord, Variant};
use crate::policy::{
    apply_update_in_place, GradAccumulator, Gradient, OptimizerState, PolicyParameters,
};
use crate::prompt::{interpreter_target, reasoner_prompt, reasoner_target, split_text_channel};
use crate::rng::rng_for;
use crate::scalar::Scalar;
use crate::trainlog::TrainLog;
use crate::vocab::{TokenSequence, Vocabulary};

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SftExample {
    pub prompt: TokenSequence,
    /// Non-empty and EOS-terminated.
    pub target: TokenSequence,
}

impl SftExample {
    pub fn new(vocab: &Vocabulary, prompt: TokenSequence, target: TokenSequence) -> Result<Self> {
        vocab.check(&prompt)?;
        vocab.check(&target)?;
        if target.last() != Some(&vocab.eos()) {
            return Err(Error::Argument("SFT target must end with EOS".into()));
        }
        Ok(SftExample { prompt, target })
    }
}

/// How much of the problem text an interpreter training scene carries.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SceneLayout {
    /// Question and choices drawn in.
    VisionOnly,
    /// Question drawn in, choices left to the text channel.
    QuestionOnly,
    /// Drawing alone.
    Plain,
}

impl SceneLayout {
    /// Layout of training problem `index`: question-only every
    /// `question_only_every` problems, plain every `plain_every` (offset by
    /// one), vision-only otherwise. Zero disables either.
    pub fn for_index(index: usize, question_only_every: usize, plain_every: usize) -> SceneLayout {
        if question_only_every > 0 && index.is_multiple_of(question_only_every) {
            SceneLayout::QuestionOnly
        } else if plain_every > 0 && index % plain_every == 1 % plain_every {
            SceneLayout::Plain
        } else {
            SceneLayout::VisionOnly
        }
    }
}

/// The record's scene drawn in `layout`; the target reads any drawn text
/// back, then gives the refined description.
pub fn interpreter_example(record: &CorpusRecord, layout: SceneLayout) -> SftExample {
    let v = Vocabulary::standard();
    let (style, embedded) = match layout {
        SceneLayout::VisionOnly => (
            Variant::VisionOnly,
            Some([record.question(), record.choice_tokens()].concat()),
        ),
        SceneLayout::QuestionOnly => (Variant::VisionDominant, Some(record.question())),
        SceneLayout::Plain => (Variant::TextLite, None),
    };
    let prompt = record.scene_as(style).expect("corpus scenes decode");
    SftExample {
        prompt,
        target: interpreter_target(v, embedded.as_deref(), &record.description),
    }
}

/// Refined description, question and choices in; steps and answer out.
pub fn reasoner_example(record: &CorpusRecord) -> SftExample {
    let v = Vocabulary::standard();
    let statements = record
        .statements()
        .expect("corpus descriptions are well formed");
    let text = split_text_channel(v, &record.input.text_channel);
    let question = if text.question.is_empty() {
        record.question()
    } else {
        text.question
    };
    SftExample {
        prompt: reasoner_prompt(v, &statements, &question, &record.choice_tokens()),
        target: reasoner_target(v, &record.steps, record.gt),
    }
}

/// Interpreter scenes are laid out by [`SceneLayout::for_index`].
pub fn datasets_from_records(
    records: &[CorpusRecord],
    data: &DataConfig,
) -> (Vec<SftExample>, Vec<SftExample>) {
    let interp = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            interpreter_example(
                r,
                SceneLayout::for_index(i, data.question_only_every, data.plain_every),
            )
        })
        .collect();
    (interp, records.iter().map(reasoner_example).collect())
}

/// One interpreter and one reasoner example per generated problem.
pub fn build_sft_datasets(
    n_problems: usize,
    seed: u64,
) -> Result<(Vec<SftExample>, Vec<SftExample>)> {
    if n_problems == 0 {
        return Err(Error::Argument("need at least one problem".into()));
    }
    let (train, _) = build_splits(seed, n_problems, 0, 1, 3)?;
    Ok(datasets_from_records(&train, &ExperimentConfig::toy().data))
}

/// Mean per-token negative log-likelihood over the batch and its gradient.
pub fn sft_loss_and_grad<T: Scalar>(
    params: &PolicyParameters<T>,
    batch: &[&SftExample],
) -> Result<(T, Gradient<T>)> {
    let tokens: usize = batch.iter().map(|e| e.target.len()).sum();
    if tokens == 0 {
        return Err(Error::Argument("empty SFT batch".into()));
    }
    let w = -T::one() / T::from_usize(tokens).expect("small count");
    let prep = params.prepare();
    let mut acc = GradAccumulator::new(&prep);
    let mut loss = T::zero();
    let mut weights = Vec::new();
    for e in batch {
        weights.clear();
        weights.resize(e.target.len(), w);
        loss += acc.add(&e.prompt, &e.target, &weights)? * w;
    }
    Ok((loss, acc.finish()))
}

pub struct SftOutcome<T> {
    pub params: PolicyParameters<T>,
    pub optimizer: OptimizerState<T>,
    /// Mean loss of every batch, in order.
    pub losses: Vec<f64>,
    pub log: TrainLog,
}

/// Minibatch Adam on the mean per-token NLL, reshuffling every epoch with a
/// stream keyed by `config.seed`.
pub fn sft_train<T: Scalar>(
    params: &PolicyParameters<T>,
    dataset: &[SftExample],
    config: &TrainingConfig,
    stage: &str,
) -> Result<SftOutcome<T>> {
    if dataset.is_empty() {
        return Err(Error::Argument("empty SFT dataset".into()));
    }
    config.validate()?;
    let mut params = params.clone();
    let mut optimizer = OptimizerState::new(params.dims(), config.learning_rate);
    let mut losses = Vec::new();
    let mut log = TrainLog::new();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng_for(config.seed, &[epoch as u64]));
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&SftExample> = chunk.iter().map(|&i| &dataset[i]).collect();
            let (loss, mut grad) = sft_loss_and_grad(&params, &batch)?;
            grad.blocks.scale(-T::one());
            apply_update_in_place(&mut params, &grad, &mut optimizer)?;
            let loss = loss.to_f64_lossy();
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "{stage}: non-finite loss at step {}",
                    losses.len()
                )));
            }
            log.record_sft(stage, losses.len(), epoch, loss);
            losses.push(loss);
        }
    }
    Ok(SftOutcome {
        params,
        optimizer,
        losses,
        log,
    })
}
