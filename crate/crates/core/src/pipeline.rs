//! Interpreter → reasoner composition, the two RL stage drivers and the
//! five-variant evaluation harness.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::config::TrainingConfig;
use crate::error::{Error, Result};
use crate::geo::{ChoiceLabel, CorpusRecord, PipelineInput, Variant};
use crate::grpo::{grpo_step, RolloutGroup};
use crate::policy::{Decoding, OptimizerState, PolicyParameters, Prepared};
use crate::prompt::{assemble_reasoner_prompt, read_interpretation};
use crate::reward::{outcome_reward, OutcomeReward};
use crate::rng::{derive_seed, rng_for};
use crate::scalar::Scalar;
use crate::trainlog::TrainLog;
use crate::vocab::{Token, TokenSequence, Vocabulary};

/// Output length caps for the two policies.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Limits {
    pub interpreter: usize,
    pub reasoner: usize,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PipelineOutput {
    /// Raw interpreter output.
    pub description: TokenSequence,
    /// What the reasoner was given.
    pub reasoner_prompt: TokenSequence,
    pub response: TokenSequence,
    pub extracted: Option<ChoiceLabel>,
    /// Present when a ground truth was supplied.
    pub reward: Option<OutcomeReward>,
    pub truncated: bool,
}

fn split_decoding(decoding: Decoding) -> (Decoding, Decoding) {
    match decoding {
        Decoding::Greedy => (Decoding::Greedy, Decoding::Greedy),
        Decoding::Sample { temperature, seed } => (
            Decoding::Sample {
                temperature,
                seed: derive_seed(seed, &[1]),
            },
            Decoding::Sample {
                temperature,
                seed: derive_seed(seed, &[2]),
            },
        ),
    }
}

/// Runs the interpreter on the scene channel, assembles the reasoner prompt
/// from its reading and the text channel, and runs the reasoner.
pub fn run_pipeline<T: Scalar>(
    interpreter: &Prepared<'_, T>,
    reasoner: &Prepared<'_, T>,
    input: &PipelineInput,
    decoding: Decoding,
    limits: Limits,
    gt: Option<ChoiceLabel>,
) -> Result<PipelineOutput> {
    let vocab = Vocabulary::standard();
    let (di, dr) = split_decoding(decoding);
    let desc = interpreter.sample(&input.scene_channel, di, limits.interpreter)?;
    let prompt = assemble_reasoner_prompt(
        vocab,
        &input.text_channel,
        &read_interpretation(vocab, &desc.tokens),
    );
    let resp = reasoner.sample(&prompt, dr, limits.reasoner)?;
    let extracted = crate::reward::extract_answer(vocab, &resp.tokens);
    Ok(PipelineOutput {
        reward: gt.map(|g| outcome_reward(vocab, &resp.tokens, g)),
        extracted,
        truncated: desc.truncated || resp.truncated,
        description: desc.tokens,
        reasoner_prompt: prompt,
        response: resp.tokens,
    })
}

/// Result of one RL stage: the trained policy, its optimizer state and log.
pub struct StageOutcome<T> {
    pub params: PolicyParameters<T>,
    pub optimizer: OptimizerState<T>,
    pub log: TrainLog,
}

fn epoch_batches(n: usize, config: &TrainingConfig, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[0xba7c, epoch as u64]));
    order
        .chunks(config.batch_size)
        .map(<[usize]>::to_vec)
        .collect()
}

fn sampling(config: &TrainingConfig, seed: u64, path: &[u64]) -> Decoding {
    Decoding::Sample {
        temperature: config.temperature,
        seed: derive_seed(seed, path),
    }
}

/// Optimizes the interpreter against a frozen, greedily decoding reasoner.
/// Skipped groups are re-sampled in later epochs like any other problem.
pub fn stage2_train<T: Scalar>(
    interpreter: &PolicyParameters<T>,
    reasoner: &PolicyParameters<T>,
    problems: &[CorpusRecord],
    config: &TrainingConfig,
    limits: Limits,
    seed: u64,
    stage: &str,
) -> Result<StageOutcome<T>> {
    config.validate()?;
    let vocab = Vocabulary::standard();
    let reference = interpreter.clone();
    let ref_prep = reference.prepare();
    let reasoner_prep = reasoner.prepare();
    // The reasoner is frozen and greedy, so its answer depends only on the prompt.
    let mut answers: HashMap<TokenSequence, TokenSequence> = HashMap::new();
    let mut params = interpreter.clone();
    let mut optimizer = OptimizerState::new(params.dims(), config.learning_rate);
    let mut log = TrainLog::new();
    let mut step = 0;
    for epoch in 0..config.epochs {
        for batch in epoch_batches(problems.len(), config, seed, epoch) {
            let mut groups = Vec::with_capacity(batch.len());
            {
                let prep = params.prepare();
                for &i in &batch {
                    let rec = &problems[i];
                    let mut outputs = Vec::with_capacity(config.group_size);
                    let mut old = Vec::with_capacity(config.group_size);
                    let mut refs = Vec::with_capacity(config.group_size);
                    let mut rewards = Vec::with_capacity(config.group_size);
                    for g in 0..config.group_size {
                        let d = sampling(config, seed, &[epoch as u64, i as u64, g as u64]);
                        let s = prep.sample(&rec.input.scene_channel, d, limits.interpreter)?;
                        let prompt = assemble_reasoner_prompt(
                            vocab,
                            &rec.input.text_channel,
                            &read_interpretation(vocab, &s.tokens),
                        );
                        let response = match answers.get(&prompt) {
                            Some(r) => r.clone(),
                            None => {
                                let r = reasoner_prep
                                    .sample(&prompt, Decoding::Greedy, limits.reasoner)?
                                    .tokens;
                                answers.insert(prompt, r.clone());
                                r
                            }
                        };
                        rewards.push(T::from_f64_lossy(
                            outcome_reward(vocab, &response, rec.gt).as_f64(),
                        ));
                        refs.push(ref_prep.logprob(&rec.input.scene_channel, &s.tokens)?.1);
                        old.push(s.logprobs);
                        outputs.push(s.tokens);
                    }
                    groups.push(RolloutGroup::new(
                        i as u64,
                        rec.input.scene_channel.clone(),
                        outputs,
                        old,
                        refs,
                        rewards,
                    )?);
                }
            }
            for r in grpo_step(&mut params, &mut groups, config, &mut optimizer)? {
                log.record_grpo(stage, step, epoch, &r);
                step += 1;
            }
        }
    }
    Ok(StageOutcome {
        params,
        optimizer,
        log,
    })
}

/// Optimizes the reasoner on prompts built from a frozen interpreter's
/// greedy descriptions.
pub fn stage3_train<T: Scalar>(
    interpreter: &PolicyParameters<T>,
    reasoner: &PolicyParameters<T>,
    problems: &[CorpusRecord],
    config: &TrainingConfig,
    limits: Limits,
    seed: u64,
    stage: &str,
) -> Result<StageOutcome<T>> {
    config.validate()?;
    let vocab = Vocabulary::standard();
    let prompts: Vec<TokenSequence> = {
        let prep = interpreter.prepare();
        problems
            .iter()
            .map(|rec| {
                let d = prep.sample(
                    &rec.input.scene_channel,
                    Decoding::Greedy,
                    limits.interpreter,
                )?;
                Ok(assemble_reasoner_prompt(
                    vocab,
                    &rec.input.text_channel,
                    &read_interpretation(vocab, &d.tokens),
                ))
            })
            .collect::<Result<_>>()?
    };
    let reference = reasoner.clone();
    let ref_prep = reference.prepare();
    let mut params = reasoner.clone();
    let mut optimizer = OptimizerState::new(params.dims(), config.learning_rate);
    let mut log = TrainLog::new();
    let mut step = 0;
    for epoch in 0..config.epochs {
        for batch in epoch_batches(problems.len(), config, seed, epoch) {
            let mut groups = Vec::with_capacity(batch.len());
            {
                let prep = params.prepare();
                for &i in &batch {
                    let prompt = &prompts[i];
                    let mut outputs = Vec::with_capacity(config.group_size);
                    let mut old = Vec::with_capacity(config.group_size);
                    let mut refs = Vec::with_capacity(config.group_size);
                    let mut rewards = Vec::with_capacity(config.group_size);
                    for g in 0..config.group_size {
                        let d = sampling(config, seed, &[epoch as u64, i as u64, g as u64]);
                        let s = prep.sample(prompt, d, limits.reasoner)?;
                        rewards.push(T::from_f64_lossy(
                            outcome_reward(vocab, &s.tokens, problems[i].gt).as_f64(),
                        ));
                        refs.push(ref_prep.logprob(prompt, &s.tokens)?.1);
                        old.push(s.logprobs);
                        outputs.push(s.tokens);
                    }
                    groups.push(RolloutGroup::new(
                        i as u64,
                        prompt.clone(),
                        outputs,
                        old,
                        refs,
                        rewards,
                    )?);
                }
            }
            for r in grpo_step(&mut params, &mut groups, config, &mut optimizer)? {
                log.record_grpo(stage, step, epoch, &r);
                step += 1;
            }
        }
    }
    Ok(StageOutcome {
        params,
        optimizer,
        log,
    })
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct VariantScore {
    pub variant: Variant,
    pub correct: usize,
    pub total: usize,
}

impl VariantScore {
    /// Percentage; 0 for an empty row.
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct EvalReport {
    /// One row per variant, in canonical variant order.
    pub rows: Vec<VariantScore>,
    pub seed: u64,
    pub checkpoints: Vec<String>,
}

impl EvalReport {
    pub fn overall(&self) -> f64 {
        let (c, t) = self
            .rows
            .iter()
            .fold((0, 0), |(c, t), r| (c + r.correct, t + r.total));
        if t == 0 {
            0.0
        } else {
            100.0 * c as f64 / t as f64
        }
    }

    pub fn accuracy(&self, variant: Variant) -> f64 {
        self.rows
            .iter()
            .find(|r| r.variant == variant)
            .map_or(0.0, VariantScore::accuracy)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,correct,total,accuracy\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{:.1}\n",
                r.variant.name(),
                r.correct,
                r.total,
                r.accuracy()
            ));
        }
        s
    }
}

/// Greedy top-1 accuracy per variant.
pub fn evaluate<T: Scalar>(
    interpreter: &PolicyParameters<T>,
    reasoner: &PolicyParameters<T>,
    testset: &[CorpusRecord],
    limits: Limits,
) -> Result<EvalReport> {
    let (ip, rp) = (interpreter.prepare(), reasoner.prepare());
    evaluate_with(
        testset,
        |rec| {
            Ok(ip
                .sample(
                    &rec.input.scene_channel,
                    Decoding::Greedy,
                    limits.interpreter,
                )?
                .tokens)
        },
        |_, prompt| Ok(rp.sample(prompt, Decoding::Greedy, limits.reasoner)?.tokens),
    )
}

/// Scores arbitrary interpreter and reasoner functions with the same prompt
/// assembly and reward as [`evaluate`]. Both see the record, so stubs can
/// consult the ground truth.
pub fn evaluate_with(
    testset: &[CorpusRecord],
    mut interpret: impl FnMut(&CorpusRecord) -> Result<TokenSequence>,
    mut reason: impl FnMut(&CorpusRecord, &[Token]) -> Result<TokenSequence>,
) -> Result<EvalReport> {
    let vocab = Vocabulary::standard();
    let mut rows: Vec<VariantScore> = Variant::ALL
        .iter()
        .map(|&variant| VariantScore {
            variant,
            correct: 0,
            total: 0,
        })
        .collect();
    for rec in testset {
        let desc = interpret(rec)?;
        let prompt = assemble_reasoner_prompt(
            vocab,
            &rec.input.text_channel,
            &read_interpretation(vocab, &desc),
        );
        let response = reason(rec, &prompt)?;
        let row = &mut rows[rec.variant.index()];
        row.total += 1;
        row.correct += usize::from(outcome_reward(vocab, &response, rec.gt).value);
    }
    Ok(EvalReport {
        rows,
        seed: 0,
        checkpoints: Vec::new(),
    })
}

/// Writes the report as CSV: header plus one row per variant.
pub fn emit_report(report: &EvalReport, path: &Path) -> Result<()> {
    fs::write(path, report.to_csv()).map_err(|e| Error::io(path, e))
}
