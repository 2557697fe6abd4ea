//! Central finite-difference checks of the hand-derived gradients: the SFT
//! loss and the GRPO objective (with KL) at both ratio granularities, on
//! random tiny policies.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, Granularity, TrainingConfig};
use crate::error::Result;
use crate::grpo::{grpo_grad, grpo_objective, RolloutGroup};
use crate::policy::{Decoding, Gradient, PolicyParameters, Role, BLOCK_NAMES};
use crate::rng::{derive_seed, rng_for};
use crate::sft::{sft_loss_and_grad, SftExample};
use crate::vocab::{Token, Vocabulary};

#[derive(Clone, Debug)]
pub struct GradcheckOptions {
    /// Random instances per suite.
    pub instances: usize,
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    /// Perturbs every analytic gradient before comparison; the check must fail.
    pub sabotage: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            instances: 20,
            seed: 0,
            step: 1e-5,
            tolerance: 1e-4,
            sabotage: false,
        }
    }
}

/// `|a − n| / max(|a|, |n|, floor)`. The floor keeps coordinates whose true
/// derivative is zero from dividing rounding noise by rounding noise.
pub const RELATIVE_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub suite: &'static str,
    pub instances: usize,
    /// Max relative error per parameter block, in block order.
    pub block_errors: [f64; 5],
}

impl SuiteResult {
    pub fn max_error(&self) -> f64 {
        self.block_errors.iter().fold(0.0, |m, &e| m.max(e))
    }
}

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub suites: Vec<SuiteResult>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn max_error(&self) -> f64 {
        self.suites.iter().fold(0.0, |m, s| m.max(s.max_error()))
    }

    pub fn passed(&self) -> bool {
        self.max_error() < self.tolerance
    }

    pub fn instances(&self) -> usize {
        self.suites.iter().map(|s| s.instances).sum()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.suites {
            let _ = write!(
                s,
                "suite={} instances={} max_rel_error={:.3e}",
                r.suite,
                r.instances,
                r.max_error()
            );
            for (name, e) in BLOCK_NAMES.iter().zip(r.block_errors) {
                let _ = write!(s, " {name}={e:.3e}");
            }
            s.push('\n');
        }
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let _ = writeln!(
            s,
            "{verdict} max_rel_error={:.3e} tolerance={:.1e}",
            self.max_error(),
            self.tolerance
        );
        s
    }
}

struct Instance {
    vocab: Vocabulary,
    params: PolicyParameters<f64>,
}

fn random_instance(rng: &mut ChaCha8Rng, seed: u64) -> Result<Instance> {
    let v = rng.gen_range(5..=20);
    let names: Vec<String> = ["<pad>".to_string(), "<eos>".to_string()]
        .into_iter()
        .chain((2..v).map(|i| format!("t{i}")))
        .collect();
    let vocab = Vocabulary::new(names)?;
    let (k, d, h) = (
        rng.gen_range(1..=4),
        rng.gen_range(1..=4),
        rng.gen_range(1..=8),
    );
    let mut params = PolicyParameters::init(&vocab, k, d, h, seed, Role::Reasoner)?;
    // Nonzero biases so every block is exercised.
    for b in [&mut params.blocks.hidden_b, &mut params.blocks.output_b] {
        for x in b.iter_mut() {
            *x = rng.gen_range(-0.5..0.5);
        }
    }
    Ok(Instance { vocab, params })
}

fn random_tokens(rng: &mut ChaCha8Rng, vocab: &Vocabulary, n: usize) -> Vec<Token> {
    (0..n)
        .map(|_| Token(rng.gen_range(1..vocab.len()) as u16))
        .collect()
}

fn perturbed(p: &PolicyParameters<f64>, rng: &mut ChaCha8Rng, scale: f64) -> PolicyParameters<f64> {
    let mut q = p.clone();
    for b in q.blocks.blocks_mut() {
        for x in b.iter_mut() {
            *x += rng.gen_range(-scale..scale);
        }
    }
    q
}

/// Compares `analytic` against central differences of `f` over every
/// coordinate; returns the per-block maxima.
fn compare(
    params: &PolicyParameters<f64>,
    analytic: &Gradient<f64>,
    opts: &GradcheckOptions,
    mut f: impl FnMut(&PolicyParameters<f64>) -> Result<f64>,
) -> Result<[f64; 5]> {
    let mut errors = [0.0f64; 5];
    let lens: Vec<usize> = analytic.blocks.blocks().iter().map(|b| b.len()).collect();
    let mut p = params.clone();
    let mut flat = 0;
    for (block, &len) in lens.iter().enumerate() {
        for _ in 0..len {
            let x0 = p.blocks.get(flat);
            *p.blocks.get_mut(flat) = x0 + opts.step;
            let up = f(&p)?;
            *p.blocks.get_mut(flat) = x0 - opts.step;
            let down = f(&p)?;
            *p.blocks.get_mut(flat) = x0;
            let numeric = (up - down) / (2.0 * opts.step);
            let mut a = analytic.blocks.get(flat);
            if opts.sabotage {
                a = a * 1.01 + 1e-3;
            }
            errors[block] = errors[block].max(relative_error(a, numeric));
            flat += 1;
        }
    }
    Ok(errors)
}

fn merge(into: &mut [f64; 5], from: [f64; 5]) {
    for (a, b) in into.iter_mut().zip(from) {
        *a = a.max(b);
    }
}

fn sft_suite(opts: &GradcheckOptions) -> Result<SuiteResult> {
    let mut block_errors = [0.0; 5];
    for i in 0..opts.instances {
        let seed = derive_seed(opts.seed, &[1, i as u64]);
        let mut rng = rng_for(seed, &[]);
        let inst = random_instance(&mut rng, seed)?;
        let n = rng.gen_range(1..=3);
        let examples: Vec<SftExample> = (0..n)
            .map(|_| {
                let (lp, lt) = (rng.gen_range(0..=5), rng.gen_range(0..=4));
                let mut target = random_tokens(&mut rng, &inst.vocab, lt);
                target.push(inst.vocab.eos());
                SftExample::new(
                    &inst.vocab,
                    random_tokens(&mut rng, &inst.vocab, lp),
                    target,
                )
            })
            .collect::<Result<_>>()?;
        let batch: Vec<&SftExample> = examples.iter().collect();
        let (_, grad) = sft_loss_and_grad(&inst.params, &batch)?;
        let e = compare(&inst.params, &grad, opts, |p| {
            Ok(sft_loss_and_grad(p, &batch)?.0)
        })?;
        merge(&mut block_errors, e);
    }
    Ok(SuiteResult {
        suite: "sft",
        instances: opts.instances,
        block_errors,
    })
}

fn grpo_config(granularity: Granularity) -> TrainingConfig {
    TrainingConfig {
        kl_beta: 0.1,
        granularity,
        ..ExperimentConfig::paper().stage2
    }
}

/// True when some ratio sits so close to a clip boundary that the
/// finite-difference stencil would straddle the kink.
fn near_kink(group: &RolloutGroup<f64>, cfg: &TrainingConfig) -> bool {
    let bounds = [1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon];
    let near = |rho: f64| bounds.iter().any(|b| (rho - b).abs() < 1e-3);
    (0..group.size()).any(|i| {
        let (c, o) = (&group.current_logprobs[i], &group.old_logprobs[i]);
        match cfg.granularity {
            Granularity::Token => c.iter().zip(o).any(|(a, b)| near((a - b).exp())),
            Granularity::Sequence => near((c.iter().sum::<f64>() - o.iter().sum::<f64>()).exp()),
        }
    })
}

fn grpo_suite(opts: &GradcheckOptions, granularity: Granularity) -> Result<SuiteResult> {
    let cfg = grpo_config(granularity);
    let salt = match granularity {
        Granularity::Token => 2,
        Granularity::Sequence => 3,
    };
    let mut block_errors = [0.0; 5];
    let mut done = 0;
    let mut attempt = 0u64;
    while done < opts.instances {
        attempt += 1;
        let seed = derive_seed(opts.seed, &[salt, attempt]);
        let mut rng = rng_for(seed, &[]);
        let inst = random_instance(&mut rng, seed)?;
        // Rollouts come from a nearby "old" policy so ratios differ from 1
        // and some tokens clip; the reference is another nearby policy.
        let old = perturbed(&inst.params, &mut rng, 0.15);
        let reference = perturbed(&inst.params, &mut rng, 0.3);
        let g = rng.gen_range(2..=5);
        let prompt_len = rng.gen_range(0..=4);
        let prompt = random_tokens(&mut rng, &inst.vocab, prompt_len);
        let mut outputs = Vec::new();
        let mut olds = Vec::new();
        let mut refs = Vec::new();
        for j in 0..g {
            let s = old.sample(
                &prompt,
                Decoding::Sample {
                    temperature: 1.0,
                    seed: derive_seed(seed, &[j as u64]),
                },
                5,
            )?;
            refs.push(reference.logprob(&prompt, &s.tokens)?.1);
            olds.push(s.logprobs);
            outputs.push(s.tokens);
        }
        let mut rewards: Vec<f64> = (0..g).map(|_| f64::from(rng.gen_range(0..=1u8))).collect();
        rewards[0] = 1.0;
        rewards[1] = 0.0;
        let mut group = RolloutGroup::new(attempt, prompt, outputs, olds, refs, rewards)?;
        let prep = inst.params.prepare();
        group.refresh_current(&prep)?;
        if near_kink(&group, &cfg) {
            continue;
        }
        let grad = grpo_grad(&prep, &group, &cfg)?;
        drop(prep);
        let e = compare(&inst.params, &grad, opts, |p| {
            let mut gr = group.clone();
            gr.refresh_current(&p.prepare())?;
            Ok(grpo_objective(&gr, &cfg)?.0)
        })?;
        merge(&mut block_errors, e);
        done += 1;
    }
    let suite = match granularity {
        Granularity::Token => "grpo-token",
        Granularity::Sequence => "grpo-sequence",
    };
    Ok(SuiteResult {
        suite,
        instances: opts.instances,
        block_errors,
    })
}

pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    Ok(GradcheckReport {
        suites: vec![
            sft_suite(opts)?,
            grpo_suite(opts, Granularity::Token)?,
            grpo_suite(opts, Granularity::Sequence)?,
        ],
        tolerance: opts.tolerance,
    })
}
