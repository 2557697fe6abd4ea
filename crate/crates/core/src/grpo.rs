//! Group-relative policy optimization: normalized group advantages, the
//! `u − log u − 1` KL estimator, the clipped surrogate, its exact gradient
//! and the batched update with the all-equal-rewards skip rule.

use crate::config::{Granularity, TrainingConfig};
use crate::error::{Error, Result};
use crate::policy::{
    apply_update_in_place, GradAccumulator, Gradient, OptimizerState, PolicyParameters, Prepared,
};
use crate::scalar::Scalar;
use crate::vocab::TokenSequence;

/// Log-ratio bound applied before exponentiating in the KL estimator.
pub const KL_CLAMP: f64 = 50.0;

/// `(r − mean) / std` with the population standard deviation.
pub fn compute_advantages<T: Scalar>(rewards: &[T]) -> Result<Vec<T>> {
    if rewards.len() < 2 {
        return Err(Error::Argument(format!(
            "a group needs at least 2 rewards, got {}",
            rewards.len()
        )));
    }
    let n = T::from_usize(rewards.len()).expect("small count");
    let mean = rewards.iter().fold(T::zero(), |a, &r| a + r) / n;
    let var = rewards
        .iter()
        .fold(T::zero(), |a, &r| a + (r - mean) * (r - mean))
        / n;
    let std = var.sqrt();
    if !(std > T::zero()) {
        return Err(Error::DegenerateGroup(rewards.len()));
    }
    Ok(rewards.iter().map(|&r| (r - mean) / std).collect())
}

/// True when every reward in the group is equal.
pub fn should_skip<T: Scalar>(rewards: &[T]) -> bool {
    rewards.windows(2).all(|w| w[0] == w[1])
}

/// `u − log u − 1` with `u = exp(logp_ref − logp_current)`; also reports
/// whether the log-ratio had to be clamped.
pub fn kl_estimate_clamped<T: Scalar>(logp_current: T, logp_ref: T) -> (T, bool) {
    let bound = T::from_f64_lossy(KL_CLAMP);
    let d = logp_ref - logp_current;
    let clamped = d > bound || d < -bound;
    let d = d.max(-bound).min(bound);
    (d.exp() - d - T::one(), clamped)
}

pub fn kl_estimate<T: Scalar>(logp_current: T, logp_ref: T) -> T {
    kl_estimate_clamped(logp_current, logp_ref).0
}

/// One prompt with `G` sampled outputs and their log-probabilities under the
/// sampling (old), current and reference policies.
#[derive(Clone, PartialEq, Debug)]
pub struct RolloutGroup<T> {
    pub problem_id: u64,
    pub prompt: TokenSequence,
    pub outputs: Vec<TokenSequence>,
    pub old_logprobs: Vec<Vec<T>>,
    pub current_logprobs: Vec<Vec<T>>,
    pub ref_logprobs: Vec<Vec<T>>,
    pub rewards: Vec<T>,
    /// Absent for skipped groups.
    pub advantages: Option<Vec<T>>,
}

impl<T: Scalar> RolloutGroup<T> {
    /// Builds a group whose current policy is the sampling policy.
    pub fn new(
        problem_id: u64,
        prompt: TokenSequence,
        outputs: Vec<TokenSequence>,
        old_logprobs: Vec<Vec<T>>,
        ref_logprobs: Vec<Vec<T>>,
        rewards: Vec<T>,
    ) -> Result<Self> {
        let g = outputs.len();
        if g < 2 || old_logprobs.len() != g || ref_logprobs.len() != g || rewards.len() != g {
            return Err(Error::Argument(format!(
                "group of {g} outputs with {} old, {} reference log-prob lists and {} rewards",
                old_logprobs.len(),
                ref_logprobs.len(),
                rewards.len()
            )));
        }
        for (i, o) in outputs.iter().enumerate() {
            if o.is_empty() || old_logprobs[i].len() != o.len() || ref_logprobs[i].len() != o.len()
            {
                return Err(Error::Argument(format!(
                    "output {i}: log-prob lists not aligned with tokens"
                )));
            }
        }
        let advantages = if should_skip(&rewards) {
            None
        } else {
            Some(compute_advantages(&rewards)?)
        };
        Ok(RolloutGroup {
            problem_id,
            prompt,
            outputs,
            current_logprobs: old_logprobs.clone(),
            old_logprobs,
            ref_logprobs,
            rewards,
            advantages,
        })
    }

    pub fn is_skipped(&self) -> bool {
        self.advantages.is_none()
    }

    pub fn size(&self) -> usize {
        self.outputs.len()
    }

    /// Recomputes current log-probabilities under `policy`.
    pub fn refresh_current(&mut self, policy: &Prepared<'_, T>) -> Result<()> {
        for (o, lp) in self.outputs.iter().zip(self.current_logprobs.iter_mut()) {
            *lp = policy.logprob(&self.prompt, o)?.1;
        }
        Ok(())
    }
}

/// Diagnostics for one group or one optimizer step.
#[derive(Clone, Copy, PartialEq, Debug, Default)]
pub struct GrpoStepReport {
    pub objective: f64,
    pub mean_reward: f64,
    pub skipped: bool,
    pub groups: usize,
    pub skipped_groups: usize,
    pub mean_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    pub kl_clamped: usize,
}

/// Objective value plus, per output token, the derivative of the objective
/// with respect to that token's current log-probability.
struct Evaluated<T> {
    value: T,
    weights: Vec<Vec<T>>,
    tokens: usize,
    clipped: usize,
    kl_sum: T,
    kl_clamped: usize,
}

fn evaluate<T: Scalar>(group: &RolloutGroup<T>, config: &TrainingConfig) -> Result<Evaluated<T>> {
    let adv = group.advantages.as_ref().ok_or_else(|| {
        Error::Contract(format!(
            "group {} has no advantages (skipped)",
            group.problem_id
        ))
    })?;
    let eps = T::from_f64_lossy(config.clip_epsilon);
    let beta = T::from_f64_lossy(config.kl_beta);
    let (lo_b, hi_b) = (T::one() - eps, T::one() + eps);
    let g = T::from_usize(group.size()).expect("small count");
    let mut out = Evaluated {
        value: T::zero(),
        weights: Vec::new(),
        tokens: 0,
        clipped: 0,
        kl_sum: T::zero(),
        kl_clamped: 0,
    };
    // Unclipped branch strictly larger means the clipped constant is active.
    let surrogate = |rho: T, a: T| {
        let unclipped = rho * a;
        let clipped = rho.max(lo_b).min(hi_b) * a;
        if clipped < unclipped {
            (clipped, false)
        } else {
            (unclipped, true)
        }
    };
    for (i, &a) in adv.iter().enumerate() {
        let (lc, lo, lr) = (
            &group.current_logprobs[i],
            &group.old_logprobs[i],
            &group.ref_logprobs[i],
        );
        let n = lc.len();
        if n == 0 || lo.len() != n || lr.len() != n {
            return Err(Error::Contract(format!(
                "group {}: output {i} has misaligned log-probs",
                group.problem_id
            )));
        }
        let len = T::from_usize(n).expect("small count");
        let mut term = T::zero();
        let mut w = Vec::with_capacity(n);
        let seq = match config.granularity {
            Granularity::Token => None,
            Granularity::Sequence => {
                let diff = lc.iter().zip(lo).fold(T::zero(), |s, (&c, &o)| s + (c - o));
                let rho = diff.exp();
                let (s, active) = surrogate(rho, a);
                term += s;
                if !active {
                    out.clipped += n;
                }
                Some(if active { rho * a } else { T::zero() })
            }
        };
        for t in 0..n {
            let (kl, clamped) = kl_estimate_clamped(lc[t], lr[t]);
            out.kl_sum += kl;
            let dkl = if clamped {
                out.kl_clamped += 1;
                T::zero()
            } else {
                (lr[t] - lc[t]).exp() - T::one()
            };
            term -= beta * kl / len;
            let surr_w = match seq {
                Some(sw) => sw,
                None => {
                    let rho = (lc[t] - lo[t]).exp();
                    let (s, active) = surrogate(rho, a);
                    term += s / len;
                    if !active {
                        out.clipped += 1;
                    }
                    if active {
                        rho * a / len
                    } else {
                        T::zero()
                    }
                }
            };
            w.push((surr_w + beta * dkl / len) / g);
        }
        out.tokens += n;
        out.value += term / g;
        out.weights.push(w);
    }
    Ok(out)
}

/// Objective of one non-skipped group at its current log-probabilities.
pub fn grpo_objective<T: Scalar>(
    group: &RolloutGroup<T>,
    config: &TrainingConfig,
) -> Result<(T, GrpoStepReport)> {
    let e = evaluate(group, config)?;
    let report = GrpoStepReport {
        objective: e.value.to_f64_lossy(),
        mean_reward: mean_f64(&group.rewards),
        skipped: false,
        groups: 1,
        skipped_groups: 0,
        mean_kl: e.kl_sum.to_f64_lossy() / e.tokens as f64,
        clip_fraction: e.clipped as f64 / e.tokens as f64,
        grad_norm: 0.0,
        kl_clamped: e.kl_clamped,
    };
    Ok((e.value, report))
}

/// Per-token derivatives of the group objective with respect to the current
/// log-probabilities.
pub fn grpo_token_weights<T: Scalar>(
    group: &RolloutGroup<T>,
    config: &TrainingConfig,
) -> Result<Vec<Vec<T>>> {
    Ok(evaluate(group, config)?.weights)
}

/// Exact gradient of [`grpo_objective`] with respect to the current policy,
/// whose log-probabilities must already be in `group.current_logprobs`.
pub fn grpo_grad<T: Scalar>(
    policy: &Prepared<'_, T>,
    group: &RolloutGroup<T>,
    config: &TrainingConfig,
) -> Result<Gradient<T>> {
    let weights = grpo_token_weights(group, config)?;
    let mut acc = GradAccumulator::new(policy);
    for (o, w) in group.outputs.iter().zip(&weights) {
        acc.add(&group.prompt, o, w)?;
    }
    Ok(acc.finish())
}

fn mean_f64<T: Scalar>(xs: &[T]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().map(|x| x.to_f64_lossy()).sum::<f64>() / xs.len() as f64
}

/// Runs `config.inner_iterations` ascent steps on the batch. Skipped groups
/// are ignored entirely; the gradient is the mean over the rest. Returns one
/// report per inner iteration, or a single skip report if nothing remains.
pub fn grpo_step<T: Scalar>(
    params: &mut PolicyParameters<T>,
    groups: &mut [RolloutGroup<T>],
    config: &TrainingConfig,
    state: &mut OptimizerState<T>,
) -> Result<Vec<GrpoStepReport>> {
    let active: Vec<usize> = (0..groups.len())
        .filter(|&i| !groups[i].is_skipped())
        .collect();
    let all_rewards: Vec<T> = groups
        .iter()
        .flat_map(|g| g.rewards.iter().copied())
        .collect();
    let base = GrpoStepReport {
        mean_reward: mean_f64(&all_rewards),
        groups: groups.len(),
        skipped_groups: groups.len() - active.len(),
        ..Default::default()
    };
    if active.is_empty() {
        return Ok(vec![GrpoStepReport {
            skipped: true,
            ..base
        }]);
    }
    let scale = T::one() / T::from_usize(active.len()).expect("small count");
    let mut reports = Vec::with_capacity(config.inner_iterations);
    for _ in 0..config.inner_iterations {
        let prep = params.prepare();
        let mut acc = GradAccumulator::new(&prep);
        let (mut objective, mut kl, mut tokens, mut clipped, mut clamped) =
            (0.0, 0.0, 0usize, 0usize, 0usize);
        for &i in &active {
            let g = &mut groups[i];
            g.refresh_current(&prep)?;
            let e = evaluate(g, config)?;
            objective += e.value.to_f64_lossy();
            kl += e.kl_sum.to_f64_lossy();
            tokens += e.tokens;
            clipped += e.clipped;
            clamped += e.kl_clamped;
            for (o, w) in g.outputs.iter().zip(&e.weights) {
                let w: Vec<T> = w.iter().map(|&x| x * scale).collect();
                acc.add(&g.prompt, o, &w)?;
            }
        }
        let grad = acc.finish();
        drop(prep);
        let grad_norm = grad.norm().to_f64_lossy();
        apply_update_in_place(params, &grad, state)?;
        reports.push(GrpoStepReport {
            objective: objective / active.len() as f64,
            mean_kl: kl / tokens as f64,
            clip_fraction: clipped as f64 / tokens as f64,
            grad_norm,
            kl_clamped: clamped,
            ..base
        });
    }
    Ok(reports)
}
