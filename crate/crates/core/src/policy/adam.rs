//! Bias-corrected Adam, ascent convention.

use super::{Blocks, Dims, Gradient, PolicyParameters};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, PartialEq, Debug)]
pub struct OptimizerState<T> {
    pub m: Blocks<T>,
    pub v: Blocks<T>,
    pub step: u64,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(dims: Dims, lr: f64) -> Self {
        OptimizerState {
            m: Blocks::zeros(dims),
            v: Blocks::zeros(dims),
            step: 0,
            lr: T::from_f64_lossy(lr),
            beta1: T::from_f64_lossy(0.9),
            beta2: T::from_f64_lossy(0.999),
            eps: T::from_f64_lossy(1e-8),
        }
    }
}

/// Returns the updated parameters and state; inputs are untouched.
pub fn apply_update<T: Scalar>(
    params: &PolicyParameters<T>,
    grad: &Gradient<T>,
    state: &OptimizerState<T>,
) -> Result<(PolicyParameters<T>, OptimizerState<T>)> {
    let mut p = params.clone();
    let mut s = state.clone();
    apply_update_in_place(&mut p, grad, &mut s)?;
    Ok((p, s))
}

/// In-place form of [`apply_update`]. On error nothing is modified.
pub fn apply_update_in_place<T: Scalar>(
    params: &mut PolicyParameters<T>,
    grad: &Gradient<T>,
    state: &mut OptimizerState<T>,
) -> Result<()> {
    if grad.dims != params.dims()
        || !params.blocks.same_shape(&state.m)
        || !params.blocks.same_shape(&state.v)
    {
        return Err(Error::Argument(
            "gradient or optimizer state shape does not match parameters".into(),
        ));
    }
    if !grad.blocks.all_finite() {
        return Err(Error::Numerical(
            "non-finite gradient entry; update not applied".into(),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let one = T::one();
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = one - b1.powi(t);
    let c2 = one - b2.powi(t);
    let (lr, eps) = (state.lr, state.eps);
    let p_blocks = params.blocks.blocks_mut();
    let m_blocks = state.m.blocks_mut();
    let v_blocks = state.v.blocks_mut();
    for (((p, m), v), g) in p_blocks
        .into_iter()
        .zip(m_blocks)
        .zip(v_blocks)
        .zip(grad.blocks.blocks())
    {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + (one - b1) * gi;
            v[i] = b2 * v[i] + (one - b2) * gi * gi;
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            p[i] += lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
