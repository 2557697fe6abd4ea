//! Floating-point scalar abstraction for the policy math.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// A real scalar usable for policy parameters, gradients and objectives.
///
/// Implemented for `f32` and `f64`. Training defaults to `f64`; checkpoints
/// always store 64-bit values regardless of the in-memory scalar.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Default + Debug + Display + Send + Sync + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
