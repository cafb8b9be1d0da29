// SPDX-License-Identifier: MIT OR Apache-2.0

//! Floating point scalar abstraction.
//!
//! Models, training and evaluation are generic over [`Scalar`] so the same
//! code runs in `f32` (the storage and training precision) and `f64` (used
//! for gradient checks and reference computations).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// On-disk element type of a stored tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    const DTYPE: Dtype;

    /// Converts an `f64` literal. Never fails for the implementing types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to every Scalar")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::lit(n as f64)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    #[inline]
    fn from_f32_exact(x: f32) -> Self {
        Self::lit(f64::from(x))
    }
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;
}
