//! Numerical primitives with hand-written forward and backward passes.
//!
//! Everything the network computes on lives here: a dense row-major
//! [`NdArray`], named parameters, the fixed layer set (5×5 convolution,
//! batch normalisation, (leaky) ReLU, dense), He-uniform initialisation, the
//! Nesterov momentum update and a finite-difference gradient checker.
//!
//! Kernels are generic over [`Real`] so the same code runs in `f32` for
//! training and in `f64` for gradient verification.

mod activation;
mod array;
mod batchnorm;
mod conv;
mod dense;
pub mod gradcheck;
mod init;
mod optim;
mod param;
mod probe;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;
use thiserror::Error;

pub use activation::Activation;
pub use array::NdArray;
pub use batchnorm::{
    batch_norm_backward, batch_norm_forward, BatchNormCache, BatchNormConfig, BatchNormGrads,
    Mode, RunningStats,
};
pub use conv::{
    conv2d_backward, conv2d_backward_select, conv2d_forward, conv_output_len, Conv2dCache, Conv2dGrads, KERNEL_SIZE,
    PADDING,
};
pub use dense::{dense_backward, dense_forward, DenseGrads};
pub use gradcheck::{gradient_check, GradCheckConfig, GradCheckReport, GradCheckTarget};
pub use init::he_uniform;
pub use optim::{nesterov_step, OptimizerState};
pub use param::{Param, ParamKind};
pub use probe::{kernel_probes, KernelProbe, ProbeKind};

/// Floating point scalar the kernels are generic over (`f32` or `f64`).
pub trait Real:
    Float
    + Copy
    + Send
    + Sync
    + Default
    + Debug
    + Display
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    fn lit(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn lit(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("batch too small for batch normalisation: {count} values per channel, need at least 2")]
    BatchTooSmall { count: usize },
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> KernelError {
    KernelError::Shape {
        op,
        detail: detail.into(),
    }
}

/// Dot product with eight interleaved accumulators.
///
/// The reduction tree is fixed, so the result does not depend on how the
/// compiler vectorises the loop.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s += *x * *y;
    }
    s
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy<T: Real>(y: &mut [T], alpha: T, x: &[T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f64> = (0..37).map(|i| i as f64 * 0.5 - 3.0).collect();
        let b: Vec<f64> = (0..37).map(|i| (i as f64).sin()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }
}
