//! Small reverse-mode network engine over a fixed chain of layers.
//!
//! Tensors are batch-first (`NCHW` for images). Each layer caches what its
//! backward pass needs during [`Network::forward`]; [`Network::predict`] is
//! the cache-free inference path usable through a shared reference.

mod checkpoint;
mod gemm;
mod layer;
mod network;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointData, TensorEntry, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layer::LayerSpec;
pub use network::{Network, Param, RmsPropConfig};
pub use tensor::NdArray;

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;

/// Floating-point type a network can run in: `f32` for training, `f64`
/// for gradient checks.
pub trait Scalar: Float + Default + Debug + Send + Sync + Sum + std::ops::AddAssign + 'static {
    fn of(v: f64) -> Self;

    fn as_f64(self) -> f64;

    /// `C = A·B (+ C when accumulate)` on row-major storage; `a_t`/`b_t`
    /// mean the operand is stored transposed.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_t: bool,
        b: &[Self],
        b_t: bool,
        c: &mut [Self],
        accumulate: bool,
    );
}

impl Scalar for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        f64::from(self)
    }

    fn gemm(m: usize, k: usize, n: usize, a: &[f32], a_t: bool, b: &[f32], b_t: bool, c: &mut [f32], accumulate: bool) {
        let s = gemm::Strides::new(m, k, n, a_t, b_t);
        s.check(a.len(), b.len(), c.len());
        // SAFETY: slice lengths were checked against the strided extents.
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, 1.0, a.as_ptr(), s.rsa, s.csa, b.as_ptr(), s.rsb, s.csb,
                if accumulate { 1.0 } else { 0.0 }, c.as_mut_ptr(), s.rsc, s.csc,
            );
        }
    }
}

impl Scalar for f64 {
    fn of(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64], accumulate: bool) {
        let s = gemm::Strides::new(m, k, n, a_t, b_t);
        s.check(a.len(), b.len(), c.len());
        // SAFETY: slice lengths were checked against the strided extents.
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, 1.0, a.as_ptr(), s.rsa, s.csa, b.as_ptr(), s.rsb, s.csb,
                if accumulate { 1.0 } else { 0.0 }, c.as_mut_ptr(), s.rsc, s.csc,
            );
        }
    }
}
