//! Independent reference machinery used to check the engine and detector.
//!
//! Nothing here shares a code path with what it checks: gradients come from
//! forward passes only, split search re-sums every candidate from scratch,
//! and adjoint checks use separately derived tangent maps.

pub mod adjoint;
mod finite_diff;
mod split;
mod synthetic;

pub use finite_diff::{
    finite_diff_gradient, gradient_check, GradCheck, GradSample, KINK_TOLERANCE,
};
pub use split::brute_force_split;
pub use synthetic::{generate_curve, SyntheticCurveSpec};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::Tensor;

/// Standard-normal input batch, the distribution z-scored images approximate.
pub fn random_input(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let data = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    Tensor::new(shape.to_vec(), data).expect("finite normal draws")
}
