//! Fixtures shared by the criterion benches.

use xtinyunet_core::{FamilyConfig, Tensor};

/// Deterministic pseudo-random values in `[-1, 1)`.
pub fn filled(shape: &[usize], seed: u64) -> Tensor {
    let n: usize = shape.iter().product();
    let mut s = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let data = (0..n)
        .map(|_| {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("finite fixture")
}

/// The desk-scale family: 64x64 single-channel input, four stages.
pub fn desk_family() -> FamilyConfig {
    FamilyConfig::for_input(1, 2, (64, 64))
}
