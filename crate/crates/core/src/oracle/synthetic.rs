use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-regime test curve: a near-flat plateau, one jump, then a growing
/// tail. Ordered largest model first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCurveSpec {
    /// Points before the jump. The jump lands on index `plateau_len`.
    pub plateau_len: usize,
    /// Points from the jump onwards.
    pub tail_len: usize,
    /// Value of the first point. Keep it above the noise so scores stay nonnegative.
    pub baseline: f64,
    pub plateau_slope: f64,
    pub jump: f64,
    /// Per-step increase after the jump.
    pub growth: f64,
    /// Half-width of the uniform noise added to every point.
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticCurveSpec {
    pub fn jump_position(&self) -> usize {
        self.plateau_len
    }

    pub fn len(&self) -> usize {
        self.plateau_len + self.tail_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn generate_curve(spec: &SyntheticCurveSpec) -> Result<Vec<f64>> {
    if spec.plateau_len == 0 || spec.tail_len == 0 {
        return Err(Error::config(
            "synthetic curve needs a nonempty plateau and tail",
        ));
    }
    if spec.noise.is_nan() || spec.noise < 0.0 {
        return Err(Error::config(format!(
            "noise amplitude {} must be >= 0",
            spec.noise
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let plateau_end = spec.plateau_slope * (spec.plateau_len - 1) as f64;
    Ok((0..spec.len())
        .map(|i| {
            let clean = if i < spec.plateau_len {
                spec.plateau_slope * i as f64
            } else {
                plateau_end + spec.jump + spec.growth * (i - spec.plateau_len) as f64
            };
            let eps = if spec.noise > 0.0 {
                rng.random_range(-spec.noise..=spec.noise)
            } else {
                0.0
            };
            spec.baseline + clean + eps
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensitivity::local_variations;

    fn step(plateau_len: usize, tail_len: usize) -> SyntheticCurveSpec {
        SyntheticCurveSpec {
            plateau_len,
            tail_len,
            baseline: 0.0,
            plateau_slope: 0.0,
            jump: 1.0,
            growth: 0.0,
            noise: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn clean_step_has_one_variation() {
        let spec = step(4, 3);
        let c = generate_curve(&spec).unwrap();
        assert_eq!(c.len(), 7);
        let d = local_variations(&c).unwrap();
        let nonzero: Vec<usize> = (0..d.len()).filter(|&i| d[i] != 0.0).collect();
        assert_eq!(nonzero, [spec.jump_position() - 1]);
    }

    #[test]
    fn reproducible_per_seed() {
        let spec = SyntheticCurveSpec {
            noise: 0.05,
            seed: 11,
            ..step(5, 5)
        };
        assert_eq!(
            generate_curve(&spec).unwrap(),
            generate_curve(&spec).unwrap()
        );
        let other = SyntheticCurveSpec { seed: 12, ..spec };
        assert_ne!(
            generate_curve(&spec).unwrap(),
            generate_curve(&other).unwrap()
        );
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate_curve(&step(0, 3)).is_err());
        assert!(generate_curve(&step(3, 0)).is_err());
        assert!(generate_curve(&SyntheticCurveSpec {
            noise: -1.0,
            ..step(3, 3)
        })
        .is_err());
    }
}
