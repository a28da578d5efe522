use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{input_gradient, InputDifferentiable};
use crate::tensor::Tensor;

/// Pre-activations closer to zero than this count as sitting on a kink.
pub const KINK_TOLERANCE: f64 = 1e-6;

fn perturbed(x: &Tensor, position: usize, delta: f64) -> Tensor {
    let mut data = x.to_vec();
    data[position] += delta;
    Tensor::from_raw(x.shape().to_vec(), data)
}

fn total_output<M: InputDifferentiable + ?Sized>(net: &M, x: &Tensor) -> Result<f64> {
    Ok(net.forward(x)?.sum())
}

/// Central differences of `f(x) = sum(net(x))` at flat input `positions`.
pub fn finite_diff_gradient<M: InputDifferentiable + ?Sized>(
    net: &M,
    x: &Tensor,
    positions: &[usize],
    step: f64,
) -> Result<Vec<(usize, f64)>> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::config(format!(
            "finite-difference step must be > 0, got {step}"
        )));
    }
    positions
        .iter()
        .map(|&p| {
            if p >= x.len() {
                return Err(Error::validation(format!(
                    "position {p} outside input of {} elements",
                    x.len()
                )));
            }
            let plus = total_output(net, &perturbed(x, p, step))?;
            let minus = total_output(net, &perturbed(x, p, -step))?;
            Ok((p, (plus - minus) / (2.0 * step)))
        })
        .collect()
}

/// True if, across `[x - h e_p, x + h e_p]`, any leaky-ReLU input changes
/// sign, or moves while within [`KINK_TOLERANCE`] of zero.
fn crosses_kink<M: InputDifferentiable + ?Sized>(
    net: &M,
    x: &Tensor,
    position: usize,
    step: f64,
) -> Result<bool> {
    let (_, plus) = net.forward_taped(&perturbed(x, position, step))?;
    let (_, minus) = net.forward_taped(&perturbed(x, position, -step))?;
    for (a, b) in plus.activation_inputs().zip(minus.activation_inputs()) {
        for (&u, &v) in a.data().iter().zip(b.data()) {
            let near_zero = u.abs() < KINK_TOLERANCE || v.abs() < KINK_TOLERANCE;
            if (u > 0.0) != (v > 0.0) || (near_zero && u != v) {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradSample {
    pub position: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub samples: Vec<GradSample>,
    /// Positions rejected because the difference stencil crossed a kink.
    pub skipped: usize,
    pub max_rel_err: f64,
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Compares the reverse-sweep input gradient with central differences at
/// up to `count` random smooth positions.
pub fn gradient_check<M: InputDifferentiable + ?Sized>(
    net: &M,
    x: &Tensor,
    count: usize,
    step: f64,
    seed: u64,
) -> Result<GradCheck> {
    let analytic = input_gradient(net, x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = index::sample(&mut rng, x.len(), x.len());

    let mut samples = Vec::with_capacity(count);
    let mut skipped = 0;
    for p in order {
        if samples.len() == count {
            break;
        }
        if crosses_kink(net, x, p, step)? {
            skipped += 1;
            continue;
        }
        let (_, numeric) = finite_diff_gradient(net, x, &[p], step)?[0];
        let a = analytic.data()[p];
        samples.push(GradSample {
            position: p,
            analytic: a,
            numeric,
            rel_err: rel_err(a, numeric),
        });
    }
    let max_rel_err = samples.iter().map(|s| s.rel_err).fold(0.0, f64::max);
    Ok(GradCheck {
        samples,
        skipped,
        max_rel_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ConvLayer, Layer, Sequential};
    use crate::ops::ConvSpec;

    fn lcg(seed: u64, n: usize) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    fn linear_net() -> Sequential {
        let a = ConvSpec::same(2, 3, 3);
        let b = ConvSpec::same(3, 1, 3).with_stride(2);
        Sequential {
            input_dims: (2, 6, 6),
            layers: vec![
                Layer::Conv(ConvLayer {
                    spec: a,
                    weight: Tensor::new(a.weight_shape().to_vec(), lcg(1, a.weight_count()))
                        .unwrap(),
                    bias: Tensor::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap(),
                }),
                Layer::Conv(ConvLayer {
                    spec: b,
                    weight: Tensor::new(b.weight_shape().to_vec(), lcg(2, b.weight_count()))
                        .unwrap(),
                    bias: Tensor::new(vec![1], vec![-0.5]).unwrap(),
                }),
            ],
        }
    }

    #[test]
    fn identity_net_has_unit_derivatives() {
        let net = Sequential::identity(3, 3);
        let x = Tensor::new(vec![1, 1, 3, 3], lcg(4, 9)).unwrap();
        for (_, d) in finite_diff_gradient(&net, &x, &[0, 4, 8], 1e-3).unwrap() {
            assert!((d - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_net_is_exact_for_any_step() {
        let net = linear_net();
        let x = Tensor::new(vec![1, 2, 6, 6], lcg(5, 72)).unwrap();
        let g = input_gradient(&net, &x).unwrap();
        let positions: Vec<usize> = (0..72).collect();
        for step in [1e-4, 1e-2, 1.0, 10.0] {
            for (p, d) in finite_diff_gradient(&net, &x, &positions, step).unwrap() {
                let a = g.data()[p];
                assert!(
                    (a - d).abs() <= 1e-9 * a.abs().max(1.0),
                    "step {step}: {a} vs {d}"
                );
            }
        }
    }

    #[test]
    fn rejects_bad_step_and_position() {
        let net = Sequential::identity(2, 2);
        let x = Tensor::zeros(&[1, 1, 2, 2]);
        assert!(finite_diff_gradient(&net, &x, &[0], 0.0).is_err());
        assert!(finite_diff_gradient(&net, &x, &[4], 1e-3).is_err());
    }

    #[test]
    fn kink_positions_are_skipped() {
        // x = 0 exactly at an activation input: every stencil touching it crosses the kink.
        let net = Sequential {
            input_dims: (1, 1, 2),
            layers: vec![Layer::LeakyRelu(0.1)],
        };
        let x = Tensor::new(vec![1, 1, 1, 2], vec![0.0, 1.0]).unwrap();
        let check = gradient_check(&net, &x, 2, 1e-4, 0).unwrap();
        assert_eq!(check.skipped, 1);
        assert_eq!(check.samples.len(), 1);
        assert_eq!(check.samples[0].position, 1);
    }
}
