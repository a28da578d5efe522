use rayon::prelude::*;

use super::{Pullback, Saved};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-(sample, channel) plane normalization with affine parameters.
///
/// Uses the biased plane variance. The pullback differentiates through both
/// the plane mean and the plane variance.
pub fn instance_norm(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> Result<(Tensor, Pullback)> {
    let (n, c, h, w) = x.dims4()?;
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::config(format!(
            "instance norm eps must be > 0, got {eps}"
        )));
    }
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::config(format!(
            "instance norm affine shapes {:?}/{:?}, expected [{c}]",
            gamma.shape(),
            beta.shape()
        )));
    }
    x.check_finite("instance norm input")?;

    let m = h * w;
    let mut normalized = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; n * c];
    normalized
        .par_chunks_mut(m)
        .zip(inv_std.par_iter_mut())
        .zip(x.data().par_chunks(m))
        .for_each(|((xhat, r), plane)| {
            let mean = plane.iter().sum::<f64>() / m as f64;
            let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            *r = 1.0 / (var + eps).sqrt();
            for (d, v) in xhat.iter_mut().zip(plane) {
                *d = (v - mean) * *r;
            }
        });

    let (gs, bs) = (gamma.data(), beta.data());
    let y: Vec<f64> = normalized
        .chunks(m)
        .enumerate()
        .flat_map(|(kc, xhat)| {
            let ch = kc % c;
            xhat.iter().map(move |v| gs[ch] * v + bs[ch])
        })
        .collect();
    let shape = vec![n, c, h, w];
    let pb = Pullback::new(
        Saved::InstanceNorm {
            normalized: Tensor::from_raw(shape.clone(), normalized),
            inv_std,
            gamma: gamma.clone(),
        },
        shape.clone(),
    );
    Ok((Tensor::from_raw(shape, y), pb))
}

/// `gx = r * (gh - mean(gh) - xhat * mean(gh * xhat))` with `gh = gamma * g`.
pub(super) fn pullback(g: &Tensor, normalized: &Tensor, inv_std: &[f64], gamma: &Tensor) -> Tensor {
    let c = gamma.len();
    let m = g.shape()[2] * g.shape()[3];
    let mut out = vec![0.0; g.len()];
    out.par_chunks_mut(m)
        .zip(g.data().par_chunks(m))
        .zip(normalized.data().par_chunks(m))
        .enumerate()
        .for_each(|(kc, ((gx, gy), xhat))| {
            let gam = gamma.data()[kc % c];
            let r = inv_std[kc];
            let mean_g = gam * gy.iter().sum::<f64>() / m as f64;
            let mean_gx = gam * gy.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / m as f64;
            for ((d, gv), xv) in gx.iter_mut().zip(gy).zip(xhat) {
                *d = r * (gam * gv - mean_g - xv * mean_gx);
            }
        });
    Tensor::from_raw(g.shape().to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_plane_maps_to_beta() {
        let x = Tensor::full(&[1, 1, 3, 3], 5.0);
        let (y, _) =
            instance_norm(&x, &Tensor::ones(&[1]), &Tensor::full(&[1], 0.3), 1e-5).unwrap();
        for v in y.data() {
            assert!((v - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_variance_pair_is_unchanged() {
        let x = Tensor::new(vec![1, 1, 1, 2], vec![-1.0, 1.0]).unwrap();
        let (y, _) = instance_norm(&x, &Tensor::ones(&[1]), &Tensor::zeros(&[1]), 1e-12).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-9);
        assert!((y.data()[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn planes_are_normalized_independently() {
        let x = Tensor::new(vec![2, 1, 1, 2], vec![0.0, 2.0, 10.0, 30.0]).unwrap();
        let (y, _) = instance_norm(&x, &Tensor::ones(&[1]), &Tensor::zeros(&[1]), 1e-12).unwrap();
        for v in y.data() {
            assert!((v.abs() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_nonpositive_eps() {
        let x = Tensor::zeros(&[1, 1, 2, 2]);
        let (g, b) = (Tensor::ones(&[1]), Tensor::zeros(&[1]));
        assert!(matches!(
            instance_norm(&x, &g, &b, 0.0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            instance_norm(&x, &g, &b, -1.0),
            Err(Error::Config(_))
        ));
    }
}
