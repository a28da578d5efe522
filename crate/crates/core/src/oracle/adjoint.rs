//! Dot-product tests `<J v, g> == <v, pullback(g)>` for each primitive.
//!
//! For the linear and positively homogeneous primitives `J v` is the
//! primitive itself evaluated at `v` (bias removed). Instance norm is
//! neither, so its tangent map is derived here from the raw input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::ops::{self, ConvSpec, Primitive};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointCase {
    pub primitive: Primitive,
    pub shape: [usize; 4],
    /// `<J v, g>`.
    pub forward_side: f64,
    /// `<v, pullback(g)>`.
    pub reverse_side: f64,
}

impl AdjointCase {
    pub fn rel_err(&self) -> f64 {
        let scale = self.forward_side.abs().max(self.reverse_side.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.forward_side - self.reverse_side).abs() / scale
        }
    }
}

pub const PRIMITIVES: [Primitive; 5] = [
    Primitive::Conv2d,
    Primitive::TransposedConv2d,
    Primitive::InstanceNorm,
    Primitive::LeakyRelu,
    Primitive::ConcatChannels,
];

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_raw(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
}

/// Draws a random shape and operands for `primitive` and evaluates both
/// sides of the adjoint identity.
pub fn random_case(primitive: Primitive, seed: u64) -> Result<AdjointCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=3);
    let c = rng.random_range(1..=4);
    let h = rng.random_range(2..=9);
    let w = rng.random_range(2..=9);
    let shape = [n, c, h, w];
    let x = random(&mut rng, &shape);

    let (forward_side, reverse_side) = match primitive {
        Primitive::Conv2d => {
            let k = rng.random_range(1..=3).min(h).min(w);
            let spec = ConvSpec {
                in_channels: c,
                out_channels: rng.random_range(1..=4),
                kernel: (k, k),
                stride: (rng.random_range(1..=2), rng.random_range(1..=2)),
                padding: (rng.random_range(0..=k / 2 + 1), rng.random_range(0..=k / 2)),
            };
            let wt = random(&mut rng, &spec.weight_shape());
            let zero = Tensor::zeros(&[spec.out_channels]);
            let (y, pb) = ops::conv2d(&x, &wt, &zero, &spec)?;
            let g = random(&mut rng, y.shape());
            (y.dot(&g)?, x.dot(&pb.apply_unary(&g)?)?)
        }
        Primitive::TransposedConv2d => {
            let s = rng.random_range(1..=3);
            let cout = rng.random_range(1..=4);
            let wt = random(&mut rng, &[c, cout, s, s]);
            let (y, pb) = ops::transposed_conv2d(&x, &wt, &Tensor::zeros(&[cout]), (s, s))?;
            let g = random(&mut rng, y.shape());
            (y.dot(&g)?, x.dot(&pb.apply_unary(&g)?)?)
        }
        Primitive::InstanceNorm => {
            let gamma = random(&mut rng, &[c]);
            let beta = random(&mut rng, &[c]);
            let eps = 1e-5;
            let v = random(&mut rng, &shape);
            let (y, pb) = ops::instance_norm(&x, &gamma, &beta, eps)?;
            let g = random(&mut rng, y.shape());
            let jv = instance_norm_tangent(&x, &v, &gamma, eps);
            (jv.dot(&g)?, v.dot(&pb.apply_unary(&g)?)?)
        }
        Primitive::LeakyRelu => {
            let slope = rng.random_range(0.0..1.0);
            let (y, pb) = ops::leaky_relu(&x, slope)?;
            let g = random(&mut rng, y.shape());
            (y.dot(&g)?, x.dot(&pb.apply_unary(&g)?)?)
        }
        Primitive::ConcatChannels => {
            let cb = rng.random_range(1..=4);
            let b = random(&mut rng, &[n, cb, h, w]);
            let (y, pb) = ops::concat_channels(&x, &b)?;
            let g = random(&mut rng, y.shape());
            let parts = pb.apply(&g)?;
            (y.dot(&g)?, x.dot(&parts[0])? + b.dot(&parts[1])?)
        }
    };
    Ok(AdjointCase {
        primitive,
        shape,
        forward_side,
        reverse_side,
    })
}

/// Directional derivative of instance norm at `x` along `v`:
/// `gamma * r * (v_c - xc * r^2 * mean(xc * v_c))` with centered `xc`, `v_c`.
pub fn instance_norm_tangent(x: &Tensor, v: &Tensor, gamma: &Tensor, eps: f64) -> Tensor {
    let (_, c, h, w) = x.dims4().expect("rank 4");
    let m = h * w;
    let mut out = Vec::with_capacity(x.len());
    for (kc, (xp, vp)) in x.data().chunks(m).zip(v.data().chunks(m)).enumerate() {
        let mx = xp.iter().sum::<f64>() / m as f64;
        let mv = vp.iter().sum::<f64>() / m as f64;
        let xc: Vec<f64> = xp.iter().map(|a| a - mx).collect();
        let vc: Vec<f64> = vp.iter().map(|a| a - mv).collect();
        let var = xc.iter().map(|a| a * a).sum::<f64>() / m as f64;
        let r = 1.0 / (var + eps).sqrt();
        let cov = xc.iter().zip(&vc).map(|(a, b)| a * b).sum::<f64>() / m as f64;
        let gam = gamma.data()[kc % c];
        out.extend(
            xc.iter()
                .zip(&vc)
                .map(|(a, b)| gam * r * (b - a * r * r * cov)),
        );
    }
    Tensor::from_raw(x.shape().to_vec(), out)
}
