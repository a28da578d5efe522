use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{valid_range, Pullback, Saved};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Zero-padded 2D convolution parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl ConvSpec {
    /// `k x k` kernel with "same" padding at stride 1.
    pub fn same(in_channels: usize, out_channels: usize, k: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: (k, k),
            stride: (1, 1),
            padding: (k / 2, k / 2),
        }
    }

    pub fn with_stride(mut self, s: usize) -> Self {
        self.stride = (s, s);
        self
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels,
            self.kernel.0,
            self.kernel.1,
        ]
    }

    pub fn weight_count(&self) -> usize {
        self.weight_shape().iter().product()
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel.0 * self.kernel.1
    }

    /// Output spatial extent for an `h x w` input.
    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let (ph, pw) = self.padding;
        if kh == 0 || kw == 0 || sh == 0 || sw == 0 {
            return Err(Error::config(format!("degenerate conv spec {self:?}")));
        }
        if h + 2 * ph < kh || w + 2 * pw < kw {
            return Err(Error::config(format!(
                "kernel {:?} does not fit a padded {h}x{w} input",
                self.kernel
            )));
        }
        Ok(((h + 2 * ph - kh) / sh + 1, (w + 2 * pw - kw) / sw + 1))
    }
}

/// `y[k,o,i,j] = b[o] + sum_{c,u,v} w[o,c,u,v] * x_pad[k,c,i*sh+u,j*sw+v]`.
pub fn conv2d(x: &Tensor, w: &Tensor, b: &Tensor, spec: &ConvSpec) -> Result<(Tensor, Pullback)> {
    let (n, cin, h, wd) = x.dims4()?;
    if cin != spec.in_channels {
        return Err(Error::config(format!(
            "conv expects {} input channels, got {cin}",
            spec.in_channels
        )));
    }
    if w.shape() != spec.weight_shape() {
        return Err(Error::config(format!(
            "conv weight shape {:?} does not match {:?}",
            w.shape(),
            spec.weight_shape()
        )));
    }
    if b.shape() != [spec.out_channels] {
        return Err(Error::config(format!(
            "conv bias shape {:?}, expected [{}]",
            b.shape(),
            spec.out_channels
        )));
    }
    x.check_finite("conv input")?;
    w.check_finite("conv weight")?;
    b.check_finite("conv bias")?;

    let (ho, wo) = spec.output_size(h, wd)?;
    let y = forward_unchecked(x, w, b, spec, (ho, wo));
    let pb = Pullback::new(
        Saved::Conv2d {
            weight: w.clone(),
            spec: *spec,
            input_dims: [n, cin, h, wd],
        },
        vec![n, spec.out_channels, ho, wo],
    );
    Ok((y, pb))
}

fn forward_unchecked(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    spec: &ConvSpec,
    (ho, wo): (usize, usize),
) -> Tensor {
    let (n, cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let cout = spec.out_channels;
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.padding;
    let (xs, ws, bs) = (x.data(), w.data(), b.data());

    let mut out = vec![0.0; n * cout * ho * wo];
    out.par_chunks_mut(ho * wo)
        .enumerate()
        .for_each(|(ko, plane)| {
            let (k, o) = (ko / cout, ko % cout);
            plane.fill(bs[o]);
            for c in 0..cin {
                let xin = &xs[(k * cin + c) * h * wd..][..h * wd];
                let wk = &ws[(o * cin + c) * kh * kw..][..kh * kw];
                for u in 0..kh {
                    let rows = valid_range(ho, h, sh, u, ph);
                    for v in 0..kw {
                        let wv = wk[u * kw + v];
                        let cols = valid_range(wo, wd, sw, v, pw);
                        if cols.is_empty() {
                            continue;
                        }
                        for i in rows.clone() {
                            let src_row = &xin[(i * sh + u - ph) * wd..][..wd];
                            let dst = &mut plane[i * wo + cols.start..i * wo + cols.end];
                            let first = cols.start * sw + v - pw;
                            if sw == 1 {
                                let src = &src_row[first..first + dst.len()];
                                for (d, s) in dst.iter_mut().zip(src) {
                                    *d += wv * s;
                                }
                            } else {
                                for (d, s) in
                                    dst.iter_mut().zip(src_row[first..].iter().step_by(sw))
                                {
                                    *d += wv * s;
                                }
                            }
                        }
                    }
                }
            }
        });
    Tensor::from_raw(vec![n, cout, ho, wo], out)
}

/// Adjoint of the linear part: scatter each output cotangent back through the kernel.
pub(super) fn pullback(g: &Tensor, w: &Tensor, spec: &ConvSpec, input_dims: [usize; 4]) -> Tensor {
    let [n, cin, h, wd] = input_dims;
    let cout = spec.out_channels;
    let (ho, wo) = (g.shape()[2], g.shape()[3]);
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.padding;
    let (gs, ws) = (g.data(), w.data());

    let mut out = vec![0.0; n * cin * h * wd];
    out.par_chunks_mut(h * wd)
        .enumerate()
        .for_each(|(kc, plane)| {
            let (k, c) = (kc / cin, kc % cin);
            for o in 0..cout {
                let gy = &gs[(k * cout + o) * ho * wo..][..ho * wo];
                let wk = &ws[(o * cin + c) * kh * kw..][..kh * kw];
                for u in 0..kh {
                    let rows = valid_range(ho, h, sh, u, ph);
                    for v in 0..kw {
                        let wv = wk[u * kw + v];
                        let cols = valid_range(wo, wd, sw, v, pw);
                        if cols.is_empty() {
                            continue;
                        }
                        for i in rows.clone() {
                            let dst_row = &mut plane[(i * sh + u - ph) * wd..][..wd];
                            let src = &gy[i * wo + cols.start..i * wo + cols.end];
                            let first = cols.start * sw + v - pw;
                            if sw == 1 {
                                let dst = &mut dst_row[first..first + src.len()];
                                for (d, s) in dst.iter_mut().zip(src) {
                                    *d += wv * s;
                                }
                            } else {
                                for (d, s) in dst_row[first..].iter_mut().step_by(sw).zip(src) {
                                    *d += wv * s;
                                }
                            }
                        }
                    }
                }
            }
        });
    Tensor::from_raw(input_dims.to_vec(), out)
}
