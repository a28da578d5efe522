use rayon::prelude::*;

use super::{Pullback, Saved};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Non-overlapping transposed convolution (kernel == stride).
///
/// `y[k,o,i*sh+u,j*sw+v] = b[o] + sum_c x[k,c,i,j] * w[c,o,u,v]`
pub fn transposed_conv2d(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: (usize, usize),
) -> Result<(Tensor, Pullback)> {
    let (n, cin, h, wd) = x.dims4()?;
    let (sh, sw) = stride;
    let [wcin, cout, kh, kw] = match *w.shape() {
        [a, b, c, d] => [a, b, c, d],
        _ => {
            return Err(Error::config(format!(
                "transposed conv weight must be rank 4, got {:?}",
                w.shape()
            )))
        }
    };
    if (kh, kw) != stride {
        return Err(Error::config(format!(
            "transposed conv kernel {:?} must equal stride {stride:?}",
            (kh, kw)
        )));
    }
    if wcin != cin {
        return Err(Error::config(format!(
            "transposed conv expects {wcin} input channels, got {cin}"
        )));
    }
    if b.shape() != [cout] {
        return Err(Error::config(format!(
            "transposed conv bias shape {:?}, expected [{cout}]",
            b.shape()
        )));
    }
    x.check_finite("transposed conv input")?;
    w.check_finite("transposed conv weight")?;
    b.check_finite("transposed conv bias")?;

    let (ho, wo) = (h * sh, wd * sw);
    let (xs, ws, bs) = (x.data(), w.data(), b.data());
    let mut out = vec![0.0; n * cout * ho * wo];
    out.par_chunks_mut(ho * wo)
        .enumerate()
        .for_each(|(ko, plane)| {
            let (k, o) = (ko / cout, ko % cout);
            plane.fill(bs[o]);
            for c in 0..cin {
                let xin = &xs[(k * cin + c) * h * wd..][..h * wd];
                let wk = &ws[(c * cout + o) * kh * kw..][..kh * kw];
                for u in 0..kh {
                    for v in 0..kw {
                        let wv = wk[u * kw + v];
                        for i in 0..h {
                            let dst = &mut plane[(i * sh + u) * wo + v..];
                            for (d, s) in dst.iter_mut().step_by(sw).zip(&xin[i * wd..(i + 1) * wd])
                            {
                                *d += wv * s;
                            }
                        }
                    }
                }
            }
        });
    let y = Tensor::from_raw(vec![n, cout, ho, wo], out);
    let pb = Pullback::new(
        Saved::TransposedConv2d {
            weight: w.clone(),
            stride,
            input_dims: [n, cin, h, wd],
        },
        y.shape().to_vec(),
    );
    Ok((y, pb))
}

/// Strided correlation of the cotangent with the same kernel.
pub(super) fn pullback(
    g: &Tensor,
    w: &Tensor,
    (sh, sw): (usize, usize),
    input_dims: [usize; 4],
) -> Tensor {
    let [n, cin, h, wd] = input_dims;
    let cout = w.shape()[1];
    let (ho, wo) = (h * sh, wd * sw);
    let (gs, ws) = (g.data(), w.data());
    let mut out = vec![0.0; n * cin * h * wd];
    out.par_chunks_mut(h * wd)
        .enumerate()
        .for_each(|(kc, plane)| {
            let (k, c) = (kc / cin, kc % cin);
            for o in 0..cout {
                let gy = &gs[(k * cout + o) * ho * wo..][..ho * wo];
                let wk = &ws[(c * cout + o) * sh * sw..][..sh * sw];
                for u in 0..sh {
                    for v in 0..sw {
                        let wv = wk[u * sw + v];
                        for i in 0..h {
                            let src = &gy[(i * sh + u) * wo + v..];
                            for (d, s) in plane[i * wd..(i + 1) * wd]
                                .iter_mut()
                                .zip(src.iter().step_by(sw))
                            {
                                *d += wv * s;
                            }
                        }
                    }
                }
            }
        });
    Tensor::from_raw(input_dims.to_vec(), out)
}
