use super::{Pullback, Saved};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Channel-axis concatenation `[a, b]`.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<(Tensor, Pullback)> {
    let (na, ca, ha, wa) = a.dims4()?;
    let (nb, cb, hb, wb) = b.dims4()?;
    if (na, ha, wa) != (nb, hb, wb) {
        return Err(Error::config(format!(
            "cannot concatenate {:?} and {:?} along channels",
            a.shape(),
            b.shape()
        )));
    }
    let plane = ha * wa;
    let mut data = Vec::with_capacity(a.len() + b.len());
    for k in 0..na {
        data.extend_from_slice(&a.data()[k * ca * plane..(k + 1) * ca * plane]);
        data.extend_from_slice(&b.data()[k * cb * plane..(k + 1) * cb * plane]);
    }
    let shape = vec![na, ca + cb, ha, wa];
    let pb = Pullback::new(Saved::ConcatChannels { first_channels: ca }, shape.clone());
    Ok((Tensor::from_raw(shape, data), pb))
}

pub(super) fn split(g: &Tensor, first: usize) -> (Tensor, Tensor) {
    let (n, c, h, w) = (g.shape()[0], g.shape()[1], g.shape()[2], g.shape()[3]);
    let plane = h * w;
    let second = c - first;
    let mut a = Vec::with_capacity(n * first * plane);
    let mut b = Vec::with_capacity(n * second * plane);
    for chunk in g.data().chunks(c * plane) {
        a.extend_from_slice(&chunk[..first * plane]);
        b.extend_from_slice(&chunk[first * plane..]);
    }
    (
        Tensor::from_raw(vec![n, first, h, w], a),
        Tensor::from_raw(vec![n, second, h, w], b),
    )
}
