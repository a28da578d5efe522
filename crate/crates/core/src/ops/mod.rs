//! Layer primitives and their input-cotangent pullbacks.
//!
//! Weights are constants here: every pullback maps an output cotangent to the
//! cotangent of the primitive's *input* only.

mod activation;
mod concat;
mod conv;
mod norm;
mod transposed;

pub use activation::leaky_relu;
pub use concat::concat_channels;
pub use conv::{conv2d, ConvSpec};
pub use norm::instance_norm;
pub use transposed::transposed_conv2d;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Identifies which primitive produced a [`Pullback`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Primitive {
    Conv2d,
    TransposedConv2d,
    InstanceNorm,
    LeakyRelu,
    ConcatChannels,
}

#[derive(Debug, Clone)]
pub(crate) enum Saved {
    Conv2d {
        weight: Tensor,
        spec: ConvSpec,
        input_dims: [usize; 4],
    },
    TransposedConv2d {
        weight: Tensor,
        stride: (usize, usize),
        input_dims: [usize; 4],
    },
    InstanceNorm {
        /// (x - mean) / sqrt(var + eps), per plane.
        normalized: Tensor,
        inv_std: Vec<f64>,
        gamma: Tensor,
    },
    LeakyRelu {
        input: Tensor,
        slope: f64,
    },
    ConcatChannels {
        first_channels: usize,
    },
}

/// The saved state needed to pull an output cotangent back to the input.
#[derive(Debug, Clone)]
pub struct Pullback {
    saved: Saved,
    output_shape: Vec<usize>,
}

impl Pullback {
    pub(crate) fn new(saved: Saved, output_shape: Vec<usize>) -> Self {
        Pullback {
            saved,
            output_shape,
        }
    }

    pub fn primitive(&self) -> Primitive {
        match self.saved {
            Saved::Conv2d { .. } => Primitive::Conv2d,
            Saved::TransposedConv2d { .. } => Primitive::TransposedConv2d,
            Saved::InstanceNorm { .. } => Primitive::InstanceNorm,
            Saved::LeakyRelu { .. } => Primitive::LeakyRelu,
            Saved::ConcatChannels { .. } => Primitive::ConcatChannels,
        }
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    /// Number of input cotangents produced by [`Pullback::apply`].
    pub fn arity(&self) -> usize {
        match self.saved {
            Saved::ConcatChannels { .. } => 2,
            _ => 1,
        }
    }

    /// The pre-activation input of a leaky-ReLU, if this is one.
    pub fn activation_input(&self) -> Option<&Tensor> {
        match &self.saved {
            Saved::LeakyRelu { input, .. } => Some(input),
            _ => None,
        }
    }

    /// Maps a cotangent of the output to one cotangent per input.
    pub fn apply(&self, g: &Tensor) -> Result<Vec<Tensor>> {
        if g.shape() != self.output_shape.as_slice() {
            return Err(Error::validation(format!(
                "{:?} pullback expects a cotangent of shape {:?}, got {:?}",
                self.primitive(),
                self.output_shape,
                g.shape()
            )));
        }
        Ok(match &self.saved {
            Saved::Conv2d {
                weight,
                spec,
                input_dims,
            } => vec![conv::pullback(g, weight, spec, *input_dims)],
            Saved::TransposedConv2d {
                weight,
                stride,
                input_dims,
            } => vec![transposed::pullback(g, weight, *stride, *input_dims)],
            Saved::InstanceNorm {
                normalized,
                inv_std,
                gamma,
            } => vec![norm::pullback(g, normalized, inv_std, gamma)],
            Saved::LeakyRelu { input, slope } => vec![activation::pullback(g, input, *slope)],
            Saved::ConcatChannels { first_channels } => {
                let (a, b) = concat::split(g, *first_channels);
                vec![a, b]
            }
        })
    }

    /// [`Pullback::apply`] for single-input primitives.
    pub fn apply_unary(&self, g: &Tensor) -> Result<Tensor> {
        if self.arity() != 1 {
            return Err(Error::config(format!(
                "{:?} has {} inputs",
                self.primitive(),
                self.arity()
            )));
        }
        Ok(self.apply(g)?.pop().expect("one cotangent"))
    }
}

/// Range of output positions `j` for which `j * stride + offset - pad` lands
/// inside `[0, in_len)`.
pub(crate) fn valid_range(
    out_len: usize,
    in_len: usize,
    stride: usize,
    offset: usize,
    pad: usize,
) -> std::ops::Range<usize> {
    let lo = if pad > offset {
        (pad - offset).div_ceil(stride)
    } else {
        0
    };
    let hi = if in_len + pad > offset {
        ((in_len - 1 + pad - offset) / stride + 1).min(out_len)
    } else {
        0
    };
    lo..hi.max(lo)
}
