//! Minimal reverse-mode tape over the primitives in [`crate::ops`].
//!
//! A forward pass through a [`Recorder`] logs one [`Pullback`] per primitive
//! together with the value ids it consumed and produced. [`Tape::backward`]
//! replays them in reverse, summing cotangents where a value fans out (the
//! U-Net skip connections).

use crate::error::{Error, Result};
use crate::ops::{self, ConvSpec, Pullback};
use crate::tensor::Tensor;

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone)]
pub struct Var {
    id: usize,
    value: Tensor,
}

impl Var {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn into_value(self) -> Tensor {
        self.value
    }
}

#[derive(Debug, Clone)]
struct Entry {
    pullback: Pullback,
    inputs: Vec<usize>,
    output: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    entries: Vec<Entry>,
    num_values: usize,
    input_shape: Vec<usize>,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pullbacks(&self) -> impl Iterator<Item = &Pullback> {
        self.entries.iter().map(|e| &e.pullback)
    }

    /// Pre-activation inputs of every leaky-ReLU, in forward order.
    pub fn activation_inputs(&self) -> impl Iterator<Item = &Tensor> {
        self.pullbacks().filter_map(Pullback::activation_input)
    }

    /// Pulls `seed` (the cotangent of the final output) back to the input.
    ///
    /// Errors with the offending layer index if a non-finite cotangent appears.
    pub fn backward(&self, seed: &Tensor) -> Result<Tensor> {
        let mut grads: Vec<Option<Tensor>> = vec![None; self.num_values];
        let last = self
            .entries
            .last()
            .ok_or_else(|| Error::validation("empty tape"))?;
        if seed.shape() != last.pullback.output_shape() {
            return Err(Error::validation(format!(
                "seed cotangent shape {:?} does not match output {:?}",
                seed.shape(),
                last.pullback.output_shape()
            )));
        }
        grads[last.output] = Some(seed.clone());

        for (layer, entry) in self.entries.iter().enumerate().rev() {
            let Some(g) = grads[entry.output].take() else {
                continue;
            };
            let parts = entry.pullback.apply(&g)?;
            for (&input, part) in entry.inputs.iter().zip(parts) {
                if !part.is_finite() {
                    return Err(Error::Numerical {
                        layer,
                        message: format!(
                            "non-finite cotangent from {:?} pullback",
                            entry.pullback.primitive()
                        ),
                    });
                }
                grads[input] = Some(match grads[input].take() {
                    Some(acc) => acc.add(&part)?,
                    None => part,
                });
            }
        }
        Ok(grads[0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(&self.input_shape)))
    }
}

/// Builds a [`Tape`] while evaluating primitives.
#[derive(Debug, Default)]
pub struct Recorder {
    tape: Tape,
}

impl Recorder {
    /// Registers the network input. Must be called exactly once, first.
    pub fn input(&mut self, x: Tensor) -> Var {
        debug_assert_eq!(self.tape.num_values, 0);
        self.tape.input_shape = x.shape().to_vec();
        self.fresh(x)
    }

    fn fresh(&mut self, value: Tensor) -> Var {
        let id = self.tape.num_values;
        self.tape.num_values += 1;
        Var { id, value }
    }

    fn push(&mut self, inputs: Vec<usize>, out: (Tensor, Pullback)) -> Result<Var> {
        let (value, pullback) = out;
        let layer = self.tape.entries.len();
        if !value.is_finite() {
            return Err(Error::Numerical {
                layer,
                message: format!("non-finite output from {:?}", pullback.primitive()),
            });
        }
        let var = self.fresh(value);
        self.tape.entries.push(Entry {
            pullback,
            inputs,
            output: var.id,
        });
        Ok(var)
    }

    pub fn conv2d(&mut self, x: &Var, w: &Tensor, b: &Tensor, spec: &ConvSpec) -> Result<Var> {
        let out = ops::conv2d(&x.value, w, b, spec)?;
        self.push(vec![x.id], out)
    }

    pub fn transposed_conv2d(
        &mut self,
        x: &Var,
        w: &Tensor,
        b: &Tensor,
        stride: (usize, usize),
    ) -> Result<Var> {
        let out = ops::transposed_conv2d(&x.value, w, b, stride)?;
        self.push(vec![x.id], out)
    }

    pub fn instance_norm(
        &mut self,
        x: &Var,
        gamma: &Tensor,
        beta: &Tensor,
        eps: f64,
    ) -> Result<Var> {
        let out = ops::instance_norm(&x.value, gamma, beta, eps)?;
        self.push(vec![x.id], out)
    }

    pub fn leaky_relu(&mut self, x: &Var, slope: f64) -> Result<Var> {
        let out = ops::leaky_relu(&x.value, slope)?;
        self.push(vec![x.id], out)
    }

    pub fn concat_channels(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let out = ops::concat_channels(&a.value, &b.value)?;
        self.push(vec![a.id, b.id], out)
    }

    pub fn finish(self) -> Tape {
        self.tape
    }
}

/// A network whose output can be differentiated with respect to its input.
pub trait InputDifferentiable {
    /// Expected `(C, H, W)` of one input image.
    fn input_dims(&self) -> (usize, usize, usize);

    /// Forward pass recording everything the input-VJP needs.
    fn forward_taped(&self, x: &Tensor) -> Result<(Tensor, Tape)>;

    /// Forward pass without keeping the tape.
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_taped(x).map(|(y, _)| y)
    }

    /// Rejects batches whose per-image shape or values are unusable.
    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, c, h, w) = x.dims4()?;
        if (c, h, w) != self.input_dims() {
            return Err(Error::validation(format!(
                "input images are {c}x{h}x{w}, network expects {:?}",
                self.input_dims()
            )));
        }
        x.check_finite("network input")
    }
}

/// Gradient of the sum of all outputs with respect to the input batch,
/// computed with one reverse sweep seeded by an all-ones cotangent.
pub fn input_gradient<M: InputDifferentiable + ?Sized>(net: &M, x: &Tensor) -> Result<Tensor> {
    let (y, tape) = net.forward_taped(x)?;
    tape.backward(&Tensor::ones(y.shape()))
}
