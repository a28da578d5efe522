use super::{Pullback, Saved};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `y = x` for `x > 0`, `slope * x` otherwise. At exactly zero the
/// derivative is taken from the negative branch.
pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<(Tensor, Pullback)> {
    if !(0.0..=1.0).contains(&slope) {
        return Err(Error::config(format!(
            "leaky-ReLU slope must lie in [0, 1], got {slope}"
        )));
    }
    x.check_finite("leaky-ReLU input")?;
    let y = x.map(|v| if v > 0.0 { v } else { slope * v });
    let pb = Pullback::new(
        Saved::LeakyRelu {
            input: x.clone(),
            slope,
        },
        x.shape().to_vec(),
    );
    Ok((y, pb))
}

pub(super) fn pullback(g: &Tensor, input: &Tensor, slope: f64) -> Tensor {
    let data = g
        .data()
        .iter()
        .zip(input.data())
        .map(|(&gv, &xv)| if xv > 0.0 { gv } else { slope * gv })
        .collect();
    Tensor::from_raw(g.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_values() {
        let x = Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        let (y, _) = leaky_relu(&x, 0.01).unwrap();
        assert_eq!(y.data(), &[-0.01, 0.0, 2.0]);
    }

    #[test]
    fn unit_slope_is_identity() {
        let x = Tensor::new(vec![4], vec![-3.5, -0.0, 0.25, 9.0]).unwrap();
        let (y, pb) = leaky_relu(&x, 1.0).unwrap();
        assert_eq!(y, x);
        let g = Tensor::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(pb.apply_unary(&g).unwrap(), g);
    }

    #[test]
    fn negative_branch_scales_cotangent() {
        let x = Tensor::new(vec![1], vec![-3.0]).unwrap();
        let (_, pb) = leaky_relu(&x, 0.01).unwrap();
        let gx = pb
            .apply_unary(&Tensor::new(vec![1], vec![5.0]).unwrap())
            .unwrap();
        assert!((gx.data()[0] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn zero_takes_negative_slope() {
        let x = Tensor::new(vec![1], vec![0.0]).unwrap();
        let (_, pb) = leaky_relu(&x, 0.2).unwrap();
        let gx = pb.apply_unary(&Tensor::ones(&[1])).unwrap();
        assert_eq!(gx.data(), &[0.2]);
    }
}
