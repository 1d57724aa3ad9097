use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;

use super::params::ParamTree;
use crate::rng::Rng;

/// Affine map `y = x W^T + b` applied to the rows of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `out x in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn init(input: usize, output: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        let weight = Array2::from_shape_fn((output, input), |_| rng.random_range(-bound..=bound));
        let bias = Array1::from_shape_fn(output, |_| rng.random_range(-bound..=bound));
        Self { weight, bias }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight.t());
        y += &self.bias;
        y
    }

    /// Accumulate parameter gradients into `grad` and return `dL/dx`.
    pub fn backward(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>, grad: &mut Linear) -> Array2<f64> {
        self.accumulate(x, dy, grad);
        dy.dot(&self.weight)
    }

    /// Parameter gradients only, for layers whose input is data.
    pub fn accumulate(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>, grad: &mut Linear) {
        ndarray::linalg::general_mat_mul(1.0, &dy.t(), &x, 1.0, &mut grad.weight);
        grad.bias += &dy.sum_axis(Axis(0));
    }
}

impl ParamTree for Linear {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.weight.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.weight.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ]
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn silu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v * sigmoid(v))
}

/// `dy * silu'(pre)`, where `pre` is the activation input.
pub fn silu_backward(pre: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut out = dy.clone();
    ndarray::Zip::from(&mut out).and(pre).for_each(|g, &p| {
        let s = sigmoid(p);
        *g *= s * (1.0 + p * (1.0 - s));
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use ndarray::array;

    #[test]
    fn forward_matches_hand_computation() {
        let l = Linear {
            weight: array![[1.0, 2.0], [0.0, -1.0], [3.0, 0.5]],
            bias: array![0.5, 0.0, -1.0],
        };
        let y = l.forward(array![[1.0, 1.0], [2.0, 0.0]].view());
        assert_eq!(y, array![[3.5, -1.0, 2.5], [2.5, 0.0, 5.0]]);
    }

    #[test]
    fn silu_derivative_matches_finite_difference() {
        let x = array![[-3.0, -0.5, 0.0, 0.7, 4.0]];
        let g = silu_backward(&x, &Array2::ones(x.raw_dim()));
        let h = 1e-6;
        for (i, &v) in x.iter().enumerate() {
            let fd = (silu(&array![[v + h]])[[0, 0]] - silu(&array![[v - h]])[[0, 0]]) / (2.0 * h);
            assert!((fd - g[[0, i]]).abs() < 1e-8);
        }
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let l = Linear::init(16, 4, &mut rng_from_seed(0));
        assert!(l.weight.iter().all(|w| w.abs() <= 0.25));
        assert_eq!(l.num_params(), 16 * 4 + 4);
    }
}
