use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;

use crate::params::Parameters;
use crate::scalar::Scalar;

/// Shared per-vertex affine map (a 1×1 convolution over the vertex axis).
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    /// `out_channels × in_channels`
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            weight: Array2::zeros((out_channels, in_channels)),
            bias: Array1::zeros(out_channels),
        }
    }

    /// Uniform `±1/sqrt(in_channels)` initialization for weights and bias.
    pub fn init<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_channels as f64).sqrt();
        let mut draw = || T::from_f64_rounded(rng.random_range(-bound..bound));
        let weight = Array2::from_shape_simple_fn((out_channels, in_channels), &mut draw);
        let bias = Array1::from_shape_simple_fn(out_channels, &mut draw);
        Self { weight, bias }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_channels(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: &Array2<T>) -> Array2<T> {
        let mut y = Array2::zeros((self.out_channels(), x.ncols()));
        for (mut row, &b) in y.axis_iter_mut(Axis(0)).zip(&self.bias) {
            row.fill(b);
        }
        general_mat_mul(T::one(), &self.weight, x, T::one(), &mut y);
        y
    }

    /// Accumulates `dL/dW` and `dL/db` into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &Array2<T>, dy: &Array2<T>, grad: &mut Linear<T>) -> Array2<T> {
        self.accumulate(x, dy, grad);
        self.weight.t().dot(dy)
    }

    /// Parameter gradients only, for layers whose input needs no gradient.
    pub fn accumulate(&self, x: &Array2<T>, dy: &Array2<T>, grad: &mut Linear<T>) {
        general_mat_mul(T::one(), dy, &x.t(), T::one(), &mut grad.weight);
        grad.bias += &dy.sum_axis(Axis(1));
    }
}

impl<T: Scalar> Parameters<T> for Linear<T> {
    fn named_tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        vec![
            ("weight".into(), self.weight.view().into_dyn()),
            ("bias".into(), self.bias.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        vec![
            self.weight.view_mut().into_dyn(),
            self.bias.view_mut().into_dyn(),
        ]
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.in_channels(), self.out_channels())
    }
}
