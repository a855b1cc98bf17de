use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::Rng;

use super::norm::{ada_in_backward, ada_in_forward, AdaInTape};
use super::{relu_backward_inplace, relu_inplace, Linear, StyleStats};
use crate::params::{prefixed, Parameters};
use crate::scalar::Scalar;

/// Channel-preserving residual block conditioned on style statistics.
///
/// `out = x + L2(relu(AdaIN(L1(relu(AdaIN(x, s))), s)))`
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveResBlock<T> {
    pub first: Linear<T>,
    pub second: Linear<T>,
}

#[derive(Clone, Debug)]
pub struct ResBlockTape<T> {
    norm1: AdaInTape<T>,
    act1: Array2<T>,
    norm2: AdaInTape<T>,
    act2: Array2<T>,
}

impl<T: Scalar> AdaptiveResBlock<T> {
    pub fn init<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Self {
        Self {
            first: Linear::init(width, width, rng),
            second: Linear::init(width, width, rng),
        }
    }

    pub fn width(&self) -> usize {
        self.first.in_channels()
    }

    pub fn forward(
        &self,
        x: &Array2<T>,
        style: &StyleStats<T>,
        epsilon: T,
    ) -> (Array2<T>, ResBlockTape<T>) {
        let (mut act1, norm1) = ada_in_forward(x, style, epsilon);
        relu_inplace(&mut act1);
        let hidden = self.first.forward(&act1);
        let (mut act2, norm2) = ada_in_forward(&hidden, style, epsilon);
        relu_inplace(&mut act2);
        let out = self.second.forward(&act2) + x;
        let tape = ResBlockTape {
            norm1,
            act1,
            norm2,
            act2,
        };
        (out, tape)
    }

    /// Returns `(dx, d_style_mean, d_style_std)`.
    pub fn backward(
        &self,
        tape: &ResBlockTape<T>,
        style: &StyleStats<T>,
        d_out: &Array2<T>,
        grad: &mut AdaptiveResBlock<T>,
    ) -> (Array2<T>, Array1<T>, Array1<T>) {
        let mut d_act2 = self.second.backward(&tape.act2, d_out, &mut grad.second);
        relu_backward_inplace(&tape.act2, &mut d_act2);
        let (d_hidden, dm2, ds2) = ada_in_backward(&tape.norm2, style, &d_act2);
        let mut d_act1 = self.first.backward(&tape.act1, &d_hidden, &mut grad.first);
        relu_backward_inplace(&tape.act1, &mut d_act1);
        let (dx_branch, dm1, ds1) = ada_in_backward(&tape.norm1, style, &d_act1);
        (dx_branch + d_out, dm1 + dm2, ds1 + ds2)
    }
}

impl<T: Scalar> Parameters<T> for AdaptiveResBlock<T> {
    fn named_tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        prefixed("first", self.first.named_tensors())
            .chain(prefixed("second", self.second.named_tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        let mut out = self.first.tensors_mut();
        out.extend(self.second.tensors_mut());
        out
    }

    fn zeros_like(&self) -> Self {
        Self {
            first: self.first.zeros_like(),
            second: self.second.zeros_like(),
        }
    }
}
