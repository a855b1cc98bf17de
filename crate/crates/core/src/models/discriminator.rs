use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;

use crate::nn::{relu_backward_inplace, relu_inplace, Linear};
use crate::params::{prefixed, Parameters};
use crate::scalar::Scalar;

/// PointNet-style real/fake classifier: shared per-vertex MLP, max over
/// vertices, then a small MLP to one logit.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator<T> {
    pub point: Vec<Linear<T>>,
    pub hidden: Linear<T>,
    pub head: Linear<T>,
}

#[derive(Clone, Debug)]
pub struct DiscriminatorTape<T> {
    activations: Vec<Array2<T>>,
    argmax: Vec<usize>,
    global: Array2<T>,
    hidden: Array2<T>,
    probability: T,
}

impl<T: Scalar> DiscriminatorTape<T> {
    pub fn probability(&self) -> T {
        self.probability
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Discriminator<T> {
    pub fn init<R: Rng + ?Sized>(widths: [usize; 3], hidden: usize, rng: &mut R) -> Self {
        let mut input = 3;
        let point = widths
            .iter()
            .map(|&w| {
                let l = Linear::init(input, w, rng);
                input = w;
                l
            })
            .collect();
        Self {
            point,
            hidden: Linear::init(input, hidden, rng),
            head: Linear::init(hidden, 1, rng),
        }
    }

    pub fn forward(&self, coords: &Array2<T>) -> DiscriminatorTape<T> {
        let mut activations = vec![coords.clone()];
        for layer in &self.point {
            let mut a = layer.forward(activations.last().unwrap());
            relu_inplace(&mut a);
            activations.push(a);
        }
        let last = activations.last().unwrap();
        let mut argmax = Vec::with_capacity(last.nrows());
        let mut pooled = Array1::zeros(last.nrows());
        for (row, slot) in last.axis_iter(Axis(0)).zip(pooled.iter_mut()) {
            let (mut best, mut best_val) = (0, row[0]);
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > best_val {
                    best = i;
                    best_val = v;
                }
            }
            argmax.push(best);
            *slot = best_val;
        }
        let global = pooled.insert_axis(Axis(1));
        let mut hidden = self.hidden.forward(&global);
        relu_inplace(&mut hidden);
        let logit = self.head.forward(&hidden)[[0, 0]];
        DiscriminatorTape {
            activations,
            argmax,
            global,
            hidden,
            probability: sigmoid(logit),
        }
    }

    /// Backpropagates `dL/dlogit`; returns the coordinate gradient.
    pub fn backward(
        &self,
        tape: &DiscriminatorTape<T>,
        d_logit: T,
        grad: &mut Discriminator<T>,
    ) -> Array2<T> {
        let d_head = Array2::from_elem((1, 1), d_logit);
        let mut d_hidden = self.head.backward(&tape.hidden, &d_head, &mut grad.head);
        relu_backward_inplace(&tape.hidden, &mut d_hidden);
        let d_global = self.hidden.backward(&tape.global, &d_hidden, &mut grad.hidden);
        let last = tape.activations.last().unwrap();
        let mut d = Array2::zeros(last.raw_dim());
        for (c, &i) in tape.argmax.iter().enumerate() {
            d[[c, i]] = d_global[[c, 0]];
        }
        for (i, layer) in self.point.iter().enumerate().rev() {
            relu_backward_inplace(&tape.activations[i + 1], &mut d);
            d = layer.backward(&tape.activations[i], &d, &mut grad.point[i]);
        }
        d
    }
}

impl<T: Scalar> Parameters<T> for Discriminator<T> {
    fn named_tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        let mut out: Vec<_> = self
            .point
            .iter()
            .enumerate()
            .flat_map(|(i, l)| prefixed(&format!("point.{i}"), l.named_tensors()))
            .collect();
        out.extend(prefixed("hidden", self.hidden.named_tensors()));
        out.extend(prefixed("head", self.head.named_tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        let mut out: Vec<_> = self.point.iter_mut().flat_map(|l| l.tensors_mut()).collect();
        out.extend(self.hidden.tensors_mut());
        out.extend(self.head.tensors_mut());
        out
    }

    fn zeros_like(&self) -> Self {
        Self {
            point: self.point.iter().map(Linear::zeros_like).collect(),
            hidden: self.hidden.zeros_like(),
            head: self.head.zeros_like(),
        }
    }
}
