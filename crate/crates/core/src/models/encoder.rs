use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::Rng;

use crate::nn::{relu_backward_inplace, relu_inplace, style_stats_backward, Linear, StyleStats};
use crate::params::{prefixed, Parameters};
use crate::scalar::Scalar;

/// Per-vertex point encoder: three shared linear layers, each followed by ReLU.
/// No pooling; the latent keeps one column per vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder<T> {
    pub layers: Vec<Linear<T>>,
}

/// Layer inputs, `activations[0]` being the coordinates themselves.
#[derive(Clone, Debug)]
pub struct EncoderTape<T> {
    activations: Vec<Array2<T>>,
}

impl<T> EncoderTape<T> {
    pub fn output(&self) -> &Array2<T> {
        self.activations.last().expect("encoder tape is never empty")
    }
}

impl<T: Scalar> Encoder<T> {
    pub fn init<R: Rng + ?Sized>(widths: [usize; 3], rng: &mut R) -> Self {
        let mut input = 3;
        let layers = widths
            .iter()
            .map(|&w| {
                let l = Linear::init(input, w, rng);
                input = w;
                l
            })
            .collect();
        Self { layers }
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(3, Linear::out_channels)
    }

    pub fn forward(&self, coords: &Array2<T>) -> EncoderTape<T> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(coords.clone());
        for layer in &self.layers {
            let mut a = layer.forward(activations.last().unwrap());
            relu_inplace(&mut a);
            activations.push(a);
        }
        EncoderTape { activations }
    }

    /// Accumulates parameter gradients; the coordinate gradient is not needed.
    pub fn backward(&self, tape: &EncoderTape<T>, d_latent: Array2<T>, grad: &mut Encoder<T>) {
        let mut d = d_latent;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            relu_backward_inplace(&tape.activations[i + 1], &mut d);
            if i == 0 {
                layer.accumulate(&tape.activations[0], &d, &mut grad.layers[0]);
            } else {
                d = layer.backward(&tape.activations[i], &d, &mut grad.layers[i]);
            }
        }
    }
}

impl<T: Scalar> Parameters<T> for Encoder<T> {
    fn named_tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| prefixed(&format!("layers.{i}"), l.named_tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }

    fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(Linear::zeros_like).collect(),
        }
    }
}

/// Projects identity-mesh latents to each decoder stage width; the AdaIN
/// condition of a stage is the channel statistics of its projection.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleEncoder<T> {
    pub projections: Vec<Linear<T>>,
}

#[derive(Clone, Debug)]
pub struct StyleTape<T> {
    projected: Vec<Array2<T>>,
}

impl<T: Scalar> StyleEncoder<T> {
    pub fn init<R: Rng + ?Sized>(latent: usize, widths: [usize; 3], rng: &mut R) -> Self {
        Self {
            projections: widths.iter().map(|&w| Linear::init(latent, w, rng)).collect(),
        }
    }

    pub fn forward(&self, latent: &Array2<T>, epsilon: T) -> (Vec<StyleStats<T>>, StyleTape<T>) {
        let projected: Vec<Array2<T>> = self.projections.iter().map(|p| p.forward(latent)).collect();
        let stats = projected
            .iter()
            .map(|p| crate::nn::norm_stats(p, epsilon))
            .collect();
        (stats, StyleTape { projected })
    }

    /// Gradient of the identity latent given gradients on every stage's statistics.
    pub fn backward(
        &self,
        latent: &Array2<T>,
        tape: &StyleTape<T>,
        stats: &[StyleStats<T>],
        d_stats: &[(Array1<T>, Array1<T>)],
        grad: &mut StyleEncoder<T>,
    ) -> Array2<T> {
        let mut d_latent = Array2::zeros(latent.raw_dim());
        for (k, proj) in self.projections.iter().enumerate() {
            let (dm, ds) = &d_stats[k];
            let dp = style_stats_backward(&tape.projected[k], &stats[k], dm, ds);
            d_latent += &proj.backward(latent, &dp, &mut grad.projections[k]);
        }
        d_latent
    }
}

impl<T: Scalar> Parameters<T> for StyleEncoder<T> {
    fn named_tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        self.projections
            .iter()
            .enumerate()
            .flat_map(|(i, l)| prefixed(&format!("projections.{i}"), l.named_tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        self.projections
            .iter_mut()
            .flat_map(|l| l.tensors_mut())
            .collect()
    }

    fn zeros_like(&self) -> Self {
        Self {
            projections: self.projections.iter().map(Linear::zeros_like).collect(),
        }
    }
}
