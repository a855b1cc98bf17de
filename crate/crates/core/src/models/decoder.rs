use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::Rng;

use crate::nn::{
    instance_norm_backward, instance_norm_forward, relu_backward_inplace, relu_inplace,
    AdaptiveResBlock, Linear, ResBlockTape, StyleStats,
};
use crate::params::{prefixed, Parameters};
use crate::scalar::Scalar;

/// One decoder stage: linear → instance norm → ReLU, then an adaptive residual block.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderStage<T> {
    pub linear: Linear<T>,
    pub block: AdaptiveResBlock<T>,
}

/// Style-conditioned decoder producing `3 × num_vertices` coordinates in `(-1, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoder<T> {
    pub stages: Vec<DecoderStage<T>>,
    pub output: Linear<T>,
}

#[derive(Clone, Debug)]
struct StageTape<T> {
    input: Array2<T>,
    normalized: Array2<T>,
    inv_std: Array1<T>,
    activated: Array2<T>,
    block: ResBlockTape<T>,
}

#[derive(Clone, Debug)]
pub struct DecoderTape<T> {
    stages: Vec<StageTape<T>>,
    head_input: Array2<T>,
    output: Array2<T>,
}

impl<T> DecoderTape<T> {
    pub fn output(&self) -> &Array2<T> {
        &self.output
    }
}

impl<T: Scalar> Decoder<T> {
    pub fn init<R: Rng + ?Sized>(latent: usize, widths: [usize; 3], rng: &mut R) -> Self {
        let mut input = latent;
        let stages = widths
            .iter()
            .map(|&w| {
                let stage = DecoderStage {
                    linear: Linear::init(input, w, rng),
                    block: AdaptiveResBlock::init(w, rng),
                };
                input = w;
                stage
            })
            .collect();
        Self {
            stages,
            output: Linear::init(input, 3, rng),
        }
    }

    pub fn input_width(&self) -> usize {
        self.stages[0].linear.in_channels()
    }

    pub fn stage_widths(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.block.width()).collect()
    }

    pub fn forward(
        &self,
        latent: &Array2<T>,
        styles: &[StyleStats<T>],
        epsilon: T,
    ) -> DecoderTape<T> {
        let mut h = latent.clone();
        let mut tapes = Vec::with_capacity(self.stages.len());
        for (stage, style) in self.stages.iter().zip(styles) {
            let pre = stage.linear.forward(&h);
            let (normalized, inv_std) = instance_norm_forward(&pre, epsilon);
            let mut activated = normalized.clone();
            relu_inplace(&mut activated);
            let (out, block) = stage.block.forward(&activated, style, epsilon);
            tapes.push(StageTape {
                input: h,
                normalized,
                inv_std,
                activated,
                block,
            });
            h = out;
        }
        let output = self.output.forward(&h).mapv_into(|v| v.tanh());
        DecoderTape {
            stages: tapes,
            head_input: h,
            output,
        }
    }

    /// Returns the latent gradient and `(d_mean, d_std)` for every stage's style.
    pub fn backward(
        &self,
        tape: &DecoderTape<T>,
        styles: &[StyleStats<T>],
        d_output: &Array2<T>,
        grad: &mut Decoder<T>,
    ) -> (Array2<T>, Vec<(Array1<T>, Array1<T>)>) {
        let d_pre = ndarray::Zip::from(d_output)
            .and(&tape.output)
            .map_collect(|&g, &y| g * (T::one() - y * y));
        let mut d = self.output.backward(&tape.head_input, &d_pre, &mut grad.output);
        let mut d_styles = vec![(Array1::zeros(0), Array1::zeros(0)); self.stages.len()];
        for (k, stage) in self.stages.iter().enumerate().rev() {
            let st = &tape.stages[k];
            let (mut d_act, dm, ds) =
                stage
                    .block
                    .backward(&st.block, &styles[k], &d, &mut grad.stages[k].block);
            d_styles[k] = (dm, ds);
            relu_backward_inplace(&st.activated, &mut d_act);
            let d_pre = instance_norm_backward(&st.normalized, &st.inv_std, &d_act);
            d = stage
                .linear
                .backward(&st.input, &d_pre, &mut grad.stages[k].linear);
        }
        (d, d_styles)
    }
}

impl<T: Scalar> Parameters<T> for Decoder<T> {
    fn named_tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        let mut out = Vec::new();
        for (i, s) in self.stages.iter().enumerate() {
            out.extend(prefixed(&format!("stages.{i}.linear"), s.linear.named_tensors()));
            out.extend(prefixed(&format!("stages.{i}.block"), s.block.named_tensors()));
        }
        out.extend(prefixed("output", self.output.named_tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        let mut out = Vec::new();
        for s in &mut self.stages {
            out.extend(s.linear.tensors_mut());
            out.extend(s.block.tensors_mut());
        }
        out.extend(self.output.tensors_mut());
        out
    }

    fn zeros_like(&self) -> Self {
        Self {
            stages: self
                .stages
                .iter()
                .map(|s| DecoderStage {
                    linear: s.linear.zeros_like(),
                    block: s.block.zeros_like(),
                })
                .collect(),
            output: self.output.zeros_like(),
        }
    }
}
