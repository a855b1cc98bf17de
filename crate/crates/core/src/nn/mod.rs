//! Per-vertex neural building blocks with hand-written backward passes.
//!
//! Feature maps are `channels × num_vertices`. Every layer is a pure function of
//! its inputs; the `*_backward` companions take the values saved by the forward
//! pass and accumulate parameter gradients into a container of the same shape
//! as the parameters.

mod linear;
mod norm;
mod resblock;

use ndarray::{Array1, Array2};

use crate::scalar::{lit, Scalar};

pub use linear::Linear;
pub use norm::{
    ada_in_backward, ada_in_forward, instance_norm_backward, instance_norm_forward,
    style_stats_backward, AdaInTape,
};
pub use resblock::{AdaptiveResBlock, ResBlockTape};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NnError {
    #[error("channel mismatch: expected {expected}, found {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("instance statistics need at least 2 vertices, found {0}")]
    TooFewVertices(usize),
    #[error("feature map must have positive dimensions, got {channels} x {vertices}")]
    EmptyFeatureMap { channels: usize, vertices: usize },
    #[error("feature map contains a non-finite value")]
    NonFinite,
    #[error("style std at channel {channel} is {value}, below sqrt(epsilon) = {floor}")]
    StdBelowFloor { channel: usize, value: f64, floor: f64 },
    #[error("style mean has {mean} channels but std has {std}")]
    StyleLengthMismatch { mean: usize, std: usize },
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
}

/// Normalization settings shared by instance norm and AdaIN.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormConfig<T> {
    epsilon: T,
}

impl<T: Scalar> NormConfig<T> {
    pub fn new(epsilon: T) -> Result<Self, NnError> {
        if epsilon > T::zero() && epsilon.is_finite() {
            Ok(Self { epsilon })
        } else {
            Err(NnError::BadEpsilon(epsilon.to_f64_lossless()))
        }
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }
}

impl<T: Scalar> Default for NormConfig<T> {
    fn default() -> Self {
        Self {
            epsilon: lit(1e-5),
        }
    }
}

/// Per-vertex activations, `channels × num_vertices`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T> {
    data: Array2<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(data: Array2<T>) -> Result<Self, NnError> {
        let (channels, vertices) = data.dim();
        if channels == 0 || vertices == 0 {
            return Err(NnError::EmptyFeatureMap { channels, vertices });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite);
        }
        Ok(Self { data })
    }

    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_vertices(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<T> {
        &self.data
    }

    pub fn into_data(self) -> Array2<T> {
        self.data
    }
}

/// Channel-wise mean and standard deviation of a style feature map.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleStats<T> {
    mean: Array1<T>,
    std: Array1<T>,
}

impl<T: Scalar> StyleStats<T> {
    pub fn new(mean: Array1<T>, std: Array1<T>, cfg: &NormConfig<T>) -> Result<Self, NnError> {
        if mean.len() != std.len() {
            return Err(NnError::StyleLengthMismatch {
                mean: mean.len(),
                std: std.len(),
            });
        }
        let floor = cfg.epsilon().sqrt();
        for (channel, &value) in std.iter().enumerate() {
            if !(value >= floor) || !value.is_finite() {
                return Err(NnError::StdBelowFloor {
                    channel,
                    value: value.to_f64_lossless(),
                    floor: floor.to_f64_lossless(),
                });
            }
        }
        Ok(Self { mean, std })
    }

    pub(crate) fn from_parts_unchecked(mean: Array1<T>, std: Array1<T>) -> Self {
        Self { mean, std }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Array1<T> {
        &self.mean
    }

    pub fn std(&self) -> &Array1<T> {
        &self.std
    }
}

/// Applies `weights · input + bias` to every vertex column.
pub fn pointwise_linear<T: Scalar>(
    input: &FeatureMap<T>,
    weights: &Array2<T>,
    bias: &Array1<T>,
) -> Result<FeatureMap<T>, NnError> {
    if weights.ncols() != input.channels() {
        return Err(NnError::ChannelMismatch {
            expected: weights.ncols(),
            found: input.channels(),
        });
    }
    if bias.len() != weights.nrows() {
        return Err(NnError::ChannelMismatch {
            expected: weights.nrows(),
            found: bias.len(),
        });
    }
    let layer = Linear {
        weight: weights.clone(),
        bias: bias.clone(),
    };
    Ok(FeatureMap {
        data: layer.forward(input.data()),
    })
}

/// Standardizes every channel over the vertex axis of a single sample.
pub fn instance_norm<T: Scalar>(
    input: &FeatureMap<T>,
    cfg: &NormConfig<T>,
) -> Result<FeatureMap<T>, NnError> {
    check_vertices(input.num_vertices())?;
    let (y, _) = instance_norm_forward(input.data(), cfg.epsilon());
    Ok(FeatureMap { data: y })
}

/// Channel mean and `sqrt(population variance + ε)` over the vertex axis.
pub fn style_stats<T: Scalar>(
    features: &FeatureMap<T>,
    cfg: &NormConfig<T>,
) -> Result<StyleStats<T>, NnError> {
    check_vertices(features.num_vertices())?;
    Ok(norm::style_stats_forward(features.data(), cfg.epsilon()))
}

/// Re-centres and re-scales the normalized input with the style's statistics.
pub fn ada_in<T: Scalar>(
    input: &FeatureMap<T>,
    style: &StyleStats<T>,
    cfg: &NormConfig<T>,
) -> Result<FeatureMap<T>, NnError> {
    check_style(input.channels(), style)?;
    check_vertices(input.num_vertices())?;
    let (out, _) = ada_in_forward(input.data(), style, cfg.epsilon());
    Ok(FeatureMap { data: out })
}

/// `input + f(input, style)` with two AdaIN → ReLU → linear sub-units in `f`.
pub fn adaptive_res_block<T: Scalar>(
    input: &FeatureMap<T>,
    style: &StyleStats<T>,
    params: &AdaptiveResBlock<T>,
    cfg: &NormConfig<T>,
) -> Result<FeatureMap<T>, NnError> {
    if input.channels() != params.width() {
        return Err(NnError::ChannelMismatch {
            expected: params.width(),
            found: input.channels(),
        });
    }
    check_style(input.channels(), style)?;
    check_vertices(input.num_vertices())?;
    let (out, _) = params.forward(input.data(), style, cfg.epsilon());
    Ok(FeatureMap { data: out })
}

pub(crate) fn norm_stats<T: Scalar>(x: &Array2<T>, epsilon: T) -> StyleStats<T> {
    norm::style_stats_forward(x, epsilon)
}

fn check_vertices(n: usize) -> Result<(), NnError> {
    if n < 2 {
        Err(NnError::TooFewVertices(n))
    } else {
        Ok(())
    }
}

fn check_style<T: Scalar>(channels: usize, style: &StyleStats<T>) -> Result<(), NnError> {
    if style.channels() != channels {
        Err(NnError::ChannelMismatch {
            expected: channels,
            found: style.channels(),
        })
    } else {
        Ok(())
    }
}

pub(crate) fn relu_inplace<T: Scalar>(x: &mut Array2<T>) {
    x.mapv_inplace(|v| v.max(T::zero()));
}

/// Zeroes `grad` wherever the ReLU output was not positive.
pub(crate) fn relu_backward_inplace<T: Scalar>(output: &Array2<T>, grad: &mut Array2<T>) {
    ndarray::Zip::from(grad).and(output).for_each(|g, &o| {
        if o <= T::zero() {
            *g = T::zero();
        }
    });
}
