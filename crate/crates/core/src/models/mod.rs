//! The three networks: pose encoder, style-conditioned decoder and discriminator.

mod decoder;
mod discriminator;
mod encoder;

use std::sync::Arc;

use ndarray::{Array2, ArrayViewD, ArrayViewMutD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Normalization;
use crate::mesh::{Mesh, MeshError, Template};
use crate::nn::{FeatureMap, NnError, NormConfig, StyleStats};
use crate::params::{prefixed, Parameters};
use crate::scalar::Scalar;

pub use decoder::{Decoder, DecoderStage, DecoderTape};
pub use discriminator::{Discriminator, DiscriminatorTape};
pub use encoder::{Encoder, EncoderTape, StyleEncoder, StyleTape};


#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("mesh has {found} vertices but the model template has {expected}")]
    VertexCount { expected: usize, found: usize },
    #[error("mesh template {found} does not match model template {expected}")]
    Template { expected: String, found: String },
    #[error("expected {expected} style statistics, got {found}")]
    StyleCount { expected: usize, found: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Channel widths of every network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder_widths: [usize; 3],
    pub decoder_widths: [usize; 3],
    pub discriminator_widths: [usize; 3],
    pub discriminator_hidden: usize,
}

impl ModelConfig {
    /// Full widths: encoder 3→64→128→1024, decoder 1024→512→256→3.
    pub fn full() -> Self {
        Self {
            encoder_widths: [64, 128, 1024],
            decoder_widths: [1024, 512, 256],
            discriminator_widths: [64, 128, 256],
            discriminator_hidden: 64,
        }
    }

    /// Every width divided by `divisor` (at least one channel each).
    pub fn scaled_down(divisor: usize) -> Self {
        let d = divisor.max(1);
        let s = |w: [usize; 3]| w.map(|v| (v / d).max(1));
        let full = Self::full();
        Self {
            encoder_widths: s(full.encoder_widths),
            decoder_widths: s(full.decoder_widths),
            discriminator_widths: s(full.discriminator_widths),
            discriminator_hidden: (full.discriminator_hidden / d).max(1),
        }
    }

    pub fn latent_width(&self) -> usize {
        self.encoder_widths[2]
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::full()
    }
}

/// Encoder, style projections and decoder: everything updated by the generator step.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator<T> {
    pub encoder: Encoder<T>,
    pub style: StyleEncoder<T>,
    pub decoder: Decoder<T>,
}

#[derive(Clone, Debug)]
pub struct GeneratorTape<T> {
    pose: EncoderTape<T>,
    identity: EncoderTape<T>,
    style: StyleTape<T>,
    styles: Vec<StyleStats<T>>,
    decoder: DecoderTape<T>,
}

impl<T> GeneratorTape<T> {
    pub fn output(&self) -> &Array2<T> {
        self.decoder.output()
    }
}

impl<T: Scalar> Generator<T> {
    pub fn init<R: rand::Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Self {
        let latent = config.latent_width();
        Self {
            encoder: Encoder::init(config.encoder_widths, rng),
            style: StyleEncoder::init(latent, config.decoder_widths, rng),
            decoder: Decoder::init(latent, config.decoder_widths, rng),
        }
    }

    /// Both inputs are `3 × num_vertices` network-space coordinates.
    pub fn forward(&self, posed: &Array2<T>, identity: &Array2<T>, epsilon: T) -> GeneratorTape<T> {
        let pose = self.encoder.forward(posed);
        let identity = self.encoder.forward(identity);
        let (styles, style) = self.style.forward(identity.output(), epsilon);
        let decoder = self.decoder.forward(pose.output(), &styles, epsilon);
        GeneratorTape {
            pose,
            identity,
            style,
            styles,
            decoder,
        }
    }

    pub fn backward(&self, tape: &GeneratorTape<T>, d_output: &Array2<T>, grad: &mut Generator<T>) {
        let (d_pose, d_styles) =
            self.decoder
                .backward(&tape.decoder, &tape.styles, d_output, &mut grad.decoder);
        self.encoder.backward(&tape.pose, d_pose, &mut grad.encoder);
        let d_identity = self.style.backward(
            tape.identity.output(),
            &tape.style,
            &tape.styles,
            &d_styles,
            &mut grad.style,
        );
        self.encoder
            .backward(&tape.identity, d_identity, &mut grad.encoder);
    }
}

impl<T: Scalar> Parameters<T> for Generator<T> {
    fn named_tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        prefixed("encoder", self.encoder.named_tensors())
            .chain(prefixed("style", self.style.named_tensors()))
            .chain(prefixed("decoder", self.decoder.named_tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.style.tensors_mut());
        out.extend(self.decoder.tensors_mut());
        out
    }

    fn zeros_like(&self) -> Self {
        Self {
            encoder: self.encoder.zeros_like(),
            style: self.style.zeros_like(),
            decoder: self.decoder.zeros_like(),
        }
    }
}

/// A complete transfer model bound to one template and one coordinate normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeStyleModel<T> {
    pub config: ModelConfig,
    pub norm: NormConfig<T>,
    pub normalization: Normalization,
    pub template_id: String,
    pub num_vertices: usize,
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
}

impl<T: Scalar> ShapeStyleModel<T> {
    pub fn init(
        config: ModelConfig,
        norm: NormConfig<T>,
        normalization: Normalization,
        template: &Template,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let generator = Generator::init(&config, &mut rng);
        let discriminator =
            Discriminator::init(config.discriminator_widths, config.discriminator_hidden, &mut rng);
        Self {
            config,
            norm,
            normalization,
            template_id: template.id().to_owned(),
            num_vertices: template.num_vertices(),
            generator,
            discriminator,
        }
    }

    /// Model for a template known only by id and size; used when reading checkpoints.
    pub(crate) fn for_template_id(
        config: ModelConfig,
        norm: NormConfig<T>,
        normalization: Normalization,
        template_id: String,
        num_vertices: usize,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let generator = Generator::init(&config, &mut rng);
        let discriminator =
            Discriminator::init(config.discriminator_widths, config.discriminator_hidden, &mut rng);
        Self {
            config,
            norm,
            normalization,
            template_id,
            num_vertices,
            generator,
            discriminator,
        }
    }

    pub fn check_mesh(&self, mesh: &Mesh<T>) -> Result<(), ModelError> {
        if mesh.num_vertices() != self.num_vertices {
            return Err(ModelError::VertexCount {
                expected: self.num_vertices,
                found: mesh.num_vertices(),
            });
        }
        if mesh.template_id() != self.template_id {
            return Err(ModelError::Template {
                expected: self.template_id.clone(),
                found: mesh.template_id().to_owned(),
            });
        }
        Ok(())
    }

    fn check_columns(&self, coords: &Array2<T>) -> Result<(), ModelError> {
        if coords.ncols() != self.num_vertices {
            return Err(ModelError::VertexCount {
                expected: self.num_vertices,
                found: coords.ncols(),
            });
        }
        Ok(())
    }

    /// Per-vertex pose latent, `latent_width × num_vertices`.
    pub fn encode(&self, mesh: &Mesh<T>) -> Result<FeatureMap<T>, ModelError> {
        self.check_mesh(mesh)?;
        let coords = self.normalization.normalize(mesh);
        let tape = self.generator.encoder.forward(&coords);
        Ok(FeatureMap::new(tape.output().clone())?)
    }

    /// AdaIN conditions for the decoder stages, derived from the identity mesh.
    pub fn encode_style(&self, identity: &Mesh<T>) -> Result<Vec<StyleStats<T>>, ModelError> {
        self.check_mesh(identity)?;
        let coords = self.normalization.normalize(identity);
        let latent = self.generator.encoder.forward(&coords);
        let (styles, _) = self
            .generator
            .style
            .forward(latent.output(), self.norm.epsilon());
        Ok(styles)
    }

    /// Network-space `3 × num_vertices` output in `(-1, 1)`.
    pub fn decode(
        &self,
        pose_features: &FeatureMap<T>,
        styles: &[StyleStats<T>],
    ) -> Result<Array2<T>, ModelError> {
        let decoder = &self.generator.decoder;
        if pose_features.channels() != decoder.input_width() {
            return Err(NnError::ChannelMismatch {
                expected: decoder.input_width(),
                found: pose_features.channels(),
            }
            .into());
        }
        if pose_features.num_vertices() < 2 {
            return Err(NnError::TooFewVertices(pose_features.num_vertices()).into());
        }
        let widths = decoder.stage_widths();
        if styles.len() != widths.len() {
            return Err(ModelError::StyleCount {
                expected: widths.len(),
                found: styles.len(),
            });
        }
        for (s, &w) in styles.iter().zip(&widths) {
            if s.channels() != w {
                return Err(NnError::ChannelMismatch {
                    expected: w,
                    found: s.channels(),
                }
                .into());
            }
        }
        let tape = decoder.forward(pose_features.data(), styles, self.norm.epsilon());
        Ok(tape.output().clone())
    }

    /// Probability that network-space coordinates come from a real body.
    pub fn discriminate(&self, coords: &Array2<T>) -> Result<T, ModelError> {
        self.check_columns(coords)?;
        Ok(self.discriminator.forward(coords).probability())
    }

    /// Runs the generator on network-space coordinates.
    pub fn generate(&self, posed: &Array2<T>, identity: &Array2<T>) -> Result<Array2<T>, ModelError> {
        self.check_columns(posed)?;
        self.check_columns(identity)?;
        let tape = self.generator.forward(posed, identity, self.norm.epsilon());
        Ok(tape.decoder.output().clone())
    }

    /// Deforms `posed` to take on the body shape of `identity`. Output is in meters
    /// and keeps the posed mesh's connectivity.
    pub fn transfer(&self, posed: &Mesh<T>, identity: &Mesh<T>) -> Result<Mesh<T>, ModelError> {
        self.check_mesh(posed)?;
        self.check_mesh(identity)?;
        let out = self.generate(
            &self.normalization.normalize(posed),
            &self.normalization.normalize(identity),
        )?;
        let vertices = self.normalization.denormalize(&out);
        Ok(Mesh::with_template(vertices, Arc::clone(posed.template()))?)
    }
}
