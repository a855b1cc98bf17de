//! Shape style transfer between 3D human meshes that share one template.
//!
//! A pose encoder reads the posed body, a style encoder reads the identity body,
//! and a decoder with adaptive instance normalization produces the posed body
//! with the identity's shape. Everything is generic over `f32`/`f64`.

pub mod checkpoint;
pub mod dataset;
pub mod evaluation;
pub mod losses;
pub mod mesh;
pub mod models;
pub mod nn;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod training;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use dataset::{Dataset, DatasetConfig, DatasetManifest, Normalization, PairIndex, Split};
pub use evaluation::{evaluate, hausdorff, rmsd, MetricReport};
pub use losses::{LossReport, LossWeights};
pub use mesh::{DistanceMatrix, EdgeSet, Mesh, MeshError, Template};
pub use models::{ModelConfig, ModelError, ShapeStyleModel};
pub use nn::{FeatureMap, NormConfig, StyleStats};
pub use scalar::Scalar;
pub use training::{TrainConfig, TrainError, Trainer};

pub type Mesh32 = Mesh<f32>;
pub type Mesh64 = Mesh<f64>;
pub type Model32 = ShapeStyleModel<f32>;
pub type Model64 = ShapeStyleModel<f64>;
pub type FeatureMap32 = FeatureMap<f32>;
pub type FeatureMap64 = FeatureMap<f64>;
pub type Trainer32 = Trainer<f32>;
pub type Trainer64 = Trainer<f64>;
