//! Single-file model container: magic tag, format version, a JSON header and
//! raw little-endian `f64` tensor data. Values of either precision widen to
//! `f64` losslessly, so a save/load cycle is bit-exact.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::dataset::Normalization;
use crate::models::{ModelConfig, ShapeStyleModel};
use crate::nn::NormConfig;
use crate::optim::{Adam, AdamConfig};
use crate::params::Parameters;
use crate::scalar::Scalar;
use crate::training::TrainConfig;

const MAGIC: &[u8; 8] = b"MSTYLECK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic tag)")]
    BadMagic,
    #[error("unsupported checkpoint format version {0}")]
    Version(u32),
    #[error("checkpoint stores {stored} parameters, {requested} was requested")]
    Dtype { stored: String, requested: String },
    #[error("malformed checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint is truncated or has trailing data")]
    Length,
    #[error("tensor {name}: {message}")]
    Tensor { name: String, message: String },
    #[error("invalid normalization epsilon: {0}")]
    Epsilon(String),
}

/// Optimizer and schedule state needed to continue a run exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingState<T> {
    /// Number of completed training steps.
    pub step: u64,
    pub config: TrainConfig,
    pub generator_opt: Adam<T>,
    pub discriminator_opt: Adam<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub model: ShapeStyleModel<T>,
    pub training: Option<TrainingState<T>>,
}

#[derive(Serialize, Deserialize)]
struct OptimizerHeader {
    config: AdamConfig,
    steps: u64,
}

#[derive(Serialize, Deserialize)]
struct TrainingHeader {
    step: u64,
    config: TrainConfig,
    generator_opt: OptimizerHeader,
    discriminator_opt: OptimizerHeader,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    dtype: String,
    model: ModelConfig,
    norm_epsilon: f64,
    normalization: Normalization,
    template_id: String,
    num_vertices: usize,
    training: Option<TrainingHeader>,
    tensors: Vec<TensorEntry>,
}

fn push_tensors<T: Scalar, P: Parameters<T>>(
    prefix: &str,
    params: &P,
    entries: &mut Vec<TensorEntry>,
    data: &mut Vec<u8>,
) {
    for (name, t) in params.named_tensors() {
        entries.push(TensorEntry {
            name: format!("{prefix}.{name}"),
            shape: t.shape().to_vec(),
        });
        for &v in t.iter() {
            data.extend_from_slice(&v.to_f64_lossless().to_le_bytes());
        }
    }
}

fn push_moments<T: Scalar>(
    prefix: &str,
    names: &[String],
    moments: &[ArrayD<T>],
    entries: &mut Vec<TensorEntry>,
    data: &mut Vec<u8>,
) {
    for (name, t) in names.iter().zip(moments) {
        entries.push(TensorEntry {
            name: format!("{prefix}.{name}"),
            shape: t.shape().to_vec(),
        });
        for &v in t.iter() {
            data.extend_from_slice(&v.to_f64_lossless().to_le_bytes());
        }
    }
}

fn names<T: Scalar, P: Parameters<T>>(p: &P) -> Vec<String> {
    p.named_tensors().into_iter().map(|(n, _)| n).collect()
}

/// Serializes a model and optional training state.
pub fn to_bytes<T: Scalar>(model: &ShapeStyleModel<T>, training: Option<&TrainingState<T>>) -> Vec<u8> {
    let mut entries = Vec::new();
    let mut data = Vec::new();
    push_tensors("generator", &model.generator, &mut entries, &mut data);
    push_tensors("discriminator", &model.discriminator, &mut entries, &mut data);
    let training_header = training.map(|t| {
        let g = names(&model.generator);
        let d = names(&model.discriminator);
        push_moments("adam.generator.first", &g, &t.generator_opt.first, &mut entries, &mut data);
        push_moments("adam.generator.second", &g, &t.generator_opt.second, &mut entries, &mut data);
        push_moments("adam.discriminator.first", &d, &t.discriminator_opt.first, &mut entries, &mut data);
        push_moments("adam.discriminator.second", &d, &t.discriminator_opt.second, &mut entries, &mut data);
        TrainingHeader {
            step: t.step,
            config: t.config.clone(),
            generator_opt: OptimizerHeader {
                config: t.generator_opt.config,
                steps: t.generator_opt.steps,
            },
            discriminator_opt: OptimizerHeader {
                config: t.discriminator_opt.config,
                steps: t.discriminator_opt.steps,
            },
        }
    });
    let header = Header {
        dtype: T::DTYPE.to_owned(),
        model: model.config.clone(),
        norm_epsilon: model.norm.epsilon().to_f64_lossless(),
        normalization: model.normalization.clone(),
        template_id: model.template_id.clone(),
        num_vertices: model.num_vertices,
        training: training_header,
        tensors: entries,
    };
    let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
    let mut out = Vec::with_capacity(MAGIC.len() + 12 + json.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&data);
    out
}

struct Reader<'a> {
    entries: std::slice::Iter<'a, TensorEntry>,
    data: &'a [u8],
}

impl Reader<'_> {
    fn next(&mut self, expected_name: &str, expected_shape: &[usize]) -> Result<Vec<f64>, CheckpointError> {
        let entry = self.entries.next().ok_or_else(|| CheckpointError::Tensor {
            name: expected_name.to_owned(),
            message: "missing".into(),
        })?;
        if entry.name != expected_name || entry.shape != expected_shape {
            return Err(CheckpointError::Tensor {
                name: expected_name.to_owned(),
                message: format!(
                    "expected shape {expected_shape:?}, file has {} {:?}",
                    entry.name, entry.shape
                ),
            });
        }
        let n: usize = entry.shape.iter().product();
        if self.data.len() < n * 8 {
            return Err(CheckpointError::Length);
        }
        let (head, rest) = self.data.split_at(n * 8);
        self.data = rest;
        Ok(head
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn fill<T: Scalar, P: Parameters<T>>(&mut self, prefix: &str, params: &mut P) -> Result<(), CheckpointError> {
        let layout: Vec<(String, Vec<usize>)> = params
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (format!("{prefix}.{n}"), t.shape().to_vec()))
            .collect();
        for ((name, shape), mut dst) in layout.iter().zip(params.tensors_mut()) {
            let values = self.next(name, shape)?;
            for (d, v) in dst.iter_mut().zip(values) {
                *d = T::from_f64_rounded(v);
            }
        }
        Ok(())
    }

    fn moments<T: Scalar, P: Parameters<T>>(
        &mut self,
        prefix: &str,
        params: &P,
    ) -> Result<Vec<ArrayD<T>>, CheckpointError> {
        params
            .named_tensors()
            .into_iter()
            .map(|(n, t)| {
                let values = self.next(&format!("{prefix}.{n}"), t.shape())?;
                let values = values.into_iter().map(T::from_f64_rounded).collect();
                Ok(ArrayD::from_shape_vec(IxDyn(t.shape()), values).expect("shape checked"))
            })
            .collect()
    }
}

/// Parses bytes written by [`to_bytes`] at precision `T`.
pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>, CheckpointError> {
    if bytes.len() < MAGIC.len() + 12 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let rest = &bytes[MAGIC.len()..];
    let version = u32::from_le_bytes(rest[..4].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let header_len = u64::from_le_bytes(rest[4..12].try_into().unwrap()) as usize;
    let rest = &rest[12..];
    if rest.len() < header_len {
        return Err(CheckpointError::Length);
    }
    let header: Header = serde_json::from_slice(&rest[..header_len])?;
    if header.dtype != T::DTYPE {
        return Err(CheckpointError::Dtype {
            stored: header.dtype,
            requested: T::DTYPE.to_owned(),
        });
    }
    let norm = NormConfig::new(T::from_f64_rounded(header.norm_epsilon))
        .map_err(|e| CheckpointError::Epsilon(e.to_string()))?;
    let mut model = ShapeStyleModel::for_template_id(
        header.model,
        norm,
        header.normalization,
        header.template_id,
        header.num_vertices,
    );
    let mut reader = Reader {
        entries: header.tensors.iter(),
        data: &rest[header_len..],
    };
    reader.fill("generator", &mut model.generator)?;
    reader.fill("discriminator", &mut model.discriminator)?;
    let training = match header.training {
        None => None,
        Some(t) => {
            let g_first = reader.moments("adam.generator.first", &model.generator)?;
            let g_second = reader.moments("adam.generator.second", &model.generator)?;
            let d_first = reader.moments("adam.discriminator.first", &model.discriminator)?;
            let d_second = reader.moments("adam.discriminator.second", &model.discriminator)?;
            Some(TrainingState {
                step: t.step,
                config: t.config,
                generator_opt: Adam {
                    config: t.generator_opt.config,
                    steps: t.generator_opt.steps,
                    first: g_first,
                    second: g_second,
                },
                discriminator_opt: Adam {
                    config: t.discriminator_opt.config,
                    steps: t.discriminator_opt.steps,
                    first: d_first,
                    second: d_second,
                },
            })
        }
    };
    if reader.entries.next().is_some() || !reader.data.is_empty() {
        return Err(CheckpointError::Length);
    }
    Ok(Checkpoint { model, training })
}

/// Writes through a temporary file and renames it into place.
pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    model: &ShapeStyleModel<T>,
    training: Option<&TrainingState<T>>,
) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io {
        path: path.to_owned(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let tmp = path.with_extension("tmp");
    let mut file = fs::File::create(&tmp).map_err(io)?;
    file.write_all(&to_bytes(model, training)).map_err(io)?;
    file.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_owned(),
        source,
    })?;
    from_bytes(&bytes)
}
