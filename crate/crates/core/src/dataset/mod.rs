//! Synthetic body dataset: a shape × pose grid over one template, its
//! train/validation split, coordinate normalization and pair sampling.

mod body;

pub use body::{
    build_template, BodyError, BodyModel, Resolution, JOINT_RANGES, NUM_JOINTS,
    NUM_SHAPE_PARAMS, SHAPE_PARAM_NAMES, SHAPE_RANGE,
};

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mesh::{load_mesh, save_mesh, Mesh, MeshError, Template};
use crate::scalar::Scalar;

/// Half-width of the network coordinate box the training data is mapped into.
pub const NORMALIZED_EXTENT: f64 = 0.95;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.txt";
pub const MESH_DIR: &str = "meshes";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("invalid dataset configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Body(#[from] BodyError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path} has template {found}, manifest expects {expected}")]
    TemplateMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("no valid training pair can be formed")]
    NoPairs,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
        })
    }
}

/// Per-axis affine map from meters to network coordinates, `(x − center) · scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub center: [f64; 3],
    pub scale: [f64; 3],
}

impl Default for Normalization {
    fn default() -> Self {
        Self::identity()
    }
}

impl Normalization {
    pub fn identity() -> Self {
        Self {
            center: [0.0; 3],
            scale: [1.0; 3],
        }
    }

    /// Maps the joint bounding box of `meshes` onto `[-0.95, 0.95]` per axis.
    pub fn fit<'a>(meshes: impl IntoIterator<Item = &'a Mesh<f64>>) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for m in meshes {
            for v in m.vertices() {
                for k in 0..3 {
                    lo[k] = lo[k].min(v[k]);
                    hi[k] = hi[k].max(v[k]);
                }
            }
        }
        let mut out = Self::identity();
        for k in 0..3 {
            if lo[k] < hi[k] {
                out.center[k] = 0.5 * (lo[k] + hi[k]);
                out.scale[k] = NORMALIZED_EXTENT / (0.5 * (hi[k] - lo[k]));
            }
        }
        out
    }

    /// `3 × N` network coordinates of a mesh.
    pub fn normalize<T: Scalar>(&self, mesh: &Mesh<T>) -> Array2<T> {
        let n = mesh.num_vertices();
        let mut out = Array2::zeros((3, n));
        for (i, v) in mesh.vertices().iter().enumerate() {
            for k in 0..3 {
                let x = (v[k].to_f64_lossless() - self.center[k]) * self.scale[k];
                out[[k, i]] = T::from_f64_rounded(x);
            }
        }
        out
    }

    /// Vertex positions in meters from `3 × N` network coordinates.
    pub fn denormalize<T: Scalar>(&self, coords: &Array2<T>) -> Vec<[T; 3]> {
        (0..coords.ncols())
            .map(|i| {
                let mut v = [T::zero(); 3];
                for k in 0..3 {
                    let x = coords[[k, i]].to_f64_lossless() / self.scale[k] + self.center[k];
                    v[k] = T::from_f64_rounded(x);
                }
                v
            })
            .collect()
    }

    /// Converts a length measured in network units back to meters along axis `k`.
    pub fn axis_scale(&self, k: usize) -> f64 {
        self.scale[k]
    }
}

/// Grid dimensions and sampling seed; everything else is derived from these.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub num_shapes: usize,
    pub num_poses: usize,
    pub seed: u64,
    pub split_fraction: f64,
    #[serde(default)]
    pub resolution: Resolution,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            num_shapes: 4,
            num_poses: 6,
            seed: 7,
            split_fraction: 0.25,
            resolution: Resolution::Standard,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.num_shapes < 2 || self.num_poses < 2 {
            return Err(DatasetError::Config(format!(
                "need at least 2 shapes and 2 poses, got {}x{}",
                self.num_shapes, self.num_poses
            )));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(DatasetError::Config(format!(
                "split fraction must lie in (0, 1), got {}",
                self.split_fraction
            )));
        }
        let cells = self.num_shapes * self.num_poses;
        let budget = (self.split_fraction * cells as f64).round() as usize;
        if budget == 0 {
            return Err(DatasetError::Config(format!(
                "split fraction {} leaves {} of {} bodies for validation",
                self.split_fraction, budget, cells
            )));
        }
        Ok(())
    }

    /// `key = value` lines, `#` starts a comment.
    pub fn to_text(&self) -> String {
        format!(
            "# synthetic body dataset\nshapes = {}\nposes = {}\nseed = {}\nsplit = {}\nresolution = {}\n",
            self.num_shapes, self.num_poses, self.seed, self.split_fraction, self.resolution
        )
    }

    pub fn from_text(text: &str) -> Result<Self, DatasetError> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| DatasetError::Config(format!("line {}: {msg}", n + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key = value, got {line:?}")))?;
            let value = value.trim();
            let num = |v: &str| v.parse::<u64>().map_err(|e| bad(format!("{key}: {e}")));
            match key.trim() {
                "shapes" => cfg.num_shapes = num(value)? as usize,
                "poses" => cfg.num_poses = num(value)? as usize,
                "seed" => cfg.seed = num(value)?,
                "split" => {
                    cfg.split_fraction = value
                        .parse()
                        .map_err(|e| bad(format!("split: {e}")))?
                }
                "resolution" => cfg.resolution = value.parse().map_err(bad)?,
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One body of the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodySpec {
    pub shape_id: usize,
    pub pose_id: usize,
    pub split: Split,
    pub shape_params: Vec<f64>,
    pub pose_params: Vec<f64>,
}

impl BodySpec {
    pub fn file_name(&self) -> String {
        mesh_file_name(self.shape_id, self.pose_id)
    }
}

pub fn mesh_file_name(shape: usize, pose: usize) -> String {
    format!("shape{shape}_pose{pose}.obj")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: DatasetConfig,
    pub template_id: String,
    pub num_vertices: usize,
    /// Row-major over `(shape, pose)`.
    pub bodies: Vec<BodySpec>,
    /// Fitted on the training split only.
    pub normalization: Normalization,
}

impl DatasetManifest {
    pub fn body(&self, shape: usize, pose: usize) -> &BodySpec {
        &self.bodies[shape * self.config.num_poses + pose]
    }

    pub fn split_of(&self, shape: usize, pose: usize) -> Split {
        self.body(shape, pose).split
    }

    pub fn cells(&self, split: Split) -> Vec<(usize, usize)> {
        self.bodies
            .iter()
            .filter(|b| b.split == split)
            .map(|b| (b.shape_id, b.pose_id))
            .collect()
    }

    /// Shapes with no training body at all.
    pub fn held_out_shapes(&self) -> Vec<usize> {
        (0..self.config.num_shapes)
            .filter(|&s| (0..self.config.num_poses).all(|p| self.split_of(s, p) == Split::Validation))
            .collect()
    }
}

fn sample_params(rng: &mut ChaCha8Rng, ranges: &[(f64, f64)]) -> Vec<f64> {
    ranges.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect()
}

/// Split assignment: whole shapes are held out first, any remaining validation
/// budget goes to single cells of seen shapes.
fn assign_splits(cfg: &DatasetConfig, rng: &mut ChaCha8Rng) -> Vec<Split> {
    let (s, p) = (cfg.num_shapes, cfg.num_poses);
    let budget = (cfg.split_fraction * (s * p) as f64).round() as usize;
    let mut held = ((cfg.split_fraction * s as f64).floor() as usize).clamp(1, s - 1);
    while held > 1 && held * p > budget {
        held -= 1;
    }
    let mut shapes: Vec<usize> = (0..s).collect();
    shapes.shuffle(rng);
    let mut splits = vec![Split::Train; s * p];
    let held_out = &shapes[..held];
    for &shape in held_out {
        for pose in 0..p {
            splits[shape * p + pose] = Split::Validation;
        }
    }
    let mut remaining = budget.saturating_sub(held * p);
    let mut candidates: Vec<(usize, usize)> = shapes[held..]
        .iter()
        .flat_map(|&shape| (0..p).map(move |pose| (shape, pose)))
        .collect();
    candidates.shuffle(rng);
    for (shape, pose) in candidates {
        if remaining == 0 {
            break;
        }
        // keep two training poses per seen shape and one training body per pose
        let shape_train = (0..p).filter(|&q| splits[shape * p + q] == Split::Train).count();
        let pose_train = (0..s).filter(|&b| splits[b * p + pose] == Split::Train).count();
        if shape_train > 2 && pose_train > 1 {
            splits[shape * p + pose] = Split::Validation;
            remaining -= 1;
        }
    }
    splits
}

/// Samples body parameters and the split for a grid and fits normalization on
/// the training bodies.
pub fn make_manifest(config: DatasetConfig) -> Result<DatasetManifest, DatasetError> {
    config.validate()?;
    let model = BodyModel::new(config.resolution);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let shape_ranges = [SHAPE_RANGE; NUM_SHAPE_PARAMS];
    let shapes: Vec<Vec<f64>> = (0..config.num_shapes)
        .map(|_| sample_params(&mut rng, &shape_ranges))
        .collect();
    let poses: Vec<Vec<f64>> = (0..config.num_poses)
        .map(|_| sample_params(&mut rng, &JOINT_RANGES))
        .collect();
    let splits = assign_splits(&config, &mut rng);
    let mut bodies = Vec::with_capacity(splits.len());
    for (s, shape) in shapes.iter().enumerate() {
        for (p, pose) in poses.iter().enumerate() {
            bodies.push(BodySpec {
                shape_id: s,
                pose_id: p,
                split: splits[s * config.num_poses + p],
                shape_params: shape.clone(),
                pose_params: pose.clone(),
            });
        }
    }
    let train: Vec<Mesh<f64>> = bodies
        .iter()
        .filter(|b| b.split == Split::Train)
        .map(|b| model.generate(&b.shape_params, &b.pose_params))
        .collect::<Result<_, _>>()?;
    Ok(DatasetManifest {
        template_id: model.template().id().to_owned(),
        num_vertices: model.template().num_vertices(),
        normalization: Normalization::fit(&train),
        config,
        bodies,
    })
}

/// Cells `(shape, pose)` of a transfer triple: the posed input, the identity
/// input and the ground truth `(identity shape, posed pose)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PairIndex {
    pub posed: (usize, usize),
    pub identity: (usize, usize),
    pub ground_truth: (usize, usize),
}

/// Every body of a manifest, in meters and in network coordinates.
#[derive(Clone, Debug)]
pub struct Dataset<T> {
    manifest: DatasetManifest,
    template: Arc<Template>,
    meshes: Vec<Mesh<T>>,
    coords: Vec<Array2<T>>,
}

impl<T: Scalar> Dataset<T> {
    /// Generates every body from its parameters.
    pub fn generate(manifest: DatasetManifest) -> Result<Self, DatasetError> {
        let model = BodyModel::new(manifest.config.resolution);
        if model.template().id() != manifest.template_id {
            return Err(DatasetError::TemplateMismatch {
                path: PathBuf::from(MANIFEST_FILE),
                expected: manifest.template_id.clone(),
                found: model.template().id().to_owned(),
            });
        }
        let meshes = manifest
            .bodies
            .iter()
            .map(|b| Ok(model.generate(&b.shape_params, &b.pose_params)?.cast()))
            .collect::<Result<Vec<_>, DatasetError>>()?;
        Ok(Self::from_parts(manifest, Arc::clone(model.template()), meshes))
    }

    fn from_parts(manifest: DatasetManifest, template: Arc<Template>, meshes: Vec<Mesh<T>>) -> Self {
        let coords = meshes.iter().map(|m| manifest.normalization.normalize(m)).collect();
        Self {
            manifest,
            template,
            meshes,
            coords,
        }
    }

    /// Writes `manifest.json`, `config.txt` and one OBJ per body.
    pub fn save(&self, dir: &Path) -> Result<(), DatasetError> {
        let mesh_dir = dir.join(MESH_DIR);
        fs::create_dir_all(&mesh_dir).map_err(io_err(&mesh_dir))?;
        let manifest_path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&manifest_path, json + "\n").map_err(io_err(&manifest_path))?;
        let config_path = dir.join(CONFIG_FILE);
        fs::write(&config_path, self.manifest.config.to_text()).map_err(io_err(&config_path))?;
        for (b, mesh) in self.manifest.bodies.iter().zip(&self.meshes) {
            save_mesh(mesh, &mesh_dir.join(b.file_name()))?;
        }
        Ok(())
    }

    /// Reads a directory written by [`Dataset::save`].
    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|source| DatasetError::Manifest {
                path: manifest_path.clone(),
                source,
            })?;
        manifest.config.validate()?;
        let expected_len = manifest.config.num_shapes * manifest.config.num_poses;
        if manifest.bodies.len() != expected_len {
            return Err(DatasetError::Config(format!(
                "manifest lists {} bodies, grid has {expected_len}",
                manifest.bodies.len()
            )));
        }
        let mut template: Option<Arc<Template>> = None;
        let mut meshes = Vec::with_capacity(expected_len);
        for b in &manifest.bodies {
            let path = dir.join(MESH_DIR).join(b.file_name());
            let mut mesh: Mesh<T> = load_mesh(&path)?;
            if mesh.template_id() != manifest.template_id {
                return Err(DatasetError::TemplateMismatch {
                    path,
                    expected: manifest.template_id.clone(),
                    found: mesh.template_id().to_owned(),
                });
            }
            match &template {
                Some(t) => mesh = Mesh::with_template(mesh.vertices().to_vec(), Arc::clone(t))?,
                None => template = Some(Arc::clone(mesh.template())),
            }
            meshes.push(mesh);
        }
        let template = template.expect("grid has at least 4 bodies");
        Ok(Self::from_parts(manifest, template, meshes))
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn template(&self) -> &Arc<Template> {
        &self.template
    }

    pub fn normalization(&self) -> &Normalization {
        &self.manifest.normalization
    }

    pub fn num_shapes(&self) -> usize {
        self.manifest.config.num_shapes
    }

    pub fn num_poses(&self) -> usize {
        self.manifest.config.num_poses
    }

    fn index(&self, cell: (usize, usize)) -> usize {
        assert!(cell.0 < self.num_shapes() && cell.1 < self.num_poses(), "cell {cell:?} outside grid");
        cell.0 * self.num_poses() + cell.1
    }

    pub fn mesh(&self, cell: (usize, usize)) -> &Mesh<T> {
        &self.meshes[self.index(cell)]
    }

    /// `3 × N` network coordinates.
    pub fn coords(&self, cell: (usize, usize)) -> &Array2<T> {
        &self.coords[self.index(cell)]
    }

    pub fn split(&self, cell: (usize, usize)) -> Split {
        self.manifest.split_of(cell.0, cell.1)
    }

    fn train_poses(&self, shape: usize) -> Vec<usize> {
        (0..self.num_poses())
            .filter(|&p| self.split((shape, p)) == Split::Train)
            .collect()
    }

    /// Uniform training triple: the posed body is uniform over training bodies,
    /// the identity shape is uniform over shapes that can complete the triple
    /// inside the training split.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PairIndex, DatasetError> {
        let train = self.manifest.cells(Split::Train);
        if train.is_empty() {
            return Err(DatasetError::NoPairs);
        }
        // a bounded number of retries; the split rules make dead ends rare
        for _ in 0..64 {
            let posed = train[rng.random_range(0..train.len())];
            let pose = posed.1;
            let shapes: Vec<usize> = (0..self.num_shapes())
                .filter(|&b| {
                    self.split((b, pose)) == Split::Train
                        && self.train_poses(b).iter().any(|&q| q != pose)
                })
                .collect();
            if shapes.is_empty() {
                continue;
            }
            let b = shapes[rng.random_range(0..shapes.len())];
            let others: Vec<usize> = self.train_poses(b).into_iter().filter(|&q| q != pose).collect();
            let q = others[rng.random_range(0..others.len())];
            return Ok(PairIndex {
                posed,
                identity: (b, q),
                ground_truth: (b, pose),
            });
        }
        Err(DatasetError::NoPairs)
    }

    /// Deterministic evaluation triples whose ground truth lies in `split`.
    ///
    /// For each target `(b, p)` the posed input runs over every other shape in
    /// pose `p`. On the training split all three bodies are training bodies;
    /// on the validation split the identity is the next pose of the same shape.
    pub fn eval_pairs(&self, split: Split) -> Vec<PairIndex> {
        let (s, p) = (self.num_shapes(), self.num_poses());
        let mut out = Vec::new();
        for (b, pose) in self.manifest.cells(split) {
            let q = match split {
                Split::Train => match (1..p)
                    .map(|k| (pose + k) % p)
                    .find(|&q| self.split((b, q)) == Split::Train)
                {
                    Some(q) => q,
                    None => continue,
                },
                Split::Validation => (pose + 1) % p,
            };
            for a in (0..s).filter(|&a| a != b) {
                if split == Split::Train && self.split((a, pose)) != Split::Train {
                    continue;
                }
                out.push(PairIndex {
                    posed: (a, pose),
                    identity: (b, q),
                    ground_truth: (b, pose),
                });
            }
        }
        out
    }
}
