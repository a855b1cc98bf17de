//! Alternating discriminator / generator optimization with checkpoints,
//! a per-step CSV loss log and periodic evaluation.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, TrainingState};
use crate::dataset::{Dataset, DatasetError, PairIndex, Split};
use crate::evaluation::{evaluate, EvalError};
use crate::losses::{
    loss_adversarial_grad, loss_discriminator_grad, loss_dist_grad, loss_edge_grad,
    loss_rec_grad, loss_total, AdversarialMode, EdgeMode, LossComponents, LossError,
    LossReport, LossWeights, Reduction,
};
use crate::mesh::EdgeSet;
use crate::models::{Discriminator, Generator, GeneratorTape, ModelConfig, ShapeStyleModel};
use crate::nn::NormConfig;
use crate::optim::{Adam, AdamConfig};
use crate::params::Parameters;
use crate::scalar::{lit, Scalar};

pub const LOSS_LOG: &str = "loss.csv";
pub const METRICS_LOG: &str = "metrics.csv";
pub const CONFIG_JSON: &str = "train_config.json";
pub const LATEST_CHECKPOINT: &str = "latest.ckpt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const DIAGNOSTIC_JSON: &str = "diagnostic.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub generator_lr: f64,
    pub discriminator_lr: f64,
    pub weights: LossWeights,
    pub seed: u64,
    /// 0 disables periodic checkpoints; the final one is always written.
    pub checkpoint_every: u64,
    /// 0 disables periodic evaluation.
    pub eval_every: u64,
    pub edge_mode: EdgeMode,
    pub reduction: Reduction,
    pub adversarial_mode: AdversarialMode,
    /// Off: no discriminator updates and no adversarial term.
    pub use_discriminator: bool,
    pub model: ModelConfig,
    pub norm_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 8,
            generator_lr: 1e-4,
            discriminator_lr: 1e-4,
            weights: LossWeights::default(),
            seed: 0,
            checkpoint_every: 500,
            eval_every: 500,
            edge_mode: EdgeMode::default(),
            reduction: Reduction::default(),
            adversarial_mode: AdversarialMode::default(),
            use_discriminator: true,
            model: ModelConfig::default(),
            norm_epsilon: 1e-5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.steps == 0 {
            return bad("steps must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        for (name, lr) in [
            ("generator_lr", self.generator_lr),
            ("discriminator_lr", self.discriminator_lr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be positive, got {lr}"));
            }
        }
        if !(self.norm_epsilon > 0.0 && self.norm_epsilon.is_finite()) {
            return bad(format!("norm_epsilon must be positive, got {}", self.norm_epsilon));
        }
        let m = &self.model;
        if m.encoder_widths
            .iter()
            .chain(&m.decoder_widths)
            .chain(&m.discriminator_widths)
            .chain([&m.discriminator_hidden])
            .any(|&w| w == 0)
        {
            return bad("model widths must be positive".into());
        }
        self.weights.validate().map_err(TrainError::Config)
    }

    /// Weights actually applied: the adversarial term is dropped without a discriminator.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.weights;
        if !self.use_discriminator {
            w.adver = 0.0;
        }
        w
    }
}

/// State captured when a step produces a non-finite loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub step: u64,
    pub component: String,
    pub rec: f64,
    pub edge: f64,
    pub dist: f64,
    pub adver: f64,
    pub disc: f64,
    pub pairs: Vec<[usize; 6]>,
    pub max_abs_output: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("loss error at step {step}: {source}")]
    Loss {
        step: u64,
        #[source]
        source: LossError,
    },
    #[error("non-finite {} loss at step {} (rec {}, edge {}, dist {}, adver {}, disc {}, max |output| {})",
        .0.component, .0.step, .0.rec, .0.edge, .0.dist, .0.adver, .0.disc, .0.max_abs_output)]
    NonFinite(Box<Diagnostic>),
    #[error("checkpoint template {checkpoint} does not match dataset template {dataset}")]
    TemplateMismatch { checkpoint: String, dataset: String },
    #[error("checkpoint has no training state to resume from")]
    NotResumable,
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Model, optimizers and step counter of one run.
#[derive(Clone, Debug)]
pub struct Trainer<T: Scalar> {
    pub config: TrainConfig,
    pub model: ShapeStyleModel<T>,
    pub generator_opt: Adam<T>,
    pub discriminator_opt: Adam<T>,
    step: u64,
    edges: EdgeSet,
}

impl<T: Scalar> Trainer<T> {
    /// Fresh model initialized from `config.seed`.
    pub fn new(config: TrainConfig, dataset: &Dataset<T>) -> Result<Self, TrainError> {
        config.validate()?;
        if config.reduction == Reduction::Mean {
            log::info!("rec and edge losses are divided by their term counts (mean reduction)");
        }
        let norm = NormConfig::new(lit(config.norm_epsilon))
            .map_err(|e| TrainError::Config(e.to_string()))?;
        let model = ShapeStyleModel::init(
            config.model.clone(),
            norm,
            dataset.normalization().clone(),
            dataset.template(),
            config.seed,
        );
        let generator_opt = Adam::new(AdamConfig::with_learning_rate(config.generator_lr), &model.generator);
        let discriminator_opt = Adam::new(
            AdamConfig::with_learning_rate(config.discriminator_lr),
            &model.discriminator,
        );
        Ok(Self {
            edges: dataset.template().edge_set(),
            config,
            model,
            generator_opt,
            discriminator_opt,
            step: 0,
        })
    }

    /// Continues a run from a checkpoint that carries training state.
    pub fn resume(path: &Path, dataset: &Dataset<T>) -> Result<Self, TrainError> {
        let ckpt = load_checkpoint::<T>(path)?;
        if ckpt.model.template_id != dataset.template().id() {
            return Err(TrainError::TemplateMismatch {
                checkpoint: ckpt.model.template_id,
                dataset: dataset.template().id().to_owned(),
            });
        }
        let state = ckpt.training.ok_or(TrainError::NotResumable)?;
        state.config.validate()?;
        Ok(Self {
            edges: dataset.template().edge_set(),
            config: state.config,
            model: ckpt.model,
            generator_opt: state.generator_opt,
            discriminator_opt: state.discriminator_opt,
            step: state.step,
        })
    }

    /// Completed steps.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn training_state(&self) -> TrainingState<T> {
        TrainingState {
            step: self.step,
            config: self.config.clone(),
            generator_opt: self.generator_opt.clone(),
            discriminator_opt: self.discriminator_opt.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        Ok(save_checkpoint(path, &self.model, Some(&self.training_state()))?)
    }

    /// Batch for the current step, drawn from a stream keyed by `(seed, step)`.
    pub fn sample_batch(&self, dataset: &Dataset<T>) -> Result<Vec<PairIndex>, TrainError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(self.step + 1);
        (0..self.config.batch_size)
            .map(|_| Ok(dataset.sample_pair(&mut rng)?))
            .collect()
    }

    /// One sampled training step.
    pub fn train_step(&mut self, dataset: &Dataset<T>) -> Result<LossReport, TrainError> {
        let pairs = self.sample_batch(dataset)?;
        self.train_step_on(dataset, &pairs)
    }

    /// One discriminator update on real ground truth vs detached generator
    /// output, then one generator update against the updated discriminator.
    pub fn train_step_on(
        &mut self,
        dataset: &Dataset<T>,
        pairs: &[PairIndex],
    ) -> Result<LossReport, TrainError> {
        let step = self.step;
        let loss_err = |source| TrainError::Loss { step, source };
        let eps = self.model.norm.epsilon();
        let samples: Vec<Sample<'_, T>> = pairs.iter().map(|p| Sample::from_pair(dataset, p)).collect();
        let tapes: Vec<GeneratorTape<T>> = samples
            .iter()
            .map(|s| self.model.generator.forward(s.posed, s.identity, eps))
            .collect();

        let mut disc = 0.0;
        if self.config.use_discriminator {
            let real: Vec<&Array2<T>> = samples.iter().map(|s| s.ground_truth).collect();
            let fake: Vec<&Array2<T>> = tapes.iter().map(|t| t.output()).collect();
            let (value, grad) =
                discriminator_gradients(&self.model.discriminator, &real, &fake).map_err(loss_err)?;
            self.discriminator_opt.step(&mut self.model.discriminator, &grad);
            disc = value.to_f64_lossless();
        }

        let (mut components, grad) =
            gradients_from_tapes(&self.model, &samples, &tapes, &self.edges, &self.config)
                .map_err(loss_err)?;
        components.disc = disc;
        let report = loss_total(components, &self.config.effective_weights()).map_err(|e| match e {
            LossError::NonFinite { name, .. } => TrainError::NonFinite(Box::new(Diagnostic {
                step,
                component: name.to_owned(),
                rec: components.rec,
                edge: components.edge,
                dist: components.dist,
                adver: components.adver,
                disc: components.disc,
                pairs: pairs
                    .iter()
                    .map(|p| [p.posed.0, p.posed.1, p.identity.0, p.identity.1, p.ground_truth.0, p.ground_truth.1])
                    .collect(),
                max_abs_output: tapes
                    .iter()
                    .flat_map(|t| t.output().iter().map(|v| v.to_f64_lossless().abs()))
                    .fold(0.0, f64::max),
            })),
            other => loss_err(other),
        })?;
        self.generator_opt.step(&mut self.model.generator, &grad);
        self.step += 1;
        Ok(report)
    }

    /// Runs until `config.steps`, logging and checkpointing into `run_dir` if given.
    pub fn fit(&mut self, dataset: &Dataset<T>, run_dir: Option<&Path>) -> Result<Vec<LossReport>, TrainError> {
        let mut log = match run_dir {
            Some(dir) => Some(RunLog::open(dir, self)?),
            None => None,
        };
        let mut reports = Vec::new();
        while self.step < self.config.steps {
            let index = self.step;
            let report = match self.train_step(dataset) {
                Ok(r) => r,
                Err(TrainError::NonFinite(diag)) => {
                    if let Some(dir) = run_dir {
                        let path = dir.join(DIAGNOSTIC_JSON);
                        let json = serde_json::to_string_pretty(&*diag).expect("diagnostic serializes");
                        fs::write(&path, json).map_err(io_err(&path))?;
                    }
                    return Err(TrainError::NonFinite(diag));
                }
                Err(e) => return Err(e),
            };
            log::debug!("step {index}: total {:.6} rec {:.6}", report.total, report.rec);
            if let Some(log) = &mut log {
                log.loss(index, &report)?;
                if self.config.checkpoint_every > 0 && self.step % self.config.checkpoint_every == 0 {
                    log.flush()?;
                    self.save(&log.dir.join("checkpoints").join(format!("step_{:06}.ckpt", self.step)))?;
                    self.save(&log.dir.join(LATEST_CHECKPOINT))?;
                }
            }
            if self.config.eval_every > 0 && self.step % self.config.eval_every == 0 {
                for split in [Split::Train, Split::Validation] {
                    let m = evaluate(&self.model, dataset, split)?;
                    log::info!(
                        "step {}: {split} hausdorff {:.5} m, rmsd {:.5} m",
                        self.step,
                        m.hausdorff_mean,
                        m.rmsd_mean
                    );
                    if let Some(log) = &mut log {
                        log.metric(self.step, split, m.hausdorff_mean, m.rmsd_mean)?;
                    }
                }
            }
            reports.push(report);
        }
        if let Some(log) = &mut log {
            log.flush()?;
            self.save(&log.dir.join(FINAL_CHECKPOINT))?;
            self.save(&log.dir.join(LATEST_CHECKPOINT))?;
        }
        Ok(reports)
    }
}

/// Network-space coordinates of one training triple.
#[derive(Clone, Copy, Debug)]
pub struct Sample<'a, T> {
    pub posed: &'a Array2<T>,
    pub identity: &'a Array2<T>,
    pub ground_truth: &'a Array2<T>,
}

impl<'a, T: Scalar> Sample<'a, T> {
    pub fn from_pair(dataset: &'a Dataset<T>, pair: &PairIndex) -> Self {
        Self {
            posed: dataset.coords(pair.posed),
            identity: dataset.coords(pair.identity),
            ground_truth: dataset.coords(pair.ground_truth),
        }
    }
}

/// Discriminator loss over a batch of real and fake inputs and its parameter gradient.
pub fn discriminator_gradients<T: Scalar>(
    d: &Discriminator<T>,
    real: &[&Array2<T>],
    fake: &[&Array2<T>],
) -> Result<(T, Discriminator<T>), LossError> {
    let real_tapes: Vec<_> = real.iter().map(|x| d.forward(x)).collect();
    let fake_tapes: Vec<_> = fake.iter().map(|x| d.forward(x)).collect();
    let p_real: Vec<T> = real_tapes.iter().map(|t| t.probability()).collect();
    let p_fake: Vec<T> = fake_tapes.iter().map(|t| t.probability()).collect();
    let (value, d_real, d_fake) = loss_discriminator_grad(&p_real, &p_fake)?;
    let mut grad = d.zeros_like();
    for (tape, (&p, &g)) in real_tapes.iter().zip(p_real.iter().zip(&d_real)) {
        d.backward(tape, g * p * (T::one() - p), &mut grad);
    }
    for (tape, (&p, &g)) in fake_tapes.iter().zip(p_fake.iter().zip(&d_fake)) {
        d.backward(tape, g * p * (T::one() - p), &mut grad);
    }
    Ok((value, grad))
}

/// Batch-mean generator loss components (`disc` left at 0) and the gradient of
/// the weighted total with respect to every generator parameter.
pub fn generator_gradients<T: Scalar>(
    model: &ShapeStyleModel<T>,
    samples: &[Sample<'_, T>],
    edges: &EdgeSet,
    config: &TrainConfig,
) -> Result<(LossComponents, Generator<T>), LossError> {
    let eps = model.norm.epsilon();
    let tapes: Vec<_> = samples
        .iter()
        .map(|s| model.generator.forward(s.posed, s.identity, eps))
        .collect();
    gradients_from_tapes(model, samples, &tapes, edges, config)
}

fn gradients_from_tapes<T: Scalar>(
    model: &ShapeStyleModel<T>,
    samples: &[Sample<'_, T>],
    tapes: &[GeneratorTape<T>],
    edges: &EdgeSet,
    config: &TrainConfig,
) -> Result<(LossComponents, Generator<T>), LossError> {
    if samples.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let weights = config.effective_weights();
    let batch: T = T::from_usize(samples.len()).unwrap();
    let (w_rec, w_edge, w_dist): (T, T, T) = (lit(weights.rec), lit(weights.edge), lit(weights.dist));
    let mut sums = [T::zero(); 3];
    let mut d_outputs: Vec<Array2<T>> = Vec::with_capacity(samples.len());
    for (s, tape) in samples.iter().zip(tapes) {
        let out = tape.output().view();
        let (rec, g_rec) = loss_rec_grad(out, s.ground_truth.view(), config.reduction)?;
        let (edge, g_edge) =
            loss_edge_grad(out, s.identity.view(), edges, config.edge_mode, config.reduction)?;
        let (dist, g_dist) = loss_dist_grad(out, s.ground_truth.view())?;
        sums[0] += rec;
        sums[1] += edge;
        sums[2] += dist;
        d_outputs.push((g_rec * w_rec + g_edge * w_edge + g_dist * w_dist) / batch);
    }

    let mut adver = 0.0;
    if config.use_discriminator {
        let d = &model.discriminator;
        let fake: Vec<_> = tapes.iter().map(|t| d.forward(t.output())).collect();
        let p_fake: Vec<T> = fake.iter().map(|t| t.probability()).collect();
        let (value, d_p) = loss_adversarial_grad(&p_fake, config.adversarial_mode)?;
        let w_adver: T = lit(weights.adver);
        let mut scratch = d.zeros_like();
        for ((tape, (&p, &g)), d_out) in fake.iter().zip(p_fake.iter().zip(&d_p)).zip(&mut d_outputs) {
            let d_logit = w_adver * g * p * (T::one() - p);
            *d_out += &d.backward(tape, d_logit, &mut scratch);
        }
        adver = value.to_f64_lossless();
    }

    let gen = &model.generator;
    let mut grad = gen.zeros_like();
    for (tape, d_out) in tapes.iter().zip(&d_outputs) {
        gen.backward(tape, d_out, &mut grad);
    }
    let components = LossComponents {
        rec: (sums[0] / batch).to_f64_lossless(),
        edge: (sums[1] / batch).to_f64_lossless(),
        dist: (sums[2] / batch).to_f64_lossless(),
        adver,
        disc: 0.0,
    };
    Ok((components, grad))
}

struct RunLog {
    dir: PathBuf,
    loss: BufWriter<File>,
    metrics: BufWriter<File>,
}

/// Keeps the header and rows whose first field is below `step`.
fn truncate_log(path: &Path, header: &str, step: u64) -> Result<File, TrainError> {
    let mut kept = vec![header.to_owned()];
    if step > 0 && path.exists() {
        let file = File::open(path).map_err(io_err(path))?;
        for line in BufReader::new(file).lines().skip(1) {
            let line = line.map_err(io_err(path))?;
            let row_step = line.split(',').next().and_then(|s| s.parse::<u64>().ok());
            if row_step.is_some_and(|s| s < step) {
                kept.push(line);
            }
        }
    }
    let mut text = kept.join("\n");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))?;
    OpenOptions::new().append(true).open(path).map_err(io_err(path))
}

impl RunLog {
    fn open<T: Scalar>(dir: &Path, trainer: &Trainer<T>) -> Result<Self, TrainError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let config_path = dir.join(CONFIG_JSON);
        let json = serde_json::to_string_pretty(&trainer.config).expect("config serializes");
        fs::write(&config_path, json + "\n").map_err(io_err(&config_path))?;
        let step = trainer.step();
        let loss = truncate_log(&dir.join(LOSS_LOG), LossReport::CSV_HEADER, step)?;
        // metric rows are keyed by completed steps, so keep rows up to and including `step`
        let metrics = truncate_log(&dir.join(METRICS_LOG), "step,split,hausdorff,rmsd", step + 1)?;
        Ok(Self {
            dir: dir.to_owned(),
            loss: BufWriter::new(loss),
            metrics: BufWriter::new(metrics),
        })
    }

    fn loss(&mut self, step: u64, r: &LossReport) -> Result<(), TrainError> {
        let path = self.dir.join(LOSS_LOG);
        writeln!(self.loss, "{}", r.csv_row(step)).map_err(io_err(&path))
    }

    fn metric(&mut self, step: u64, split: Split, h: f64, r: f64) -> Result<(), TrainError> {
        let path = self.dir.join(METRICS_LOG);
        writeln!(self.metrics, "{step},{split},{h},{r}").map_err(io_err(&path))
    }

    fn flush(&mut self) -> Result<(), TrainError> {
        self.loss.flush().map_err(io_err(&self.dir.join(LOSS_LOG)))?;
        self.metrics.flush().map_err(io_err(&self.dir.join(METRICS_LOG)))
    }
}
