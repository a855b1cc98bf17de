//! Transfer quality metrics in meters, per-split reports and ablation tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, PairIndex, Split};
use crate::mesh::Mesh;
use crate::models::{ModelError, ShapeStyleModel};
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("vertex count mismatch: {left} vs {right}")]
    CountMismatch { left: usize, right: usize },
    #[error("point set is empty")]
    Empty,
    #[error("model template {model} does not match dataset template {dataset}")]
    TemplateMismatch { model: String, dataset: String },
    #[error("split {0} has no evaluation pairs")]
    NoPairs(Split),
    #[error("an ablation table needs at least two configurations, got {0}")]
    TooFewConfigs(usize),
    #[error("configuration {name} has no report for split {split}")]
    MissingSplit { name: String, split: Split },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn dist_sq<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> f64 {
    let dx = a[0].to_f64_lossless() - b[0].to_f64_lossless();
    let dy = a[1].to_f64_lossless() - b[1].to_f64_lossless();
    let dz = a[2].to_f64_lossless() - b[2].to_f64_lossless();
    dx * dx + dy * dy + dz * dz
}

/// Root of the mean squared distance between corresponding vertices.
pub fn rmsd<T: Scalar>(a: &[[T; 3]], b: &[[T; 3]]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::CountMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(EvalError::Empty);
    }
    let sum: f64 = a.iter().zip(b).map(|(p, q)| dist_sq(p, q)).sum();
    Ok((sum / a.len() as f64).sqrt())
}

/// `sup_{p ∈ a} min_{q ∈ b} ‖p − q‖²`, skipping points that cannot raise the sup.
fn directed_sq<T: Scalar>(a: &[[T; 3]], b: &[[T; 3]]) -> f64 {
    let mut worst = 0.0f64;
    for p in a {
        let mut nearest = f64::INFINITY;
        for q in b {
            let d = dist_sq(p, q);
            if d < nearest {
                nearest = d;
                if nearest <= worst {
                    break;
                }
            }
        }
        worst = worst.max(nearest);
    }
    worst
}

/// Symmetric Hausdorff distance between two vertex sets.
pub fn hausdorff<T: Scalar>(a: &[[T; 3]], b: &[[T; 3]]) -> Result<f64, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(directed_sq(a, b).max(directed_sq(b, a)).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub posed: (usize, usize),
    pub identity: (usize, usize),
    /// Shape of the ground truth (the identity's shape).
    pub shape_id: usize,
    /// Pose of the ground truth (the posed input's pose).
    pub pose_id: usize,
    pub hausdorff: f64,
    pub rmsd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub split: Split,
    pub hausdorff_mean: f64,
    pub rmsd_mean: f64,
    pub records: Vec<PairRecord>,
}

impl MetricReport {
    pub fn from_records(split: Split, records: Vec<PairRecord>) -> Result<Self, EvalError> {
        if records.is_empty() {
            return Err(EvalError::NoPairs(split));
        }
        let n = records.len() as f64;
        Ok(Self {
            split,
            hausdorff_mean: records.iter().map(|r| r.hausdorff).sum::<f64>() / n,
            rmsd_mean: records.iter().map(|r| r.rmsd).sum::<f64>() / n,
            records,
        })
    }

    pub const CSV_HEADER: &'static str =
        "split,posed_shape,posed_pose,identity_shape,identity_pose,shape_id,pose_id,hausdorff,rmsd";

    /// One row per pair, then a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                self.split,
                r.posed.0,
                r.posed.1,
                r.identity.0,
                r.identity.1,
                r.shape_id,
                r.pose_id,
                r.hausdorff,
                r.rmsd
            );
        }
        let _ = writeln!(
            out,
            "{},mean,,,,,,{},{}",
            self.split, self.hausdorff_mean, self.rmsd_mean
        );
        out
    }
}

/// Scores a predictor over the deterministic evaluation pairs of `split`.
pub fn evaluate_with<T, F>(
    dataset: &Dataset<T>,
    split: Split,
    mut predict: F,
) -> Result<MetricReport, EvalError>
where
    T: Scalar,
    F: FnMut(&PairIndex) -> Result<Mesh<T>, EvalError>,
{
    let mut records = Vec::new();
    for pair in dataset.eval_pairs(split) {
        let out = predict(&pair)?;
        let gt = dataset.mesh(pair.ground_truth);
        records.push(PairRecord {
            posed: pair.posed,
            identity: pair.identity,
            shape_id: pair.ground_truth.0,
            pose_id: pair.ground_truth.1,
            hausdorff: hausdorff(out.vertices(), gt.vertices())?,
            rmsd: rmsd(out.vertices(), gt.vertices())?,
        });
    }
    MetricReport::from_records(split, records)
}

/// Transfers every evaluation pair of `split` with `model`.
pub fn evaluate<T: Scalar>(
    model: &ShapeStyleModel<T>,
    dataset: &Dataset<T>,
    split: Split,
) -> Result<MetricReport, EvalError> {
    if model.template_id != dataset.template().id() {
        return Err(EvalError::TemplateMismatch {
            model: model.template_id.clone(),
            dataset: dataset.template().id().to_owned(),
        });
    }
    evaluate_with(dataset, split, |pair| {
        Ok(model.transfer(dataset.mesh(pair.posed), dataset.mesh(pair.identity))?)
    })
}

/// Reference predictor that returns the posed input unchanged.
pub fn copy_baseline<T: Scalar>(dataset: &Dataset<T>, split: Split) -> Result<MetricReport, EvalError> {
    evaluate_with(dataset, split, |pair| Ok(dataset.mesh(pair.posed).clone()))
}

/// Per-split HDFF/RMSE means for two or more named configurations.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub configs: Vec<String>,
    pub splits: Vec<Split>,
    /// `values[row][2 * config + {0: hausdorff, 1: rmsd}]`
    pub values: Vec<Vec<f64>>,
}

pub fn ablation_table(columns: &[(String, Vec<MetricReport>)]) -> Result<AblationTable, EvalError> {
    if columns.len() < 2 {
        return Err(EvalError::TooFewConfigs(columns.len()));
    }
    let mut splits: Vec<Split> = Vec::new();
    for (_, reports) in columns {
        for r in reports {
            if !splits.contains(&r.split) {
                splits.push(r.split);
            }
        }
    }
    let mut values = Vec::with_capacity(splits.len());
    for &split in &splits {
        let mut row = Vec::with_capacity(2 * columns.len());
        for (name, reports) in columns {
            let r = reports
                .iter()
                .find(|r| r.split == split)
                .ok_or_else(|| EvalError::MissingSplit {
                    name: name.clone(),
                    split,
                })?;
            row.push(r.hausdorff_mean);
            row.push(r.rmsd_mean);
        }
        values.push(row);
    }
    Ok(AblationTable {
        configs: columns.iter().map(|(n, _)| n.clone()).collect(),
        splits,
        values,
    })
}

impl AblationTable {
    fn headers(&self) -> Vec<String> {
        let mut h = vec!["split".to_owned()];
        for c in &self.configs {
            h.push(format!("{c} HDFF"));
            h.push(format!("{c} RMSE"));
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.headers().join(",");
        out.push('\n');
        for (split, row) in self.splits.iter().zip(&self.values) {
            out.push_str(&split.to_string());
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Right-aligned columns, values in meters with six decimals.
    pub fn to_text(&self) -> String {
        let headers = self.headers();
        let rows: Vec<Vec<String>> = self
            .splits
            .iter()
            .zip(&self.values)
            .map(|(s, row)| {
                std::iter::once(s.to_string())
                    .chain(row.iter().map(|v| format!("{v:.6}")))
                    .collect()
            })
            .collect();
        let widths: Vec<usize> = (0..headers.len())
            .map(|c| rows.iter().map(|r| r[c].len()).chain([headers[c].len()]).max().unwrap())
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut out = line(&headers);
        out.push('\n');
        for r in &rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }
}
