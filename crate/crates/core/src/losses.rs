//! Training objectives over `3 × num_vertices` coordinate arrays.
//!
//! Every loss has a `*_grad` companion returning the value together with the
//! gradient with respect to its first (generated) argument.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::mesh::EdgeSet;
use crate::scalar::{lit, Scalar};

/// Probability clamp applied on both sides before taking logs.
pub const PROBABILITY_CLAMP: f64 = 1e-7;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LossError {
    #[error("vertex count mismatch: {left} vs {right}")]
    CountMismatch { left: usize, right: usize },
    #[error("distance loss needs at least 2 vertices, found {0}")]
    TooFewVertices(usize),
    #[error("coordinates must have 3 rows, found {0}")]
    NotCoordinates(usize),
    #[error("probability {0} is outside [0, 1]")]
    BadProbability(f64),
    #[error("empty probability batch")]
    EmptyBatch,
    #[error("edge index {index} out of range for {num_vertices} vertices")]
    EdgeIndex { index: usize, num_vertices: usize },
    #[error("loss component {name} is not finite ({value})")]
    NonFinite { name: &'static str, value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    /// Plain sum over vertices (or edges).
    Sum,
    /// Sum divided by the number of vertices (or edge terms).
    #[default]
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeMode {
    /// `Σ_i Σ_{j ∈ ring(i)} ‖g_i − v_j‖²`, each undirected edge counted from both ends.
    Literal,
    /// `Σ_(a,b) (‖g_a − g_b‖ − ‖v_a − v_b‖)²` over undirected edges.
    #[default]
    LengthDifference,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AdversarialMode {
    /// Minimize `log(1 − D(G(z)))`.
    #[default]
    Saturating,
    /// Minimize `−log D(G(z))`.
    NonSaturating,
}

/// Scalar weights of the generator objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub adver: f64,
    pub rec: f64,
    pub edge: f64,
    pub dist: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            adver: 0.1,
            rec: 2.0,
            edge: 0.5,
            dist: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), String> {
        for (name, w) in [
            ("adver", self.adver),
            ("rec", self.rec),
            ("edge", self.edge),
            ("dist", self.dist),
        ] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(format!("loss weight {name} must be non-negative, got {w}"));
            }
        }
        Ok(())
    }
}

/// Unweighted loss values of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub rec: f64,
    pub edge: f64,
    pub dist: f64,
    pub adver: f64,
    pub disc: f64,
}

/// Named loss values plus the weighted generator total.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub rec: f64,
    pub edge: f64,
    pub dist: f64,
    pub adver: f64,
    pub disc: f64,
    pub total: f64,
}

impl LossReport {
    pub const CSV_HEADER: &'static str = "step,rec,edge,dist,adver,disc,total";

    pub fn csv_row(&self, step: u64) -> String {
        format!(
            "{step},{},{},{},{},{},{}",
            self.rec, self.edge, self.dist, self.adver, self.disc, self.total
        )
    }
}

/// Weighted generator objective. The discriminator loss is reported but not summed.
pub fn loss_total(c: LossComponents, weights: &LossWeights) -> Result<LossReport, LossError> {
    for (name, value) in [
        ("rec", c.rec),
        ("edge", c.edge),
        ("dist", c.dist),
        ("adver", c.adver),
        ("disc", c.disc),
    ] {
        if !value.is_finite() {
            return Err(LossError::NonFinite { name, value });
        }
    }
    let total =
        weights.adver * c.adver + weights.rec * c.rec + weights.edge * c.edge + weights.dist * c.dist;
    Ok(LossReport {
        rec: c.rec,
        edge: c.edge,
        dist: c.dist,
        adver: c.adver,
        disc: c.disc,
        total,
    })
}

fn check_pair<T>(a: &ArrayView2<T>, b: &ArrayView2<T>) -> Result<(), LossError> {
    if a.nrows() != 3 {
        return Err(LossError::NotCoordinates(a.nrows()));
    }
    if b.nrows() != 3 {
        return Err(LossError::NotCoordinates(b.nrows()));
    }
    if a.ncols() != b.ncols() {
        return Err(LossError::CountMismatch {
            left: a.ncols(),
            right: b.ncols(),
        });
    }
    Ok(())
}

#[inline]
fn column<T: Scalar>(x: &ArrayView2<T>, i: usize) -> [T; 3] {
    [x[[0, i]], x[[1, i]], x[[2, i]]]
}

#[inline]
fn sub<T: Scalar>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn norm_sq<T: Scalar>(a: [T; 3]) -> T {
    a[0] * a[0] + a[1] * a[1] + a[2] * a[2]
}

fn reduce<T: Scalar>(sum: T, count: usize, reduction: Reduction) -> (T, T) {
    match reduction {
        Reduction::Sum => (sum, T::one()),
        Reduction::Mean => {
            let scale = T::one() / T::from_usize(count.max(1)).unwrap();
            (sum * scale, scale)
        }
    }
}

/// Squared L2 distance between generated and target vertices.
pub fn loss_rec<T: Scalar>(
    generated: ArrayView2<T>,
    target: ArrayView2<T>,
    reduction: Reduction,
) -> Result<T, LossError> {
    Ok(loss_rec_grad(generated, target, reduction)?.0)
}

pub fn loss_rec_grad<T: Scalar>(
    generated: ArrayView2<T>,
    target: ArrayView2<T>,
    reduction: Reduction,
) -> Result<(T, Array2<T>), LossError> {
    check_pair(&generated, &target)?;
    let diff = &generated - &target;
    let sum = diff.iter().map(|&d| d * d).sum::<T>();
    let (value, scale) = reduce(sum, generated.ncols(), reduction);
    let two = lit::<T>(2.0) * scale;
    Ok((value, diff.mapv_into(|d| two * d)))
}

/// Edge regularizer between generated vertices and the identity mesh.
pub fn loss_edge<T: Scalar>(
    generated: ArrayView2<T>,
    identity: ArrayView2<T>,
    edges: &EdgeSet,
    mode: EdgeMode,
    reduction: Reduction,
) -> Result<T, LossError> {
    Ok(loss_edge_grad(generated, identity, edges, mode, reduction)?.0)
}

pub fn loss_edge_grad<T: Scalar>(
    generated: ArrayView2<T>,
    identity: ArrayView2<T>,
    edges: &EdgeSet,
    mode: EdgeMode,
    reduction: Reduction,
) -> Result<(T, Array2<T>), LossError> {
    check_pair(&generated, &identity)?;
    let n = generated.ncols();
    if let Some(&(_, b)) = edges.edges().iter().find(|&&(a, b)| a >= n || b >= n) {
        return Err(LossError::EdgeIndex {
            index: b,
            num_vertices: n,
        });
    }
    let mut grad = Array2::zeros((3, n));
    let mut sum = T::zero();
    let terms;
    match mode {
        EdgeMode::Literal => {
            terms = 2 * edges.len();
            let two = lit::<T>(2.0);
            for &(a, b) in edges.edges() {
                for (i, j) in [(a, b), (b, a)] {
                    let d = sub(column(&generated, i), column(&identity, j));
                    sum += norm_sq(d);
                    for c in 0..3 {
                        grad[[c, i]] += two * d[c];
                    }
                }
            }
        }
        EdgeMode::LengthDifference => {
            terms = edges.len();
            let two = lit::<T>(2.0);
            for &(a, b) in edges.edges() {
                let dg = sub(column(&generated, a), column(&generated, b));
                let lg = norm_sq(dg).sqrt();
                let lv = norm_sq(sub(column(&identity, a), column(&identity, b))).sqrt();
                let r = lg - lv;
                sum += r * r;
                if lg > T::zero() {
                    let k = two * r / lg;
                    for c in 0..3 {
                        grad[[c, a]] += k * dg[c];
                        grad[[c, b]] -= k * dg[c];
                    }
                }
            }
        }
    }
    let (value, scale) = reduce(sum, terms, reduction);
    grad.mapv_inplace(|g| g * scale);
    Ok((value, grad))
}

/// Mean squared difference of the upper-triangular distance matrices.
pub fn loss_dist<T: Scalar>(generated: ArrayView2<T>, target: ArrayView2<T>) -> Result<T, LossError> {
    Ok(loss_dist_grad(generated, target)?.0)
}

pub fn loss_dist_grad<T: Scalar>(
    generated: ArrayView2<T>,
    target: ArrayView2<T>,
) -> Result<(T, Array2<T>), LossError> {
    check_pair(&generated, &target)?;
    let n = generated.ncols();
    if n < 2 {
        return Err(LossError::TooFewVertices(n));
    }
    let g: Vec<[T; 3]> = (0..n).map(|i| column(&generated, i)).collect();
    let t: Vec<[T; 3]> = (0..n).map(|i| column(&target, i)).collect();
    let mut grad = vec![[T::zero(); 3]; n];
    let mut sum = T::zero();
    let count = n * (n - 1) / 2;
    let two_over_n = lit::<T>(2.0) / T::from_usize(count).unwrap();
    for a in 0..n {
        let mut acc = [T::zero(); 3];
        for b in (a + 1)..n {
            let dg = sub(g[a], g[b]);
            let lg = norm_sq(dg).sqrt();
            let lt = norm_sq(sub(t[a], t[b])).sqrt();
            let r = lg - lt;
            sum += r * r;
            if lg > T::zero() {
                let k = two_over_n * r / lg;
                for c in 0..3 {
                    acc[c] += k * dg[c];
                    grad[b][c] -= k * dg[c];
                }
            }
        }
        for c in 0..3 {
            grad[a][c] += acc[c];
        }
    }
    let value = sum / T::from_usize(count).unwrap();
    let grad = Array2::from_shape_fn((3, n), |(c, i)| grad[i][c]);
    Ok((value, grad))
}

fn check_probabilities<T: Scalar>(p: &[T]) -> Result<(), LossError> {
    if p.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    for &v in p {
        if !(v >= T::zero() && v <= T::one()) {
            return Err(LossError::BadProbability(v.to_f64_lossless()));
        }
    }
    Ok(())
}

/// `(clamped value, d clamped / d p)`
fn clamp<T: Scalar>(p: T) -> (T, T) {
    let lo = lit::<T>(PROBABILITY_CLAMP);
    let hi = T::one() - lo;
    if p < lo {
        (lo, T::zero())
    } else if p > hi {
        (hi, T::zero())
    } else {
        (p, T::one())
    }
}

/// `−mean(log p_real) − mean(log(1 − p_fake))`, the discriminator's maximization
/// objective negated for minimization.
pub fn loss_discriminator<T: Scalar>(p_real: &[T], p_fake: &[T]) -> Result<T, LossError> {
    Ok(loss_discriminator_grad(p_real, p_fake)?.0)
}

/// Value and gradients with respect to `p_real` and `p_fake`.
pub fn loss_discriminator_grad<T: Scalar>(
    p_real: &[T],
    p_fake: &[T],
) -> Result<(T, Vec<T>, Vec<T>), LossError> {
    check_probabilities(p_real)?;
    check_probabilities(p_fake)?;
    let nr = T::from_usize(p_real.len()).unwrap();
    let nf = T::from_usize(p_fake.len()).unwrap();
    let mut value = T::zero();
    let mut d_real = Vec::with_capacity(p_real.len());
    for &p in p_real {
        let (c, dc) = clamp(p);
        value -= c.ln() / nr;
        d_real.push(-dc / (c * nr));
    }
    let mut d_fake = Vec::with_capacity(p_fake.len());
    for &p in p_fake {
        let (c, dc) = clamp(p);
        value -= (T::one() - c).ln() / nf;
        d_fake.push(dc / ((T::one() - c) * nf));
    }
    Ok((value, d_real, d_fake))
}

/// Generator's adversarial term over a batch of fake probabilities.
pub fn loss_adversarial<T: Scalar>(p_fake: &[T], mode: AdversarialMode) -> Result<T, LossError> {
    Ok(loss_adversarial_grad(p_fake, mode)?.0)
}

pub fn loss_adversarial_grad<T: Scalar>(
    p_fake: &[T],
    mode: AdversarialMode,
) -> Result<(T, Vec<T>), LossError> {
    check_probabilities(p_fake)?;
    let n = T::from_usize(p_fake.len()).unwrap();
    let mut value = T::zero();
    let mut grad = Vec::with_capacity(p_fake.len());
    for &p in p_fake {
        let (c, dc) = clamp(p);
        match mode {
            AdversarialMode::Saturating => {
                value += (T::one() - c).ln() / n;
                grad.push(-dc / ((T::one() - c) * n));
            }
            AdversarialMode::NonSaturating => {
                value -= c.ln() / n;
                grad.push(-dc / (c * n));
            }
        }
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;
    use ndarray::array;

    fn unit_triangle() -> (Array2<f64>, EdgeSet) {
        let m = Mesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        (m.to_columns(), m.edge_set())
    }

    #[test]
    fn rec_examples() {
        let a = array![[0.0, 1.0], [0.0, 2.0], [0.0, 3.0]];
        assert_eq!(loss_rec(a.view(), a.view(), Reduction::Sum).unwrap(), 0.0);
        let mut b = a.clone();
        b[[0, 1]] += 1.0;
        assert_eq!(loss_rec(a.view(), b.view(), Reduction::Sum).unwrap(), 1.0);
        assert_eq!(loss_rec(b.view(), a.view(), Reduction::Sum).unwrap(), 1.0);
        assert_eq!(loss_rec(a.view(), b.view(), Reduction::Mean).unwrap(), 0.5);
    }

    #[test]
    fn rec_count_mismatch() {
        let a = Array2::<f64>::zeros((3, 2));
        let b = Array2::<f64>::zeros((3, 3));
        assert_eq!(
            loss_rec(a.view(), b.view(), Reduction::Sum).unwrap_err(),
            LossError::CountMismatch { left: 2, right: 3 }
        );
    }

    #[test]
    fn edge_examples() {
        let (tri, edges) = unit_triangle();
        let ld = EdgeMode::LengthDifference;
        assert_eq!(loss_edge(tri.view(), tri.view(), &edges, ld, Reduction::Sum).unwrap(), 0.0);
        // directed one-ring pairs: 2 * (1 + 1 + 2)
        let lit = loss_edge(tri.view(), tri.view(), &edges, EdgeMode::Literal, Reduction::Sum).unwrap();
        assert!((lit - 8.0).abs() < 1e-12);

        // stretch edge (0,1) from 1.0 to 1.5 along x; the other two edges
        // also change, so measure the single-edge contribution on a segment
        let seg = Mesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 5.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let only = EdgeSet::from_edges(vec![(0, 1)]);
        let v = seg.to_columns();
        let mut g = v.clone();
        g[[0, 1]] = 1.5;
        let c: f64 = loss_edge(g.view(), v.view(), &only, ld, Reduction::Sum).unwrap();
        assert!((c - 0.25).abs() < 1e-12);
    }

    #[test]
    fn dist_examples() {
        let a = array![[0.0, 1.0, 2.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
        assert_eq!(loss_dist(a.view(), a.view()).unwrap(), 0.0);
        // rotate 90 degrees about z and translate
        let r = array![[5.0, 5.0, 5.0], [1.0, 2.0, 3.0], [-2.0, -2.0, -2.0]];
        let d: f64 = loss_dist(r.view(), a.view()).unwrap();
        assert!(d.abs() < 1e-24);
        let mut moved = a.clone();
        moved[[1, 1]] = 1.0;
        // d01: 1 → √2, d12: 1 → √2, d02 unchanged; n = 3
        let expected = 2.0 * (2f64.sqrt() - 1.0).powi(2) / 3.0;
        assert!((loss_dist(moved.view(), a.view()).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn discriminator_examples() {
        let v = loss_discriminator(&[0.5f64], &[0.5]).unwrap();
        assert!((v - 2.0 * 2f64.ln()).abs() < 1e-12);
        let v = loss_discriminator(&[0.9f64], &[0.1]).unwrap();
        assert!((v - 0.21072103131565256).abs() < 1e-12);
        let d = 1e-9;
        let v = loss_discriminator(&[1.0 - d], &[d]).unwrap();
        assert!(v < 1e-6);
        assert!(loss_discriminator(&[1.5f64], &[0.5]).is_err());
        assert!(loss_discriminator(&[f64::NAN], &[0.5]).is_err());
        assert_eq!(loss_discriminator::<f64>(&[], &[0.5]), Err(LossError::EmptyBatch));
    }

    #[test]
    fn adversarial_examples() {
        let v = loss_adversarial(&[0.5f64], AdversarialMode::Saturating).unwrap();
        assert!((v - 0.5f64.ln()).abs() < 1e-12);
        let v = loss_adversarial(&[1.0f64], AdversarialMode::Saturating).unwrap();
        assert_eq!(v, (1.0 - (1.0 - PROBABILITY_CLAMP)).ln());
        assert!((v - PROBABILITY_CLAMP.ln()).abs() < 1e-8);
        let v = loss_adversarial(&[0.5f64], AdversarialMode::NonSaturating).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn total_examples() {
        let w = LossWeights::default();
        assert_eq!((w.adver, w.rec, w.edge, w.dist), (0.1, 2.0, 0.5, 2.0));
        let c = LossComponents {
            rec: 1.0,
            edge: 1.0,
            dist: 1.0,
            adver: 0.0,
            disc: 0.3,
        };
        assert_eq!(loss_total(c, &w).unwrap().total, 4.5);
        assert_eq!(loss_total(LossComponents::default(), &w).unwrap().total, 0.0);
        let bad = LossComponents {
            rec: f64::NAN,
            ..Default::default()
        };
        assert!(matches!(
            loss_total(bad, &w),
            Err(LossError::NonFinite { name: "rec", .. })
        ));
    }

    #[test]
    fn csv_row_layout() {
        let r = loss_total(
            LossComponents {
                rec: 1.0,
                edge: 0.5,
                dist: 0.25,
                adver: -0.5,
                disc: 1.25,
            },
            &LossWeights::default(),
        )
        .unwrap();
        assert_eq!(r.csv_row(3), "3,1,0.5,0.25,-0.5,1.25,2.7");
    }
}
