//! Oracles and fixtures shared by the integration tests and the acceptance gate.
#![allow(dead_code)]

use std::sync::Arc;

use meshstyle::dataset::{make_manifest, Dataset, DatasetConfig};
use meshstyle::losses::LossWeights;
use meshstyle::mesh::{Mesh, Template};
use meshstyle::models::{ModelConfig, ShapeStyleModel};
use meshstyle::nn::NormConfig;
use meshstyle::params::Parameters;
use meshstyle::training::{generator_gradients, Sample, TrainConfig};
use meshstyle::Normalization;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Denominator floor for relative gradient errors; below it the comparison is absolute.
pub const GRAD_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Regular icosahedron: 12 vertices, 30 edges, 20 faces.
pub fn icosahedron() -> Mesh<f64> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let v = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let f = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    Mesh::new(v.into_iter().map(|p| p.map(|c| c * 0.4)).collect(), f).unwrap()
}

/// Icosahedron vertices jittered by up to `amount` per coordinate.
pub fn jittered_icosahedron<R: Rng>(rng: &mut R, amount: f64) -> Mesh<f64> {
    let base = icosahedron();
    let v = base
        .vertices()
        .iter()
        .map(|p| p.map(|c| c + rng.random_range(-amount..amount)))
        .collect();
    Mesh::with_template(v, Arc::clone(base.template())).unwrap()
}

pub fn random_coords<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((3, n), |_| rng.random_range(-scale..scale))
}

pub fn random_points<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| [0; 3].map(|_| rng.random_range(-scale..scale)))
        .collect()
}

/// All-pairs Hausdorff distance.
pub fn brute_hausdorff(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let d = |p: &[f64; 3], q: &[f64; 3]| {
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
    };
    let directed = |x: &[[f64; 3]], y: &[[f64; 3]]| {
        x.iter()
            .map(|p| y.iter().map(|q| d(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

pub fn nested_distance(points: &[[f64; 3]], i: usize, j: usize) -> f64 {
    let mut s = 0.0;
    for k in 0..3 {
        s += (points[i][k] - points[j][k]) * (points[i][k] - points[j][k]);
    }
    s.sqrt()
}

/// `(1/n) Σ_{i<j} (d_gen(i,j) − d_gt(i,j))²` with `n = N(N−1)/2`.
pub fn nested_loss_dist(generated: &[[f64; 3]], target: &[[f64; 3]]) -> f64 {
    let n = generated.len();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let diff = nested_distance(generated, i, j) - nested_distance(target, i, j);
            sum += diff * diff;
            count += 1;
        }
    }
    sum / count as f64
}

pub fn columns_to_points(c: &Array2<f64>) -> Vec<[f64; 3]> {
    (0..c.ncols()).map(|i| [c[[0, i]], c[[1, i]], c[[2, i]]]).collect()
}

/// Widths divided by 8, as used for end-to-end gradient checks.
pub fn toy_model(template: &Template, seed: u64) -> ShapeStyleModel<f64> {
    ShapeStyleModel::init(
        ModelConfig::scaled_down(8),
        NormConfig::new(1e-5).unwrap(),
        Normalization::identity(),
        template,
        seed,
    )
}

/// Total generator objective for one triple, forward only.
pub fn generator_total(
    model: &ShapeStyleModel<f64>,
    sample: &Sample<'_, f64>,
    template: &Template,
    config: &TrainConfig,
) -> f64 {
    let (c, _) = generator_gradients(model, std::slice::from_ref(sample), &template.edge_set(), config).unwrap();
    let w: LossWeights = config.effective_weights();
    w.adver * c.adver + w.rec * c.rec + w.edge * c.edge + w.dist * c.dist
}

/// Largest relative error between analytic and central-difference gradients of
/// the generator objective over `per_tensor` random entries of every tensor.
pub fn end_to_end_gradient_error(seed: u64, per_tensor: usize) -> (f64, usize) {
    let mut r = rng(seed);
    let posed = jittered_icosahedron(&mut r, 0.15);
    let identity = jittered_icosahedron(&mut r, 0.15);
    let gt = jittered_icosahedron(&mut r, 0.15);
    let template = Arc::clone(posed.template());
    let (p, i, g) = (posed.to_columns(), identity.to_columns(), gt.to_columns());
    let sample = Sample {
        posed: &p,
        identity: &i,
        ground_truth: &g,
    };
    let config = TrainConfig {
        model: ModelConfig::scaled_down(8),
        ..TrainConfig::default()
    };
    let mut model = toy_model(&template, seed);
    let (_, grad) = generator_gradients(&model, &[sample], &template.edge_set(), &config).unwrap();
    let analytic: Vec<Vec<f64>> = grad
        .named_tensors()
        .into_iter()
        .map(|(_, t)| t.iter().copied().collect())
        .collect();
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut checked = 0;
    let sizes: Vec<usize> = analytic.iter().map(Vec::len).collect();
    for (t, &len) in sizes.iter().enumerate() {
        for _ in 0..per_tensor.min(len) {
            let k = r.random_range(0..len);
            let original = model.generator.tensors_mut()[t].as_slice_mut().unwrap()[k];
            model.generator.tensors_mut()[t].as_slice_mut().unwrap()[k] = original + h;
            let plus = generator_total(&model, &sample, &template, &config);
            model.generator.tensors_mut()[t].as_slice_mut().unwrap()[k] = original - h;
            let minus = generator_total(&model, &sample, &template, &config);
            model.generator.tensors_mut()[t].as_slice_mut().unwrap()[k] = original;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(rel_err(analytic[t][k], numeric));
            checked += 1;
        }
    }
    (worst, checked)
}

/// Standard 4 × 6 grid in single precision.
pub fn desk_dataset() -> Dataset<f32> {
    Dataset::generate(make_manifest(DatasetConfig::default()).unwrap()).unwrap()
}

/// Finite-difference check of `grad` against `f` at every entry of `x`.
pub fn fd_error(x: &Array2<f64>, grad: &Array2<f64>, f: impl Fn(&Array2<f64>) -> f64) -> f64 {
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for r in 0..x.nrows() {
        for c in 0..x.ncols() {
            let orig = probe[[r, c]];
            probe[[r, c]] = orig + h;
            let plus = f(&probe);
            probe[[r, c]] = orig - h;
            let minus = f(&probe);
            probe[[r, c]] = orig;
            worst = worst.max(rel_err(grad[[r, c]], (plus - minus) / (2.0 * h)));
        }
    }
    worst
}

/// Worst relative error of every loss gradient, labelled by loss.
pub fn loss_gradient_errors(seed: u64) -> Vec<(String, f64)> {
    use meshstyle::losses::*;
    let mut r = rng(seed);
    let mut out = Vec::new();
    let g = random_coords(&mut r, 12, 1.0);
    let t = random_coords(&mut r, 12, 1.0);
    for reduction in [Reduction::Sum, Reduction::Mean] {
        let (_, grad) = loss_rec_grad(g.view(), t.view(), reduction).unwrap();
        let e = fd_error(&g, &grad, |x| loss_rec(x.view(), t.view(), reduction).unwrap());
        out.push((format!("rec/{reduction:?}"), e));
    }
    let edges = icosahedron().edge_set();
    let gi = jittered_icosahedron(&mut r, 0.2).to_columns();
    let vi = jittered_icosahedron(&mut r, 0.2).to_columns();
    for mode in [EdgeMode::Literal, EdgeMode::LengthDifference] {
        for reduction in [Reduction::Sum, Reduction::Mean] {
            let (_, grad) = loss_edge_grad(gi.view(), vi.view(), &edges, mode, reduction).unwrap();
            let e = fd_error(&gi, &grad, |x| {
                loss_edge(x.view(), vi.view(), &edges, mode, reduction).unwrap()
            });
            out.push((format!("edge/{mode:?}/{reduction:?}"), e));
        }
    }
    let (_, grad) = loss_dist_grad(g.view(), t.view()).unwrap();
    out.push((
        "dist".into(),
        fd_error(&g, &grad, |x| loss_dist(x.view(), t.view()).unwrap()),
    ));
    let real = Array2::from_shape_fn((1, 6), |_| r.random_range(0.05..0.95));
    let fake = Array2::from_shape_fn((1, 6), |_| r.random_range(0.05..0.95));
    let (_, d_real, d_fake) =
        loss_discriminator_grad(real.as_slice().unwrap(), fake.as_slice().unwrap()).unwrap();
    let dr = Array2::from_shape_vec((1, 6), d_real).unwrap();
    let df = Array2::from_shape_vec((1, 6), d_fake).unwrap();
    let e1 = fd_error(&real, &dr, |x| {
        loss_discriminator(x.as_slice().unwrap(), fake.as_slice().unwrap()).unwrap()
    });
    let e2 = fd_error(&fake, &df, |x| {
        loss_discriminator(real.as_slice().unwrap(), x.as_slice().unwrap()).unwrap()
    });
    out.push(("disc".into(), e1.max(e2)));
    for mode in [AdversarialMode::Saturating, AdversarialMode::NonSaturating] {
        let (_, d) = loss_adversarial_grad(fake.as_slice().unwrap(), mode).unwrap();
        let d = Array2::from_shape_vec((1, 6), d).unwrap();
        let e = fd_error(&fake, &d, |x| loss_adversarial(x.as_slice().unwrap(), mode).unwrap());
        out.push((format!("adver/{mode:?}"), e));
    }
    out
}

/// Random vertex permutation of length `n`.
pub fn permutation<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Column `j` of the result is column `perm[j]` of `x`.
pub fn permute_columns(x: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((x.nrows(), perm.len()), |(r, c)| x[[r, perm[c]]])
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Channel means and population variances over the vertex axis.
pub fn channel_moments(x: &Array2<f64>) -> Vec<(f64, f64)> {
    x.rows()
        .into_iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (mean, var)
        })
        .collect()
}

/// Worst deviation of instance-norm and AdaIN output statistics from their
/// targets over `trials` random feature maps: `(in_mean, in_var, ada_in)`.
pub fn normalization_identity_errors(seed: u64, trials: usize) -> (f64, f64, f64) {
    use meshstyle::nn::{ada_in, instance_norm, style_stats};
    use meshstyle::{FeatureMap, NormConfig};
    let mut r = rng(seed);
    let cfg = NormConfig::new(1e-5).unwrap();
    let (mut mean_err, mut var_err, mut ada_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..trials {
        let c = r.random_range(4..=1024);
        let n = r.random_range(8..=500);
        let shift = r.random_range(-5.0..5.0);
        let spread = r.random_range(1.0..3.0);
        let x = Array2::from_shape_fn((c, n), |_| shift + spread * r.random_range(-1.0..1.0));
        let fx = FeatureMap::new(x).unwrap();
        let y = instance_norm(&fx, &cfg).unwrap();
        for (m, v) in channel_moments(y.data()) {
            mean_err = mean_err.max(m.abs());
            var_err = var_err.max((v - 1.0).abs());
        }
        let s = Array2::from_shape_fn((c, r.random_range(8..=500)), |_| {
            r.random_range(-3.0..3.0) * r.random_range(0.2..2.0)
        });
        let style = style_stats(&FeatureMap::new(s).unwrap(), &cfg).unwrap();
        let z = ada_in(&fx, &style, &cfg).unwrap();
        for (k, (m, v)) in channel_moments(z.data()).into_iter().enumerate() {
            ada_err = ada_err.max((m - style.mean()[k]).abs());
            ada_err = ada_err.max((v.sqrt() - style.std()[k]).abs());
        }
    }
    (mean_err, var_err, ada_err)
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// `W x + b` column by column, written with explicit loops.
pub fn naive_linear(w: &Array2<f64>, b: &[f64], x: &Array2<f64>) -> Array2<f64> {
    let mut y = Array2::zeros((w.nrows(), x.ncols()));
    for v in 0..x.ncols() {
        for o in 0..w.nrows() {
            let mut s = b[o];
            for i in 0..w.ncols() {
                s += w[[o, i]] * x[[i, v]];
            }
            y[[o, v]] = s;
        }
    }
    y
}

pub fn naive_stats(x: &Array2<f64>, eps: f64) -> Vec<(f64, f64)> {
    channel_moments(x)
        .into_iter()
        .map(|(m, v)| (m, (v + eps).sqrt()))
        .collect()
}

pub fn naive_instance_norm(x: &Array2<f64>, eps: f64) -> Array2<f64> {
    let s = naive_stats(x, eps);
    Array2::from_shape_fn(x.raw_dim(), |(c, v)| (x[[c, v]] - s[c].0) / s[c].1)
}

pub fn naive_ada_in(x: &Array2<f64>, style: &[(f64, f64)], eps: f64) -> Array2<f64> {
    let n = naive_instance_norm(x, eps);
    Array2::from_shape_fn(x.raw_dim(), |(c, v)| style[c].1 * n[[c, v]] + style[c].0)
}

/// Reference generator forward pass assembled from the loop-based primitives.
pub fn naive_generate(
    g: &meshstyle::models::Generator<f64>,
    posed: &Array2<f64>,
    identity: &Array2<f64>,
    eps: f64,
) -> Array2<f64> {
    let encode = |x: &Array2<f64>| {
        let mut h = x.clone();
        for l in &g.encoder.layers {
            h = naive_linear(&l.weight, l.bias.as_slice().unwrap(), &h).mapv(relu);
        }
        h
    };
    let pose = encode(posed);
    let ident = encode(identity);
    let styles: Vec<Vec<(f64, f64)>> = g
        .style
        .projections
        .iter()
        .map(|p| naive_stats(&naive_linear(&p.weight, p.bias.as_slice().unwrap(), &ident), eps))
        .collect();
    let mut h = pose;
    for (stage, style) in g.decoder.stages.iter().zip(&styles) {
        let l = &stage.linear;
        h = naive_instance_norm(&naive_linear(&l.weight, l.bias.as_slice().unwrap(), &h), eps)
            .mapv(relu);
        let b = &stage.block;
        let a1 = naive_ada_in(&h, style, eps).mapv(relu);
        let h1 = naive_linear(&b.first.weight, b.first.bias.as_slice().unwrap(), &a1);
        let a2 = naive_ada_in(&h1, style, eps).mapv(relu);
        h = naive_linear(&b.second.weight, b.second.bias.as_slice().unwrap(), &a2) + &h;
    }
    let o = &g.decoder.output;
    naive_linear(&o.weight, o.bias.as_slice().unwrap(), &h).mapv(f64::tanh)
}

/// Reference discriminator probability.
pub fn naive_discriminate(d: &meshstyle::models::Discriminator<f64>, x: &Array2<f64>) -> f64 {
    let mut h = x.clone();
    for l in &d.point {
        h = naive_linear(&l.weight, l.bias.as_slice().unwrap(), &h).mapv(relu);
    }
    let pooled: Vec<f64> = h
        .rows()
        .into_iter()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let g = Array2::from_shape_vec((pooled.len(), 1), pooled).unwrap();
    let hidden = naive_linear(&d.hidden.weight, d.hidden.bias.as_slice().unwrap(), &g).mapv(relu);
    let logit = naive_linear(&d.head.weight, d.head.bias.as_slice().unwrap(), &hidden)[[0, 0]];
    1.0 / (1.0 + (-logit).exp())
}

/// `(hausdorff mismatches, distance-matrix error, loss_dist error)` over `trials` random cases.
pub fn metric_oracle_errors(seed: u64, trials: usize) -> (usize, f64, f64) {
    use meshstyle::losses::loss_dist;
    use meshstyle::{hausdorff, DistanceMatrix};
    let mut r = rng(seed);
    let (mut mismatches, mut dm_err, mut ld_err) = (0, 0.0f64, 0.0f64);
    for _ in 0..trials {
        let (na, nb) = (r.random_range(1..=200), r.random_range(1..=200));
        let a = random_points(&mut r, na, 2.0);
        let b = random_points(&mut r, nb, 2.0);
        if hausdorff(&a, &b).unwrap() != brute_hausdorff(&a, &b) {
            mismatches += 1;
        }
        let m = DistanceMatrix::from_points(&a);
        for i in 0..a.len() {
            for j in 0..a.len() {
                dm_err = dm_err.max((m.get(i, j) - nested_distance(&a, i, j)).abs());
            }
        }
        let n = r.random_range(2..=60);
        let g = random_coords(&mut r, n, 1.0);
        let t = random_coords(&mut r, n, 1.0);
        let fast = loss_dist(g.view(), t.view()).unwrap();
        let slow = nested_loss_dist(&columns_to_points(&g), &columns_to_points(&t));
        ld_err = ld_err.max((fast - slow).abs());
    }
    (mismatches, dm_err, ld_err)
}

/// Worst violation of `(encoder equivariance, discriminator invariance,
/// instance-norm equivariance)` over `trials` random permutations.
pub fn permutation_errors(seed: u64, trials: usize) -> (f64, f64, f64) {
    use meshstyle::models::{Discriminator, Encoder};
    use meshstyle::nn::instance_norm_forward;
    let mut r = rng(seed);
    let cfg = ModelConfig::scaled_down(8);
    let enc: Encoder<f64> = Encoder::init(cfg.encoder_widths, &mut r);
    let disc: Discriminator<f64> =
        Discriminator::init(cfg.discriminator_widths, cfg.discriminator_hidden, &mut r);
    let (mut e, mut d, mut n) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..trials {
        let v = r.random_range(8..=200);
        let x = random_coords(&mut r, v, 1.0);
        let perm = permutation(&mut r, v);
        let px = permute_columns(&x, &perm);
        let fx = enc.forward(&x).output().clone();
        e = e.max(max_abs_diff(&enc.forward(&px).output().clone(), &permute_columns(&fx, &perm)));
        d = d.max((disc.forward(&x).probability() - disc.forward(&px).probability()).abs());
        let h = Array2::from_shape_fn((16, v), |_| r.random_range(-3.0..3.0));
        let ph = permute_columns(&h, &perm);
        let (y, _) = instance_norm_forward(&h, 1e-5);
        let (py, _) = instance_norm_forward(&ph, 1e-5);
        n = n.max(max_abs_diff(&py, &permute_columns(&y, &perm)));
    }
    (e, d, n)
}
