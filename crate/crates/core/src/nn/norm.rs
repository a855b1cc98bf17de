use ndarray::{Array1, Array2, Axis, Zip};

use super::StyleStats;
use crate::scalar::Scalar;

/// Values saved by an instance-norm or AdaIN forward pass.
#[derive(Clone, Debug)]
pub struct AdaInTape<T> {
    /// Instance-normalized input.
    pub normalized: Array2<T>,
    /// `1 / sqrt(var + ε)` per channel.
    pub inv_std: Array1<T>,
}

/// Returns the normalized map and per-channel `1 / sqrt(var + ε)`.
pub fn instance_norm_forward<T: Scalar>(x: &Array2<T>, epsilon: T) -> (Array2<T>, Array1<T>) {
    let n = T::from_usize(x.ncols()).unwrap();
    let mut y = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in y.axis_iter_mut(Axis(0)).zip(inv_std.iter_mut()) {
        let mean = row.sum() / n;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).sum::<T>() / n;
        let inv = T::one() / (var + epsilon).sqrt();
        row.mapv_inplace(|v| v * inv);
        *s = inv;
    }
    (y, inv_std)
}

/// `dx = inv_std · (dy − mean(dy) − y · mean(dy ⊙ y))` per channel.
pub fn instance_norm_backward<T: Scalar>(
    normalized: &Array2<T>,
    inv_std: &Array1<T>,
    dy: &Array2<T>,
) -> Array2<T> {
    let n = T::from_usize(dy.ncols()).unwrap();
    let mut dx = dy.clone();
    for ((mut dx_row, y_row), &inv) in dx
        .axis_iter_mut(Axis(0))
        .zip(normalized.axis_iter(Axis(0)))
        .zip(inv_std)
    {
        let mean_dy = dx_row.sum() / n;
        let mean_dy_y = dx_row.iter().zip(&y_row).map(|(&g, &y)| g * y).sum::<T>() / n;
        Zip::from(&mut dx_row)
            .and(&y_row)
            .for_each(|g, &y| *g = inv * (*g - mean_dy - y * mean_dy_y));
    }
    dx
}

pub(crate) fn style_stats_forward<T: Scalar>(x: &Array2<T>, epsilon: T) -> StyleStats<T> {
    let n = T::from_usize(x.ncols()).unwrap();
    let mut mean = Array1::zeros(x.nrows());
    let mut std = Array1::zeros(x.nrows());
    for ((row, m), s) in x.axis_iter(Axis(0)).zip(mean.iter_mut()).zip(std.iter_mut()) {
        let mu = row.sum() / n;
        let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / n;
        *m = mu;
        *s = (var + epsilon).sqrt();
    }
    StyleStats::from_parts_unchecked(mean, std)
}

/// Gradient of `(mean, std)` with respect to the features they were computed from.
pub fn style_stats_backward<T: Scalar>(
    x: &Array2<T>,
    stats: &StyleStats<T>,
    d_mean: &Array1<T>,
    d_std: &Array1<T>,
) -> Array2<T> {
    let n = T::from_usize(x.ncols()).unwrap();
    let mut dx = Array2::zeros(x.raw_dim());
    for (c, (mut dx_row, x_row)) in dx
        .axis_iter_mut(Axis(0))
        .zip(x.axis_iter(Axis(0)))
        .enumerate()
    {
        let mu = stats.mean()[c];
        let a = d_mean[c] / n;
        let b = d_std[c] / (n * stats.std()[c]);
        Zip::from(&mut dx_row)
            .and(&x_row)
            .for_each(|g, &v| *g = a + b * (v - mu));
    }
    dx
}

pub fn ada_in_forward<T: Scalar>(
    x: &Array2<T>,
    style: &StyleStats<T>,
    epsilon: T,
) -> (Array2<T>, AdaInTape<T>) {
    let (normalized, inv_std) = instance_norm_forward(x, epsilon);
    let mut out = normalized.clone();
    for ((mut row, &s), &m) in out
        .axis_iter_mut(Axis(0))
        .zip(style.std())
        .zip(style.mean())
    {
        row.mapv_inplace(|v| v * s + m);
    }
    (out, AdaInTape { normalized, inv_std })
}

/// Returns `(dx, d_mean, d_std)`.
pub fn ada_in_backward<T: Scalar>(
    tape: &AdaInTape<T>,
    style: &StyleStats<T>,
    d_out: &Array2<T>,
) -> (Array2<T>, Array1<T>, Array1<T>) {
    let d_mean = d_out.sum_axis(Axis(1));
    let d_std = (d_out * &tape.normalized).sum_axis(Axis(1));
    let mut d_norm = d_out.clone();
    for (mut row, &s) in d_norm.axis_iter_mut(Axis(0)).zip(style.std()) {
        row.mapv_inplace(|v| v * s);
    }
    let dx = instance_norm_backward(&tape.normalized, &tape.inv_std, &d_norm);
    (dx, d_mean, d_std)
}
