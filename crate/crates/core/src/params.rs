//! Uniform access to the learnable tensors of a network.

use ndarray::{ArrayViewD, ArrayViewMutD};

use crate::scalar::Scalar;

/// A container of learnable tensors visited in a fixed order.
///
/// Gradients use the same type as the parameters they belong to, so an
/// optimizer can zip `params.tensors_mut()` with `grads.named_tensors()`.
pub trait Parameters<T: Scalar> {
    fn named_tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)>;

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>>;

    fn zeros_like(&self) -> Self
    where
        Self: Sized;

    fn num_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

/// Prepends `prefix.` to each name of `inner`.
pub(crate) fn prefixed<'a, T: Scalar>(
    prefix: &str,
    inner: Vec<(String, ArrayViewD<'a, T>)>,
) -> impl Iterator<Item = (String, ArrayViewD<'a, T>)> {
    let prefix = prefix.to_owned();
    inner
        .into_iter()
        .map(move |(name, t)| (format!("{prefix}.{name}"), t))
}
