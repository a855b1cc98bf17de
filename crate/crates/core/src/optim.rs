//! Adam optimizer over any [`Parameters`] container.

use ndarray::{ArrayD, Zip};
use serde::{Deserialize, Serialize};

use crate::params::Parameters;
use crate::scalar::{lit, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub steps: u64,
    pub first: Vec<ArrayD<T>>,
    pub second: Vec<ArrayD<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new<P: Parameters<T>>(config: AdamConfig, params: &P) -> Self {
        let zeros: Vec<ArrayD<T>> = params
            .named_tensors()
            .into_iter()
            .map(|(_, t)| ArrayD::zeros(t.raw_dim()))
            .collect();
        Self {
            config,
            steps: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// Applies one update using `grads`, which has the layout of `params`.
    pub fn step<P: Parameters<T>>(&mut self, params: &mut P, grads: &P) {
        self.steps += 1;
        let c = &self.config;
        let t = self.steps as i32;
        let b1: T = lit(c.beta1);
        let b2: T = lit(c.beta2);
        let eps: T = lit(c.epsilon);
        let lr: T = lit(c.learning_rate);
        let corr1 = T::one() - b1.powi(t);
        let corr2 = T::one() - b2.powi(t);
        let step_size = lr / corr1;
        let grads = grads.named_tensors();
        let mut params = params.tensors_mut();
        assert_eq!(params.len(), grads.len(), "gradient layout differs from parameters");
        assert_eq!(params.len(), self.first.len(), "optimizer state layout differs");
        for (((p, (_, g)), m), v) in params
            .iter_mut()
            .zip(&grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    *p -= step_size * *m / ((*v / corr2).sqrt() + eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayViewD, ArrayViewMutD, IxDyn};

    #[derive(Clone)]
    struct Vector(ArrayD<f64>);

    impl Parameters<f64> for Vector {
        fn named_tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
            vec![("x".into(), self.0.view())]
        }
        fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
            vec![self.0.view_mut()]
        }
        fn zeros_like(&self) -> Self {
            Vector(ArrayD::zeros(self.0.raw_dim()))
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut x = Vector(ArrayD::from_shape_vec(IxDyn(&[2]), vec![1.0, -1.0]).unwrap());
        let g = Vector(ArrayD::from_shape_vec(IxDyn(&[2]), vec![3.0, -0.5]).unwrap());
        let mut adam = Adam::new(AdamConfig::with_learning_rate(0.1), &x);
        adam.step(&mut x, &g);
        // bias-corrected first step is lr · sign(g) up to epsilon
        assert!((x.0[0] - 0.9).abs() < 1e-7);
        assert!((x.0[1] + 0.9).abs() < 1e-6);
        assert_eq!(adam.steps, 1);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut x = Vector(ArrayD::from_elem(IxDyn(&[3]), 5.0));
        let mut adam = Adam::new(AdamConfig::with_learning_rate(0.05), &x);
        for _ in 0..2000 {
            let g = Vector(x.0.mapv(|v| 2.0 * (v - 1.0)));
            adam.step(&mut x, &g);
        }
        assert!(x.0.iter().all(|&v| (v - 1.0).abs() < 1e-3));
    }
}
