//! Adam with bias correction, keyed by parameter name.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{GradientStore, Parameterized};
use crate::error::{PanError, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(PanError::Contract(format!("invalid adam settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments<T: Scalar = f64> {
    pub m: Matrix<T>,
    pub v: Matrix<T>,
}

#[derive(Debug, Clone)]
pub struct Adam<T: Scalar = f64> {
    pub config: AdamConfig,
    pub lr: f64,
    pub t: u64,
    pub state: BTreeMap<String, Moments<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, lr: f64) -> Result<Self> {
        config.validate()?;
        if !(lr > 0.0) {
            return Err(PanError::Contract(format!("learning rate must be positive, got {lr}")));
        }
        Ok(Self {
            config,
            lr,
            t: 0,
            state: BTreeMap::new(),
        })
    }

    /// One update of every parameter of `model`. Parameters missing from
    /// `grads` are treated as having zero gradient.
    pub fn step<M: Parameterized<T> + ?Sized>(&mut self, model: &mut M, grads: &GradientStore<T>) -> Result<()> {
        self.t += 1;
        let b1 = T::lit(self.config.beta1);
        let b2 = T::lit(self.config.beta2);
        let one = T::one();
        let c1 = one - T::lit(self.config.beta1.powi(self.t as i32));
        let c2 = one - T::lit(self.config.beta2.powi(self.t as i32));
        let lr = T::lit(self.lr);
        let eps = T::lit(self.config.eps);
        let mut failure = None;
        let state = &mut self.state;
        model.visit_params_mut(&mut |name, param| {
            if failure.is_some() {
                return;
            }
            let g = grads.get(name);
            if let Some(g) = g {
                if g.shape() != param.shape() {
                    failure = Some(PanError::dim("adam step", param.shape(), g.shape()));
                    return;
                }
            }
            let mom = state.entry(name.to_string()).or_insert_with(|| Moments {
                m: Matrix::zeros(param.rows(), param.cols()),
                v: Matrix::zeros(param.rows(), param.cols()),
            });
            let ps = param.as_mut_slice();
            let ms = mom.m.as_mut_slice();
            let vs = mom.v.as_mut_slice();
            for k in 0..ps.len() {
                let gk = g.map_or(T::zero(), |g| g.as_slice()[k]);
                ms[k] = b1 * ms[k] + (one - b1) * gk;
                vs[k] = b2 * vs[k] + (one - b2) * gk * gk;
                let mhat = ms[k] / c1;
                let vhat = vs[k] / c2;
                ps[k] -= lr * mhat / (vhat.sqrt() + eps);
            }
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}
