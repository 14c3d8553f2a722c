use indexmap::IndexMap;

use crate::error::{shape_err, Result};
use crate::params::ParamSet;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    /// DCGAN-style settings.
    fn default() -> Self {
        AdamConfig { lr: 2e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment accumulators for every parameter of a set.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    moments: IndexMap<String, (Vec<T>, Vec<T>)>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamSet<T>) -> Self {
        let moments = params
            .iter()
            .map(|(k, t)| (k.to_string(), (vec![T::zero(); t.len()], vec![T::zero(); t.len()])))
            .collect();
        Adam { config, step: 0, moments }
    }

    /// Rebuilds an optimizer from saved moments.
    pub fn from_parts(config: AdamConfig, step: u64, moments: IndexMap<String, (Vec<T>, Vec<T>)>) -> Self {
        Adam { config, step, moments }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> impl Iterator<Item = (&str, &[T], &[T])> {
        self.moments.iter().map(|(k, (m, v))| (k.as_str(), m.as_slice(), v.as_slice()))
    }

    /// One bias-corrected Adam update from the accumulated `grad` of every
    /// parameter. Missing gradients count as zero.
    pub fn step(&mut self, params: &mut ParamSet<T>) -> Result<()> {
        if params.len() != self.moments.len() {
            return shape_err(format!(
                "optimizer tracks {} parameters, set has {}",
                self.moments.len(),
                params.len()
            ));
        }
        for (name, t) in params.iter() {
            match self.moments.get(name) {
                Some((m, _)) if m.len() == t.len() => {}
                _ => return shape_err(format!("parameter {name} does not match optimizer state")),
            }
        }
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::c(c.beta1), T::c(c.beta2));
        let bc1 = T::c(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = T::c(1.0 - c.beta2.powi(self.step as i32));
        let (lr, eps) = (T::c(c.lr), T::c(c.eps));
        for (name, t) in params.iter_mut() {
            let (m, v) = self.moments.get_mut(name).expect("checked above");
            let grad = t.grad.take();
            let data = t.data_mut();
            for i in 0..data.len() {
                let g = grad.as_ref().map_or(T::zero(), |g| g[i]);
                m[i] = b1 * m[i] + (T::one() - b1) * g;
                v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                data[i] = data[i] - lr * mhat / (vhat.sqrt() + eps);
            }
            t.grad = grad;
        }
        Ok(())
    }
}
