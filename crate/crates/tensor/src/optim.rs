use std::collections::HashMap;

use crate::autograd::Gradients;
use crate::error::{config_err, Result};
use crate::param::Parameter;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

/// Bias-corrected Adam. Moments are kept in f64 and keyed by parameter name.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    state: HashMap<String, Moments>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Result<Self> {
        if !(cfg.lr > 0.0) || !cfg.lr.is_finite() {
            return config_err("adam", format!("lr must be positive, got {}", cfg.lr));
        }
        if !(0.0..1.0).contains(&cfg.beta1) || !(0.0..1.0).contains(&cfg.beta2) {
            return config_err(
                "adam",
                format!(
                    "betas must lie in [0,1), got ({}, {})",
                    cfg.beta1, cfg.beta2
                ),
            );
        }
        if !(cfg.eps > 0.0) {
            return config_err("adam", "eps must be positive");
        }
        Ok(Adam {
            cfg,
            state: HashMap::new(),
        })
    }

    pub fn config(&self) -> AdamConfig {
        self.cfg
    }

    /// One update of every parameter. Parameters absent from `grads` see a
    /// zero gradient.
    pub fn step<S: Scalar>(&mut self, params: &[Parameter<S>], grads: &Gradients<S>) -> Result<()> {
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        for p in params {
            let t = p.tensor();
            let g = grads.get_or_zeros(&t);
            let st = self
                .state
                .entry(p.name().to_string())
                .or_insert_with(|| Moments {
                    m: vec![0.0; g.len()],
                    v: vec![0.0; g.len()],
                    t: 0,
                });
            st.t += 1;
            let bc1 = 1.0 - beta1.powi(st.t as i32);
            let bc2 = 1.0 - beta2.powi(st.t as i32);
            let updated: Vec<S> = t
                .data()
                .iter()
                .zip(&g)
                .zip(st.m.iter_mut().zip(st.v.iter_mut()))
                .map(|((&w, &gi), (m, v))| {
                    let gi = gi.as_f64();
                    *m = beta1 * *m + (1.0 - beta1) * gi;
                    *v = beta2 * *v + (1.0 - beta2) * gi * gi;
                    let step = lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                    S::of(w.as_f64() - step)
                })
                .collect();
            p.set_data(updated)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adam(lr: f64) -> Adam {
        Adam::new(AdamConfig {
            lr,
            ..AdamConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn rejects_nonpositive_lr() {
        assert!(adam_err(0.0));
        assert!(adam_err(-1e-3));
    }

    fn adam_err(lr: f64) -> bool {
        Adam::new(AdamConfig {
            lr,
            ..AdamConfig::default()
        })
        .is_err()
    }

    #[test]
    fn zero_gradient_keeps_parameter() {
        let p = Parameter::<f64>::new("p", vec![1.5, -2.0], &[2]).unwrap();
        let mut opt = adam(0.1);
        opt.step(std::slice::from_ref(&p), &Gradients::default())
            .unwrap();
        assert_eq!(p.tensor().data(), &[1.5, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let p = Parameter::<f64>::new("p", vec![1.0], &[1]).unwrap();
        let loss = p.tensor().sum(); // dloss/dp = 1
        let g = loss.backward().unwrap();
        let mut opt = adam(0.1);
        opt.step(std::slice::from_ref(&p), &g).unwrap();
        // m̂ = 1, v̂ = 1 → p − 0.1·1/(1 + 1e-8)
        assert!((p.tensor().item() - 0.9).abs() < 1e-7);
    }

    #[test]
    fn converges_on_quadratic() {
        let p = Parameter::<f64>::new("p", vec![0.0], &[1]).unwrap();
        let mut opt = adam(0.1);
        for _ in 0..200 {
            let d = p.tensor().add_scalar(-3.0);
            let loss = d.square().sum();
            let g = loss.backward().unwrap();
            opt.step(std::slice::from_ref(&p), &g).unwrap();
        }
        assert!(
            (p.tensor().item() - 3.0).abs() < 0.05,
            "p = {}",
            p.tensor().item()
        );
    }
}
