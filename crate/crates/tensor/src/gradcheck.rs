//! Central finite-difference checks of analytic gradients (run in f64).

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::param::Parameter;
use crate::tensor::{no_grad, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct GradcheckConfig {
    pub step: f64,
    /// Coordinates probed per tensor; every coordinate when the tensor is smaller.
    pub samples: usize,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            step: 1e-6,
            samples: 12,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    pub probed: usize,
    /// max |analytic − numeric| over probed coordinates, divided by the
    /// larger of the two gradients' max magnitudes.
    pub rel_err: f64,
    pub max_abs_grad: f64,
}

/// Below this gradient scale the absolute difference is reported instead.
pub const ABS_FLOOR: f64 = 1e-7;

/// Relative error of one tensor's probed coordinates.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    if scale < ABS_FLOOR {
        diff
    } else {
        diff / scale
    }
}

/// Checks the gradient of the scalar produced by `f` w.r.t. each parameter.
/// `f` must rebuild its graph from the parameters' current values each call.
pub fn check_params<F, E>(
    f: F,
    params: &[Parameter<f64>],
    cfg: GradcheckConfig,
) -> std::result::Result<Vec<TensorCheck>, E>
where
    F: Fn() -> std::result::Result<Tensor<f64>, E>,
    E: From<TensorError>,
{
    let grads = f()?.backward()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(params.len());
    for p in params {
        let t = p.tensor();
        let base = t.to_vec();
        let g = grads.get_or_zeros(&t);
        let n = base.len();
        let coords: Vec<usize> = if n <= cfg.samples {
            (0..n).collect()
        } else {
            let mut c = index::sample(&mut rng, n, cfg.samples).into_vec();
            // include the largest-gradient coordinate so a dead sample set cannot hide errors
            let imax = (0..n)
                .max_by(|&a, &b| g[a].abs().total_cmp(&g[b].abs()))
                .unwrap_or(0);
            if !c.contains(&imax) {
                c.push(imax);
            }
            c
        };
        let mut analytic = Vec::with_capacity(coords.len());
        let mut numeric = Vec::with_capacity(coords.len());
        for &i in &coords {
            let mut probe = base.clone();
            probe[i] = base[i] + cfg.step;
            p.set_data(probe.clone())?;
            let fp = no_grad(&f)?.item();
            probe[i] = base[i] - cfg.step;
            p.set_data(probe)?;
            let fm = no_grad(&f)?.item();
            numeric.push((fp - fm) / (2.0 * cfg.step));
            analytic.push(g[i]);
        }
        p.set_data(base)?;
        out.push(TensorCheck {
            name: p.name().to_string(),
            probed: coords.len(),
            rel_err: relative_error(&analytic, &numeric),
            max_abs_grad: analytic.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        });
    }
    Ok(out)
}

/// Checks `f(inputs)` against every coordinate of every input.
pub fn check_fn<F, E>(f: F, inputs: &[Tensor<f64>], step: f64) -> std::result::Result<Vec<f64>, E>
where
    F: Fn(&[Tensor<f64>]) -> std::result::Result<Tensor<f64>, E>,
    E: From<TensorError>,
{
    let params: Vec<Parameter<f64>> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| Parameter::new(format!("input{i}"), t.to_vec(), t.shape()))
        .collect::<Result<_>>()?;
    let eval = || {
        let ts: Vec<Tensor<f64>> = params.iter().map(|p| p.tensor()).collect();
        f(&ts)
    };
    let cfg = GradcheckConfig {
        step,
        samples: usize::MAX,
        seed: 0,
    };
    Ok(check_params(eval, &params, cfg)?
        .into_iter()
        .map(|c| c.rel_err)
        .collect())
}
