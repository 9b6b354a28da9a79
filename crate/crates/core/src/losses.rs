//! Training objectives, built from differentiable ops.

use unist_tensor::{Scalar, Tensor};

use crate::error::{Error, Result};

pub const LOG_EPS: f64 = 1e-7;
pub const STD_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: -0.1,
            lambda2: -0.1,
        }
    }
}

fn same_shape<S: Scalar>(op: &'static str, p: &Tensor<S>, g: &Tensor<S>) -> Result<()> {
    if p.shape() != g.shape() {
        return Err(Error::Dimension(format!(
            "{op}: {:?} vs {:?}",
            p.shape(),
            g.shape()
        )));
    }
    Ok(())
}

/// `m / Σm`.
pub fn normalize_sum<S: Scalar>(m: &Tensor<S>) -> Result<Tensor<S>> {
    let total: f64 = m.data().iter().map(|v| v.as_f64()).sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate {
            op: "normalize_sum",
            msg: format!("sum is {total}"),
        });
    }
    Ok(m.div_by_scalar_tensor(&m.sum())?)
}

/// `Σ g · ln(eps + g / (p + eps))` over sum-normalized maps.
pub fn kl_loss<S: Scalar>(p: &Tensor<S>, g: &Tensor<S>) -> Result<Tensor<S>> {
    same_shape("kl_loss", p, g)?;
    let (p, g) = (normalize_sum(p)?, normalize_sum(g)?);
    let ratio = g.div(&p.add_scalar(LOG_EPS))?.add_scalar(LOG_EPS).ln();
    Ok(g.mul(&ratio)?.sum())
}

fn centered<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    Ok(x.add_scalar_tensor(&x.mean().neg())?)
}

fn population_std(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mu = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n).sqrt()
}

/// Pearson correlation `cov(P,G) / (σ_P σ_G)`.
pub fn correlation<S: Scalar>(p: &Tensor<S>, g: &Tensor<S>) -> Result<Tensor<S>> {
    same_shape("cc", p, g)?;
    for (name, t) in [("P", p), ("G", g)] {
        let s = population_std(&t.to_f64_vec());
        if !(s > STD_EPS) {
            return Err(Error::Degenerate {
                op: "cc",
                msg: format!("{name} is constant (std {s:e})"),
            });
        }
    }
    let (pc, gc) = (centered(p)?, centered(g)?);
    let cov = pc.mul(&gc)?.mean();
    let sp = pc.square().mean().sqrt();
    let sg = gc.square().mean().sqrt();
    Ok(cov.div(&sp.mul(&sg)?)?)
}

/// `−cc(P, G)`.
pub fn cc_loss<S: Scalar>(p: &Tensor<S>, g: &Tensor<S>) -> Result<Tensor<S>> {
    Ok(correlation(p, g)?.neg())
}

/// `Σ min(ζ(P), ζ(G))`.
pub fn sim_loss<S: Scalar>(p: &Tensor<S>, g: &Tensor<S>) -> Result<Tensor<S>> {
    same_shape("sim", p, g)?;
    Ok(normalize_sum(p)?.min_elementwise(&normalize_sum(g)?)?.sum())
}

#[derive(Debug, Clone)]
pub struct VspLoss<S: Scalar> {
    pub total: Tensor<S>,
    pub kl: f64,
    pub cc: f64,
    pub sim: f64,
}

/// `KL + λ1·CC + λ2·SIM`.
pub fn vsp_loss<S: Scalar>(p: &Tensor<S>, g: &Tensor<S>, w: LossWeights) -> Result<VspLoss<S>> {
    if !w.lambda1.is_finite() || !w.lambda2.is_finite() {
        return Err(Error::config("loss", "lambda1 and lambda2 must be finite"));
    }
    let kl = kl_loss(p, g)?;
    let cc = cc_loss(p, g)?;
    let sim = sim_loss(p, g)?;
    let total = kl
        .add(&cc.mul_scalar(w.lambda1))?
        .add(&sim.mul_scalar(w.lambda2))?;
    Ok(VspLoss {
        kl: kl.item().as_f64(),
        cc: cc.item().as_f64(),
        sim: sim.item().as_f64(),
        total,
    })
}

/// Mean binary cross-entropy with `P` clamped to `[eps, 1 − eps]`.
pub fn vsod_bce<S: Scalar>(p: &Tensor<S>, g: &Tensor<S>) -> Result<Tensor<S>> {
    same_shape("vsod_bce", p, g)?;
    let pc = p.clamp(LOG_EPS, 1.0 - LOG_EPS);
    let pos = g.mul(&pc.ln())?;
    let neg = g
        .neg()
        .add_scalar(1.0)
        .mul(&pc.neg().add_scalar(1.0).ln())?;
    Ok(pos.add(&neg)?.mean().neg())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(v.to_vec(), &[v.len()]).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(
            normalize_sum(&t(&[1.0, 3.0])).unwrap().data(),
            &[0.25, 0.75]
        );
        assert!(normalize_sum(&t(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn kl_hand_value() {
        let v = kl_loss(&t(&[0.25, 0.75]), &t(&[0.5, 0.5])).unwrap().item();
        let want = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((v - want).abs() < 1e-6, "{v} vs {want}");
    }

    #[test]
    fn sim_hand_value() {
        let v = sim_loss(&t(&[0.2, 0.8]), &t(&[0.5, 0.5])).unwrap().item();
        assert!((v - 0.7).abs() < 1e-12);
    }

    #[test]
    fn cc_orientation() {
        let g = t(&[0.1, 0.5, 0.9, 0.3]);
        let inv = g.neg().add_scalar(1.0);
        assert!((cc_loss(&g, &g).unwrap().item() + 1.0).abs() < 1e-12);
        assert!((cc_loss(&inv, &g).unwrap().item() - 1.0).abs() < 1e-12);
        assert!(cc_loss(&t(&[0.3; 4]), &g).is_err());
    }

    #[test]
    fn bce_at_half_is_ln2() {
        let p = t(&[0.5; 6]);
        let g = t(&[0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
        assert!((vsod_bce(&p, &g).unwrap().item() - 2f64.ln()).abs() < 1e-12);
    }
}
