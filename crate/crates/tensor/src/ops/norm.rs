use std::sync::Arc;

use crate::error::{config_err, shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-channel statistics of one training-mode batch-norm call.
#[derive(Debug, Clone)]
pub struct BatchStats<S> {
    pub mean: Vec<S>,
    /// Unbiased (n−1) variance, the quantity tracked by running stats.
    pub var: Vec<S>,
}

fn check_affine<S: Scalar>(
    op: &'static str,
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    beta: &Tensor<S>,
    eps: f64,
) -> Result<usize> {
    let c = match x.shape().last() {
        Some(&c) if x.rank() >= 2 => c,
        _ => return config_err(op, format!("needs rank >= 2, got {:?}", x.shape())),
    };
    if gamma.numel() != c || beta.numel() != c {
        return shape_err(op, x.shape(), gamma.shape());
    }
    if !(eps > 0.0) {
        return config_err(op, "eps must be positive");
    }
    Ok(c)
}

impl<S: Scalar> Tensor<S> {
    /// Training-mode batch norm over a channels-last tensor.
    ///
    /// Leading data is split into `groups` equal contiguous slices and each
    /// slice is normalized with its own per-channel statistics (`groups = 1`
    /// is ordinary batch norm over every non-channel axis). The returned stats
    /// are averaged over groups.
    pub fn batch_norm_train(
        &self,
        gamma: &Tensor<S>,
        beta: &Tensor<S>,
        groups: usize,
        eps: f64,
    ) -> Result<(Tensor<S>, BatchStats<S>)> {
        let c = check_affine("batch_norm", self, gamma, beta, eps)?;
        let rows_total = self.numel() / c;
        if groups == 0 || !rows_total.is_multiple_of(groups) {
            return config_err(
                "batch_norm",
                format!("{rows_total} rows not divisible into {groups} groups"),
            );
        }
        let rows = rows_total / groups;
        let x = self.data();
        let (gm, bt) = (gamma.data(), beta.data());
        let eps = S::of(eps);
        let n = S::of(rows as f64);

        let mut xhat = vec![S::zero(); x.len()];
        let mut inv_std = vec![S::zero(); groups * c];
        let mut stats = BatchStats {
            mean: vec![S::zero(); c],
            var: vec![S::zero(); c],
        };
        for g in 0..groups {
            let block = &x[g * rows * c..(g + 1) * rows * c];
            let mut mean = vec![S::zero(); c];
            for row in block.chunks(c) {
                for (m, &v) in mean.iter_mut().zip(row) {
                    *m = *m + v;
                }
            }
            mean.iter_mut().for_each(|m| *m = *m / n);
            let mut var = vec![S::zero(); c];
            for row in block.chunks(c) {
                for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                    *s = *s + (v - m) * (v - m);
                }
            }
            for ch in 0..c {
                let biased = var[ch] / n;
                inv_std[g * c + ch] = S::one() / (biased + eps).sqrt();
                let unbiased = if rows > 1 {
                    var[ch] / S::of((rows - 1) as f64)
                } else {
                    biased
                };
                stats.mean[ch] = stats.mean[ch] + mean[ch] / S::of(groups as f64);
                stats.var[ch] = stats.var[ch] + unbiased / S::of(groups as f64);
            }
            let out = &mut xhat[g * rows * c..(g + 1) * rows * c];
            for (orow, row) in out.chunks_mut(c).zip(block.chunks(c)) {
                for ch in 0..c {
                    orow[ch] = (row[ch] - mean[ch]) * inv_std[g * c + ch];
                }
            }
        }
        let mut y = vec![S::zero(); x.len()];
        for (yrow, hrow) in y.chunks_mut(c).zip(xhat.chunks(c)) {
            for ch in 0..c {
                yrow[ch] = gm[ch] * hrow[ch] + bt[ch];
            }
        }
        let out = Tensor::from_op(
            "batch_norm",
            self.shape().to_vec(),
            Arc::new(y),
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(move |g, p| {
                let gm = p[1].data();
                let mut dgamma = vec![S::zero(); c];
                let mut dbeta = vec![S::zero(); c];
                for (grow, hrow) in g.chunks(c).zip(xhat.chunks(c)) {
                    for ch in 0..c {
                        dgamma[ch] = dgamma[ch] + grow[ch] * hrow[ch];
                        dbeta[ch] = dbeta[ch] + grow[ch];
                    }
                }
                let dx = p[0].requires_grad().then(|| {
                    let mut dx = vec![S::zero(); g.len()];
                    for grp in 0..groups {
                        let range = grp * rows * c..(grp + 1) * rows * c;
                        let (gb, hb) = (&g[range.clone()], &xhat[range.clone()]);
                        let mut sum_d = vec![S::zero(); c];
                        let mut sum_dh = vec![S::zero(); c];
                        for (grow, hrow) in gb.chunks(c).zip(hb.chunks(c)) {
                            for ch in 0..c {
                                let d = grow[ch] * gm[ch];
                                sum_d[ch] = sum_d[ch] + d;
                                sum_dh[ch] = sum_dh[ch] + d * hrow[ch];
                            }
                        }
                        let dxb = &mut dx[range];
                        for ((drow, grow), hrow) in
                            dxb.chunks_mut(c).zip(gb.chunks(c)).zip(hb.chunks(c))
                        {
                            for ch in 0..c {
                                let d = grow[ch] * gm[ch];
                                drow[ch] = inv_std[grp * c + ch] / n
                                    * (n * d - sum_d[ch] - hrow[ch] * sum_dh[ch]);
                            }
                        }
                    }
                    dx
                });
                vec![
                    dx,
                    p[1].requires_grad().then_some(dgamma),
                    p[2].requires_grad().then_some(dbeta),
                ]
            }),
        );
        Ok((out, stats))
    }

    /// Eval-mode batch norm with fixed per-channel statistics.
    pub fn batch_norm_eval(
        &self,
        gamma: &Tensor<S>,
        beta: &Tensor<S>,
        mean: &[S],
        var: &[S],
        eps: f64,
    ) -> Result<Tensor<S>> {
        let c = check_affine("batch_norm", self, gamma, beta, eps)?;
        if mean.len() != c || var.len() != c {
            return shape_err("batch_norm running stats", &[c], &[mean.len()]);
        }
        let eps = S::of(eps);
        let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();
        let mean = mean.to_vec();
        let (gm, bt) = (gamma.data(), beta.data());
        let mut y = vec![S::zero(); self.numel()];
        for (yrow, row) in y.chunks_mut(c).zip(self.data().chunks(c)) {
            for ch in 0..c {
                yrow[ch] = gm[ch] * (row[ch] - mean[ch]) * inv_std[ch] + bt[ch];
            }
        }
        Ok(Tensor::from_op(
            "batch_norm_eval",
            self.shape().to_vec(),
            Arc::new(y),
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(move |g, p| {
                let (x, gm) = (p[0].data(), p[1].data());
                let mut dgamma = vec![S::zero(); c];
                let mut dbeta = vec![S::zero(); c];
                let mut dx = vec![S::zero(); g.len()];
                for ((grow, row), drow) in g.chunks(c).zip(x.chunks(c)).zip(dx.chunks_mut(c)) {
                    for ch in 0..c {
                        let h = (row[ch] - mean[ch]) * inv_std[ch];
                        dgamma[ch] = dgamma[ch] + grow[ch] * h;
                        dbeta[ch] = dbeta[ch] + grow[ch];
                        drow[ch] = grow[ch] * gm[ch] * inv_std[ch];
                    }
                }
                vec![
                    p[0].requires_grad().then_some(dx),
                    p[1].requires_grad().then_some(dgamma),
                    p[2].requires_grad().then_some(dbeta),
                ]
            }),
        ))
    }

    /// Layer norm over the trailing (channel) axis.
    pub fn layer_norm(&self, gamma: &Tensor<S>, beta: &Tensor<S>, eps: f64) -> Result<Tensor<S>> {
        let c = match self.shape().last() {
            Some(&c) => c,
            None => return config_err("layer_norm", "needs rank >= 1"),
        };
        if gamma.numel() != c || beta.numel() != c {
            return shape_err("layer_norm", self.shape(), gamma.shape());
        }
        let n = S::of(c as f64);
        let eps = S::of(eps);
        let mut xhat = vec![S::zero(); self.numel()];
        let mut inv_std = Vec::with_capacity(self.numel() / c.max(1));
        for (hrow, row) in xhat.chunks_mut(c).zip(self.data().chunks(c)) {
            let mean = row.iter().copied().sum::<S>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
            let is = S::one() / (var + eps).sqrt();
            inv_std.push(is);
            for (h, &v) in hrow.iter_mut().zip(row) {
                *h = (v - mean) * is;
            }
        }
        let (gm, bt) = (gamma.data(), beta.data());
        let mut y = vec![S::zero(); self.numel()];
        for (yrow, hrow) in y.chunks_mut(c).zip(xhat.chunks(c)) {
            for ch in 0..c {
                yrow[ch] = gm[ch] * hrow[ch] + bt[ch];
            }
        }
        Ok(Tensor::from_op(
            "layer_norm",
            self.shape().to_vec(),
            Arc::new(y),
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(move |g, p| {
                let gm = p[1].data();
                let mut dgamma = vec![S::zero(); c];
                let mut dbeta = vec![S::zero(); c];
                let mut dx = vec![S::zero(); g.len()];
                for (((grow, hrow), drow), &is) in g
                    .chunks(c)
                    .zip(xhat.chunks(c))
                    .zip(dx.chunks_mut(c))
                    .zip(&inv_std)
                {
                    let mut sum_d = S::zero();
                    let mut sum_dh = S::zero();
                    for ch in 0..c {
                        dgamma[ch] = dgamma[ch] + grow[ch] * hrow[ch];
                        dbeta[ch] = dbeta[ch] + grow[ch];
                        let d = grow[ch] * gm[ch];
                        sum_d = sum_d + d;
                        sum_dh = sum_dh + d * hrow[ch];
                    }
                    for ch in 0..c {
                        let d = grow[ch] * gm[ch];
                        drow[ch] = is / n * (n * d - sum_d - hrow[ch] * sum_dh);
                    }
                }
                vec![
                    p[0].requires_grad().then_some(dx),
                    p[1].requires_grad().then_some(dgamma),
                    p[2].requires_grad().then_some(dbeta),
                ]
            }),
        ))
    }

    /// Numerically stable softmax over the trailing axis.
    pub fn softmax_last(&self) -> Result<Tensor<S>> {
        let c = match self.shape().last() {
            Some(&c) if c > 0 => c,
            _ => return config_err("softmax", "needs a non-empty trailing axis"),
        };
        let mut y = vec![S::zero(); self.numel()];
        for (yrow, row) in y.chunks_mut(c).zip(self.data().chunks(c)) {
            let m = row.iter().copied().fold(S::neg_infinity(), S::max);
            let mut z = S::zero();
            for (o, &v) in yrow.iter_mut().zip(row) {
                *o = (v - m).exp();
                z = z + *o;
            }
            for o in yrow.iter_mut() {
                *o = *o / z;
            }
        }
        let y = Arc::new(y);
        let saved = Arc::clone(&y);
        Ok(Tensor::from_op(
            "softmax",
            self.shape().to_vec(),
            y,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut dx = vec![S::zero(); g.len()];
                for ((drow, grow), yrow) in dx.chunks_mut(c).zip(g.chunks(c)).zip(saved.chunks(c)) {
                    let dot: S = grow.iter().zip(yrow).map(|(&a, &b)| a * b).sum();
                    for ch in 0..c {
                        drow[ch] = yrow[ch] * (grow[ch] - dot);
                    }
                }
                vec![Some(dx)]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use crate::Tensor;

    #[test]
    fn softmax_hand_values() {
        let x = Tensor::<f64>::from_vec(vec![0.0, 3f64.ln()], &[1, 2]).unwrap();
        let y = x.softmax_last().unwrap();
        assert!((y.data()[0] - 0.25).abs() < 1e-12);
        assert!((y.data()[1] - 0.75).abs() < 1e-12);
        let flat = Tensor::<f64>::full(&[2, 5], 3.0).softmax_last().unwrap();
        assert!(flat.data().iter().all(|&v| (v - 0.2).abs() < 1e-12));
    }

    #[test]
    fn batch_norm_train_standardizes() {
        let data: Vec<f64> = (0..60)
            .map(|i| ((i * 37) % 11) as f64 * 0.3 - 1.0)
            .collect();
        let x = Tensor::<f64>::from_vec(data, &[1, 4, 5, 3]).unwrap();
        let (y, _) = x
            .batch_norm_train(&Tensor::ones(&[3]), &Tensor::zeros(&[3]), 1, 1e-5)
            .unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = y.data().iter().skip(ch).step_by(3).copied().collect();
            let mean = vals.iter().sum::<f64>() / 20.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 20.0;
            assert!(mean.abs() < 1e-4);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn batch_norm_on_standardized_input_is_near_identity() {
        // each channel already has mean 0 and biased variance 1
        let x = Tensor::<f64>::from_vec(vec![-1.0, 1.0, 1.0, -1.0], &[2, 2]).unwrap();
        let (y, _) = x
            .batch_norm_train(&Tensor::ones(&[2]), &Tensor::zeros(&[2]), 1, 1e-5)
            .unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn layer_norm_of_constant_row_is_zero() {
        let x = Tensor::<f64>::full(&[3, 4], 7.0);
        let y = x
            .layer_norm(&Tensor::ones(&[4]), &Tensor::zeros(&[4]), 1e-5)
            .unwrap();
        assert!(y.data().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn layer_norm_rows_have_zero_mean() {
        let data: Vec<f64> = (0..24).map(|i| (i as f64 * 1.3).sin() * 4.0).collect();
        let x = Tensor::<f64>::from_vec(data, &[6, 4]).unwrap();
        let y = x
            .layer_norm(&Tensor::ones(&[4]), &Tensor::zeros(&[4]), 1e-5)
            .unwrap();
        for row in y.data().chunks(4) {
            assert!((row.iter().sum::<f64>() / 4.0).abs() < 1e-6);
        }
    }
}
