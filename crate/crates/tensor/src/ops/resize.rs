use std::sync::Arc;

use crate::error::{config_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Two-tap linear interpolation weights for one output coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub lo: usize,
    pub hi: usize,
    pub w_hi: f64,
}

/// Half-pixel-center sampling: `src = (dst + 0.5)·in/out − 0.5`, clamped to the edge.
pub fn linear_taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|d| {
            let src = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            let w_hi = if hi == lo { 0.0 } else { src - lo as f64 };
            Tap { lo, hi, w_hi }
        })
        .collect()
}

impl<S: Scalar> Tensor<S> {
    /// Bilinear resize of the two axes before the channel axis of a
    /// `[..., H, W, C]` tensor; leading axes are treated as a batch.
    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> Result<Tensor<S>> {
        let r = self.rank();
        if r < 3 {
            return config_err(
                "resize_bilinear",
                format!("needs rank >= 3, got {:?}", self.shape()),
            );
        }
        let (h, w, c) = (
            self.shape()[r - 3],
            self.shape()[r - 2],
            self.shape()[r - 1],
        );
        if h == 0 || w == 0 || out_h == 0 || out_w == 0 {
            return config_err("resize_bilinear", "spatial sizes must be >= 1");
        }
        if (h, w) == (out_h, out_w) {
            return Ok(self.clone());
        }
        let batch = self.numel() / (h * w * c);
        let ty = linear_taps(h, out_h);
        let tx = linear_taps(w, out_w);
        let x = self.data();
        let mut out = vec![S::zero(); batch * out_h * out_w * c];
        for b in 0..batch {
            let src = &x[b * h * w * c..(b + 1) * h * w * c];
            let dst = &mut out[b * out_h * out_w * c..(b + 1) * out_h * out_w * c];
            for (oy, tyy) in ty.iter().enumerate() {
                let wy = S::of(tyy.w_hi);
                for (ox, txx) in tx.iter().enumerate() {
                    let wx = S::of(txx.w_hi);
                    let o = &mut dst[(oy * out_w + ox) * c..(oy * out_w + ox + 1) * c];
                    let at = |iy: usize, ix: usize| &src[(iy * w + ix) * c..(iy * w + ix + 1) * c];
                    let (r00, r01) = (at(tyy.lo, txx.lo), at(tyy.lo, txx.hi));
                    let (r10, r11) = (at(tyy.hi, txx.lo), at(tyy.hi, txx.hi));
                    // lerp form keeps constant fields exact
                    for ch in 0..c {
                        let top = r00[ch] + wx * (r01[ch] - r00[ch]);
                        let bot = r10[ch] + wx * (r11[ch] - r10[ch]);
                        o[ch] = top + wy * (bot - top);
                    }
                }
            }
        }
        let mut shape = self.shape().to_vec();
        shape[r - 3] = out_h;
        shape[r - 2] = out_w;
        Ok(Tensor::from_op(
            "resize_bilinear",
            shape,
            Arc::new(out),
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut dx = vec![S::zero(); batch * h * w * c];
                for b in 0..batch {
                    let gs = &g[b * out_h * out_w * c..(b + 1) * out_h * out_w * c];
                    let d = &mut dx[b * h * w * c..(b + 1) * h * w * c];
                    for (oy, tyy) in ty.iter().enumerate() {
                        let (wy1, wy0) = (S::of(tyy.w_hi), S::of(1.0 - tyy.w_hi));
                        for (ox, txx) in tx.iter().enumerate() {
                            let (wx1, wx0) = (S::of(txx.w_hi), S::of(1.0 - txx.w_hi));
                            let go = &gs[(oy * out_w + ox) * c..(oy * out_w + ox + 1) * c];
                            let corners = [
                                (tyy.lo, txx.lo, wy0 * wx0),
                                (tyy.lo, txx.hi, wy0 * wx1),
                                (tyy.hi, txx.lo, wy1 * wx0),
                                (tyy.hi, txx.hi, wy1 * wx1),
                            ];
                            for (iy, ix, wt) in corners {
                                if wt == S::zero() {
                                    continue;
                                }
                                let dd = &mut d[(iy * w + ix) * c..(iy * w + ix + 1) * c];
                                for (dv, &gv) in dd.iter_mut().zip(go) {
                                    *dv = *dv + wt * gv;
                                }
                            }
                        }
                    }
                }
                vec![Some(dx)]
            }),
        ))
    }

    /// Exact 2× bilinear upsampling of `[..., H, W, C]`.
    pub fn interpolate_bilinear2x(&self) -> Result<Tensor<S>> {
        let r = self.rank();
        if r < 3 {
            return config_err("interpolate_bilinear2x", "needs rank >= 3");
        }
        let (h, w) = (self.shape()[r - 3], self.shape()[r - 2]);
        self.resize_bilinear(2 * h, 2 * w)
    }
}
