//! Channels-last 3D/2D cross-correlation via chunked im2col.

use std::sync::Arc;

use crate::error::{config_err, shape_err, Result};
use crate::kernels::{mm_nn, mm_nt, mm_tn};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Output positions lowered per im2col chunk.
const CHUNK_POSITIONS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
    pub cin: usize,
    pub cout: usize,
}

impl ConvGeometry {
    pub fn output(&self) -> [usize; 3] {
        let mut o = [0; 3];
        for i in 0..3 {
            o[i] = (self.input[i] + 2 * self.pad[i] - self.kernel[i]) / self.stride[i] + 1;
        }
        o
    }

    fn positions(&self) -> usize {
        self.output().iter().product()
    }

    fn patch(&self) -> usize {
        self.kernel.iter().product::<usize>() * self.cin
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == [1, 1, 1] && self.stride == [1, 1, 1] && self.pad == [0, 0, 0]
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if self.stride[i] == 0 {
                return config_err("conv3d", "stride must be >= 1 on every axis");
            }
            if self.kernel[i] == 0 || self.kernel[i] > self.input[i] + 2 * self.pad[i] {
                return config_err(
                    "conv3d",
                    format!(
                        "kernel {:?} larger than padded input {:?} (pad {:?})",
                        self.kernel, self.input, self.pad
                    ),
                );
            }
        }
        Ok(())
    }

    /// Lowers output positions `[p0, p1)` into `col` rows of length `patch()`.
    fn im2col<S: Scalar>(&self, x: &[S], p0: usize, p1: usize, col: &mut Vec<S>) {
        let [_, oh, ow] = self.output();
        let [it, ih, iw] = self.input;
        let [kt, kh, kw] = self.kernel;
        let cin = self.cin;
        let patch = self.patch();
        col.clear();
        col.resize((p1 - p0) * patch, S::zero());
        for p in p0..p1 {
            let t = p / (oh * ow);
            let y = (p / ow) % oh;
            let xx = p % ow;
            let row = &mut col[(p - p0) * patch..(p - p0 + 1) * patch];
            let mut off = 0;
            for dt in 0..kt {
                let st = (t * self.stride[0] + dt) as isize - self.pad[0] as isize;
                for dy in 0..kh {
                    let sy = (y * self.stride[1] + dy) as isize - self.pad[1] as isize;
                    for dx in 0..kw {
                        let sx = (xx * self.stride[2] + dx) as isize - self.pad[2] as isize;
                        if st >= 0
                            && sy >= 0
                            && sx >= 0
                            && (st as usize) < it
                            && (sy as usize) < ih
                            && (sx as usize) < iw
                        {
                            let src = ((st as usize * ih + sy as usize) * iw + sx as usize) * cin;
                            row[off..off + cin].copy_from_slice(&x[src..src + cin]);
                        }
                        off += cin;
                    }
                }
            }
        }
    }

    /// Scatter-adds `dcol` rows for positions `[p0, p1)` back into `dx`.
    fn col2im<S: Scalar>(&self, dcol: &[S], p0: usize, p1: usize, dx: &mut [S]) {
        let [_, oh, ow] = self.output();
        let [it, ih, iw] = self.input;
        let [kt, kh, kw] = self.kernel;
        let cin = self.cin;
        let patch = self.patch();
        for p in p0..p1 {
            let t = p / (oh * ow);
            let y = (p / ow) % oh;
            let xx = p % ow;
            let row = &dcol[(p - p0) * patch..(p - p0 + 1) * patch];
            let mut off = 0;
            for dt in 0..kt {
                let st = (t * self.stride[0] + dt) as isize - self.pad[0] as isize;
                for dy in 0..kh {
                    let sy = (y * self.stride[1] + dy) as isize - self.pad[1] as isize;
                    for dxk in 0..kw {
                        let sx = (xx * self.stride[2] + dxk) as isize - self.pad[2] as isize;
                        if st >= 0
                            && sy >= 0
                            && sx >= 0
                            && (st as usize) < it
                            && (sy as usize) < ih
                            && (sx as usize) < iw
                        {
                            let dst = ((st as usize * ih + sy as usize) * iw + sx as usize) * cin;
                            for (d, &g) in dx[dst..dst + cin].iter_mut().zip(&row[off..off + cin]) {
                                *d = *d + g;
                            }
                        }
                        off += cin;
                    }
                }
            }
        }
    }
}

fn conv_forward<S: Scalar>(geo: &ConvGeometry, x: &[S], w: &[S], bias: Option<&[S]>) -> Vec<S> {
    let positions = geo.positions();
    let (patch, cout) = (geo.patch(), geo.cout);
    let mut out = Vec::with_capacity(positions * cout);
    if geo.is_pointwise() {
        out = mm_nn(x, w, positions, patch, cout);
    } else {
        let mut col = Vec::new();
        let mut p0 = 0;
        while p0 < positions {
            let p1 = (p0 + CHUNK_POSITIONS).min(positions);
            geo.im2col(x, p0, p1, &mut col);
            out.extend(mm_nn(&col, w, p1 - p0, patch, cout));
            p0 = p1;
        }
    }
    if let Some(b) = bias {
        for row in out.chunks_mut(cout) {
            for (o, &bv) in row.iter_mut().zip(b) {
                *o = *o + bv;
            }
        }
    }
    out
}

/// Returns (dx, dw) as requested.
fn conv_backward<S: Scalar>(
    geo: &ConvGeometry,
    x: &[S],
    w: &[S],
    g: &[S],
    want_dx: bool,
    want_dw: bool,
) -> (Option<Vec<S>>, Option<Vec<S>>) {
    let positions = geo.positions();
    let (patch, cout) = (geo.patch(), geo.cout);
    if geo.is_pointwise() {
        let dx = want_dx.then(|| mm_nt(g, w, positions, cout, patch));
        let dw = want_dw.then(|| mm_tn(x, g, positions, patch, cout));
        return (dx, dw);
    }
    let mut dx = want_dx.then(|| vec![S::zero(); x.len()]);
    let mut dw = want_dw.then(|| vec![S::zero(); w.len()]);
    let mut col = Vec::new();
    let mut p0 = 0;
    while p0 < positions {
        let p1 = (p0 + CHUNK_POSITIONS).min(positions);
        let gc = &g[p0 * cout..p1 * cout];
        if let Some(dw) = dw.as_mut() {
            geo.im2col(x, p0, p1, &mut col);
            let part = mm_tn(&col, gc, p1 - p0, patch, cout);
            for (d, v) in dw.iter_mut().zip(part) {
                *d = *d + v;
            }
        }
        if let Some(dx) = dx.as_mut() {
            let dcol = mm_nt(gc, w, p1 - p0, cout, patch);
            geo.col2im(&dcol, p0, p1, dx);
        }
        p0 = p1;
    }
    (dx, dw)
}

impl<S: Scalar> Tensor<S> {
    /// `x[T,H,W,Cin] ⋆ w[kt,kh,kw,Cin,Cout] (+ bias[Cout]) → [T',H',W',Cout]`,
    /// with `T' = (T + 2·pt − kt)/st + 1` and likewise for H', W'.
    pub fn conv3d(
        &self,
        weight: &Tensor<S>,
        bias: Option<&Tensor<S>>,
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Result<Tensor<S>> {
        let (xs, ws) = (self.shape(), weight.shape());
        if xs.len() != 4 || ws.len() != 5 || ws[3] != xs[3] {
            return shape_err("conv3d", xs, ws);
        }
        if let Some(b) = bias {
            if b.numel() != ws[4] {
                return shape_err("conv3d bias", ws, b.shape());
            }
        }
        let geo = ConvGeometry {
            input: [xs[0], xs[1], xs[2]],
            kernel: [ws[0], ws[1], ws[2]],
            stride,
            pad,
            cin: xs[3],
            cout: ws[4],
        };
        geo.validate()?;
        let out = conv_forward(&geo, self.data(), weight.data(), bias.map(|b| b.data()));
        let [ot, oh, ow] = geo.output();
        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        Ok(Tensor::from_op(
            "conv3d",
            vec![ot, oh, ow, geo.cout],
            Arc::new(out),
            parents,
            Box::new(move |g, p| {
                let (dx, dw) = conv_backward(
                    &geo,
                    p[0].data(),
                    p[1].data(),
                    g,
                    p[0].requires_grad(),
                    p[1].requires_grad(),
                );
                let mut grads = vec![dx, dw];
                if p.len() == 3 {
                    grads.push(p[2].requires_grad().then(|| {
                        let mut db = vec![S::zero(); geo.cout];
                        for row in g.chunks(geo.cout) {
                            for (d, &v) in db.iter_mut().zip(row) {
                                *d = *d + v;
                            }
                        }
                        db
                    }));
                }
                grads
            }),
        ))
    }

    /// `x[H,W,Cin] ⋆ w[kh,kw,Cin,Cout] → [H',W',Cout]`.
    pub fn conv2d(
        &self,
        weight: &Tensor<S>,
        bias: Option<&Tensor<S>>,
        stride: [usize; 2],
        pad: [usize; 2],
    ) -> Result<Tensor<S>> {
        let (xs, ws) = (self.shape(), weight.shape());
        if xs.len() != 3 || ws.len() != 4 {
            return shape_err("conv2d", xs, ws);
        }
        let x3 = self.reshape(&[1, xs[0], xs[1], xs[2]])?;
        let out = x3.conv2d_frames(weight, bias, stride, pad)?;
        let os = out.shape().to_vec();
        out.reshape(&[os[1], os[2], os[3]])
    }

    /// Applies the same 2D kernel `w[kh,kw,Cin,Cout]` to every frame of `x[T,H,W,Cin]`.
    pub fn conv2d_frames(
        &self,
        weight: &Tensor<S>,
        bias: Option<&Tensor<S>>,
        stride: [usize; 2],
        pad: [usize; 2],
    ) -> Result<Tensor<S>> {
        let ws = weight.shape();
        if ws.len() != 4 {
            return shape_err("conv2d", self.shape(), ws);
        }
        let w3 = weight.reshape(&[1, ws[0], ws[1], ws[2], ws[3]])?;
        self.conv3d(&w3, bias, [1, stride[0], stride[1]], [0, pad[0], pad[1]])
    }
}

#[cfg(test)]
mod tests {
    use crate::Tensor;

    #[test]
    fn pointwise_identity_is_identity() {
        let x = Tensor::<f64>::from_vec((0..24).map(f64::from).collect(), &[2, 3, 4, 1]).unwrap();
        let w = Tensor::<f64>::from_vec(vec![1.0], &[1, 1, 1, 1, 1]).unwrap();
        let y = x.conv3d(&w, None, [1, 1, 1], [0, 0, 0]).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn spatial_stride_preserves_time() {
        let x = Tensor::<f32>::zeros(&[4, 8, 8, 2]);
        let w = Tensor::<f32>::zeros(&[1, 2, 2, 2, 3]);
        let y = x.conv3d(&w, None, [1, 2, 2], [0, 0, 0]).unwrap();
        assert_eq!(y.shape(), &[4, 4, 4, 3]);
    }

    #[test]
    fn oversized_kernel_is_config_error() {
        let x = Tensor::<f32>::zeros(&[1, 2, 2, 1]);
        let w = Tensor::<f32>::zeros(&[1, 3, 3, 1, 1]);
        assert!(x.conv3d(&w, None, [1, 1, 1], [0, 0, 0]).is_err());
        assert!(x.conv3d(&w, None, [1, 1, 1], [0, 1, 1]).is_ok());
        assert!(x.conv3d(&w, None, [1, 0, 1], [0, 1, 1]).is_err());
    }

    #[test]
    fn averaging_kernel_keeps_constant_interior() {
        let x = Tensor::<f64>::full(&[5, 5, 1], 2.5);
        let w = Tensor::<f64>::full(&[3, 3, 1, 1], 1.0 / 9.0);
        let y = x.conv2d(&w, None, [1, 1], [1, 1]).unwrap();
        for r in 1..4 {
            for c in 1..4 {
                assert!((y.data()[r * 5 + c] - 2.5).abs() < 1e-12);
            }
        }
        // zero padding pulls the corner down
        assert!(y.data()[0] < 2.5);
    }
}
