use std::sync::atomic::{AtomicBool, Ordering};

use unist_tensor::nn::{join, Conv3d, Mode};
use unist_tensor::{ParamStore, Scalar, Tensor};

use crate::error::{Error, Result};
use crate::layers::{ConvBnRelu, ConvSpec};

fn check_features<S: Scalar>(op: &str, f: &Tensor<S>, c1: usize) -> Result<()> {
    let s = f.shape();
    if s.len() != 4 || s[3] != c1 {
        return Err(Error::Dimension(format!(
            "{op}: expected [T,h1,w1,{c1}], got {s:?}"
        )));
    }
    Ok(())
}

fn warn_downsample(flag: &AtomicBool, op: &str, from: (usize, usize), to: (usize, usize)) {
    if (to.0 < from.0 || to.1 < from.1) && !flag.swap(true, Ordering::Relaxed) {
        log::warn!("{op}: output {to:?} is smaller than features {from:?}; downsampling");
    }
}

/// Collapses T with a full-span temporal kernel, then a 1×1×1 conv and sigmoid.
pub struct VspDecoder<S: Scalar> {
    pub collapse: ConvBnRelu<S>,
    pub head: Conv3d<S>,
    frames: usize,
    warned: AtomicBool,
}

impl<S: Scalar> VspDecoder<S> {
    pub fn new(store: &mut ParamStore<S>, name: &str, c1: usize, frames: usize) -> Result<Self> {
        let spec = ConvSpec {
            kernel: [frames, 3, 3],
            stride: [1, 1, 1],
            pad: [0, 1, 1],
        };
        let pw = ConvSpec::pointwise();
        Ok(VspDecoder {
            collapse: ConvBnRelu::new(store, &join(name, "collapse"), c1, c1, spec, false)?,
            head: Conv3d::new(
                store,
                &join(name, "head"),
                c1,
                1,
                pw.kernel,
                pw.stride,
                pw.pad,
                true,
            )?,
            frames,
            warned: AtomicBool::new(false),
        })
    }

    /// `[T,h1,w1,C1] → [H_out, W_out]`.
    pub fn forward(&self, f: &Tensor<S>, out: (usize, usize), mode: Mode) -> Result<Tensor<S>> {
        check_features("vsp_decode", f, self.head.weight.shape()[3])?;
        if f.shape()[0] != self.frames {
            return Err(Error::Dimension(format!(
                "vsp_decode built for T={}, got {:?}",
                self.frames,
                f.shape()
            )));
        }
        warn_downsample(
            &self.warned,
            "vsp_decode",
            (f.shape()[1], f.shape()[2]),
            out,
        );
        let y = self
            .head
            .forward(&self.collapse.forward(f, mode)?)?
            .sigmoid();
        Ok(y.resize_bilinear(out.0, out.1)?.reshape(&[out.0, out.1])?)
    }
}

/// Frame-wise 3×3 conv and sigmoid.
pub struct VsodDecoder<S: Scalar> {
    pub head: Conv3d<S>,
    warned: AtomicBool,
}

impl<S: Scalar> VsodDecoder<S> {
    pub fn new(store: &mut ParamStore<S>, name: &str, c1: usize) -> Result<Self> {
        let s = ConvSpec::spatial3(1);
        Ok(VsodDecoder {
            head: Conv3d::new(
                store,
                &join(name, "head"),
                c1,
                1,
                s.kernel,
                s.stride,
                s.pad,
                true,
            )?,
            warned: AtomicBool::new(false),
        })
    }

    /// `[T,h1,w1,C1] → [T, H_out, W_out]`.
    pub fn forward(&self, f: &Tensor<S>, out: (usize, usize)) -> Result<Tensor<S>> {
        check_features("vsod_decode", f, self.head.weight.shape()[3])?;
        warn_downsample(
            &self.warned,
            "vsod_decode",
            (f.shape()[1], f.shape()[2]),
            out,
        );
        let t = f.shape()[0];
        let y = self.head.forward(f)?.sigmoid();
        Ok(y.resize_bilinear(out.0, out.1)?
            .reshape(&[t, out.0, out.1])?)
    }
}
