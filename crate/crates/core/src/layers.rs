use unist_tensor::nn::{join, BatchNorm, Conv3d, Mode};
use unist_tensor::{ParamStore, Scalar, Tensor};

use crate::error::Result;

/// Conv (no bias) → batch norm → ReLU.
pub struct ConvBnRelu<S: Scalar> {
    pub conv: Conv3d<S>,
    pub bn: BatchNorm<S>,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvSpec {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

impl ConvSpec {
    /// Frame-wise 3×3 conv.
    pub const fn spatial3(stride: usize) -> Self {
        ConvSpec {
            kernel: [1, 3, 3],
            stride: [1, stride, stride],
            pad: [0, 1, 1],
        }
    }

    pub const fn cube3() -> Self {
        ConvSpec {
            kernel: [3, 3, 3],
            stride: [1, 1, 1],
            pad: [1, 1, 1],
        }
    }

    pub const fn pointwise() -> Self {
        ConvSpec {
            kernel: [1, 1, 1],
            stride: [1, 1, 1],
            pad: [0, 0, 0],
        }
    }
}

impl<S: Scalar> ConvBnRelu<S> {
    pub fn new(
        store: &mut ParamStore<S>,
        name: &str,
        cin: usize,
        cout: usize,
        spec: ConvSpec,
        per_frame_bn: bool,
    ) -> Result<Self> {
        Ok(ConvBnRelu {
            conv: Conv3d::new(
                store,
                &join(name, "conv"),
                cin,
                cout,
                spec.kernel,
                spec.stride,
                spec.pad,
                false,
            )?,
            bn: BatchNorm::new(store, &join(name, "bn"), cout, per_frame_bn)?,
        })
    }

    pub fn forward(&self, x: &Tensor<S>, mode: Mode) -> Result<Tensor<S>> {
        Ok(self.bn.forward(&self.conv.forward(x)?, mode)?.relu())
    }
}
