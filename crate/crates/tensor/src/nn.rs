//! Parameterized layers built on the differentiable ops.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use crate::error::{shape_err, Result};
use crate::param::{Buffer, ParamStore, Parameter};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Channels-last 3D convolution layer.
#[derive(Debug, Clone)]
pub struct Conv3d<S: Scalar> {
    pub weight: Parameter<S>,
    pub bias: Option<Parameter<S>>,
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

impl<S: Scalar> Conv3d<S> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore<S>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        pad: [usize; 3],
        bias: bool,
    ) -> Result<Self> {
        let fan_in = kernel.iter().product::<usize>() * cin;
        let weight = store.uniform(
            &join(name, "weight"),
            &[kernel[0], kernel[1], kernel[2], cin, cout],
            fan_in,
        )?;
        let bias = if bias {
            Some(store.constant(&join(name, "bias"), &[cout], 0.0)?)
        } else {
            None
        };
        Ok(Conv3d {
            weight,
            bias,
            stride,
            pad,
        })
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let b = self.bias.as_ref().map(|b| b.tensor());
        x.conv3d(&self.weight.tensor(), b.as_ref(), self.stride, self.pad)
    }

    pub fn cout(&self) -> usize {
        *self.weight.shape().last().expect("conv weight rank 5")
    }
}

/// `[..., Cin] → [..., Cout]` projection.
#[derive(Debug, Clone)]
pub struct Linear<S: Scalar> {
    pub weight: Parameter<S>,
    pub bias: Option<Parameter<S>>,
}

impl<S: Scalar> Linear<S> {
    pub fn new(
        store: &mut ParamStore<S>,
        name: &str,
        cin: usize,
        cout: usize,
        bias: bool,
    ) -> Result<Self> {
        let weight = store.uniform(&join(name, "weight"), &[cin, cout], cin)?;
        let bias = if bias {
            Some(store.constant(&join(name, "bias"), &[cout], 0.0)?)
        } else {
            None
        };
        Ok(Linear { weight, bias })
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let w = self.weight.tensor();
        let (cin, cout) = (w.shape()[0], w.shape()[1]);
        let Some(&last) = x.shape().last() else {
            return shape_err("linear", x.shape(), w.shape());
        };
        if last != cin {
            return shape_err("linear", x.shape(), w.shape());
        }
        let rows = x.numel() / cin;
        let mut y = x.reshape(&[rows, cin])?.matmul(&w)?;
        if let Some(b) = &self.bias {
            y = y.add_bias(&b.tensor())?;
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().expect("nonempty") = cout;
        y.reshape(&shape)
    }
}

/// Batch norm with running statistics (momentum 0.1 by default).
///
/// With `per_frame` set, each slice along the leading axis is normalized by
/// its own statistics.
pub struct BatchNorm<S: Scalar> {
    pub gamma: Parameter<S>,
    pub beta: Parameter<S>,
    pub running_mean: Arc<Buffer<S>>,
    pub running_var: Arc<Buffer<S>>,
    /// Number of training steps folded into the running stats.
    pub tracked: Arc<Buffer<S>>,
    pub momentum: f64,
    pub eps: f64,
    pub per_frame: bool,
    warned: AtomicBool,
}

impl<S: Scalar> BatchNorm<S> {
    pub fn new(
        store: &mut ParamStore<S>,
        name: &str,
        channels: usize,
        per_frame: bool,
    ) -> Result<Self> {
        Ok(BatchNorm {
            gamma: store.constant(&join(name, "gamma"), &[channels], 1.0)?,
            beta: store.constant(&join(name, "beta"), &[channels], 0.0)?,
            running_mean: store.buffer(&join(name, "running_mean"), &[channels], 0.0)?,
            running_var: store.buffer(&join(name, "running_var"), &[channels], 1.0)?,
            tracked: store.buffer(&join(name, "num_batches_tracked"), &[1], 0.0)?,
            momentum: 0.1,
            eps: 1e-5,
            per_frame,
            warned: AtomicBool::new(false),
        })
    }

    pub fn forward(&self, x: &Tensor<S>, mode: Mode) -> Result<Tensor<S>> {
        let (gamma, beta) = (self.gamma.tensor(), self.beta.tensor());
        match mode {
            Mode::Train => {
                let groups = if self.per_frame { x.shape()[0] } else { 1 };
                let (y, stats) = x.batch_norm_train(&gamma, &beta, groups, self.eps)?;
                let m = S::of(self.momentum);
                let keep = S::one() - m;
                let rm: Vec<S> = self
                    .running_mean
                    .get()
                    .iter()
                    .zip(&stats.mean)
                    .map(|(&r, &b)| keep * r + m * b)
                    .collect();
                let rv: Vec<S> = self
                    .running_var
                    .get()
                    .iter()
                    .zip(&stats.var)
                    .map(|(&r, &b)| keep * r + m * b)
                    .collect();
                self.running_mean.set(rm)?;
                self.running_var.set(rv)?;
                let t = self.tracked.get()[0];
                self.tracked.set(vec![t + S::one()])?;
                Ok(y)
            }
            Mode::Eval => {
                if self.tracked.get()[0] == S::zero() && !self.warned.swap(true, Ordering::Relaxed)
                {
                    log::warn!(
                        "{}: eval-mode batch norm before any training step; using mean 0, variance 1",
                        self.gamma.name()
                    );
                }
                x.batch_norm_eval(
                    &gamma,
                    &beta,
                    &self.running_mean.get(),
                    &self.running_var.get(),
                    self.eps,
                )
            }
        }
    }
}

pub struct LayerNorm<S: Scalar> {
    pub gamma: Parameter<S>,
    pub beta: Parameter<S>,
    pub eps: f64,
}

impl<S: Scalar> LayerNorm<S> {
    pub fn new(store: &mut ParamStore<S>, name: &str, channels: usize) -> Result<Self> {
        Ok(LayerNorm {
            gamma: store.constant(&join(name, "gamma"), &[channels], 1.0)?,
            beta: store.constant(&join(name, "beta"), &[channels], 0.0)?,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        x.layer_norm(&self.gamma.tensor(), &self.beta.tensor(), self.eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_stats_follow_momentum() {
        let mut store = ParamStore::<f64>::new(0);
        let bn = BatchNorm::new(&mut store, "bn", 1, false).unwrap();
        let x = Tensor::from_vec(vec![1.0, 3.0], &[2, 1]).unwrap();
        bn.forward(&x, Mode::Train).unwrap();
        // batch mean 2, unbiased var 2
        assert!((bn.running_mean.get()[0] - 0.2).abs() < 1e-12);
        assert!((bn.running_var.get()[0] - (0.9 + 0.2)).abs() < 1e-12);
        assert_eq!(bn.tracked.get()[0], 1.0);
    }

    #[test]
    fn eval_before_training_uses_unit_defaults() {
        let mut store = ParamStore::<f64>::new(0);
        let bn = BatchNorm::new(&mut store, "bn", 2, false).unwrap();
        let x = Tensor::from_vec(vec![0.5, -2.0, 1.5, 4.0], &[2, 2]).unwrap();
        let y = bn.forward(&x, Mode::Eval).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b / (1.0f64 + 1e-5).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn per_frame_stats_isolate_frames() {
        let mut store = ParamStore::<f64>::new(0);
        let bn = BatchNorm::new(&mut store, "bn", 1, true).unwrap();
        let a = Tensor::from_vec(vec![1.0, 2.0, 3.0, 5.0, 7.0, 9.0], &[2, 3, 1]).unwrap();
        let b = Tensor::from_vec(vec![1.0, 2.0, 3.0, -4.0, 0.0, 100.0], &[2, 3, 1]).unwrap();
        let ya = bn.forward(&a, Mode::Train).unwrap();
        let yb = bn.forward(&b, Mode::Train).unwrap();
        assert_eq!(&ya.data()[..3], &yb.data()[..3]);
    }

    #[test]
    fn linear_maps_trailing_axis() {
        let mut store = ParamStore::<f64>::new(3);
        let lin = Linear::new(&mut store, "proj", 4, 1, false).unwrap();
        let x = Tensor::<f64>::ones(&[2, 3, 4]);
        assert_eq!(lin.forward(&x).unwrap().shape(), &[2, 3, 1]);
    }
}
