//! Frame-wise strided-conv pyramid: a /4 stem then three /2 stages.

use unist_tensor::nn::{join, Mode};
use unist_tensor::{ParamStore, Scalar, Tensor};

use crate::error::{Error, Result};
use crate::layers::{ConvBnRelu, ConvSpec};

/// Levels `f_X1..f_X4`, each `[T, H/2^(i+1), W/2^(i+1), C_i]`.
#[derive(Debug, Clone)]
pub struct FeaturePyramid<S: Scalar> {
    pub levels: [Tensor<S>; 4],
}

impl<S: Scalar> FeaturePyramid<S> {
    pub fn level(&self, i: usize) -> &Tensor<S> {
        &self.levels[i - 1]
    }

    pub fn shapes(&self) -> [Vec<usize>; 4] {
        std::array::from_fn(|i| self.levels[i].shape().to_vec())
    }
}

pub struct Encoder<S: Scalar> {
    stem: [ConvBnRelu<S>; 2],
    stages: [ConvBnRelu<S>; 3],
}

impl<S: Scalar> Encoder<S> {
    pub fn new(store: &mut ParamStore<S>, name: &str, channels: [usize; 4]) -> Result<Self> {
        let [c1, c2, c3, c4] = channels;
        let s2 = ConvSpec::spatial3(2);
        // per-frame batch-norm statistics
        let stem = [
            ConvBnRelu::new(store, &join(name, "stem0"), 3, c1, s2, true)?,
            ConvBnRelu::new(store, &join(name, "stem1"), c1, c1, s2, true)?,
        ];
        let stages = [
            ConvBnRelu::new(store, &join(name, "stage2"), c1, c2, s2, true)?,
            ConvBnRelu::new(store, &join(name, "stage3"), c2, c3, s2, true)?,
            ConvBnRelu::new(store, &join(name, "stage4"), c3, c4, s2, true)?,
        ];
        Ok(Encoder { stem, stages })
    }

    pub fn encode(&self, clip: &Tensor<S>, mode: Mode) -> Result<FeaturePyramid<S>> {
        let s = clip.shape();
        if s.len() != 4 || s[3] != 3 {
            return Err(Error::config(
                "clip",
                format!("expected [T,H,W,3], got {s:?}"),
            ));
        }
        if s[0] == 0 {
            return Err(Error::config("clip", "T must be at least 1"));
        }
        if !s[1].is_multiple_of(32) || !s[2].is_multiple_of(32) || s[1] == 0 || s[2] == 0 {
            return Err(Error::config(
                "clip",
                format!(
                    "H and W must be positive multiples of 32, got {}x{}",
                    s[1], s[2]
                ),
            ));
        }
        let x = self.stem[0].forward(clip, mode)?;
        let f1 = self.stem[1].forward(&x, mode)?;
        let f2 = self.stages[0].forward(&f1, mode)?;
        let f3 = self.stages[1].forward(&f2, mode)?;
        let f4 = self.stages[2].forward(&f3, mode)?;
        Ok(FeaturePyramid {
            levels: [f1, f2, f3, f4],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_multiple_of_32() {
        let mut store = ParamStore::<f32>::new(0);
        let enc = Encoder::new(&mut store, "enc", [8, 16, 32, 64]).unwrap();
        let clip = Tensor::<f32>::zeros(&[1, 48, 64, 3]);
        assert!(matches!(
            enc.encode(&clip, Mode::Train),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn level_shapes_64() {
        let mut store = ParamStore::<f32>::new(0);
        let enc = Encoder::new(&mut store, "enc", [8, 16, 32, 64]).unwrap();
        let p = enc
            .encode(&Tensor::full(&[2, 64, 64, 3], 0.5), Mode::Train)
            .unwrap();
        assert_eq!(
            p.shapes(),
            [
                vec![2, 16, 16, 8],
                vec![2, 8, 8, 16],
                vec![2, 4, 4, 32],
                vec![2, 2, 2, 64]
            ]
        );
    }
}
