use unist_tensor::{Scalar, Tensor};

use crate::error::{Error, Result};

/// Spatio-temporal shape `(T, h, w, C)` behind a flattened token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Layout {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Layout {
    pub fn new(t: usize, h: usize, w: usize, c: usize) -> Self {
        Layout { t, h, w, c }
    }

    pub fn tokens(&self) -> usize {
        self.t * self.h * self.w
    }

    /// Layout of pyramid level `i` (1-based) for an `H × W` clip.
    pub fn of_level(t: usize, height: usize, width: usize, i: usize, c: usize) -> Layout {
        Layout::new(t, height >> (i + 1), width >> (i + 1), c)
    }

    pub fn grid(&self) -> (usize, usize, usize) {
        (self.t, self.h, self.w)
    }
}

/// A `(T·h·w) × C` token matrix that remembers its layout.
#[derive(Debug, Clone)]
pub struct TokenSequence<S: Scalar> {
    pub tokens: Tensor<S>,
    pub layout: Layout,
}

impl<S: Scalar> TokenSequence<S> {
    /// Flattens a `[T, h, w, C]` map.
    pub fn from_map(map: &Tensor<S>) -> Result<Self> {
        let s = map.shape();
        if s.len() != 4 {
            return Err(Error::config(
                "tokens",
                format!("expected a [T,h,w,C] map, got {s:?}"),
            ));
        }
        let layout = Layout::new(s[0], s[1], s[2], s[3]);
        Ok(TokenSequence {
            tokens: map.reshape(&[layout.tokens(), layout.c])?,
            layout,
        })
    }

    pub fn to_map(&self) -> Result<Tensor<S>> {
        let l = self.layout;
        Ok(self.tokens.reshape(&[l.t, l.h, l.w, l.c])?)
    }
}

/// Per-head pre-softmax scores `heads × (T·h·w) × (T·ĥ·ŵ)`.
#[derive(Debug, Clone)]
pub struct AttentionScore<S: Scalar> {
    pub scores: Tensor<S>,
    pub query_layout: (usize, usize, usize),
    pub key_layout: (usize, usize, usize),
}

impl<S: Scalar> AttentionScore<S> {
    pub fn heads(&self) -> usize {
        self.scores.shape()[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_round_trip() {
        let m = Tensor::<f32>::from_vec(
            (0..2 * 3 * 4 * 5).map(|v| v as f32).collect(),
            &[2, 3, 4, 5],
        )
        .unwrap();
        let seq = TokenSequence::from_map(&m).unwrap();
        assert_eq!(seq.tokens.shape(), &[24, 5]);
        assert_eq!(seq.layout, Layout::new(2, 3, 4, 5));
        assert!(unist_tensor::bit_identical(&seq.to_map().unwrap(), &m));
    }
}
