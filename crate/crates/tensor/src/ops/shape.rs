use std::sync::Arc;

use crate::error::{config_err, shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::{numel, Tensor};

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Gathers `data` (with `shape`) into the axis order `axes`.
fn permute_data<S: Scalar>(data: &[S], shape: &[usize], axes: &[usize]) -> Vec<S> {
    let rank = shape.len();
    let src_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let n = data.len();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    // stride in the source for each output axis
    let step: Vec<usize> = axes.iter().map(|&a| src_strides[a]).collect();
    let inner = out_shape[rank - 1];
    let inner_step = step[rank - 1];
    let mut idx = vec![0usize; rank];
    let mut base = 0usize;
    loop {
        for j in 0..inner {
            out.push(data[base + j * inner_step]);
        }
        // advance the outer multi-index (all axes but the last)
        let mut ax = rank as isize - 2;
        loop {
            if ax < 0 {
                return out;
            }
            let a = ax as usize;
            idx[a] += 1;
            base += step[a];
            if idx[a] < out_shape[a] {
                break;
            }
            base -= step[a] * out_shape[a];
            idx[a] = 0;
            ax -= 1;
        }
    }
}

impl<S: Scalar> Tensor<S> {
    /// Same buffer viewed with a new shape.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<S>> {
        if numel(shape) != self.numel() {
            return shape_err("reshape", self.shape(), shape);
        }
        Ok(Tensor::from_op(
            "reshape",
            shape.to_vec(),
            self.shared_data(),
            vec![self.clone()],
            Box::new(|g, _| vec![Some(g.to_vec())]),
        ))
    }

    pub fn permute(&self, axes: &[usize]) -> Result<Tensor<S>> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank
            || axes
                .iter()
                .any(|&a| a >= rank || std::mem::replace(&mut seen[a], true))
        {
            return config_err("permute", format!("invalid axes {axes:?} for rank {rank}"));
        }
        let out_shape: Vec<usize> = axes.iter().map(|&a| self.shape()[a]).collect();
        let out = if rank == 0 {
            self.to_vec()
        } else {
            permute_data(self.data(), self.shape(), axes)
        };
        let mut inverse = vec![0; rank];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        let out_shape_saved = out_shape.clone();
        Ok(Tensor::from_op(
            "permute",
            out_shape,
            Arc::new(out),
            vec![self.clone()],
            Box::new(move |g, _| {
                let dx = if inverse.is_empty() {
                    g.to_vec()
                } else {
                    permute_data(g, &out_shape_saved, &inverse)
                };
                vec![Some(dx)]
            }),
        ))
    }

    /// Swaps the last two axes.
    pub fn transpose_last(&self) -> Result<Tensor<S>> {
        let r = self.rank();
        if r < 2 {
            return config_err("transpose_last", "needs rank >= 2");
        }
        let mut axes: Vec<usize> = (0..r).collect();
        axes.swap(r - 2, r - 1);
        self.permute(&axes)
    }

    /// Concatenation along `axis`; all other axes must agree.
    pub fn concat(parts: &[Tensor<S>], axis: usize) -> Result<Tensor<S>> {
        let Some(first) = parts.first() else {
            return config_err("concat", "no inputs");
        };
        let rank = first.rank();
        if axis >= rank {
            return config_err(
                "concat",
                format!("axis {axis} out of range for rank {rank}"),
            );
        }
        for p in parts {
            let ok = p.rank() == rank
                && (0..rank).all(|i| i == axis || p.shape()[i] == first.shape()[i]);
            if !ok {
                return shape_err("concat", first.shape(), p.shape());
            }
        }
        let outer: usize = first.shape()[..axis].iter().product();
        let inner: usize = first.shape()[axis + 1..].iter().product();
        let widths: Vec<usize> = parts.iter().map(|p| p.shape()[axis] * inner).collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(outer * total);
        for o in 0..outer {
            for (p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&p.data()[o * w..(o + 1) * w]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = parts.iter().map(|p| p.shape()[axis]).sum();
        Ok(Tensor::from_op(
            "concat",
            shape,
            Arc::new(out),
            parts.to_vec(),
            Box::new(move |g, parents| {
                let mut grads: Vec<Option<Vec<S>>> = parents
                    .iter()
                    .map(|p| p.requires_grad().then(|| Vec::with_capacity(p.numel())))
                    .collect();
                let mut off = 0;
                for _ in 0..outer {
                    for (gp, &w) in grads.iter_mut().zip(&widths) {
                        if let Some(gp) = gp {
                            gp.extend_from_slice(&g[off..off + w]);
                        }
                        off += w;
                    }
                }
                grads
            }),
        ))
    }

    /// Sum of all entries as a rank-0 tensor.
    pub fn sum(&self) -> Tensor<S> {
        let total: S = self.data().iter().copied().sum();
        let n = self.numel();
        Tensor::from_op(
            "sum",
            Vec::new(),
            Arc::new(vec![total]),
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(vec![g[0]; n])]),
        )
    }

    /// Mean of all entries as a rank-0 tensor.
    pub fn mean(&self) -> Tensor<S> {
        let n = self.numel();
        let inv = S::one() / S::of(n as f64);
        let total: S = self.data().iter().copied().sum();
        Tensor::from_op(
            "mean",
            Vec::new(),
            Arc::new(vec![total * inv]),
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(vec![g[0] * inv; n])]),
        )
    }
}

#[cfg(test)]
mod tests {
    use crate::tensor::bit_identical;
    use crate::Tensor;
    use proptest::prelude::*;

    #[test]
    fn concat_shapes() {
        let a = Tensor::<f32>::zeros(&[2, 3]);
        let b = Tensor::<f32>::ones(&[2, 5]);
        let c = Tensor::concat(&[a, b], 1).unwrap();
        assert_eq!(c.shape(), &[2, 8]);
        assert_eq!(&c.data()[..8], &[0., 0., 0., 1., 1., 1., 1., 1.]);
    }

    #[test]
    fn concat_rejects_mismatch() {
        let a = Tensor::<f32>::zeros(&[2, 3]);
        let b = Tensor::<f32>::zeros(&[3, 3]);
        assert!(Tensor::concat(&[a, b], 1).is_err());
    }

    #[test]
    fn reshape_requires_equal_count() {
        let a = Tensor::<f32>::zeros(&[2, 3]);
        assert!(a.reshape(&[5]).is_err());
        assert_eq!(a.reshape(&[3, 2]).unwrap().shape(), &[3, 2]);
    }

    #[test]
    fn permute_matches_index_formula() {
        let x = Tensor::<f64>::from_vec((0..24).map(f64::from).collect(), &[2, 3, 4]).unwrap();
        let y = x.permute(&[2, 0, 1]).unwrap();
        assert_eq!(y.shape(), &[4, 2, 3]);
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    assert_eq!(y.data()[k * 6 + i * 3 + j], x.data()[i * 12 + j * 4 + k]);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn permute_round_trip_is_bit_exact(
            dims in proptest::collection::vec(1usize..4, 1..5),
            seed in 0u64..1000,
        ) {
            let n: usize = dims.iter().product();
            let data: Vec<f32> = (0..n).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f32 / 7.0).collect();
            let x = Tensor::from_vec(data, &dims).unwrap();
            let rank = dims.len();
            let axes: Vec<usize> = (0..rank).rev().collect();
            let mut inverse = vec![0; rank];
            for (i, &a) in axes.iter().enumerate() { inverse[a] = i; }
            let back = x.permute(&axes).unwrap().permute(&inverse).unwrap();
            prop_assert!(bit_identical(&x, &back));
            let flat = x.reshape(&[n]).unwrap().reshape(&dims).unwrap();
            prop_assert!(bit_identical(&x, &flat));
        }
    }
}
