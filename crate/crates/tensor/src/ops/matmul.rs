use std::sync::Arc;

use crate::error::{shape_err, Result};
use crate::kernels::{mm_nn, mm_nt, mm_tn};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn batched<S: Scalar>(
    batch: usize,
    a: &[S],
    b: &[S],
    a_len: usize,
    b_len: usize,
    o_len: usize,
    f: impl Fn(&[S], &[S]) -> Vec<S>,
) -> Vec<S> {
    let mut out = Vec::with_capacity(batch * o_len);
    for i in 0..batch {
        out.extend(f(
            &a[i * a_len..(i + 1) * a_len],
            &b[i * b_len..(i + 1) * b_len],
        ));
    }
    out
}

impl<S: Scalar> Tensor<S> {
    /// `[m,k] × [k,n] → [m,n]`.
    pub fn matmul(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        if self.rank() != 2 || rhs.rank() != 2 || self.shape()[1] != rhs.shape()[0] {
            return shape_err("matmul", self.shape(), rhs.shape());
        }
        let a = self.reshape(&[1, self.shape()[0], self.shape()[1]])?;
        let b = rhs.reshape(&[1, rhs.shape()[0], rhs.shape()[1]])?;
        let out = a.bmm(&b)?;
        out.reshape(&[self.shape()[0], rhs.shape()[1]])
    }

    /// Batched `[B,m,k] × [B,k,n] → [B,m,n]`.
    pub fn bmm(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        let (sa, sb) = (self.shape(), rhs.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return shape_err("bmm", sa, sb);
        }
        let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let out = batched(bs, self.data(), rhs.data(), m * k, k * n, m * n, |a, b| {
            mm_nn(a, b, m, k, n)
        });
        Ok(Tensor::from_op(
            "bmm",
            vec![bs, m, n],
            Arc::new(out),
            vec![self.clone(), rhs.clone()],
            Box::new(move |g, p| {
                let (a, b) = (p[0].data(), p[1].data());
                // dA = G·Bᵀ, dB = Aᵀ·G
                let da = p[0]
                    .requires_grad()
                    .then(|| batched(bs, g, b, m * n, k * n, m * k, |g, b| mm_nt(g, b, m, n, k)));
                let db = p[1]
                    .requires_grad()
                    .then(|| batched(bs, a, g, m * k, m * n, k * n, |a, g| mm_tn(a, g, m, k, n)));
                vec![da, db]
            }),
        ))
    }

    /// Batched `[B,m,k] × [B,n,k]ᵀ → [B,m,n]`.
    pub fn bmm_nt(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        let (sa, sb) = (self.shape(), rhs.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[2] {
            return shape_err("bmm_nt", sa, sb);
        }
        let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[1]);
        let out = batched(bs, self.data(), rhs.data(), m * k, n * k, m * n, |a, b| {
            mm_nt(a, b, m, k, n)
        });
        Ok(Tensor::from_op(
            "bmm_nt",
            vec![bs, m, n],
            Arc::new(out),
            vec![self.clone(), rhs.clone()],
            Box::new(move |g, p| {
                let (a, b) = (p[0].data(), p[1].data());
                // dA = G·B, dB = Gᵀ·A
                let da = p[0]
                    .requires_grad()
                    .then(|| batched(bs, g, b, m * n, n * k, m * k, |g, b| mm_nn(g, b, m, n, k)));
                let db = p[1]
                    .requires_grad()
                    .then(|| batched(bs, g, a, m * n, m * k, n * k, |g, a| mm_tn(g, a, m, n, k)));
                vec![da, db]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use crate::Tensor;

    #[test]
    fn identity_times_m_is_m() {
        let eye =
            Tensor::<f64>::from_vec(vec![1., 0., 0., 0., 1., 0., 0., 0., 1.], &[3, 3]).unwrap();
        let m = Tensor::<f64>::from_vec((0..6).map(f64::from).collect(), &[3, 2]).unwrap();
        assert_eq!(eye.matmul(&m).unwrap().data(), m.data());
    }

    #[test]
    fn hand_product() {
        let a = Tensor::<f32>::from_vec(vec![1., 2., 3., 4.], &[2, 2]).unwrap();
        let b = Tensor::<f32>::from_vec(vec![1., 1.], &[2, 1]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 1]);
        assert_eq!(c.data(), &[3., 7.]);
    }

    #[test]
    fn mismatch_names_both_shapes() {
        let a = Tensor::<f32>::zeros(&[2, 3]);
        let b = Tensor::<f32>::zeros(&[2, 3]);
        let msg = a.matmul(&b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }
}
