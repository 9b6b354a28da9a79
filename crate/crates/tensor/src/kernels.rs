//! Dense matrix kernels on row-major slices.
//!
//! Every output row is produced by exactly one task with a fixed serial
//! accumulation order, so results do not depend on the thread count.

use rayon::prelude::*;

use crate::scalar::Scalar;

/// Rows per rayon task; smaller problems run serially.
const PAR_MIN_WORK: usize = 1 << 15;

fn rows_per_task(rows: usize, work_per_row: usize) -> usize {
    let per = (PAR_MIN_WORK / work_per_row.max(1)).max(1);
    per.min(rows.max(1))
}

/// `out[m,n] = a[m,k] · b[k,n]`
pub fn mm_nn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * n];
    if m == 0 || n == 0 {
        return out;
    }
    let chunk = rows_per_task(m, k * n);
    out.par_chunks_mut(chunk * n)
        .enumerate()
        .for_each(|(ci, block)| {
            let row0 = ci * chunk;
            for (r, orow) in block.chunks_mut(n).enumerate() {
                let arow = &a[(row0 + r) * k..(row0 + r + 1) * k];
                for (p, &av) in arow.iter().enumerate() {
                    if av == S::zero() {
                        continue;
                    }
                    let brow = &b[p * n..(p + 1) * n];
                    for (o, &bv) in orow.iter_mut().zip(brow) {
                        *o = *o + av * bv;
                    }
                }
            }
        });
    out
}

/// `out[m,n] = a[m,k] · b[n,k]ᵀ`
pub fn mm_nt<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * n];
    if m == 0 || n == 0 {
        return out;
    }
    let chunk = rows_per_task(m, k * n);
    out.par_chunks_mut(chunk * n)
        .enumerate()
        .for_each(|(ci, block)| {
            let row0 = ci * chunk;
            for (r, orow) in block.chunks_mut(n).enumerate() {
                let arow = &a[(row0 + r) * k..(row0 + r + 1) * k];
                for (j, o) in orow.iter_mut().enumerate() {
                    let brow = &b[j * k..(j + 1) * k];
                    let mut acc = S::zero();
                    for (&x, &y) in arow.iter().zip(brow) {
                        acc = acc + x * y;
                    }
                    *o = acc;
                }
            }
        });
    out
}

/// `out[m,n] = a[k,m]ᵀ · b[k,n]`
pub fn mm_tn<S: Scalar>(a: &[S], b: &[S], k: usize, m: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * n];
    if m == 0 || n == 0 {
        return out;
    }
    let chunk = rows_per_task(m, k * n);
    out.par_chunks_mut(chunk * n)
        .enumerate()
        .for_each(|(ci, block)| {
            let row0 = ci * chunk;
            let rows = block.len() / n;
            for p in 0..k {
                let brow = &b[p * n..(p + 1) * n];
                let acol = &a[p * m + row0..p * m + row0 + rows];
                for (orow, &av) in block.chunks_mut(n).zip(acol) {
                    if av == S::zero() {
                        continue;
                    }
                    for (o, &bv) in orow.iter_mut().zip(brow) {
                        *o = *o + av * bv;
                    }
                }
            }
        });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    out[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        out
    }

    fn transpose(a: &[f64], r: usize, c: usize) -> Vec<f64> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = a[i * c + j];
            }
        }
        t
    }

    #[test]
    fn three_layouts_agree_with_naive() {
        let (m, k, n) = (7, 5, 3);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.91).cos()).collect();
        let want = naive(&a, &b, m, k, n);
        let nn = mm_nn(&a, &b, m, k, n);
        let nt = mm_nt(&a, &transpose(&b, k, n), m, k, n);
        let tn = mm_tn(&transpose(&a, m, k), &b, k, m, n);
        for i in 0..m * n {
            assert!((nn[i] - want[i]).abs() < 1e-12);
            assert!((nt[i] - want[i]).abs() < 1e-12);
            assert!((tn[i] - want[i]).abs() < 1e-12);
        }
    }
}
