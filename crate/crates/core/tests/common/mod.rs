//! Brute-force reference implementations and random instance generators
//! shared by the integration and acceptance tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Saliency values drawn either continuously or from a coarse grid so ties occur.
pub fn saliency(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let levels = [0usize, 3, 5, 255][rng.gen_range(0..4)];
    (0..n)
        .map(|_| {
            if levels == 0 {
                rng.gen_range(0.0..1.0)
            } else {
                rng.gen_range(0..=levels) as f64 / levels as f64
            }
        })
        .collect()
}

pub fn binary(rng: &mut ChaCha8Rng, n: usize) -> Vec<bool> {
    let density = rng.gen_range(0.05..0.95);
    (0..n).map(|_| rng.gen_bool(density)).collect()
}

/// A size `h × w` with `1 ≤ h, w ≤ 8`.
pub fn size(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.gen_range(1..=8), rng.gen_range(1..=8))
}

/// Probability that a fixated pixel outranks a non-fixated one, ties ½.
pub fn auc_pairwise(sal: &[f64], fix: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..sal.len() {
        if !fix[i] {
            continue;
        }
        for j in 0..sal.len() {
            if fix[j] {
                continue;
            }
            pairs += 1.0;
            if sal[i] > sal[j] {
                wins += 1.0;
            } else if sal[i] == sal[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

pub fn nss_loop(sal: &[f64], fix: &[bool]) -> f64 {
    let n = sal.len() as f64;
    let mut mu = 0.0;
    for &s in sal {
        mu += s;
    }
    mu /= n;
    let mut var = 0.0;
    for &s in sal {
        var += (s - mu) * (s - mu);
    }
    let sd = (var / n).sqrt();
    let (mut acc, mut k) = (0.0, 0.0);
    for i in 0..sal.len() {
        if fix[i] {
            acc += (sal[i] - mu) / sd;
            k += 1.0;
        }
    }
    acc / k
}

/// Two-pass Pearson correlation.
pub fn pearson_loop(p: &[f64], g: &[f64]) -> f64 {
    let n = p.len() as f64;
    let (mut mp, mut mg) = (0.0, 0.0);
    for i in 0..p.len() {
        mp += p[i];
        mg += g[i];
    }
    mp /= n;
    mg /= n;
    let (mut c, mut vp, mut vg) = (0.0, 0.0, 0.0);
    for i in 0..p.len() {
        c += (p[i] - mp) * (g[i] - mg);
        vp += (p[i] - mp) * (p[i] - mp);
        vg += (g[i] - mg) * (g[i] - mg);
    }
    c / (vp.sqrt() * vg.sqrt())
}

pub fn sim_loop(p: &[f64], g: &[f64]) -> f64 {
    let sp: f64 = p.iter().sum();
    let sg: f64 = g.iter().sum();
    let mut acc = 0.0;
    for i in 0..p.len() {
        let a = p[i] / sp;
        let b = g[i] / sg;
        acc += if a < b { a } else { b };
    }
    acc
}

pub fn kl_loop(p: &[f64], g: &[f64]) -> f64 {
    let eps = 1e-7;
    let sp: f64 = p.iter().sum();
    let sg: f64 = g.iter().sum();
    let mut acc = 0.0;
    for i in 0..p.len() {
        let (a, b) = (p[i] / sp, g[i] / sg);
        acc += b * (eps + b / (a + eps)).ln();
    }
    acc
}

pub fn bce_loop(p: &[f64], g: &[f64]) -> f64 {
    let eps = 1e-7;
    let mut acc = 0.0;
    for i in 0..p.len() {
        let q = p[i].max(eps).min(1.0 - eps);
        acc -= g[i] * q.ln() + (1.0 - g[i]) * (1.0 - q).ln();
    }
    acc / p.len() as f64
}

pub fn mae_loop(p: &[f64], g: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..p.len() {
        acc += (p[i] - g[i]).abs();
    }
    acc / p.len() as f64
}

/// Tries all 255 thresholds by direct counting; frames without positives are skipped.
pub fn max_f_exhaustive(p: &[f64], g: &[bool], frame_len: usize) -> Option<f64> {
    let frames: Vec<usize> = (0..p.len() / frame_len)
        .filter(|&f| g[f * frame_len..(f + 1) * frame_len].iter().any(|&b| b))
        .collect();
    if frames.is_empty() {
        return None;
    }
    let mut best = f64::NEG_INFINITY;
    for k in 1..=255u32 {
        let t = k as f64 / 255.0;
        let mut sum = 0.0;
        for &f in &frames {
            let (mut tp, mut fp, mut pos) = (0.0, 0.0, 0.0);
            for i in f * frame_len..(f + 1) * frame_len {
                let hit = p[i] >= t;
                if g[i] {
                    pos += 1.0;
                    if hit {
                        tp += 1.0;
                    }
                } else if hit {
                    fp += 1.0;
                }
            }
            if tp > 0.0 {
                let prec = tp / (tp + fp);
                let rec = tp / pos;
                sum += 1.3 * prec * rec / (0.3 * prec + rec);
            }
        }
        best = best.max(sum / frames.len() as f64);
    }
    Some(best)
}

fn mean_std(v: &[f64], ddof: usize) -> (f64, f64) {
    let n = v.len();
    let m = v.iter().sum::<f64>() / n as f64;
    if n <= ddof {
        return (m, 0.0);
    }
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    (m, (ss / (n - ddof) as f64).sqrt())
}

fn ssim_block(p: &[f64], g: &[f64]) -> f64 {
    if p.is_empty() {
        return 0.0;
    }
    let n = p.len();
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let x = p.iter().sum::<f64>() / n as f64;
    let y = g.iter().sum::<f64>() / n as f64;
    let (mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        sx += (p[i] - x) * (p[i] - x);
        sy += (g[i] - y) * (g[i] - y);
        sxy += (p[i] - x) * (g[i] - y);
    }
    let (sx, sy, sxy) = (sx / denom, sy / denom, sxy / denom);
    let a = 4.0 * x * y * sxy;
    let b = (x * x + y * y) * (sx + sy);
    if a != 0.0 {
        a / (b + f64::EPSILON)
    } else if b == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Single-frame structure measure with 2-D indexing throughout.
pub fn s_measure_reference(p: &[f64], g: &[bool], h: usize, w: usize) -> Option<f64> {
    let at = |r: usize, c: usize| r * w + c;
    let fg_count = g.iter().filter(|&&b| b).count();
    if fg_count == 0 {
        return None;
    }
    if fg_count == h * w {
        return Some(p.iter().sum::<f64>() / p.len() as f64);
    }
    let obj = |vals: Vec<f64>| {
        if vals.is_empty() {
            return 0.0;
        }
        let (m, s) = mean_std(&vals, 1);
        2.0 * m / (m * m + 1.0 + s + f64::EPSILON)
    };
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if g[at(r, c)] {
                fg.push(p[at(r, c)]);
            } else {
                bg.push(1.0 - p[at(r, c)]);
            }
        }
    }
    let u = fg_count as f64 / (h * w) as f64;
    let s_obj = u * obj(fg) + (1.0 - u) * obj(bg);

    let (mut rs, mut cs) = (0.0, 0.0);
    for r in 0..h {
        for c in 0..w {
            if g[at(r, c)] {
                rs += r as f64;
                cs += c as f64;
            }
        }
    }
    let cy = ((rs / fg_count as f64).round_ties_even() as usize + 1).min(h);
    let cx = ((cs / fg_count as f64).round_ties_even() as usize + 1).min(w);
    let mut s_reg = 0.0;
    let total = (h * w) as f64;
    for (rows, cols) in [
        (0..cy, 0..cx),
        (0..cy, cx..w),
        (cy..h, 0..cx),
        (cy..h, cx..w),
    ] {
        let (mut bp, mut bg) = (Vec::new(), Vec::new());
        for r in rows.clone() {
            for c in cols.clone() {
                bp.push(p[at(r, c)]);
                bg.push(if g[at(r, c)] { 1.0 } else { 0.0 });
            }
        }
        let weight = bp.len() as f64 / total;
        if weight > 0.0 {
            s_reg += weight * ssim_block(&bp, &bg);
        }
    }
    Some((0.5 * s_obj + 0.5 * s_reg).max(0.0))
}

pub fn rand_tensor(
    rng: &mut ChaCha8Rng,
    shape: &[usize],
    lo: f64,
    hi: f64,
) -> unist_tensor::Tensor<f64> {
    let n = shape.iter().product();
    let v = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    unist_tensor::Tensor::from_vec(v, shape).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
