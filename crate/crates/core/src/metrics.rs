//! Evaluation metrics on plain `f64` maps (row-major, frame-major for sequences).

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

fn undefined(metric: &'static str, msg: impl Into<String>) -> Error {
    Error::UndefinedMetric {
        metric,
        msg: msg.into(),
    }
}

fn check_len(metric: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{metric}: {a} vs {b} pixels")));
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn population_std(x: &[f64]) -> f64 {
    let mu = mean(x);
    (x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Area under the ROC of saliency as a fixation classifier, thresholding at
/// every distinct saliency value. Equals the probability that a fixated pixel
/// outranks a non-fixated one, ties counting one half.
pub fn auc_judd(sal: &[f64], fix: &[bool]) -> Result<f64> {
    check_len("auc_judd", sal.len(), fix.len())?;
    let npos = fix.iter().filter(|&&f| f).count();
    let nneg = fix.len() - npos;
    if npos == 0 || nneg == 0 {
        return Err(undefined(
            "auc_judd",
            "needs at least one fixated and one non-fixated pixel",
        ));
    }
    let mut order: Vec<usize> = (0..sal.len()).collect();
    order.sort_by(|&a, &b| sal[b].total_cmp(&sal[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let v = sal[order[i]];
        let (mut dtp, mut dfp) = (0usize, 0usize);
        while i < order.len() && sal[order[i]] == v {
            if fix[order[i]] {
                dtp += 1;
            } else {
                dfp += 1;
            }
            i += 1;
        }
        // trapezoid between consecutive ROC points
        area += dfp as f64 * (2 * tp + dtp) as f64 / 2.0;
        tp += dtp;
        fp += dfp;
    }
    debug_assert_eq!((tp, fp), (npos, nneg));
    Ok(area / (npos as f64 * nneg as f64))
}

/// The MIT-benchmark variant: thresholds only at fixated pixels' saliency,
/// inclusive ties, trapezoid through (0,0) and (1,1).
pub fn auc_judd_fixation_thresholds(sal: &[f64], fix: &[bool]) -> Result<f64> {
    check_len("auc_judd", sal.len(), fix.len())?;
    let mut thresholds: Vec<f64> = sal
        .iter()
        .zip(fix)
        .filter(|(_, &f)| f)
        .map(|(&s, _)| s)
        .collect();
    let npos = thresholds.len();
    let nneg = sal.len() - npos;
    if npos == 0 || nneg == 0 {
        return Err(undefined(
            "auc_judd",
            "needs at least one fixated and one non-fixated pixel",
        ));
    }
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut pts = vec![(0.0, 0.0)];
    for &t in &thresholds {
        let tp = sal.iter().zip(fix).filter(|(&s, &f)| f && s >= t).count();
        let fp = sal.iter().zip(fix).filter(|(&s, &f)| !f && s >= t).count();
        pts.push((fp as f64 / nneg as f64, tp as f64 / npos as f64));
    }
    pts.push((1.0, 1.0));
    Ok(pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum())
}

/// Mean standardized saliency at fixated pixels.
pub fn nss(sal: &[f64], fix: &[bool]) -> Result<f64> {
    check_len("nss", sal.len(), fix.len())?;
    let sd = population_std(sal);
    if !(sd > 1e-12) {
        return Err(undefined("nss", "saliency map is constant"));
    }
    let mu = mean(sal);
    let picked: Vec<f64> = sal
        .iter()
        .zip(fix)
        .filter(|(_, &f)| f)
        .map(|(&s, _)| (s - mu) / sd)
        .collect();
    if picked.is_empty() {
        return Err(undefined("nss", "no fixations"));
    }
    Ok(mean(&picked))
}

/// Pearson correlation of the two maps.
pub fn cc_metric(p: &[f64], g: &[f64]) -> Result<f64> {
    check_len("cc", p.len(), g.len())?;
    let (mp, mg) = (mean(p), mean(g));
    let n = p.len() as f64;
    let cov = p
        .iter()
        .zip(g)
        .map(|(a, b)| (a - mp) * (b - mg))
        .sum::<f64>()
        / n;
    let (sp, sg) = (population_std(p), population_std(g));
    if !(sp > 1e-8) || !(sg > 1e-8) {
        return Err(Error::Degenerate {
            op: "cc",
            msg: "constant map".into(),
        });
    }
    Ok(cov / (sp * sg))
}

/// Histogram intersection of the sum-normalized maps.
pub fn sim_metric(p: &[f64], g: &[f64]) -> Result<f64> {
    check_len("sim", p.len(), g.len())?;
    let (sp, sg): (f64, f64) = (p.iter().sum(), g.iter().sum());
    if !(sp > 0.0) || !(sg > 0.0) {
        return Err(Error::Degenerate {
            op: "sim",
            msg: "map sums to zero".into(),
        });
    }
    Ok(p.iter().zip(g).map(|(a, b)| (a / sp).min(b / sg)).sum())
}

pub fn mae(p: &[f64], g: &[f64]) -> Result<f64> {
    check_len("mae", p.len(), g.len())?;
    if p.is_empty() {
        return Err(undefined("mae", "empty input"));
    }
    Ok(p.iter().zip(g).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64)
}

pub const F_BETA2: f64 = 0.3;

/// Frames of `g` with at least one positive pixel; the rest are logged and skipped.
fn evaluable_frames<'a>(
    metric: &'static str,
    p: &'a [f64],
    g: &'a [bool],
    frame_len: usize,
) -> Result<Vec<(&'a [f64], &'a [bool])>> {
    check_len(metric, p.len(), g.len())?;
    if frame_len == 0 || !p.len().is_multiple_of(frame_len) {
        return Err(Error::Dimension(format!(
            "{metric}: {} pixels is not a whole number of {frame_len}-pixel frames",
            p.len()
        )));
    }
    let mut out = Vec::new();
    for (i, (pf, gf)) in p.chunks(frame_len).zip(g.chunks(frame_len)).enumerate() {
        if gf.iter().any(|&v| v) {
            out.push((pf, gf));
        } else {
            log::warn!("{metric}: frame {i} has no positive ground-truth pixel; skipped");
        }
    }
    if out.is_empty() {
        return Err(undefined(
            metric,
            "no frame has a positive ground-truth pixel",
        ));
    }
    Ok(out)
}

fn f_beta(tp: usize, fp: usize, npos: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let prec = tp as f64 / (tp + fp) as f64;
    let rec = tp as f64 / npos as f64;
    (1.0 + F_BETA2) * prec * rec / (F_BETA2 * prec + rec)
}

/// Count of values `>= t` in an ascending slice.
fn count_at_least(sorted: &[f64], t: f64) -> usize {
    sorted.len() - sorted.partition_point(|&v| v < t)
}

/// Max over thresholds k/255 (k = 1..255) of the frame-averaged F_β.
pub fn max_f(p: &[f64], g: &[bool], frame_len: usize) -> Result<f64> {
    let frames = evaluable_frames("max_f", p, g, frame_len)?;
    let sorted: Vec<(Vec<f64>, Vec<f64>)> = frames
        .iter()
        .map(|(pf, gf)| {
            let mut fg: Vec<f64> = pf
                .iter()
                .zip(*gf)
                .filter(|(_, &b)| b)
                .map(|(&v, _)| v)
                .collect();
            let mut bg: Vec<f64> = pf
                .iter()
                .zip(*gf)
                .filter(|(_, &b)| !b)
                .map(|(&v, _)| v)
                .collect();
            fg.sort_by(f64::total_cmp);
            bg.sort_by(f64::total_cmp);
            (fg, bg)
        })
        .collect();
    let mut best = f64::NEG_INFINITY;
    for k in 1..=255u32 {
        let t = k as f64 / 255.0;
        let total: f64 = sorted
            .iter()
            .map(|(fg, bg)| f_beta(count_at_least(fg, t), count_at_least(bg, t), fg.len()))
            .sum();
        best = best.max(total / sorted.len() as f64);
    }
    Ok(best)
}

const SSIM_EPS: f64 = f64::EPSILON;

fn s_object(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let x = mean(values);
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - x) * (v - x)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    2.0 * x / (x * x + 1.0 + sd + SSIM_EPS)
}

fn object_score(p: &[f64], g: &[bool]) -> f64 {
    let u = g.iter().filter(|&&b| b).count() as f64 / g.len() as f64;
    let fg: Vec<f64> = p
        .iter()
        .zip(g)
        .filter(|(_, &b)| b)
        .map(|(&v, _)| v)
        .collect();
    let bg: Vec<f64> = p
        .iter()
        .zip(g)
        .filter(|(_, &b)| !b)
        .map(|(&v, _)| 1.0 - v)
        .collect();
    u * s_object(&fg) + (1.0 - u) * s_object(&bg)
}

/// SSIM-style structural similarity of one block.
fn block_ssim(p: &[f64], g: &[f64]) -> f64 {
    let n = p.len();
    if n == 0 {
        return 0.0;
    }
    let (x, y) = (mean(p), mean(g));
    let d = (n.max(2) - 1) as f64;
    let sx = p.iter().map(|v| (v - x) * (v - x)).sum::<f64>() / d;
    let sy = g.iter().map(|v| (v - y) * (v - y)).sum::<f64>() / d;
    let sxy = p.iter().zip(g).map(|(a, b)| (a - x) * (b - y)).sum::<f64>() / d;
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sx + sy);
    if alpha != 0.0 {
        alpha / (beta + SSIM_EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn region_score(p: &[f64], g: &[bool], h: usize, w: usize) -> f64 {
    // centroid of the foreground, rounded half-to-even, then shifted by one
    let (mut sy, mut sx, mut n) = (0.0, 0.0, 0usize);
    for (i, _) in g.iter().enumerate().filter(|(_, &b)| b) {
        sy += (i / w) as f64;
        sx += (i % w) as f64;
        n += 1;
    }
    let cx = (sx / n as f64).round_ties_even() as usize + 1;
    let cy = (sy / n as f64).round_ties_even() as usize + 1;
    let (cx, cy) = (cx.min(w), cy.min(h));
    let gf: Vec<f64> = g.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let block = |r0: usize, r1: usize, c0: usize, c1: usize| -> (Vec<f64>, Vec<f64>) {
        let mut bp = Vec::new();
        let mut bg = Vec::new();
        for r in r0..r1 {
            for c in c0..c1 {
                bp.push(p[r * w + c]);
                bg.push(gf[r * w + c]);
            }
        }
        (bp, bg)
    };
    let area = (h * w) as f64;
    let w1 = (cx * cy) as f64 / area;
    let w2 = ((w - cx) * cy) as f64 / area;
    let w3 = (cx * (h - cy)) as f64 / area;
    let w4 = 1.0 - w1 - w2 - w3;
    let quads = [
        (w1, block(0, cy, 0, cx)),
        (w2, block(0, cy, cx, w)),
        (w3, block(cy, h, 0, cx)),
        (w4, block(cy, h, cx, w)),
    ];
    quads
        .iter()
        .map(|(wt, (bp, bg))| {
            if *wt == 0.0 {
                0.0
            } else {
                wt * block_ssim(bp, bg)
            }
        })
        .sum()
}

/// Structure measure of one `h × w` frame.
pub fn s_measure_frame(p: &[f64], g: &[bool], h: usize, w: usize, alpha: f64) -> Result<f64> {
    check_len("s_measure", p.len(), g.len())?;
    check_len("s_measure", p.len(), h * w)?;
    let fg = g.iter().filter(|&&b| b).count();
    if fg == 0 {
        return Err(undefined("s_measure", "ground truth has no positive pixel"));
    }
    if fg == g.len() {
        return Ok(mean(p));
    }
    let s = alpha * object_score(p, g) + (1.0 - alpha) * region_score(p, g, h, w);
    Ok(s.max(0.0))
}

/// Frame-averaged structure measure over `[T, h, w]`.
pub fn s_measure(p: &[f64], g: &[bool], h: usize, w: usize, alpha: f64) -> Result<f64> {
    let frames = evaluable_frames("s_measure", p, g, h * w)?;
    let mut total = 0.0;
    for (pf, gf) in &frames {
        total += s_measure_frame(pf, gf, h, w, alpha)?;
    }
    Ok(total / frames.len() as f64)
}

/// Per-sample metric values plus their dataset means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub metrics: Vec<String>,
    pub samples: Vec<String>,
    /// `values[sample][metric]`.
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    samples: usize,
    means: Vec<(&'a str, f64)>,
}

impl MetricReport {
    pub fn new(metrics: &[&str]) -> Self {
        MetricReport {
            metrics: metrics.iter().map(|s| s.to_string()).collect(),
            samples: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, sample: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.metrics.len() {
            return Err(Error::Dimension(format!(
                "{} values for {} metrics",
                values.len(),
                self.metrics.len()
            )));
        }
        self.samples.push(sample.into());
        self.values.push(values);
        Ok(())
    }

    /// Arithmetic mean of each metric in sample order.
    pub fn means(&self) -> Vec<f64> {
        (0..self.metrics.len())
            .map(|m| {
                let mut acc = 0.0;
                for row in &self.values {
                    acc += row[m];
                }
                acc / self.values.len() as f64
            })
            .collect()
    }

    pub fn mean_of(&self, metric: &str) -> Option<f64> {
        let i = self.metrics.iter().position(|m| m == metric)?;
        Some(self.means()[i])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample");
        for m in &self.metrics {
            s.push(',');
            s.push_str(m);
        }
        s.push('\n');
        for (id, row) in self.samples.iter().zip(&self.values) {
            s.push_str(id);
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        let means = self.means();
        let summary = Summary {
            samples: self.samples.len(),
            means: self.metrics.iter().map(String::as_str).zip(means).collect(),
        };
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_perfect_and_constant() {
        let fix = [true, false, false, true];
        assert_eq!(auc_judd(&[0.9, 0.1, 0.2, 0.8], &fix).unwrap(), 1.0);
        assert_eq!(auc_judd(&[0.5; 4], &fix).unwrap(), 0.5);
        assert_eq!(auc_judd_fixation_thresholds(&[0.5; 4], &fix).unwrap(), 0.5);
        assert!(auc_judd(&[0.1; 4], &[false; 4]).is_err());
    }

    #[test]
    fn auc_variants_differ_on_skipped_thresholds() {
        let sal = [1.0, 0.0, 0.5];
        let fix = [true, true, false];
        assert_eq!(auc_judd(&sal, &fix).unwrap(), 0.5);
        assert_eq!(auc_judd_fixation_thresholds(&sal, &fix).unwrap(), 0.75);
    }

    #[test]
    fn nss_hand_value() {
        let v = nss(&[0.0, 2.0, 0.0, 2.0], &[false, true, false, false]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        assert!(nss(&[1.0; 4], &[true, false, false, false]).is_err());
    }

    #[test]
    fn mae_and_max_f_basics() {
        let g = [true, false, true, false];
        let gf: Vec<f64> = g.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        assert_eq!(mae(&gf, &gf).unwrap(), 0.0);
        assert_eq!(mae(&[0.5; 4], &gf).unwrap(), 0.5);
        assert!((max_f(&gf, &g, 4).unwrap() - 1.0).abs() < 1e-12);
        let inv: Vec<f64> = gf.iter().map(|v| 1.0 - v).collect();
        assert_eq!(max_f(&inv, &g, 4).unwrap(), 0.0);
    }

    #[test]
    fn s_measure_identity_and_inverse() {
        let g: Vec<bool> = (0..16).map(|i| matches!(i, 5 | 6 | 9 | 10 | 11)).collect();
        let gf: Vec<f64> = g.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        assert!((s_measure(&gf, &g, 4, 4, 0.5).unwrap() - 1.0).abs() < 1e-12);
        let inv: Vec<f64> = gf.iter().map(|v| 1.0 - v).collect();
        assert!(s_measure(&inv, &g, 4, 4, 0.5).unwrap() < 0.5);
    }

    #[test]
    fn s_measure_all_foreground_uses_mean() {
        let g = [true; 4];
        let p = [0.2, 0.4, 0.6, 1.0];
        assert!((s_measure(&p, &g, 2, 2, 0.5).unwrap() - 0.55).abs() < 1e-12);
        assert!(s_measure(&p, &[false; 4], 2, 2, 0.5).is_err());
    }

    #[test]
    fn report_means_and_csv() {
        let mut r = MetricReport::new(&["mae", "max_f"]);
        r.push("a", vec![0.1, 0.9]).unwrap();
        r.push("b", vec![0.3, 0.5]).unwrap();
        let m = r.means();
        assert!((m[0] - 0.2).abs() < 1e-15 && (m[1] - 0.7).abs() < 1e-15);
        assert_eq!(r.to_csv(), "sample,mae,max_f\na,0.1,0.9\nb,0.3,0.5\n");
        assert!(r.to_json().contains("\"samples\": 2"));
    }
}
