//! Moving-blob clips on a seeded value-noise background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unist_tensor::Tensor;

use super::{ClipRecord, VspTargets};
use crate::data::pnm::quantize;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    /// Center at frame 0, in pixels (x right, y down).
    pub x: f64,
    pub y: f64,
    /// Pixels per frame.
    pub vx: f64,
    pub vy: f64,
    pub radius: f64,
    pub color: [f64; 3],
}

impl Blob {
    pub fn center(&self, t: usize) -> (f64, f64) {
        (self.x + self.vx * t as f64, self.y + self.vy * t as f64)
    }

    /// Whether the pixel with top-left corner `(px, py)` has its center inside the disk.
    pub fn covers(&self, t: usize, px: usize, py: usize) -> bool {
        let (cx, cy) = self.center(t);
        let (dx, dy) = (px as f64 + 0.5 - cx, py as f64 + 0.5 - cy);
        dx * dx + dy * dy <= self.radius * self.radius
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSceneSpec {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub blobs: Vec<Blob>,
    pub texture_seed: u64,
    /// Peak-to-peak background variation around mid gray.
    pub texture_amplitude: f64,
    /// Blur of the fixation map; `None` means `height / 24`.
    pub dense_sigma: Option<f64>,
}

impl SyntheticSceneSpec {
    /// `count` blobs with random radius, color and integer velocity, placed so
    /// they stay inside the frame for all `frames`.
    pub fn random(height: usize, width: usize, frames: usize, count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let span = frames.saturating_sub(1) as f64;
        let blobs = (0..count)
            .map(|_| {
                let radius = rng
                    .gen_range(height as f64 / 10.0..height as f64 / 6.0)
                    .round();
                let vx: f64 = rng.gen_range(-2i32..=2).into();
                let vy: f64 = rng.gen_range(-1i32..=1).into();
                let lo_x = radius - vx.min(0.0) * span;
                let hi_x = width as f64 - radius - vx.max(0.0) * span;
                let lo_y = radius - vy.min(0.0) * span;
                let hi_y = height as f64 - radius - vy.max(0.0) * span;
                let x = if hi_x > lo_x {
                    rng.gen_range(lo_x..hi_x).floor() + 0.5
                } else {
                    width as f64 / 2.0
                };
                let y = if hi_y > lo_y {
                    rng.gen_range(lo_y..hi_y).floor() + 0.5
                } else {
                    height as f64 / 2.0
                };
                let hue = rng.gen_range(0..3);
                let mut color = [0.15; 3];
                color[hue] = 0.95;
                color[(hue + 1) % 3] = rng.gen_range(0.15..0.95);
                Blob {
                    x,
                    y,
                    vx,
                    vy,
                    radius,
                    color,
                }
            })
            .collect();
        SyntheticSceneSpec {
            height,
            width,
            frames,
            blobs,
            texture_seed: seed.wrapping_mul(0x9e37_79b9_7f4a_7c15),
            texture_amplitude: 0.25,
            dense_sigma: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.frames == 0 {
            return Err(Error::config(
                "synthetic",
                "height, width and frames must be positive",
            ));
        }
        for (i, b) in self.blobs.iter().enumerate() {
            if !(b.radius > 0.0) {
                return Err(Error::config(
                    "synthetic",
                    format!("blob {i} radius must be positive"),
                ));
            }
            for t in 0..self.frames {
                let (cx, cy) = b.center(t);
                let inside = cx - b.radius >= 0.0
                    && cy - b.radius >= 0.0
                    && cx + b.radius <= self.width as f64
                    && cy + b.radius <= self.height as f64;
                if !inside {
                    return Err(Error::config(
                        "synthetic",
                        format!("blob {i} leaves the frame at t={t} (center {cx:.2},{cy:.2}, radius {})", b.radius),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        self.dense_sigma.unwrap_or(self.height as f64 / 24.0)
    }
}

/// Bilinearly interpolated lattice noise in [0,1].
fn value_noise(h: usize, w: usize, cell: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gh = h / cell + 2;
    let gw = w / cell + 2;
    let lattice: Vec<f64> = (0..gh * gw).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let fy = y as f64 / cell as f64;
        let (y0, ty) = (fy.floor() as usize, fy.fract());
        for x in 0..w {
            let fx = x as f64 / cell as f64;
            let (x0, tx) = (fx.floor() as usize, fx.fract());
            let l = |yy: usize, xx: usize| lattice[yy * gw + xx];
            let top = l(y0, x0) + tx * (l(y0, x0 + 1) - l(y0, x0));
            let bot = l(y0 + 1, x0) + tx * (l(y0 + 1, x0 + 1) - l(y0 + 1, x0));
            out.push(top + ty * (bot - top));
        }
    }
    out
}

/// Separable Gaussian blur with zero padding, kernel radius `ceil(3σ)`.
pub fn gaussian_blur(src: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-r..=r)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let pass = |input: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, d) in (-r..=r).enumerate() {
                    let (sy, sx) = if horizontal {
                        (y as isize, x as isize + d)
                    } else {
                        (y as isize + d, x as isize)
                    };
                    if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                        acc += kernel[k] * input[sy as usize * w + sx as usize];
                    }
                }
                out[y * w + x] = acc;
            }
        }
        out
    };
    pass(&pass(src, true), false)
}

/// Renders the clip and both target sets. Values are quantized to k/255 so a
/// write/read round trip through PNM is exact.
pub fn generate_synthetic(
    spec: &SyntheticSceneSpec,
    seed: u64,
    clip_id: &str,
) -> Result<ClipRecord> {
    spec.validate()?;
    let (h, w, t) = (spec.height, spec.width, spec.frames);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.texture_seed ^ seed);
    let noise: Vec<Vec<f64>> = (0..3).map(|_| value_noise(h, w, 8, &mut rng)).collect();
    let q = |v: f64| quantize(v) as f64 / 255.0;

    let mut frames = Vec::with_capacity(t * h * w * 3);
    let mut masks = Vec::with_capacity(t * h * w);
    for f in 0..t {
        for y in 0..h {
            for x in 0..w {
                let blob = spec.blobs.iter().rev().find(|b| b.covers(f, x, y));
                for (c, n) in noise.iter().enumerate() {
                    let v = match blob {
                        Some(b) => b.color[c],
                        None => 0.45 + spec.texture_amplitude * (n[y * w + x] - 0.5),
                    };
                    frames.push(q(v));
                }
                masks.push(if blob.is_some() { 1.0 } else { 0.0 });
            }
        }
    }

    let mid = t / 2;
    let mut fixation = vec![0.0; h * w];
    for b in &spec.blobs {
        let (cx, cy) = b.center(mid);
        let (px, py) = (
            (cx.floor() as usize).min(w - 1),
            (cy.floor() as usize).min(h - 1),
        );
        fixation[py * w + px] = 1.0;
    }
    let blurred = gaussian_blur(&fixation, h, w, spec.sigma());
    let peak = blurred.iter().cloned().fold(0.0f64, f64::max);
    let dense = if peak > 0.0 {
        blurred.iter().map(|&v| q(v / peak)).collect()
    } else {
        blurred
    };

    let as_f32 = |v: Vec<f64>| v.into_iter().map(|x| x as f32).collect::<Vec<_>>();
    Ok(ClipRecord {
        clip_id: clip_id.to_string(),
        frames: Tensor::from_vec(as_f32(frames), &[t, h, w, 3])?,
        vsp: (!spec.blobs.is_empty())
            .then(|| -> Result<VspTargets> {
                Ok(VspTargets {
                    fixation: Tensor::from_vec(as_f32(fixation.clone()), &[h, w])?,
                    dense: Tensor::from_vec(as_f32(dense.clone()), &[h, w])?,
                })
            })
            .transpose()?,
        vsod: Some(Tensor::from_vec(as_f32(masks), &[t, h, w])?),
    })
}
