//! On-disk clip directories and an order-preserving prefetcher.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;

use unist_tensor::Tensor;

use super::pnm::{self, Image};
use super::{ClipRecord, VspTargets};
use crate::error::{Error, Result};
use crate::model::Task;

fn frame_name(i: usize) -> String {
    format!("{i:05}")
}

fn gray_image(t: &Tensor<f32>, h: usize, w: usize, offset: usize) -> Image {
    let data = t.data()[offset..offset + h * w]
        .iter()
        .map(|&v| pnm::quantize(v as f64))
        .collect();
    Image::gray(w, h, data)
}

/// Writes whatever targets `record` carries under `root/<clip_id>/`.
pub fn write_clip(root: &Path, record: &ClipRecord) -> Result<()> {
    let dir = root.join(&record.clip_id);
    let s = record.frames.shape();
    let (t, h, w) = (s[0], s[1], s[2]);
    let px = h * w * 3;
    for f in 0..t {
        let data = record.frames.data()[f * px..(f + 1) * px]
            .iter()
            .map(|&v| pnm::quantize(v as f64))
            .collect();
        pnm::write(
            &dir.join("frames").join(format!("{}.ppm", frame_name(f))),
            &Image::rgb(w, h, data),
        )?;
    }
    if let Some(v) = &record.vsp {
        pnm::write(
            &dir.join("vsp/fixation.pgm"),
            &gray_image(&v.fixation, h, w, 0),
        )?;
        pnm::write(&dir.join("vsp/dense.pgm"), &gray_image(&v.dense, h, w, 0))?;
    }
    if let Some(m) = &record.vsod {
        for f in 0..t {
            pnm::write(
                &dir.join("vsod").join(format!("{}.pgm", frame_name(f))),
                &gray_image(m, h, w, f * h * w),
            )?;
        }
    }
    Ok(())
}

/// Clip directories under `root`, sorted by name. A missing root is an error,
/// an empty one is not.
pub fn list_clips(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(root).map_err(|e| Error::Data {
        path: root.to_path_buf(),
        msg: e.to_string(),
    })?;
    let mut clips = Vec::new();
    for e in entries {
        let e = e?;
        if e.file_type()?.is_dir() {
            clips.push((e.file_name().to_string_lossy().into_owned(), e.path()));
        }
    }
    clips.sort();
    Ok(clips)
}

fn clip_err(clip: &str, path: &Path, msg: impl Into<String>) -> Error {
    Error::Clip {
        clip: clip.to_string(),
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn read_in_clip(clip: &str, path: &Path) -> Result<Image> {
    pnm::read(path).map_err(|e| match e {
        Error::Data { path, msg } => clip_err(clip, &path, msg),
        other => other,
    })
}

fn numbered_files(clip: &str, dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| clip_err(clip, dir, e.to_string()))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(clip_err(clip, dir, format!("no .{ext} files")));
    }
    for (i, f) in files.iter().enumerate() {
        let want = format!("{}.{ext}", frame_name(i));
        if f.file_name().is_none_or(|n| n != want.as_str()) {
            return Err(clip_err(
                clip,
                f,
                format!("expected {want} at position {i}"),
            ));
        }
    }
    Ok(files)
}

fn to_unit(data: &[u8]) -> Vec<f32> {
    data.iter().map(|&v| v as f32 / 255.0).collect()
}

fn expect_dims(clip: &str, path: &Path, img: &Image, h: usize, w: usize) -> Result<()> {
    if img.height != h || img.width != w {
        return Err(clip_err(
            clip,
            path,
            format!("{}x{} image, frames are {w}x{h}", img.width, img.height),
        ));
    }
    Ok(())
}

/// Loads `dir/frames/*.ppm` as `[T, H, W, 3]`.
pub fn load_frames(clip: &str, dir: &Path) -> Result<Tensor<f32>> {
    let frame_files = numbered_files(clip, &dir.join("frames"), "ppm")?;
    let mut frames = Vec::new();
    let (mut h, mut w) = (0, 0);
    for (i, p) in frame_files.iter().enumerate() {
        let img = read_in_clip(clip, p)?;
        if img.channels != 3 {
            return Err(clip_err(clip, p, "frame is not P6"));
        }
        if i == 0 {
            (h, w) = (img.height, img.width);
        }
        expect_dims(clip, p, &img, h, w)?;
        frames.extend(to_unit(&img.data));
    }
    Ok(Tensor::from_vec(frames, &[frame_files.len(), h, w, 3])?)
}

/// Loads one clip directory with the targets for `task`.
pub fn load_clip(clip: &str, dir: &Path, task: Task) -> Result<ClipRecord> {
    let frames = load_frames(clip, dir)?;
    let (t, h, w) = (frames.shape()[0], frames.shape()[1], frames.shape()[2]);

    let gray = |p: &Path| -> Result<Vec<f32>> {
        let img = read_in_clip(clip, p)?;
        if img.channels != 1 {
            return Err(clip_err(clip, p, "target is not P5"));
        }
        expect_dims(clip, p, &img, h, w)?;
        Ok(to_unit(&img.data))
    };

    let (vsp, vsod) = match task {
        Task::Vsp => {
            let fix_path = dir.join("vsp/fixation.pgm");
            let fixation = gray(&fix_path)?;
            if fixation.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(clip_err(clip, &fix_path, "fixation map must be binary"));
            }
            let dense = gray(&dir.join("vsp/dense.pgm"))?;
            let targets = VspTargets {
                fixation: Tensor::from_vec(fixation, &[h, w])?,
                dense: Tensor::from_vec(dense, &[h, w])?,
            };
            (Some(targets), None)
        }
        Task::Vsod => {
            let files = numbered_files(clip, &dir.join("vsod"), "pgm")?;
            if files.len() != t {
                return Err(clip_err(
                    clip,
                    &dir.join("vsod"),
                    format!("{} masks for {t} frames", files.len()),
                ));
            }
            let mut masks = Vec::with_capacity(t * h * w);
            for p in &files {
                let m = gray(p)?;
                if m.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(clip_err(clip, p, "mask must be binary"));
                }
                masks.extend(m);
            }
            (None, Some(Tensor::from_vec(masks, &[t, h, w])?))
        }
    };
    Ok(ClipRecord {
        clip_id: clip.to_string(),
        frames,
        vsp,
        vsod,
    })
}

/// All clips under `root` in lexicographic order.
pub fn load_dataset(root: &Path, task: Task) -> Result<Vec<ClipRecord>> {
    list_clips(root)?
        .iter()
        .map(|(id, dir)| load_clip(id, dir, task))
        .collect()
}

/// Loads clips on a background thread, at most `depth` ahead of the consumer.
/// Items arrive in `list_clips` order.
pub struct Prefetcher {
    rx: mpsc::Receiver<Result<ClipRecord>>,
    handle: Option<thread::JoinHandle<()>>,
}

impl Prefetcher {
    pub fn new(root: &Path, task: Task, depth: usize) -> Result<Self> {
        let clips = list_clips(root)?;
        let (tx, rx) = mpsc::sync_channel(depth.max(1));
        let handle = thread::Builder::new()
            .name("unist-prefetch".into())
            .spawn(move || {
                for (id, dir) in clips {
                    if tx.send(load_clip(&id, &dir, task)).is_err() {
                        return;
                    }
                }
            })?;
        Ok(Prefetcher {
            rx,
            handle: Some(handle),
        })
    }
}

impl Iterator for Prefetcher {
    type Item = Result<ClipRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        self.rx.recv().ok()
    }
}

impl Drop for Prefetcher {
    fn drop(&mut self) {
        // Unblock the producer before joining.
        let (_, dead) = mpsc::sync_channel(0);
        drop(std::mem::replace(&mut self.rx, dead));
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
