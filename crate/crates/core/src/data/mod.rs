//! Clip records, PNM datasets and synthetic scenes.

pub mod dataset;
pub mod pnm;
pub mod synthetic;

use unist_tensor::Tensor;

use crate::model::Task;

pub use dataset::{list_clips, load_clip, load_dataset, load_frames, write_clip, Prefetcher};
pub use synthetic::{generate_synthetic, Blob, SyntheticSceneSpec};

#[derive(Debug, Clone)]
pub struct VspTargets {
    /// `[H, W]`, values in {0, 1}.
    pub fixation: Tensor<f32>,
    /// `[H, W]`, values in [0, 1].
    pub dense: Tensor<f32>,
}

#[derive(Debug, Clone)]
pub struct ClipRecord {
    pub clip_id: String,
    /// `[T, H, W, 3]` in [0, 1].
    pub frames: Tensor<f32>,
    /// Targets for frame `floor(T/2)`.
    pub vsp: Option<VspTargets>,
    /// `[T, H, W]` binary masks.
    pub vsod: Option<Tensor<f32>>,
}

impl ClipRecord {
    pub fn frames_len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn middle_frame(&self) -> usize {
        self.frames_len() / 2
    }

    /// Drops the targets that do not belong to `task`.
    pub fn for_task(mut self, task: Task) -> Self {
        match task {
            Task::Vsp => self.vsod = None,
            Task::Vsod => self.vsp = None,
        }
        self
    }
}
