use std::fmt;
use std::str::FromStr;

use unist_tensor::nn::Mode;
use unist_tensor::{ParamStore, Scalar, Tensor};

use crate::decoders::{VsodDecoder, VspDecoder};
use crate::encoder::{Encoder, FeaturePyramid};
use crate::error::{Error, Result};
use crate::transformer::{SalTransformer, StageTrace, TransformerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Vsp,
    Vsod,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vsp" => Ok(Task::Vsp),
            "vsod" => Ok(Task::Vsod),
            other => Err(Error::config(
                "task",
                format!("expected vsp or vsod, got {other:?}"),
            )),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Vsp => "vsp",
            Task::Vsod => "vsod",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub task: Task,
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub channels: [usize; 4],
    pub heads: usize,
    pub stages: usize,
    pub blocks_per_stage: usize,
    pub saliency_transfer: bool,
    pub semantic_guided: bool,
    pub agg_kernel: usize,
}

impl ModelConfig {
    /// 64×96 input, T=4 (VSP) or 3 (VSOD), channels (8,16,32,64), 2 heads.
    pub fn desk(task: Task) -> Self {
        ModelConfig {
            task,
            height: 64,
            width: 96,
            frames: match task {
                Task::Vsp => 4,
                Task::Vsod => 3,
            },
            channels: [8, 16, 32, 64],
            heads: 2,
            stages: 4,
            blocks_per_stage: 1,
            saliency_transfer: true,
            semantic_guided: true,
            agg_kernel: 3,
        }
    }

    /// 224×384 input, T=16 (VSP) or 5 (VSOD).
    pub fn paper(task: Task) -> Self {
        ModelConfig {
            height: 224,
            width: 384,
            frames: match task {
                Task::Vsp => 16,
                Task::Vsod => 5,
            },
            ..ModelConfig::desk(task)
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("height", self.height), ("width", self.width)] {
            if v == 0 || v % 32 != 0 {
                return Err(Error::config(
                    name,
                    format!("must be a positive multiple of 32, got {v}"),
                ));
            }
            if v < 64 {
                return Err(Error::config(
                    name,
                    format!("must be at least 64 so pooled keys are non-empty, got {v}"),
                ));
            }
        }
        if self.frames == 0 {
            return Err(Error::config("frames", "must be at least 1"));
        }
        if self.heads == 0 {
            return Err(Error::config("heads", "must be at least 1"));
        }
        for (i, &c) in self.channels.iter().enumerate() {
            if c == 0 || c % self.heads != 0 {
                return Err(Error::config(
                    "channels",
                    format!(
                        "C{} = {c} is not a positive multiple of heads = {}",
                        i + 1,
                        self.heads
                    ),
                ));
            }
        }
        if self.channels.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::config(
                "channels",
                format!("must be non-decreasing, got {:?}", self.channels),
            ));
        }
        if !(1..=4).contains(&self.stages) {
            return Err(Error::config(
                "stages",
                format!("must be 1..=4, got {}", self.stages),
            ));
        }
        if self.blocks_per_stage == 0 {
            return Err(Error::config("blocks_per_stage", "must be at least 1"));
        }
        if self.agg_kernel.is_multiple_of(2) {
            return Err(Error::config(
                "agg_kernel",
                format!("must be odd, got {}", self.agg_kernel),
            ));
        }
        Ok(())
    }

    /// `(h_i, w_i)` of pyramid level `i` (1-based).
    pub fn level_size(&self, i: usize) -> (usize, usize) {
        (self.height >> (i + 1), self.width >> (i + 1))
    }

    /// Shared pooled key grid `(T, h4/2, w4/2)`.
    pub fn key_layout(&self) -> (usize, usize, usize) {
        let (h4, w4) = self.level_size(4);
        (self.frames, h4 / 2, w4 / 2)
    }

    pub fn transformer(&self) -> TransformerConfig {
        TransformerConfig {
            channels: self.channels,
            heads: self.heads,
            stages: self.stages,
            blocks_per_stage: self.blocks_per_stage,
            saliency_transfer: self.saliency_transfer,
            semantic_guided: self.semantic_guided,
            agg_kernel: self.agg_kernel,
        }
    }
}

pub enum Decoder<S: Scalar> {
    Vsp(VspDecoder<S>),
    Vsod(VsodDecoder<S>),
}

pub struct UniST<S: Scalar> {
    pub cfg: ModelConfig,
    pub encoder: Encoder<S>,
    pub transformer: SalTransformer<S>,
    pub decoder: Decoder<S>,
}

/// Everything one forward pass produces.
pub struct Forward<S: Scalar> {
    pub pyramid: FeaturePyramid<S>,
    pub trace: StageTrace<S>,
    pub features: Tensor<S>,
    /// `[H, W]` for VSP, `[T, H, W]` for VSOD.
    pub prediction: Tensor<S>,
}

impl<S: Scalar> UniST<S> {
    /// Builds the model, registering every parameter in `store`.
    pub fn new(store: &mut ParamStore<S>, cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let encoder = Encoder::new(store, "encoder", cfg.channels)?;
        let transformer = SalTransformer::new(store, "transformer", cfg.transformer())?;
        let decoder = match cfg.task {
            Task::Vsp => Decoder::Vsp(VspDecoder::new(
                store,
                "decoder",
                cfg.channels[0],
                cfg.frames,
            )?),
            Task::Vsod => Decoder::Vsod(VsodDecoder::new(store, "decoder", cfg.channels[0])?),
        };
        Ok(UniST {
            cfg,
            encoder,
            transformer,
            decoder,
        })
    }

    /// Convenience constructor with a fresh store seeded by `seed`.
    pub fn build(cfg: ModelConfig, seed: u64) -> Result<(ParamStore<S>, Self)> {
        let mut store = ParamStore::new(seed);
        let model = UniST::new(&mut store, cfg)?;
        Ok((store, model))
    }

    pub fn forward(&self, clip: &Tensor<S>, mode: Mode) -> Result<Forward<S>> {
        let s = clip.shape();
        if s.len() != 4
            || s[0] != self.cfg.frames
            || s[1] != self.cfg.height
            || s[2] != self.cfg.width
            || s[3] != 3
        {
            return Err(Error::Dimension(format!(
                "clip {s:?} does not match configured [{}, {}, {}, 3]",
                self.cfg.frames, self.cfg.height, self.cfg.width
            )));
        }
        let pyramid = self.encoder.encode(clip, mode)?;
        let trace = self.transformer.run_stages(&pyramid, mode)?;
        let (h1, w1) = self.cfg.level_size(1);
        let features = self.transformer.aggregate(&trace, h1, w1)?;
        let out = (self.cfg.height, self.cfg.width);
        let prediction = match &self.decoder {
            Decoder::Vsp(d) => d.forward(&features, out, mode)?,
            Decoder::Vsod(d) => d.forward(&features, out)?,
        };
        Ok(Forward {
            pyramid,
            trace,
            features,
            prediction,
        })
    }
}
