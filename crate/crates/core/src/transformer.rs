//! Saliency-aware transformer: semantic-guided block, up embedding,
//! sal-attention with cross-stage score transfer, multi-scale aggregation.

use unist_tensor::nn::{join, Conv3d, LayerNorm, Linear, Mode};
use unist_tensor::{ParamStore, Parameter, Scalar, Tensor};

use crate::encoder::FeaturePyramid;
use crate::error::{Error, Result};
use crate::layers::{ConvBnRelu, ConvSpec};
use crate::tokens::{AttentionScore, TokenSequence};

pub enum SemanticGuided<S: Scalar> {
    Full {
        f_s: ConvBnRelu<S>,
        f_p: Linear<S>,
        f_c: ConvBnRelu<S>,
    },
    /// Ablation: a single 3×3×3 conv in place of the block.
    Plain { conv: Conv3d<S> },
}

impl<S: Scalar> SemanticGuided<S> {
    pub fn new(store: &mut ParamStore<S>, name: &str, c4: usize, enabled: bool) -> Result<Self> {
        let cube = ConvSpec::cube3();
        Ok(if enabled {
            SemanticGuided::Full {
                f_s: ConvBnRelu::new(store, &join(name, "f_s"), c4, c4, cube, false)?,
                f_p: Linear::new(store, &join(name, "f_p"), c4, 1, false)?,
                f_c: ConvBnRelu::new(store, &join(name, "f_c"), c4 + 1, c4, cube, false)?,
            }
        } else {
            SemanticGuided::Plain {
                conv: Conv3d::new(
                    store,
                    &join(name, "conv"),
                    c4,
                    c4,
                    cube.kernel,
                    cube.stride,
                    cube.pad,
                    true,
                )?,
            }
        })
    }

    pub fn forward(&self, f4: &Tensor<S>, mode: Mode) -> Result<TokenSequence<S>> {
        let out = match self {
            SemanticGuided::Full { f_s, f_p, f_c } => {
                let c4 = f_p.weight.shape()[0];
                if f4.shape().last() != Some(&c4) {
                    return Err(Error::config(
                        "semantic_guided",
                        format!("expected {c4} channels, got {:?}", f4.shape()),
                    ));
                }
                let sem = f_s.forward(f4, mode)?;
                let sal = f_p.forward(&sem)?;
                f_c.forward(&Tensor::concat(&[sal, sem], 3)?, mode)?
            }
            SemanticGuided::Plain { conv } => conv.forward(f4)?,
        };
        TokenSequence::from_map(&out)
    }
}

/// Reshape → 2× bilinear → frame-wise Conv-BN-ReLU (C_i → C_{i−1}) → + skip.
pub struct UpEmbedding<S: Scalar> {
    pub conv: ConvBnRelu<S>,
}

impl<S: Scalar> UpEmbedding<S> {
    pub fn new(store: &mut ParamStore<S>, name: &str, cin: usize, cout: usize) -> Result<Self> {
        Ok(UpEmbedding {
            conv: ConvBnRelu::new(store, name, cin, cout, ConvSpec::spatial3(1), false)?,
        })
    }

    pub fn forward(
        &self,
        tokens: &TokenSequence<S>,
        skip: &Tensor<S>,
        mode: Mode,
    ) -> Result<TokenSequence<S>> {
        let l = tokens.layout;
        let want = [l.t, 2 * l.h, 2 * l.w, self.conv.conv.cout()];
        if skip.shape() != want {
            return Err(Error::Dimension(format!(
                "up embedding from {l:?} needs skip {want:?}, got {:?}",
                skip.shape()
            )));
        }
        let up = tokens.to_map()?.interpolate_bilinear2x()?;
        let y = self.conv.forward(&up, mode)?.add(skip)?;
        TokenSequence::from_map(&y)
    }
}

/// Conv3d → LayerNorm → bias-free projection.
pub struct Embedding<S: Scalar> {
    pub conv: Conv3d<S>,
    pub ln: LayerNorm<S>,
    pub proj: Linear<S>,
}

impl<S: Scalar> Embedding<S> {
    fn new(store: &mut ParamStore<S>, name: &str, c: usize, spec: ConvSpec) -> Result<Self> {
        Ok(Embedding {
            conv: Conv3d::new(
                store,
                &join(name, "conv"),
                c,
                c,
                spec.kernel,
                spec.stride,
                spec.pad,
                true,
            )?,
            ln: LayerNorm::new(store, &join(name, "ln"), c)?,
            proj: Linear::new(store, &join(name, "w"), c, c, false)?,
        })
    }

    /// Returns `[T', h', w', C]`.
    fn forward(&self, map: &Tensor<S>) -> Result<Tensor<S>> {
        let y = self.ln.forward(&self.conv.forward(map)?)?;
        Ok(self.proj.forward(&y)?)
    }
}

/// Splits `[N, C]` into `[heads, N, C/heads]`.
fn split_heads<S: Scalar>(x: &Tensor<S>, heads: usize) -> Result<Tensor<S>> {
    let (n, c) = (x.shape()[0], x.shape()[1]);
    Ok(x.reshape(&[n, heads, c / heads])?.permute(&[1, 0, 2])?)
}

fn merge_heads<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    let (h, n, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    Ok(x.permute(&[1, 0, 2])?.reshape(&[n, h * d])?)
}

/// Upsamples the previous stage's scores over the query grid:
/// `heads × (T·h·w) × K → heads × (T·2h·2w) × K`. Same-layout scores pass through.
pub fn saliency_transfer<S: Scalar>(
    prev: &AttentionScore<S>,
    target: (usize, usize, usize),
) -> Result<Tensor<S>> {
    let (t, h, w) = prev.query_layout;
    if (t, h, w) == target {
        return Ok(prev.scores.clone());
    }
    if target != (t, 2 * h, 2 * w) {
        return Err(Error::Dimension(format!(
            "saliency transfer needs a 2x spatial ratio, got {:?} -> {target:?}",
            prev.query_layout
        )));
    }
    let heads = prev.heads();
    let nk = prev.scores.shape()[2];
    let grid = prev.scores.reshape(&[heads * t, h, w, nk])?;
    let up = grid.interpolate_bilinear2x()?;
    Ok(up.reshape(&[heads, t * 4 * h * w, nk])?)
}

pub struct SalAttention<S: Scalar> {
    pub q: Embedding<S>,
    pub k: Embedding<S>,
    pub v: Embedding<S>,
    /// Head-mixing 1×1 conv over fused scores, `[heads_out, heads_in]`.
    pub mix: Option<Parameter<S>>,
    pub heads: usize,
    pub channels: usize,
    pub kv_stride: usize,
}

impl<S: Scalar> SalAttention<S> {
    pub fn new(
        store: &mut ParamStore<S>,
        name: &str,
        channels: usize,
        heads: usize,
        kv_stride: usize,
        fuses: bool,
    ) -> Result<Self> {
        if heads == 0 || !channels.is_multiple_of(heads) {
            return Err(Error::config(
                "heads",
                format!("{channels} channels not divisible by {heads} heads"),
            ));
        }
        let kv = ConvSpec {
            kernel: [1, kv_stride, kv_stride],
            stride: [1, kv_stride, kv_stride],
            pad: [0, 0, 0],
        };
        let mix = if fuses {
            let mut eye = vec![S::zero(); heads * heads];
            for h in 0..heads {
                eye[h * heads + h] = S::one();
            }
            Some(store.push(&join(name, "mix"), eye, &[heads, heads])?)
        } else {
            None
        };
        Ok(SalAttention {
            q: Embedding::new(store, &join(name, "q"), channels, ConvSpec::cube3())?,
            k: Embedding::new(store, &join(name, "k"), channels, kv)?,
            v: Embedding::new(store, &join(name, "v"), channels, kv)?,
            mix,
            heads,
            channels,
            kv_stride,
        })
    }

    pub fn forward(
        &self,
        tokens: &TokenSequence<S>,
        incoming: Option<&AttentionScore<S>>,
    ) -> Result<(TokenSequence<S>, AttentionScore<S>)> {
        let l = tokens.layout;
        if l.c != self.channels {
            return Err(Error::Dimension(format!(
                "sal attention expects {} channels, got {l:?}",
                self.channels
            )));
        }
        let map = tokens.to_map()?;
        let q = self.q.forward(&map)?;
        let k = self.k.forward(&map)?;
        let v = self.v.forward(&map)?;
        let ks = k.shape().to_vec();
        let key_layout = (ks[0], ks[1], ks[2]);
        if key_layout.1 == 0 || key_layout.2 == 0 {
            return Err(Error::Dimension(format!(
                "key stride {} leaves no keys on {l:?}",
                self.kv_stride
            )));
        }
        let nk = key_layout.0 * key_layout.1 * key_layout.2;
        let nq = l.tokens();
        let qh = split_heads(&q.reshape(&[nq, l.c])?, self.heads)?;
        let kh = split_heads(&k.reshape(&[nk, l.c])?, self.heads)?;
        let vh = split_heads(&v.reshape(&[nk, l.c])?, self.heads)?;

        let mut scores = qh.bmm_nt(&kh)?.mul_scalar(1.0 / (l.c as f64).sqrt());
        if let (Some(prev), Some(mix)) = (incoming, &self.mix) {
            if prev.key_layout != key_layout {
                return Err(Error::Dimension(format!(
                    "incoming key layout {:?} differs from {key_layout:?}",
                    prev.key_layout
                )));
            }
            let m = saliency_transfer(prev, l.grid())?;
            let fused = scores.add(&m)?.reshape(&[self.heads, nq * nk])?;
            scores = mix
                .tensor()
                .matmul(&fused)?
                .reshape(&[self.heads, nq, nk])?;
        }
        let attn = scores.softmax_last()?;
        let out = merge_heads(&attn.bmm(&vh)?)?.add(&tokens.tokens)?;
        Ok((
            TokenSequence {
                tokens: out,
                layout: l,
            },
            AttentionScore {
                scores,
                query_layout: l.grid(),
                key_layout,
            },
        ))
    }
}

/// Per-stage 1×1×1 channel adjust to C1, bilinear to (h1, w1), concat, fuse.
pub struct Aggregation<S: Scalar> {
    pub adjust: Vec<Conv3d<S>>,
    pub fuse: Conv3d<S>,
}

impl<S: Scalar> Aggregation<S> {
    pub fn new(
        store: &mut ParamStore<S>,
        name: &str,
        stage_channels: &[usize],
        c1: usize,
        kernel: usize,
    ) -> Result<Self> {
        if kernel.is_multiple_of(2) {
            return Err(Error::config("agg_kernel", "must be odd"));
        }
        let pw = ConvSpec::pointwise();
        let adjust = stage_channels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                Conv3d::new(
                    store,
                    &join(name, &format!("adjust{i}")),
                    c,
                    c1,
                    pw.kernel,
                    pw.stride,
                    pw.pad,
                    true,
                )
            })
            .collect::<unist_tensor::Result<Vec<_>>>()?;
        let p = kernel / 2;
        let fuse = Conv3d::new(
            store,
            &join(name, "fuse"),
            stage_channels.len() * c1,
            c1,
            [kernel; 3],
            [1, 1, 1],
            [p, p, p],
            true,
        )?;
        Ok(Aggregation { adjust, fuse })
    }

    pub fn forward(&self, outputs: &[TokenSequence<S>], size: (usize, usize)) -> Result<Tensor<S>> {
        if outputs.len() != self.adjust.len() {
            return Err(Error::Dimension(format!(
                "{} stage outputs for {} adjust convs",
                outputs.len(),
                self.adjust.len()
            )));
        }
        let parts = outputs
            .iter()
            .zip(&self.adjust)
            .map(|(o, conv)| {
                Ok(conv
                    .forward(&o.to_map()?)?
                    .resize_bilinear(size.0, size.1)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.fuse.forward(&Tensor::concat(&parts, 3)?)?)
    }
}

/// Intermediate values of one transformer pass.
#[derive(Debug, Clone)]
pub struct StageTrace<S: Scalar> {
    /// Tokens entering each stage's first sal-attention block.
    pub pre_attention: Vec<TokenSequence<S>>,
    pub outputs: Vec<TokenSequence<S>>,
    /// Post-fusion pre-softmax scores of each stage's last block.
    pub scores: Vec<AttentionScore<S>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransformerConfig {
    pub channels: [usize; 4],
    pub heads: usize,
    pub stages: usize,
    pub blocks_per_stage: usize,
    pub saliency_transfer: bool,
    pub semantic_guided: bool,
    pub agg_kernel: usize,
}

pub struct SalTransformer<S: Scalar> {
    pub sgb: SemanticGuided<S>,
    pub ups: Vec<UpEmbedding<S>>,
    pub blocks: Vec<Vec<SalAttention<S>>>,
    pub agg: Aggregation<S>,
    pub cfg: TransformerConfig,
}

impl<S: Scalar> SalTransformer<S> {
    pub fn new(store: &mut ParamStore<S>, name: &str, cfg: TransformerConfig) -> Result<Self> {
        if !(1..=4).contains(&cfg.stages) {
            return Err(Error::config(
                "stages",
                format!("must be 1..=4, got {}", cfg.stages),
            ));
        }
        if cfg.blocks_per_stage == 0 {
            return Err(Error::config("blocks_per_stage", "must be at least 1"));
        }
        let ch = cfg.channels;
        let sgb = SemanticGuided::new(store, &join(name, "sgb"), ch[3], cfg.semantic_guided)?;
        let mut ups = Vec::new();
        let mut blocks = Vec::new();
        let mut stage_channels = Vec::new();
        for j in 0..cfg.stages {
            let level = 4 - j;
            let c = ch[level - 1];
            if j > 0 {
                ups.push(UpEmbedding::new(
                    store,
                    &join(name, &format!("up{}", j + 1)),
                    ch[level],
                    c,
                )?);
            }
            let stride = 1usize << (j + 1);
            let stage: Vec<_> = (0..cfg.blocks_per_stage)
                .map(|b| {
                    let fuses = cfg.saliency_transfer && (j > 0 || b > 0);
                    SalAttention::new(
                        store,
                        &join(name, &format!("stage{}.attn{b}", j + 1)),
                        c,
                        cfg.heads,
                        stride,
                        fuses,
                    )
                })
                .collect::<Result<_>>()?;
            blocks.push(stage);
            stage_channels.push(c);
        }
        let agg = Aggregation::new(
            store,
            &join(name, "agg"),
            &stage_channels,
            ch[0],
            cfg.agg_kernel,
        )?;
        Ok(SalTransformer {
            sgb,
            ups,
            blocks,
            agg,
            cfg,
        })
    }

    pub fn run_stages(&self, pyramid: &FeaturePyramid<S>, mode: Mode) -> Result<StageTrace<S>> {
        let mut trace = StageTrace {
            pre_attention: Vec::new(),
            outputs: Vec::new(),
            scores: Vec::new(),
        };
        let mut incoming: Option<AttentionScore<S>> = None;
        for (j, stage) in self.blocks.iter().enumerate() {
            let level = 4 - j;
            let mut tokens = if j == 0 {
                self.sgb.forward(pyramid.level(4), mode)?
            } else {
                let prev = trace.outputs.last().expect("previous stage");
                self.ups[j - 1].forward(prev, pyramid.level(level), mode)?
            };
            trace.pre_attention.push(tokens.clone());
            for block in stage {
                let (out, score) = block.forward(&tokens, incoming.as_ref())?;
                tokens = out;
                incoming = Some(score);
            }
            trace.outputs.push(tokens);
            trace
                .scores
                .push(incoming.clone().expect("at least one block"));
        }
        Ok(trace)
    }

    pub fn aggregate(&self, trace: &StageTrace<S>, h1: usize, w1: usize) -> Result<Tensor<S>> {
        self.agg.forward(&trace.outputs, (h1, w1))
    }
}
