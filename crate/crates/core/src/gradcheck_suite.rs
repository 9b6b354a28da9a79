//! Per-block finite-difference checks in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unist_tensor::gradcheck::{check_fn, check_params, GradcheckConfig, TensorCheck};
use unist_tensor::nn::Mode;
use unist_tensor::{ParamStore, Parameter, Tensor};

use crate::decoders::{VsodDecoder, VspDecoder};
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::losses::{cc_loss, kl_loss, sim_loss, vsod_bce, vsp_loss, LossWeights};
use crate::model::{ModelConfig, Task, UniST};
use crate::tokens::{AttentionScore, TokenSequence};
use crate::transformer::{Aggregation, SalAttention, SemanticGuided, UpEmbedding};

pub const DEFAULT_TOLERANCE: f64 = 1e-2;

#[derive(Debug, Clone)]
pub struct BlockReport {
    pub block: &'static str,
    pub tensors: usize,
    pub probed: usize,
    pub max_rel_err: f64,
    /// Tensor with the largest error.
    pub worst: String,
    pub passed: bool,
}

impl BlockReport {
    fn from_checks(block: &'static str, checks: &[TensorCheck], tol: f64) -> Self {
        let worst = checks.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err));
        let max_rel_err = worst.map_or(0.0, |c| c.rel_err);
        BlockReport {
            block,
            tensors: checks.len(),
            probed: checks.iter().map(|c| c.probed).sum(),
            max_rel_err,
            worst: worst.map_or_else(String::new, |c| c.name.clone()),
            passed: max_rel_err < tol,
        }
    }
}

pub fn format_table(rows: &[BlockReport]) -> String {
    let mut s = format!(
        "{:<24} {:>7} {:>7} {:>12}  {:<6} {}\n",
        "block", "tensors", "probed", "max_rel_err", "status", "worst"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<24} {:>7} {:>7} {:>12.3e}  {:<6} {}\n",
            r.block,
            r.tensors,
            r.probed,
            r.max_rel_err,
            if r.passed { "ok" } else { "FAIL" },
            r.worst
        ));
    }
    s
}

struct Inputs {
    rng: ChaCha8Rng,
}

impl Inputs {
    fn uniform(&mut self, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let v = (0..n).map(|_| self.rng.gen_range(lo..hi)).collect();
        Tensor::from_vec(v, shape).expect("shape matches")
    }

    /// Scalar probe `Σ w·y / √n` with fixed random `w`.
    fn weights_for(&mut self, shape: &[usize]) -> Tensor<f64> {
        self.uniform(shape, -1.0, 1.0)
    }
}

fn probe(y: &Tensor<f64>, w: &Tensor<f64>) -> Result<Tensor<f64>> {
    Ok(y.mul(w)?.sum().mul_scalar(1.0 / (y.numel() as f64).sqrt()))
}

/// Runs every block check on the geometry of `cfg`.
pub fn run_suite(cfg: &ModelConfig, gc: GradcheckConfig, tol: f64) -> Result<Vec<BlockReport>> {
    cfg.validate()?;
    let ch = cfg.channels;
    let t = cfg.frames;
    let lv = |i: usize| {
        let (h, w) = cfg.level_size(i);
        [t, h, w, ch[i - 1]]
    };
    let mut inp = Inputs {
        rng: ChaCha8Rng::seed_from_u64(gc.seed),
    };
    let mut rows = Vec::new();
    let mut push = |name: &'static str, checks: Vec<TensorCheck>| {
        rows.push(BlockReport::from_checks(name, &checks, tol))
    };

    // encoder
    {
        let mut store = ParamStore::<f64>::new(gc.seed);
        let enc = Encoder::new(&mut store, "encoder", ch)?;
        let clip = inp.uniform(&[t, cfg.height, cfg.width, 3], 0.0, 1.0);
        let ws: Vec<Tensor<f64>> = (1..=4).map(|i| inp.weights_for(&lv(i))).collect();
        let f = || -> Result<Tensor<f64>> {
            let p = enc.encode(&clip, Mode::Train)?;
            let mut acc = probe(p.level(1), &ws[0])?;
            for i in 2..=4 {
                acc = acc.add(&probe(p.level(i), &ws[i - 1])?)?;
            }
            Ok(acc)
        };
        push("encoder", check_params(f, store.params(), gc)?);
    }

    // semantic-guided block
    {
        let mut store = ParamStore::<f64>::new(gc.seed);
        let sgb = SemanticGuided::new(&mut store, "sgb", ch[3], true)?;
        let f4 = inp.uniform(&lv(4), -1.0, 1.0);
        let l4 = lv(4);
        let w = inp.weights_for(&[l4[0] * l4[1] * l4[2], l4[3]]);
        let f = || -> Result<Tensor<f64>> { probe(&sgb.forward(&f4, Mode::Train)?.tokens, &w) };
        push("semantic_guided", check_params(f, store.params(), gc)?);
    }

    // up embedding 4 → 3
    {
        let mut store = ParamStore::<f64>::new(gc.seed);
        let up = UpEmbedding::new(&mut store, "up", ch[3], ch[2])?;
        let tokens = TokenSequence::from_map(&inp.uniform(&lv(4), -1.0, 1.0))?;
        let skip = inp.uniform(&lv(3), -1.0, 1.0);
        let l3 = lv(3);
        let w = inp.weights_for(&[l3[0] * l3[1] * l3[2], l3[3]]);
        let f = || -> Result<Tensor<f64>> {
            probe(&up.forward(&tokens, &skip, Mode::Train)?.tokens, &w)
        };
        push("up_embedding", check_params(f, store.params(), gc)?);
    }

    // sal-attention on level 4, no incoming score
    {
        let mut store = ParamStore::<f64>::new(gc.seed);
        let attn = SalAttention::new(&mut store, "attn", ch[3], cfg.heads, 2, false)?;
        let tokens = TokenSequence::from_map(&inp.uniform(&lv(4), -1.0, 1.0))?;
        let (out, score) = attn.forward(&tokens, None)?;
        let wo = inp.weights_for(out.tokens.shape());
        let ws = inp.weights_for(score.scores.shape());
        let f = || -> Result<Tensor<f64>> {
            let (o, s) = attn.forward(&tokens, None)?;
            Ok(probe(&o.tokens, &wo)?.add(&probe(&s.scores, &ws)?)?)
        };
        push("sal_attention", check_params(f, store.params(), gc)?);
    }

    // sal-attention on level 3 fusing a transferred level-4 score
    {
        let mut store = ParamStore::<f64>::new(gc.seed);
        let attn = SalAttention::new(&mut store, "attn", ch[2], cfg.heads, 4, true)?;
        let (kt, kh, kw) = cfg.key_layout();
        let (h4, w4) = cfg.level_size(4);
        let nq4 = t * h4 * w4;
        let nk = kt * kh * kw;
        let prev = inp.uniform(&[cfg.heads, nq4, nk], -1.0, 1.0);
        let prev = Parameter::new("incoming.scores", prev.to_vec(), prev.shape())?;
        let tokens = TokenSequence::from_map(&inp.uniform(&lv(3), -1.0, 1.0))?;
        if let Some(mix) = &attn.mix {
            // off-identity mixing so every entry carries gradient signal
            let m = inp.uniform(mix.tensor().shape(), -0.5, 0.5);
            let eye: Vec<f64> = m
                .to_vec()
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    if i % (cfg.heads + 1) == 0 {
                        1.0 + v
                    } else {
                        *v
                    }
                })
                .collect();
            mix.set_data(eye)?;
        }
        let incoming = || AttentionScore {
            scores: prev.tensor(),
            query_layout: (t, h4, w4),
            key_layout: (kt, kh, kw),
        };
        let (out, score) = attn.forward(&tokens, Some(&incoming()))?;
        let wo = inp.weights_for(out.tokens.shape());
        let ws = inp.weights_for(score.scores.shape());
        let f = || -> Result<Tensor<f64>> {
            let (o, s) = attn.forward(&tokens, Some(&incoming()))?;
            Ok(probe(&o.tokens, &wo)?.add(&probe(&s.scores, &ws)?)?)
        };
        let mut params = store.params().to_vec();
        params.push(prev.clone());
        push("sal_attention_transfer", check_params(f, &params, gc)?);
    }

    // aggregation
    {
        let mut store = ParamStore::<f64>::new(gc.seed);
        let stage_channels: Vec<usize> = (0..cfg.stages).map(|j| ch[3 - j]).collect();
        let agg = Aggregation::new(&mut store, "agg", &stage_channels, ch[0], cfg.agg_kernel)?;
        let outputs: Vec<TokenSequence<f64>> = (0..cfg.stages)
            .map(|j| TokenSequence::from_map(&inp.uniform(&lv(4 - j), -1.0, 1.0)))
            .collect::<Result<_>>()?;
        let (h1, w1) = cfg.level_size(1);
        let w = inp.weights_for(&lv(1));
        let f = || -> Result<Tensor<f64>> { probe(&agg.forward(&outputs, (h1, w1))?, &w) };
        push("aggregation", check_params(f, store.params(), gc)?);
    }

    // decoders
    {
        let mut store = ParamStore::<f64>::new(gc.seed);
        let dec = VspDecoder::new(&mut store, "vsp", ch[0], t)?;
        let feats = inp.uniform(&lv(1), -1.0, 1.0);
        let w = inp.weights_for(&[cfg.height, cfg.width]);
        let out = (cfg.height, cfg.width);
        let f = || -> Result<Tensor<f64>> { probe(&dec.forward(&feats, out, Mode::Train)?, &w) };
        push("vsp_decoder", check_params(f, store.params(), gc)?);

        let mut store = ParamStore::<f64>::new(gc.seed);
        let dec = VsodDecoder::new(&mut store, "vsod", ch[0])?;
        let w = inp.weights_for(&[t, cfg.height, cfg.width]);
        let f = || -> Result<Tensor<f64>> { probe(&dec.forward(&feats, out)?, &w) };
        push("vsod_decoder", check_params(f, store.params(), gc)?);
    }

    // objectives, every coordinate of the prediction
    {
        let hw = [cfg.height, cfg.width];
        let p = inp.uniform(&hw, 0.05, 0.95);
        let g = inp.uniform(&hw, 0.0, 1.0);
        let mask = Tensor::from_vec(
            g.data()
                .iter()
                .map(|&v| if v > 0.5 { 1.0 } else { 0.0 })
                .collect(),
            &hw,
        )?;
        let input = std::slice::from_ref(&p);
        let loss_check = |name: &str, errs: Vec<f64>| TensorCheck {
            name: name.to_string(),
            probed: p.numel(),
            rel_err: errs.into_iter().fold(0.0, f64::max),
            max_abs_grad: f64::NAN,
        };
        let e = check_fn::<_, Error>(|x| kl_loss(&x[0], &g), input, gc.step)?;
        push("kl_loss", vec![loss_check("P", e)]);
        let e = check_fn::<_, Error>(|x| cc_loss(&x[0], &g), input, gc.step)?;
        push("cc_loss", vec![loss_check("P", e)]);
        let e = check_fn::<_, Error>(|x| sim_loss(&x[0], &g), input, gc.step)?;
        push("sim_loss", vec![loss_check("P", e)]);
        let e = check_fn::<_, Error>(|x| vsod_bce(&x[0], &mask), input, gc.step)?;
        push("bce_loss", vec![loss_check("P", e)]);
    }

    // whole model under the composite loss, fewer coordinates per tensor
    {
        let mcfg = ModelConfig {
            task: Task::Vsp,
            ..*cfg
        };
        let (store, model) = UniST::<f64>::build(mcfg, gc.seed)?;
        let clip = inp.uniform(&[t, cfg.height, cfg.width, 3], 0.0, 1.0);
        let target = inp.uniform(&[cfg.height, cfg.width], 0.0, 1.0);
        let f = || -> Result<Tensor<f64>> {
            Ok(vsp_loss(
                &model.forward(&clip, Mode::Train)?.prediction,
                &target,
                LossWeights::default(),
            )?
            .total)
        };
        let sparse = GradcheckConfig {
            samples: gc.samples.min(2),
            ..gc
        };
        push("full_model", check_params(f, store.params(), sparse)?);
    }
    Ok(rows)
}
