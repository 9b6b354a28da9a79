//! train / eval / predict / gradcheck / generate, as used by the CLI.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use unist_tensor::checkpoint;
use unist_tensor::gradcheck::GradcheckConfig;
use unist_tensor::nn::Mode;
use unist_tensor::optim::Adam;
use unist_tensor::{no_grad, ParamStore, Tensor};

use crate::config::RunConfig;
use crate::data::{self, pnm, ClipRecord, Prefetcher, SyntheticSceneSpec};
use crate::error::{Error, Result};
use crate::gradcheck_suite::{self, BlockReport};
use crate::losses::{vsod_bce, vsp_loss};
use crate::metrics::{self, MetricReport};
use crate::model::{Task, UniST};

pub const VSP_METRICS: [&str; 4] = ["auc_judd", "nss", "cc", "sim"];
pub const VSOD_METRICS: [&str; 3] = ["mae", "max_f", "s_measure"];

#[derive(Debug, Clone, PartialEq)]
pub struct StepLoss {
    pub step: usize,
    pub total: f64,
    /// `kl, cc, sim` for VSP, `bce` for VSOD.
    pub parts: Vec<f64>,
}

pub fn loss_header(task: Task) -> &'static str {
    match task {
        Task::Vsp => "step,loss,kl,cc,sim",
        Task::Vsod => "step,loss,bce",
    }
}

impl StepLoss {
    pub fn csv_row(&self) -> String {
        let mut s = format!("{},{}", self.step, self.total);
        for p in &self.parts {
            let _ = write!(s, ",{p}");
        }
        s
    }
}

fn targets_for(task: Task, clip: &ClipRecord) -> Result<&Tensor<f32>> {
    let missing = || Error::Data {
        path: PathBuf::from(&clip.clip_id),
        msg: format!("clip has no {task} targets"),
    };
    match task {
        Task::Vsp => clip.vsp.as_ref().map(|v| &v.dense).ok_or_else(missing),
        Task::Vsod => clip.vsod.as_ref().ok_or_else(missing),
    }
}

/// Model, parameters and optimizer state of one training run.
pub struct Trainer {
    pub cfg: RunConfig,
    pub store: ParamStore<f32>,
    pub model: UniST<f32>,
    opt: Adam,
    steps_done: usize,
}

impl Trainer {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let (store, model) = UniST::build(cfg.model, cfg.seed)?;
        Ok(Trainer {
            cfg: cfg.clone(),
            store,
            model,
            opt: Adam::new(cfg.optim)?,
            steps_done: 0,
        })
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    /// One forward/backward/Adam update on `clip`.
    pub fn step(&mut self, clip: &ClipRecord) -> Result<StepLoss> {
        let task = self.cfg.task();
        let target = targets_for(task, clip)?;
        let pred = self.model.forward(&clip.frames, Mode::Train)?.prediction;
        let (total, parts) = match task {
            Task::Vsp => {
                let l = vsp_loss(&pred, target, self.cfg.loss)?;
                (l.total, vec![l.kl, l.cc, l.sim])
            }
            Task::Vsod => {
                let l = vsod_bce(&pred, target)?;
                let v = l.item() as f64;
                (l, vec![v])
            }
        };
        let value = total.item() as f64;
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "loss is {value} at step {}",
                self.steps_done + 1
            )));
        }
        let grads = total.backward()?;
        self.opt.step(self.store.params(), &grads)?;
        self.steps_done += 1;
        Ok(StepLoss {
            step: self.steps_done,
            total: value,
            parts,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        checkpoint::save(path, &self.store.named_tensors())?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub losses: Vec<StepLoss>,
    pub checkpoint: PathBuf,
}

/// Trains for `cfg.steps`, cycling over the dataset in clip order. Writes
/// `loss.csv`, `run.ini`, `checkpoints/step_NNNNNN.ustc` and `model.ustc`
/// under `cfg.out`.
pub fn train(cfg: &RunConfig) -> Result<TrainSummary> {
    let mut trainer = Trainer::new(cfg)?;
    let task = cfg.task();
    if data::list_clips(&cfg.dataset)?.is_empty() {
        return Err(Error::Data {
            path: cfg.dataset.clone(),
            msg: "dataset has no clips".into(),
        });
    }
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("run.ini"), cfg.to_ini())?;
    let mut csv = format!("{}\n", loss_header(task));
    let mut losses = Vec::with_capacity(cfg.steps);
    'outer: while trainer.steps_done() < cfg.steps {
        for clip in Prefetcher::new(&cfg.dataset, task, cfg.prefetch)? {
            if trainer.steps_done() >= cfg.steps {
                break 'outer;
            }
            let l = trainer.step(&clip?)?;
            csv.push_str(&l.csv_row());
            csv.push('\n');
            if l.step % cfg.log_every == 0 || l.step == cfg.steps {
                info!("step {} loss {:.6}", l.step, l.total);
            }
            if cfg.checkpoint_every > 0 && l.step % cfg.checkpoint_every == 0 && l.step < cfg.steps
            {
                trainer.save(
                    &cfg.out
                        .join("checkpoints")
                        .join(format!("step_{:06}.ustc", l.step)),
                )?;
            }
            losses.push(l);
        }
    }
    fs::write(cfg.out.join("loss.csv"), csv)?;
    let checkpoint = cfg.out.join("model.ustc");
    trainer.save(&checkpoint)?;
    Ok(TrainSummary { losses, checkpoint })
}

/// Builds the configured model and loads `checkpoint` into it.
pub fn load_model(cfg: &RunConfig, checkpoint: &Path) -> Result<(ParamStore<f32>, UniST<f32>)> {
    cfg.validate()?;
    let (store, model) = UniST::build(cfg.model, cfg.seed)?;
    let entries = checkpoint::load::<f32>(checkpoint).map_err(|e| match e {
        unist_tensor::TensorError::Io(io) => Error::Data {
            path: checkpoint.to_path_buf(),
            msg: io.to_string(),
        },
        other => other.into(),
    })?;
    store.load_named(&entries)?;
    Ok((store, model))
}

fn as_f64(t: &Tensor<f32>) -> Vec<f64> {
    t.to_f64_vec()
}

/// Metric row for one prediction (`[H,W]` for VSP, `[T,H,W]` for VSOD).
pub fn score_prediction(task: Task, pred: &[f64], clip: &ClipRecord) -> Result<Vec<f64>> {
    let s = clip.frames.shape();
    let (h, w) = (s[1], s[2]);
    match task {
        Task::Vsp => {
            let v = clip.vsp.as_ref().ok_or_else(|| Error::Data {
                path: PathBuf::from(&clip.clip_id),
                msg: "clip has no vsp targets".into(),
            })?;
            let fix: Vec<bool> = v.fixation.data().iter().map(|&x| x > 0.5).collect();
            let dense = as_f64(&v.dense);
            Ok(vec![
                metrics::auc_judd(pred, &fix)?,
                metrics::nss(pred, &fix)?,
                metrics::cc_metric(pred, &dense)?,
                metrics::sim_metric(pred, &dense)?,
            ])
        }
        Task::Vsod => {
            let m = targets_for(task, clip)?;
            let gt: Vec<bool> = m.data().iter().map(|&x| x > 0.5).collect();
            Ok(vec![
                metrics::mae(pred, &as_f64(m))?,
                metrics::max_f(pred, &gt, h * w)?,
                metrics::s_measure(pred, &gt, h, w, 0.5)?,
            ])
        }
    }
}

/// Eval-mode metrics over `clips`.
pub fn evaluate_records(model: &UniST<f32>, clips: &[ClipRecord]) -> Result<MetricReport> {
    let task = model.cfg.task;
    let mut report = MetricReport::new(match task {
        Task::Vsp => &VSP_METRICS[..],
        Task::Vsod => &VSOD_METRICS[..],
    });
    for clip in clips {
        let pred = no_grad(|| model.forward(&clip.frames, Mode::Eval))?.prediction;
        report.push(&clip.clip_id, score_prediction(task, &as_f64(&pred), clip)?)?;
    }
    Ok(report)
}

/// Evaluates `checkpoint` on `cfg.dataset`, writing `metrics.csv` and
/// `metrics.json` under `cfg.out`.
pub fn evaluate(cfg: &RunConfig, checkpoint: &Path) -> Result<MetricReport> {
    let (_store, model) = load_model(cfg, checkpoint)?;
    let clips = data::load_dataset(&cfg.dataset, cfg.task())?;
    if clips.is_empty() {
        warn!("{}: no clips to evaluate", cfg.dataset.display());
    }
    let report = evaluate_records(&model, &clips)?;
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("metrics.csv"), report.to_csv())?;
    fs::write(cfg.out.join("metrics.json"), report.to_json())?;
    Ok(report)
}

fn write_f32(path: &Path, values: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Text header for one head of an attention score, followed by the
/// `Nq × Nk` scores as little-endian f32.
pub fn attention_header(
    stage: usize,
    head: usize,
    q: (usize, usize, usize),
    k: (usize, usize, usize),
) -> String {
    format!(
        "unist-attention 1\nstage {stage}\nhead {head}\nquery {} {} {}\nkey {} {} {}\ndtype f32le\nend\n",
        q.0, q.1, q.2, k.0, k.1, k.2
    )
}

/// Writes the prediction as PGM plus a raw f32 sidecar, and the last
/// attention score of every stage, under `out/<clip_id>/`.
pub fn predict_clip(
    model: &UniST<f32>,
    clip_id: &str,
    frames: &Tensor<f32>,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let fwd = no_grad(|| model.forward(frames, Mode::Eval))?;
    let dir = out.join(clip_id);
    fs::create_dir_all(&dir)?;
    let (h, w) = (model.cfg.height, model.cfg.width);
    let pred = fwd.prediction.to_vec();
    let mut written = Vec::new();
    let maps: Vec<(String, &[f32])> = match model.cfg.task {
        Task::Vsp => vec![("saliency".to_string(), &pred[..])],
        Task::Vsod => pred
            .chunks(h * w)
            .enumerate()
            .map(|(i, c)| (format!("mask/{i:05}"), c))
            .collect(),
    };
    for (stem, values) in maps {
        let pgm = dir.join(format!("{stem}.pgm"));
        let bytes = values.iter().map(|&v| pnm::quantize(v as f64)).collect();
        pnm::write(&pgm, &pnm::Image::gray(w, h, bytes))?;
        let raw = dir.join(format!("{stem}.f32"));
        write_f32(&raw, values)?;
        written.push(pgm);
        written.push(raw);
    }
    let att = dir.join("attention");
    fs::create_dir_all(&att)?;
    for (j, score) in fwd.trace.scores.iter().enumerate() {
        let s = score.scores.shape();
        let per_head = s[1] * s[2];
        let data = score.scores.to_vec();
        for head in 0..s[0] {
            let path = att.join(format!("stage{}_head{head}.att", j + 1));
            let mut buf =
                attention_header(j + 1, head, score.query_layout, score.key_layout).into_bytes();
            for v in &data[head * per_head..(head + 1) * per_head] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            fs::write(&path, buf)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Predicts one clip directory, or every clip of `cfg.dataset` when `clip` is `None`.
pub fn predict(cfg: &RunConfig, checkpoint: &Path, clip: Option<&Path>) -> Result<Vec<PathBuf>> {
    let (_store, model) = load_model(cfg, checkpoint)?;
    let clips = match clip {
        Some(dir) => {
            let id = dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "clip".into());
            vec![(id, dir.to_path_buf())]
        }
        None => data::list_clips(&cfg.dataset)?,
    };
    let mut written = Vec::new();
    for (id, dir) in clips {
        let frames = data::load_frames(&id, &dir)?;
        written.extend(predict_clip(&model, &id, &frames, &cfg.out)?);
    }
    Ok(written)
}

/// Runs the f64 block suite on the configured geometry. Fails listing every
/// block at or above `tol`.
pub fn gradcheck(cfg: &RunConfig, tol: f64) -> Result<Vec<BlockReport>> {
    cfg.validate()?;
    let gc = GradcheckConfig {
        seed: cfg.seed,
        ..GradcheckConfig::default()
    };
    let rows = gradcheck_suite::run_suite(&cfg.model, gc, tol)?;
    print!("{}", gradcheck_suite::format_table(&rows));
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed).map(|r| r.block).collect();
    if !failed.is_empty() {
        return Err(Error::Numeric(format!(
            "gradcheck above {tol:e}: {}",
            failed.join(", ")
        )));
    }
    Ok(rows)
}

/// Writes `cfg.synthetic_clips` synthetic clips into `cfg.dataset`.
pub fn generate(cfg: &RunConfig) -> Result<Vec<String>> {
    cfg.validate()?;
    let m = &cfg.model;
    let mut ids = Vec::with_capacity(cfg.synthetic_clips);
    for i in 0..cfg.synthetic_clips {
        let seed = cfg.seed.wrapping_add(i as u64);
        let mut spec = SyntheticSceneSpec::random(m.height, m.width, m.frames, cfg.blobs, seed);
        spec.dense_sigma = cfg.dense_sigma;
        let id = format!("clip_{i:04}");
        let rec = data::generate_synthetic(&spec, seed, &id)?;
        data::write_clip(&cfg.dataset, &rec)?;
        ids.push(id);
    }
    Ok(ids)
}
