//! Run configuration read from a flat `key = value` file with `[sections]`.
//!
//! ```text
//! [run]
//! task = vsp            # vsp | vsod
//! preset = desk         # desk | paper, applied before [model] overrides
//! seed = 0
//! steps = 2000
//! dataset = data
//! out = runs/default
//! checkpoint_every = 500   # 0 keeps only the final checkpoint
//! log_every = 50
//!
//! [model]
//! height = 64
//! width = 96
//! frames = 4            # preset default: 4 (vsp) / 3 (vsod) on desk, 16 / 5 on paper
//! channels = 8,16,32,64
//! heads = 2
//! stages = 4
//! blocks_per_stage = 1
//! agg_kernel = 3
//! disable_saliency_transfer = false
//! disable_semantic_guided = false
//!
//! [loss]
//! lambda1 = -0.1
//! lambda2 = -0.1
//!
//! [optim]
//! lr = 1e-4
//! beta1 = 0.9
//! beta2 = 0.999
//! eps = 1e-8
//!
//! [data]
//! prefetch = 2
//! dense_sigma = 0       # 0 means height / 24
//! synthetic_clips = 4   # used by `generate`
//! blobs = 2
//! ```
//!
//! `#` and `;` start comments. Unknown sections or keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use unist_tensor::optim::AdamConfig;

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::model::{ModelConfig, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::config(
                "run.preset",
                format!("expected desk or paper, got {other:?}"),
            )),
        }
    }
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        }
    }

    pub fn model(self, task: Task) -> ModelConfig {
        match self {
            Preset::Desk => ModelConfig::desk(task),
            Preset::Paper => ModelConfig::paper(task),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub steps: usize,
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub checkpoint_every: usize,
    pub log_every: usize,
    pub model: ModelConfig,
    pub loss: LossWeights,
    pub optim: AdamConfig,
    pub prefetch: usize,
    pub dense_sigma: Option<f64>,
    pub synthetic_clips: usize,
    pub blobs: usize,
}

impl RunConfig {
    pub fn new(task: Task, preset: Preset) -> Self {
        RunConfig {
            preset,
            seed: 0,
            steps: 2000,
            dataset: PathBuf::from("data"),
            out: PathBuf::from("runs/default"),
            checkpoint_every: 500,
            log_every: 50,
            model: preset.model(task),
            loss: LossWeights::default(),
            optim: AdamConfig::default(),
            prefetch: 2,
            dense_sigma: None,
            synthetic_clips: 4,
            blobs: 2,
        }
    }

    pub fn task(&self) -> Task {
        self.model.task
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| match e {
            Error::Config { field, msg } => Error::config(format!("model.{field}"), msg),
            other => other,
        })?;
        if !self.loss.lambda1.is_finite() {
            return Err(Error::config("loss.lambda1", "must be finite"));
        }
        if !self.loss.lambda2.is_finite() {
            return Err(Error::config("loss.lambda2", "must be finite"));
        }
        if !(self.optim.lr > 0.0) {
            return Err(Error::config(
                "optim.lr",
                format!("must be positive, got {}", self.optim.lr),
            ));
        }
        for (field, b) in [
            ("optim.beta1", self.optim.beta1),
            ("optim.beta2", self.optim.beta2),
        ] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(field, format!("must be in [0, 1), got {b}")));
            }
        }
        if !(self.optim.eps > 0.0) {
            return Err(Error::config("optim.eps", "must be positive"));
        }
        if self.log_every == 0 {
            return Err(Error::config("run.log_every", "must be at least 1"));
        }
        if let Some(s) = self.dense_sigma {
            if !(s > 0.0) {
                return Err(Error::config("data.dense_sigma", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Data {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = parse_ini(text)?;
        let task: Task = take(&mut kv, "run.task")?.unwrap_or(Task::Vsp);
        let preset: Preset = take(&mut kv, "run.preset")?.unwrap_or(Preset::Desk);
        let mut c = RunConfig::new(task, preset);

        macro_rules! set {
            ($key:literal, $dst:expr) => {
                if let Some(v) = take(&mut kv, $key)? {
                    $dst = v;
                }
            };
        }
        set!("run.seed", c.seed);
        set!("run.steps", c.steps);
        set!("run.dataset", c.dataset);
        set!("run.out", c.out);
        set!("run.checkpoint_every", c.checkpoint_every);
        set!("run.log_every", c.log_every);

        let m = &mut c.model;
        set!("model.height", m.height);
        set!("model.width", m.width);
        set!("model.frames", m.frames);
        set!("model.heads", m.heads);
        set!("model.stages", m.stages);
        set!("model.blocks_per_stage", m.blocks_per_stage);
        set!("model.agg_kernel", m.agg_kernel);
        if let Some(v) = kv.remove("model.channels") {
            m.channels = parse_channels(&v)?;
        }
        if let Some(off) = take::<bool>(&mut kv, "model.disable_saliency_transfer")? {
            m.saliency_transfer = !off;
        }
        if let Some(off) = take::<bool>(&mut kv, "model.disable_semantic_guided")? {
            m.semantic_guided = !off;
        }

        set!("loss.lambda1", c.loss.lambda1);
        set!("loss.lambda2", c.loss.lambda2);
        set!("optim.lr", c.optim.lr);
        set!("optim.beta1", c.optim.beta1);
        set!("optim.beta2", c.optim.beta2);
        set!("optim.eps", c.optim.eps);
        set!("data.prefetch", c.prefetch);
        set!("data.synthetic_clips", c.synthetic_clips);
        set!("data.blobs", c.blobs);
        if let Some(s) = take::<f64>(&mut kv, "data.dense_sigma")? {
            c.dense_sigma = (s != 0.0).then_some(s);
        }

        if let Some(key) = kv.keys().next() {
            return Err(Error::config(key.clone(), "unknown key"));
        }
        c.validate()?;
        Ok(c)
    }

    /// Serializes every key; `parse(to_ini())` reproduces `self`.
    pub fn to_ini(&self) -> String {
        let m = &self.model;
        let mut s = String::new();
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "task = {}", m.task);
        let _ = writeln!(s, "preset = {}", self.preset.name());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "dataset = {}", self.dataset.display());
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "checkpoint_every = {}", self.checkpoint_every);
        let _ = writeln!(s, "log_every = {}", self.log_every);
        let _ = writeln!(s, "\n[model]");
        let _ = writeln!(s, "height = {}", m.height);
        let _ = writeln!(s, "width = {}", m.width);
        let _ = writeln!(s, "frames = {}", m.frames);
        let ch: Vec<String> = m.channels.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "channels = {}", ch.join(","));
        let _ = writeln!(s, "heads = {}", m.heads);
        let _ = writeln!(s, "stages = {}", m.stages);
        let _ = writeln!(s, "blocks_per_stage = {}", m.blocks_per_stage);
        let _ = writeln!(s, "agg_kernel = {}", m.agg_kernel);
        let _ = writeln!(s, "disable_saliency_transfer = {}", !m.saliency_transfer);
        let _ = writeln!(s, "disable_semantic_guided = {}", !m.semantic_guided);
        let _ = writeln!(s, "\n[loss]");
        let _ = writeln!(s, "lambda1 = {:?}", self.loss.lambda1);
        let _ = writeln!(s, "lambda2 = {:?}", self.loss.lambda2);
        let _ = writeln!(s, "\n[optim]");
        let _ = writeln!(s, "lr = {:?}", self.optim.lr);
        let _ = writeln!(s, "beta1 = {:?}", self.optim.beta1);
        let _ = writeln!(s, "beta2 = {:?}", self.optim.beta2);
        let _ = writeln!(s, "eps = {:?}", self.optim.eps);
        let _ = writeln!(s, "\n[data]");
        let _ = writeln!(s, "prefetch = {}", self.prefetch);
        let _ = writeln!(s, "dense_sigma = {:?}", self.dense_sigma.unwrap_or(0.0));
        let _ = writeln!(s, "synthetic_clips = {}", self.synthetic_clips);
        let _ = writeln!(s, "blobs = {}", self.blobs);
        s
    }
}

const SECTIONS: [&str; 5] = ["run", "model", "loss", "optim", "data"];

/// `section.key → value`, rejecting duplicates and keys outside a section.
fn parse_ini(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut section: Option<String> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = n + 1;
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| {
                    Error::config(format!("line {lineno}"), "unterminated section header")
                })?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(Error::config(name, "unknown section"));
            }
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::config(
                format!("line {lineno}"),
                format!("expected key = value, got {line:?}"),
            )
        })?;
        let sec = section.as_deref().ok_or_else(|| {
            Error::config(k.trim(), format!("line {lineno}: key outside any section"))
        })?;
        let key = format!("{sec}.{}", k.trim());
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::config(key, "given twice"));
        }
    }
    Ok(out)
}

fn take<T: FromStr>(kv: &mut BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match kv.remove(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|e| Error::config(key, format!("cannot parse {v:?}: {e}"))),
    }
}

fn parse_channels(v: &str) -> Result<[usize; 4]> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(Error::config(
            "model.channels",
            format!("expected 4 comma-separated values, got {v:?}"),
        ));
    }
    let mut out = [0; 4];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p
            .parse()
            .map_err(|_| Error::config("model.channels", format!("cannot parse {p:?}")))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_desk_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::new(Task::Vsp, Preset::Desk));
        assert_eq!(c.optim.lr, 1e-4);
    }

    #[test]
    fn preset_then_overrides() {
        let c =
            RunConfig::parse("[run]\ntask = vsod\npreset = paper\n[model]\nframes = 3 # short\n")
                .unwrap();
        assert_eq!(
            (c.model.height, c.model.width, c.model.frames),
            (224, 384, 3)
        );
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::new(Task::Vsod, Preset::Desk);
        c.model.saliency_transfer = false;
        c.optim.lr = 3e-3;
        c.dense_sigma = Some(2.5);
        assert_eq!(RunConfig::parse(&c.to_ini()).unwrap(), c);
    }

    #[test]
    fn errors_name_the_field() {
        let field = |text: &str| match RunConfig::parse(text) {
            Err(Error::Config { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(field("[model]\nheight = 100\n"), "model.height");
        assert_eq!(field("[model]\nheads = 3\n"), "model.channels");
        assert_eq!(field("[optim]\nlr = fast\n"), "optim.lr");
        assert_eq!(field("[optim]\nmomentum = 1\n"), "optim.momentum");
        assert_eq!(field("[extra]\n"), "extra");
    }
}
