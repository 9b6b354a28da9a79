//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero on any failure.

mod common;

use std::time::Instant;

use common::*;
use rand::Rng;
use unist_core::config::{Preset, RunConfig};
use unist_core::data::{generate_synthetic, write_clip, ClipRecord, SyntheticSceneSpec};
use unist_core::gradcheck_suite::{format_table, run_suite};
use unist_core::harness::{evaluate, train, Trainer};
use unist_core::losses::*;
use unist_core::metrics::*;
use unist_core::{ModelConfig, Task, UniST};
use unist_tensor::gradcheck::GradcheckConfig;
use unist_tensor::nn::Mode;
use unist_tensor::{no_grad, Tensor};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn gradient_fidelity() -> Outcome {
    let t0 = Instant::now();
    let cfg = ModelConfig::desk(Task::Vsp);
    let rows = match run_suite(&cfg, GradcheckConfig::default(), 1e-2) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let secs = t0.elapsed().as_secs_f64();
    eprint!("{}", format_table(&rows));
    let worst = rows.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    let failed: Vec<_> = rows.iter().filter(|r| !r.passed).map(|r| r.block).collect();
    outcome(
        failed.is_empty() && secs < 600.0,
        format!(
            "{} blocks, max rel err {worst:.2e} (< 1e-2), {secs:.1}s (< 600s) {failed:?}",
            rows.len()
        ),
    )
}

fn shape_suite() -> Outcome {
    let mut bad = Vec::new();
    let mut cases = 0;
    for (h, w) in [(64, 96), (96, 128), (224, 384)] {
        for t in [2, 4, 16] {
            for task in [Task::Vsp, Task::Vsod] {
                cases += 1;
                let cfg = ModelConfig {
                    height: h,
                    width: w,
                    frames: t,
                    ..ModelConfig::desk(task)
                };
                let (_s, model) = UniST::<f32>::build(cfg, 0).unwrap();
                let x = Tensor::<f32>::full(&[t, h, w, 3], 0.5);
                let fwd = match no_grad(|| model.forward(&x, Mode::Eval)) {
                    Ok(f) => f,
                    Err(e) => {
                        bad.push(format!("{task} {h}x{w} T={t}: {e}"));
                        continue;
                    }
                };
                let mut ok = true;
                for i in 1..=4 {
                    let s = fwd.pyramid.level(i).shape();
                    let d = 1 << (i + 1);
                    ok &= s == [t, h / d, w / d, cfg.channels[i - 1]];
                }
                let key = (t, (h / 32) / 2, (w / 32) / 2);
                ok &= fwd.trace.scores.len() == 4;
                ok &= fwd.trace.scores.iter().all(|s| s.key_layout == key);
                ok &= fwd.features.shape() == [t, h / 4, w / 4, cfg.channels[0]];
                ok &= match task {
                    Task::Vsp => fwd.prediction.shape() == [h, w],
                    Task::Vsod => fwd.prediction.shape() == [t, h, w],
                };
                if !ok {
                    bad.push(format!("{task} {h}x{w} T={t}"));
                }
            }
        }
    }
    outcome(bad.is_empty(), format!("{cases} cases, failures {bad:?}"))
}

fn metric_oracles() -> Outcome {
    const N: usize = 1000;
    let mut r = rng(2024);
    let mut worst = [0.0f64; 7];
    let mut counts = [0usize; 7];
    let names = ["auc", "nss", "cc", "sim", "mae", "max_f", "s_measure"];
    let tol = [1e-9, 1e-6, 1e-6, 1e-6, 1e-9, 1e-9, 1e-6];
    while counts.iter().any(|&c| c < N) {
        let (h, w) = size(&mut r);
        let n = h * w;
        let sal = saliency(&mut r, n);
        let other = saliency(&mut r, n);
        let mut fix = binary(&mut r, n);
        if r.gen_bool(0.03) {
            fix.iter_mut().for_each(|b| *b = true);
        }
        let g: Vec<f64> = fix.iter().map(|&b| b as u8 as f64).collect();
        let mut record = |k: usize, got: unist_core::Result<f64>, want: Option<f64>| {
            if let (Ok(a), Some(b)) = (got, want) {
                worst[k] = worst[k].max((a - b).abs());
                counts[k] += 1;
            }
        };
        let mixed = fix.iter().any(|&b| b) && !fix.iter().all(|&b| b);
        record(
            0,
            auc_judd(&sal, &fix),
            mixed.then(|| auc_pairwise(&sal, &fix)),
        );
        let varied = sal.iter().any(|&v| v != sal[0]);
        record(
            1,
            nss(&sal, &fix),
            (varied && fix.iter().any(|&b| b)).then(|| nss_loop(&sal, &fix)),
        );
        let both = varied && other.iter().any(|&v| v != other[0]);
        record(
            2,
            cc_metric(&sal, &other),
            both.then(|| pearson_loop(&sal, &other)),
        );
        let sums = sal.iter().sum::<f64>() > 0.0 && other.iter().sum::<f64>() > 0.0;
        record(
            3,
            sim_metric(&sal, &other),
            sums.then(|| sim_loop(&sal, &other)),
        );
        record(4, mae(&sal, &g), Some(mae_loop(&sal, &g)));
        record(5, max_f(&sal, &fix, n), max_f_exhaustive(&sal, &fix, n));
        record(
            6,
            s_measure(&sal, &fix, h, w, 0.5),
            s_measure_reference(&sal, &fix, h, w),
        );
    }
    let passed = (0..7).all(|k| worst[k] < tol[k]);
    let detail = (0..7)
        .map(|k| format!("{} {:.1e}", names[k], worst[k]))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(passed, format!("≥{N} instances each: {detail}"))
}

fn loss_identities() -> Outcome {
    let mut r = rng(7);
    let (mut kl, mut cc, mut sim, mut total) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let (h, w) = (r.gen_range(2..=6), r.gen_range(2..=6));
        let v: Vec<f64> = (0..h * w).map(|_| r.gen_range(0.01..1.0)).collect();
        let g = Tensor::from_vec(v, &[h, w]).unwrap();
        kl = kl.max(kl_loss(&g, &g).unwrap().item().abs());
        cc = cc.max((cc_loss(&g, &g).unwrap().item() + 1.0).abs());
        sim = sim.max((sim_loss(&g, &g).unwrap().item() - 1.0).abs());
        let l = vsp_loss(&g, &g, LossWeights::default()).unwrap();
        total = total.max(l.total.item().abs());
    }
    let p = Tensor::<f64>::full(&[4, 4], 0.5);
    let m = Tensor::from_vec(
        (0..16).map(|i| (i % 3 == 0) as u8 as f64).collect(),
        &[4, 4],
    )
    .unwrap();
    let bce = (vsod_bce(&p, &m).unwrap().item() - std::f64::consts::LN_2).abs();
    let passed = kl <= 5e-6 && cc < 1e-9 && sim < 1e-9 && total <= 1e-5 && bce <= 1e-6;
    outcome(
        passed,
        format!("|KL| {kl:.1e}, |CC+1| {cc:.1e}, |SIM-1| {sim:.1e}, |total| {total:.1e}, |BCE-ln2| {bce:.1e}"),
    )
}

fn overfit_clip(cfg: &ModelConfig, seed: u64) -> ClipRecord {
    let spec = SyntheticSceneSpec::random(cfg.height, cfg.width, cfg.frames, 2, seed);
    generate_synthetic(&spec, seed, "overfit").unwrap()
}

fn trainer(task: Task, seed: u64, full: bool) -> Trainer {
    let mut cfg = RunConfig::new(task, Preset::Desk);
    cfg.seed = seed;
    cfg.optim.lr = 3e-3;
    cfg.model.saliency_transfer = full;
    cfg.model.semantic_guided = full;
    Trainer::new(&cfg).unwrap()
}

fn overfit_vsp() -> Outcome {
    let t0 = Instant::now();
    let mut tr = trainer(Task::Vsp, 7, true);
    let clip = overfit_clip(&tr.model.cfg, 7).for_task(Task::Vsp);
    let mut best = f64::INFINITY;
    while tr.steps_done() < 2000 {
        let l = tr.step(&clip).unwrap();
        best = best.min(l.total);
        if l.total < 0.05 {
            break;
        }
    }
    outcome(
        best < 0.05,
        format!(
            "composite {best:.4} (< 0.05) after {} steps, {:.0}s",
            tr.steps_done(),
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn overfit_vsod() -> Outcome {
    let t0 = Instant::now();
    let mut tr = trainer(Task::Vsod, 7, true);
    let clip = overfit_clip(&tr.model.cfg, 7).for_task(Task::Vsod);
    let gt = clip.vsod.as_ref().unwrap().to_f64_vec();
    let mut best = f64::INFINITY;
    while tr.steps_done() < 2000 {
        tr.step(&clip).unwrap();
        if tr.steps_done().is_multiple_of(50) {
            let pred = no_grad(|| tr.model.forward(&clip.frames, Mode::Eval)).unwrap();
            best = best.min(mae(&pred.prediction.to_f64_vec(), &gt).unwrap());
            if best < 0.05 {
                break;
            }
        }
    }
    outcome(
        best < 0.05,
        format!(
            "eval MAE {best:.4} (< 0.05) after {} steps, {:.0}s",
            tr.steps_done(),
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn ablation() -> Outcome {
    const STEPS: usize = 400;
    let t0 = Instant::now();
    let run = |seed: u64, full: bool| {
        let mut tr = trainer(Task::Vsp, seed, full);
        let clip = overfit_clip(&tr.model.cfg, seed).for_task(Task::Vsp);
        let mut last = 0.0;
        for _ in 0..STEPS {
            last = tr.step(&clip).unwrap().total;
        }
        last
    };
    let seeds = 0..5u64;
    let full: Vec<f64> = seeds.clone().map(|s| run(s, true)).collect();
    let sat: Vec<f64> = seeds.map(|s| run(s, false)).collect();
    let (mf, ms) = (
        full.iter().sum::<f64>() / 5.0,
        sat.iter().sum::<f64>() / 5.0,
    );
    outcome(
        mf <= 1.1 * ms,
        format!(
            "mean final loss full {mf:.4} vs w/SAT {ms:.4} (≤ 1.1×), {STEPS} steps × 5 seeds, {:.0}s",
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut same = true;
    for task in [Task::Vsp, Task::Vsod] {
        let mut cfg = RunConfig::new(task, Preset::Desk);
        cfg.dataset = dir.path().join(format!("{task}_data"));
        cfg.steps = 20;
        cfg.checkpoint_every = 10;
        for i in 0..2u64 {
            let spec = SyntheticSceneSpec::random(64, 96, cfg.model.frames, 2, i);
            write_clip(
                &cfg.dataset,
                &generate_synthetic(&spec, i, &format!("c{i}")).unwrap(),
            )
            .unwrap();
        }
        let mut files = Vec::new();
        for run in ["a", "b"] {
            cfg.out = dir.path().join(format!("{task}_{run}"));
            let s = train(&cfg).unwrap();
            evaluate(&cfg, &s.checkpoint).unwrap();
            let read = |p: &str| std::fs::read(cfg.out.join(p)).unwrap();
            files.push([
                read("model.ustc"),
                read("checkpoints/step_000010.ustc"),
                read("metrics.csv"),
                read("loss.csv"),
            ]);
        }
        same &= files[0] == files[1];
    }
    outcome(
        same,
        "checkpoints, metrics.csv and loss.csv bit-identical for both tasks",
    )
}

fn residual_identity() -> Outcome {
    let mut worst = 0.0f64;
    for task in [Task::Vsp, Task::Vsod] {
        let cfg = ModelConfig::desk(task);
        let (_s, model) = UniST::<f64>::build(cfg, 5).unwrap();
        for stage in &model.transformer.blocks {
            for block in stage {
                let w = &block.v.proj.weight;
                w.set_data(vec![0.0; w.tensor().numel()]).unwrap();
            }
        }
        let x = rand_tensor(
            &mut rng(6),
            &[cfg.frames, cfg.height, cfg.width, 3],
            0.0,
            1.0,
        );
        let fwd = no_grad(|| model.forward(&x, Mode::Eval)).unwrap();
        for (pre, out) in fwd.trace.pre_attention.iter().zip(&fwd.trace.outputs) {
            worst = worst.max(max_abs_diff(pre.tokens.data(), out.tokens.data()));
        }
    }
    outcome(worst < 1e-6, format!("max |out − in| {worst:.1e} (< 1e-6)"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient fidelity", gradient_fidelity),
        ("shape contract suite", shape_suite),
        ("metric-oracle equivalence", metric_oracles),
        ("loss identity cases", loss_identities),
        ("overfit VSP composite", overfit_vsp),
        ("overfit VSOD MAE", overfit_vsod),
        ("overfit ablation vs w/SAT", ablation),
        ("determinism", determinism),
        ("residual identity", residual_identity),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let o = f();
        println!(
            "{} {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.passed);
    }
    println!(
        "acceptance: {} of {} passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
