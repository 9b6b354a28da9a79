use std::fs;
use std::path::Path;

use unist_core::config::{Preset, RunConfig};
use unist_core::data::load_dataset;
use unist_core::harness::*;
use unist_core::{Error, Task};

fn run_config(root: &Path, task: Task, out: &str) -> RunConfig {
    let mut cfg = RunConfig::new(task, Preset::Desk);
    cfg.dataset = root.join("data");
    cfg.out = root.join(out);
    cfg.steps = 3;
    cfg.checkpoint_every = 2;
    cfg.synthetic_clips = 2;
    cfg.optim.lr = 3e-3;
    cfg
}

#[test]
fn training_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for task in [Task::Vsp, Task::Vsod] {
        let a = run_config(dir.path(), task, &format!("{task}_a"));
        let b = RunConfig {
            out: dir.path().join(format!("{task}_b")),
            ..a.clone()
        };
        let _ = fs::remove_dir_all(&a.dataset);
        generate(&a).unwrap();
        let sa = train(&a).unwrap();
        let sb = train(&b).unwrap();
        assert_eq!(sa.losses.len(), 3);
        assert_eq!(
            fs::read(&sa.checkpoint).unwrap(),
            fs::read(&sb.checkpoint).unwrap()
        );
        assert_eq!(
            fs::read(a.out.join("loss.csv")).unwrap(),
            fs::read(b.out.join("loss.csv")).unwrap()
        );
        assert!(a.out.join("checkpoints/step_000002.ustc").exists());
        assert!(a.out.join("run.ini").exists());
        let ra = evaluate(&a, &sa.checkpoint).unwrap();
        let rb = evaluate(&b, &sb.checkpoint).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(
            fs::read(a.out.join("metrics.csv")).unwrap(),
            fs::read(b.out.join("metrics.csv")).unwrap()
        );
        for v in ra.values.iter().flatten() {
            assert!(v.is_finite());
        }
    }
}

#[test]
fn ground_truth_scores_best() {
    let dir = tempfile::tempdir().unwrap();
    for task in [Task::Vsp, Task::Vsod] {
        let cfg = run_config(dir.path(), task, "x");
        let _ = fs::remove_dir_all(&cfg.dataset);
        generate(&cfg).unwrap();
        for clip in load_dataset(&cfg.dataset, task).unwrap() {
            match task {
                Task::Vsp => {
                    let v = clip.vsp.as_ref().unwrap();
                    let dense = v.dense.to_f64_vec();
                    let row = score_prediction(task, &dense, &clip).unwrap();
                    assert!(row[0] > 0.99, "auc {}", row[0]);
                    assert!(row[1] > 0.0);
                    assert!((row[2] - 1.0).abs() < 1e-9 && (row[3] - 1.0).abs() < 1e-9);
                }
                Task::Vsod => {
                    let m = clip.vsod.as_ref().unwrap().to_f64_vec();
                    let row = score_prediction(task, &m, &clip).unwrap();
                    assert_eq!(row[0], 0.0);
                    assert!((row[1] - 1.0).abs() < 1e-12);
                    assert!((row[2] - 1.0).abs() < 1e-6, "s {}", row[2]);
                }
            }
        }
    }
}

#[test]
fn predict_writes_full_resolution_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    for task in [Task::Vsp, Task::Vsod] {
        let mut cfg = run_config(dir.path(), task, "train");
        let _ = fs::remove_dir_all(&cfg.dataset);
        generate(&cfg).unwrap();
        let ckpt = train(&cfg).unwrap().checkpoint;
        cfg.out = dir.path().join(format!("pred_{task}_1"));
        let first = predict(&cfg, &ckpt, None).unwrap();
        cfg.out = dir.path().join(format!("pred_{task}_2"));
        let second = predict(&cfg, &ckpt, None).unwrap();
        assert_eq!(first.len(), second.len());
        for (a, b) in first.iter().zip(&second) {
            assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
        }
        let pgm: Vec<_> = first
            .iter()
            .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
            .collect();
        let per_clip = match task {
            Task::Vsp => 1,
            Task::Vsod => cfg.model.frames,
        };
        assert_eq!(pgm.len(), 2 * per_clip);
        for p in pgm {
            let img = unist_core::data::pnm::read(p).unwrap();
            assert_eq!((img.height, img.width), (64, 96));
        }
        let att: Vec<_> = first
            .iter()
            .filter(|p| p.extension().is_some_and(|e| e == "att"))
            .collect();
        assert_eq!(att.len(), 2 * 4 * cfg.model.heads);
        let bytes = fs::read(att[0]).unwrap();
        assert!(bytes.starts_with(b"unist-attention 1\nstage 1\nhead 0\n"));

        let mut bad = cfg.clone();
        bad.model.heads = 4;
        let err = predict(&bad, &ckpt, None).unwrap_err();
        assert!(matches!(err, Error::Tensor(_)));
        assert_eq!(err.exit_code(), 3);
    }
}

#[test]
fn empty_dataset_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = run_config(dir.path(), Task::Vsp, "out");
    fs::create_dir_all(&cfg.dataset).unwrap();
    assert!(matches!(train(&cfg), Err(Error::Data { .. })));
}

#[test]
fn gradcheck_suite_reports_every_block() {
    let mut cfg = RunConfig::new(Task::Vsp, Preset::Desk);
    cfg.model.height = 64;
    cfg.model.width = 64;
    cfg.model.frames = 2;
    cfg.model.channels = [4, 4, 8, 8];
    let rows = gradcheck(&cfg, 1e-2).unwrap();
    assert!(rows.len() >= 13);
    assert!(rows.iter().all(|r| r.passed && r.probed > 0));
}
