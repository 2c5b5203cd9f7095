use std::fs;
use std::path::{Path, PathBuf};

use facesub::config::PipelineConfig;
use facesub::dataset::Protocol;
use facesub::io::{self, ManifestOptions};
use facesub::pipeline::run_pipeline;
use facesub::similarity::SimilarityConfig;
use facesub::synth::{gen_scenario, ScenarioConfig};

fn dataset(dir: &Path, protocol: Protocol, seed: u64) -> PathBuf {
    let cfg = ScenarioConfig {
        seed,
        protocol,
        frames: 90,
        noise_base: 0.3,
        score_spread: 0.2,
        shot_cut_frames: if protocol.uses_anchors() { vec![30, 60] } else { vec![] },
        ..Default::default()
    };
    let ds = gen_scenario(&cfg).unwrap().dataset;
    io::write_dataset(&ds, dir, ManifestOptions { filtering: true, score_floor: 0.0 }).unwrap()
}

fn config(manifest: &Path, out: &Path, variant: &str, lambda: f64) -> PipelineConfig {
    let mut cfg = PipelineConfig::new(manifest);
    cfg.out_dir = out.to_path_buf();
    cfg.similarity = SimilarityConfig::named(variant, lambda).unwrap();
    cfg
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "resolved_config.toml")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn zero_fusion_weight_reduces_to_quality_cosine() {
    let tmp = tempfile::tempdir().unwrap();
    let m = dataset(&tmp.path().join("data"), Protocol::SurveillanceBooking, 1);
    let fused = run_pipeline(&config(&m, &tmp.path().join("a"), "QCos+QSub-VPM", 0.0)).unwrap();
    let plain = run_pipeline(&config(&m, &tmp.path().join("b"), "QCos", 1.0)).unwrap();
    assert_eq!(fused.average, plain.average);
    assert_eq!(fs::read(tmp.path().join("a/scores.csv")).unwrap(), fs::read(tmp.path().join("b/scores.csv")).unwrap());
}

#[test]
fn filtering_only_removes_probes() {
    let tmp = tempfile::tempdir().unwrap();
    let m = dataset(&tmp.path().join("data"), Protocol::SurveillanceSurveillance, 2);
    let mut cfg = config(&m, &tmp.path().join("f"), "Cos", 1.0);
    let kept = run_pipeline(&cfg).unwrap();
    cfg.filtering = Some(false);
    cfg.out_dir = tmp.path().join("u");
    let all = run_pipeline(&cfg).unwrap();
    assert!(kept.probes.len() < all.probes.len(), "{} vs {}", kept.probes.len(), all.probes.len());
    for p in &kept.probes {
        assert!(p.scores.len() >= 25);
        assert!(p.scores.iter().sum::<f64>() / p.scores.len() as f64 >= 0.9);
        assert!(all.probes.contains(p));
    }
}

#[test]
fn config_echo_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    for (n, protocol) in [Protocol::SurveillanceBooking, Protocol::MultishotSearch].into_iter().enumerate() {
        let m = dataset(&tmp.path().join(format!("data{n}")), protocol, 3);
        let first = tmp.path().join(format!("first{n}"));
        run_pipeline(&config(&m, &first, "QCos+QSub-VPM", 1.0)).unwrap();
        let mut echo = PipelineConfig::load(&first.join("resolved_config.toml")).unwrap();
        let second = tmp.path().join(format!("second{n}"));
        echo.out_dir = second.clone();
        run_pipeline(&echo).unwrap();
        assert_eq!(outputs(&first), outputs(&second));
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let m = dataset(&tmp.path().join("data"), Protocol::MultishotSearch, 4);
    let mut runs = Vec::new();
    for workers in [1, 3] {
        let mut cfg = config(&m, &tmp.path().join(format!("w{workers}")), "QCos+QSub-PM", 1.0);
        cfg.workers = Some(workers);
        run_pipeline(&cfg).unwrap();
        runs.push(outputs(&cfg.out_dir));
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn every_protocol_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    for (n, protocol) in Protocol::ALL.into_iter().enumerate() {
        let m = dataset(&tmp.path().join(format!("d{n}")), protocol, 10 + n as u64);
        let mut cfg = config(&m, &tmp.path().join(format!("o{n}")), "QCos+QSub-VPM", 1.0);
        // synthetic track scores rarely pass the 0.9 mean filter
        cfg.filtering = Some(false);
        let out = run_pipeline(&cfg).unwrap();
        assert!(!out.probes.is_empty(), "{protocol}");
        assert_eq!(out.splits.len(), 2);
        let r1 = out.average.rank(1).unwrap();
        assert!((0.0..=1.0).contains(&r1));
        assert!(tmp.path().join(format!("o{n}/report.csv")).exists());
    }
}

#[test]
fn invalid_config_is_rejected_before_work() {
    let tmp = tempfile::tempdir().unwrap();
    let m = dataset(&tmp.path().join("data"), Protocol::SurveillanceBooking, 5);
    let mut cfg = config(&m, &tmp.path().join("x"), "Cos", 1.0);
    cfg.eval.rank_ks = vec![0];
    assert!(run_pipeline(&cfg).is_err());
    assert!(!tmp.path().join("x").exists());
}
