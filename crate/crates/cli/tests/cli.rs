use std::path::{Path, PathBuf};
use std::process::Command;

use hmkit::body::{SkinnedBody, TemplateOptions};
use hmkit::fusion::{init_tumm_weights, tumm_forward, FeatureSequence, Mat};
use hmkit::io;
use hmkit::metrics::{evaluate, EvalReport};
use hmkit::synth::perturb_motion;
use hmkit_cli::{CliError, PerturbationPreset, PipelineConfig};
use nalgebra::Vector3;
use tempfile::TempDir;

fn hmkit(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_hmkit"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().expect("terminated by a signal"),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SHORT_SPEC: &str = "duration = 3.0\njump_time = 1.0\nimu_clock_offset = 0.2\n";

fn synth(dir: &Path, spec: &str, seed: u64) -> PathBuf {
    let spec_path = dir.join(format!("spec-{seed}.toml"));
    std::fs::write(&spec_path, spec).unwrap();
    let out = dir.join(format!("bundle-{seed}"));
    let (code, _, err) = hmkit(&[
        "synth",
        "--config",
        s(&spec_path),
        "--seed",
        &seed.to_string(),
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0, "{err}");
    out
}

fn run_config(dir: &Path, bundle: &Path, name: &str, extra: &str) -> PathBuf {
    let path = dir.join(format!("{name}.toml"));
    let text = format!(
        "bundle = {:?}\noutput = {:?}\nseed = 3\n[optim]\nmax_iters = 3\nlambda_g = 30.0\nw_joints = 0.2\n{extra}",
        s(bundle),
        s(&dir.join(name))
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn files_in(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files_in(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn synth_writes_one_cloud_per_frame_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let a = synth(tmp.path(), SHORT_SPEC, 5);
    assert_eq!(std::fs::read_dir(a.join("clouds")).unwrap().count(), 60);
    let manifest = io::read_manifest(&a).unwrap();
    assert_eq!(manifest.seed, 5);
    assert_eq!(manifest.frame_count, 60);

    let again = tmp.path().join("again");
    std::fs::create_dir(&again).unwrap();
    let b = synth(&again, SHORT_SPEC, 5);
    let (fa, fb) = (files_in(&a), files_in(&b));
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(
            std::fs::read(x).unwrap(),
            std::fs::read(y).unwrap(),
            "{}",
            x.display()
        );
    }
}

#[test]
fn synth_rejects_bad_specs_without_output() {
    let tmp = TempDir::new().unwrap();
    for (i, spec) in [
        "frame_rate = 0.0\n",
        "durration = 3.0\n",
        "duration = \"long\"\n",
    ]
    .iter()
    .enumerate()
    {
        let spec_path = tmp.path().join(format!("bad{i}.toml"));
        std::fs::write(&spec_path, spec).unwrap();
        let out = tmp.path().join(format!("out{i}"));
        let (code, _, err) = hmkit(&["synth", "--config", s(&spec_path), "--out", s(&out)]);
        assert_eq!(code, 2, "{err}");
        assert!(!out.exists());
    }
    let (code, _, err) = hmkit(&[
        "synth",
        "--config",
        "/nonexistent/spec.toml",
        "--out",
        s(&tmp.path().join("x")),
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("cannot read"));
    let (_, _, err) = hmkit(&[
        "synth",
        "--config",
        s(&{
            let p = tmp.path().join("named.toml");
            std::fs::write(&p, "frame_rate = 0.0\n").unwrap();
            p
        }),
        "--out",
        s(&tmp.path().join("y")),
    ]);
    assert!(err.contains("frame_rate"), "{err}");
}

#[test]
fn run_improves_on_the_easy_preset_and_writes_outputs() {
    let tmp = TempDir::new().unwrap();
    let bundle = synth(tmp.path(), SHORT_SPEC, 1);
    let cfg = run_config(
        tmp.path(),
        &bundle,
        "easy",
        "[perturbation]\npreset = \"easy\"\n",
    );
    let (code, out, err) = hmkit(&["--json", "run", "--config", s(&cfg)]);
    assert_eq!(code, 0, "{err}");
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    let (g0, g1) = (
        report["initial"]["gmpjpe"].as_f64().unwrap(),
        report["refined"]["gmpjpe"].as_f64().unwrap(),
    );
    assert!(g1 < g0, "{g1} !< {g0}");
    assert!((report["summary"]["sync_offset"].as_f64().unwrap() + 0.2).abs() < 0.05);
    let dir = tmp.path().join("easy");
    for f in [
        "refined_motion.json",
        "initial_motion.json",
        "loss_history.csv",
        "report.json",
        "report.csv",
    ] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let history = std::fs::read_to_string(dir.join("loss_history.csv")).unwrap();
    assert_eq!(
        history.lines().next().unwrap(),
        "iter,contact,smooth,geo,total,step"
    );
    let totals: Vec<f64> = history
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert!(totals.windows(2).all(|w| w[1] <= w[0]));
    let refined = io::read_motion(&dir.join("refined_motion.json")).unwrap();
    assert_eq!(refined.len(), 60);
}

#[test]
fn run_without_ground_truth_and_with_ablation() {
    let tmp = TempDir::new().unwrap();
    let bundle = synth(tmp.path(), SHORT_SPEC, 2);
    std::fs::remove_file(bundle.join("gt_motion.json")).unwrap();
    let cfg = run_config(tmp.path(), &bundle, "nogt", "");
    let (code, out, err) = hmkit(&["--json", "run", "--config", s(&cfg), "--no-geo"]);
    assert_eq!(code, 0, "{err}");
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["notice"], "no ground truth");
    assert!(report["refined"].is_null());
    let dir = tmp.path().join("nogt");
    assert!(dir.join("refined_motion.json").exists());
    assert!(!dir.join("report.csv").exists());
    let history = std::fs::read_to_string(dir.join("loss_history.csv")).unwrap();
    assert!(history
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(3) == Some("0")));
}

#[test]
fn run_reports_sync_failure_with_exit_three() {
    let tmp = TempDir::new().unwrap();
    let bundle = synth(tmp.path(), "duration = 2.0\njump_height = 0.0\n", 4);
    let cfg = run_config(tmp.path(), &bundle, "nojump", "");
    let (code, _, err) = hmkit(&["run", "--config", s(&cfg)]);
    assert_eq!(code, 3, "{err}");
    assert!(!tmp.path().join("nojump").exists());
}

#[test]
fn run_rejects_bad_configs() {
    let tmp = TempDir::new().unwrap();
    let missing = run_config(tmp.path(), &tmp.path().join("absent"), "missing", "");
    let (code, _, _) = hmkit(&["run", "--config", s(&missing)]);
    assert_eq!(code, 2);
    let bad = tmp.path().join("bad.toml");
    std::fs::write(
        &bad,
        "bundle = \"b\"\noutput = \"o\"\n[optim]\nmax_iters = 0\n",
    )
    .unwrap();
    let (code, _, err) = hmkit(&["run", "--config", s(&bad)]);
    assert_eq!(code, 2);
    assert!(err.contains("max_iters"), "{err}");
    std::fs::write(&bad, "bundle = \"b\"\n").unwrap();
    assert_eq!(hmkit(&["run", "--config", s(&bad)]).0, 2);
}

#[test]
fn pipeline_config_round_trips() {
    let mut cfg = PipelineConfig::new("bundles/a".into(), "runs/a".into());
    cfg.seed = 9;
    cfg.perturbation.preset = PerturbationPreset::Standard;
    cfg.perturbation.pose_sigma = Some(0.01);
    cfg.optim.lambda_g = 12.5;
    cfg.sync.match_window = 0.25;
    cfg.metrics.include_initial = false;
    let text = cfg.to_toml().unwrap();
    assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);
    assert_eq!(cfg.perturbation.sigmas(), (0.1, 0.01));
}

#[test]
fn error_kinds_map_to_exit_codes() {
    assert_eq!(CliError::Config("x".into()).exit_code(), 2);
    assert_eq!(
        CliError::from(hmkit::Error::Validation("x".into())).exit_code(),
        2
    );
    assert_eq!(
        CliError::from(hmkit::Error::SyncFailure { stream: "a".into() }).exit_code(),
        3
    );
    assert_eq!(
        CliError::from(hmkit::Error::Numerical("x".into())).exit_code(),
        4
    );
}

fn eval_fixture(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let bundle = synth(dir, "duration = 1.0\njump_time = 0.5\n", 7);
    let gt = bundle.join("gt_motion.json");
    let body = bundle.join("body.json");
    let pred = dir.join("pred.json");
    let m = perturb_motion(&io::read_motion(&gt).unwrap(), 0.05, 0.05, 11).unwrap();
    io::write_motion(&pred, &m).unwrap();
    (pred, gt, body)
}

#[test]
fn eval_matches_the_library() {
    let tmp = TempDir::new().unwrap();
    let (pred, gt, body) = eval_fixture(tmp.path());
    let out = tmp.path().join("report.json");
    let (code, stdout, err) = hmkit(&[
        "--json",
        "eval",
        "--pred",
        s(&pred),
        "--gt",
        s(&gt),
        "--body",
        s(&body),
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0, "{err}");
    let cli: EvalReport = serde_json::from_str(&stdout).unwrap();
    let file: EvalReport = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let lib = evaluate(
        &io::read_motion(&pred).unwrap(),
        &io::read_motion(&gt).unwrap(),
        &io::read_body(&body).unwrap(),
    )
    .unwrap();
    assert_eq!(cli, lib);
    assert_eq!(file, lib);

    let (code, stdout, _) = hmkit(&["--json", "eval", "--pred", s(&gt), "--gt", s(&gt)]);
    assert_eq!(code, 0);
    let same: EvalReport = serde_json::from_str(&stdout).unwrap();
    assert_eq!(
        (same.mpjpe, same.pve, same.gmpjpe, same.t_error, same.accel),
        (0.0, 0.0, 0.0, 0.0, Some(0.0))
    );
    assert!(same.pa_mpjpe.abs() < 1e-9);
    assert_eq!(same.pck03, 1.0);
}

#[test]
fn eval_known_offset_and_bad_inputs() {
    let tmp = TempDir::new().unwrap();
    let (_, gt, _) = eval_fixture(tmp.path());
    let mut shifted = io::read_motion(&gt).unwrap();
    for f in &mut shifted.frames {
        f.translation += Vector3::new(0.0, 0.1, 0.0);
    }
    let shifted_path = tmp.path().join("shifted.json");
    io::write_motion(&shifted_path, &shifted).unwrap();
    let (code, stdout, _) = hmkit(&["--json", "eval", "--pred", s(&shifted_path), "--gt", s(&gt)]);
    assert_eq!(code, 0);
    let r: EvalReport = serde_json::from_str(&stdout).unwrap();
    assert!(
        r.mpjpe.abs() < 1e-9 && (r.gmpjpe - 100.0).abs() < 1e-9 && (r.t_error - 100.0).abs() < 1e-9
    );

    let mut short = shifted.clone();
    short.frames.pop();
    let short_path = tmp.path().join("short.json");
    io::write_motion(&short_path, &short).unwrap();
    assert_eq!(
        hmkit(&["eval", "--pred", s(&short_path), "--gt", s(&gt)]).0,
        2
    );

    let junk = tmp.path().join("junk.json");
    std::fs::write(&junk, "{\"version\": 1, \"frames\": [").unwrap();
    let (code, _, err) = hmkit(&["eval", "--pred", s(&junk), "--gt", s(&gt)]);
    assert_eq!(code, 2);
    assert!(!err.contains("panicked"));
    assert_eq!(
        hmkit(&["eval", "--pred", "/nonexistent.json", "--gt", s(&gt)]).0,
        2
    );
}

fn write_features(dir: &Path, n: usize, d: usize) -> [FeatureSequence; 3] {
    let make = |k: usize| {
        FeatureSequence::new(Mat::from_fn(n, d, |r, c| {
            ((r * d + c + 7 * k) as f64 * 0.37).sin()
        }))
        .unwrap()
    };
    let f = [make(0), make(1), make(2)];
    for (name, seq) in ["lidar.csv", "rgb.csv", "event.csv"].iter().zip(&f) {
        io::write_features(&dir.join(name), seq).unwrap();
    }
    f
}

#[test]
fn fuse_demo_matches_the_library_and_is_seeded() {
    let tmp = TempDir::new().unwrap();
    let [l, r, e] = write_features(tmp.path(), 6, 16);
    let out = tmp.path().join("a.csv");
    let (code, _, err) = hmkit(&[
        "fuse-demo",
        "--features",
        s(tmp.path()),
        "--seed",
        "4",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0, "{err}");
    let fused = io::read_features(&out).unwrap();
    let lib = tumm_forward(&l, &r, &e, &init_tumm_weights(16, 4).unwrap()).unwrap();
    assert_eq!(fused, lib);
    let again = tmp.path().join("b.csv");
    hmkit(&[
        "fuse-demo",
        "--features",
        s(tmp.path()),
        "--seed",
        "4",
        "--out",
        s(&again),
    ]);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());

    let zero = tmp.path().join("zero.csv");
    let (code, _, _) = hmkit(&[
        "fuse-demo",
        "--features",
        s(tmp.path()),
        "--residual-zero",
        "--out",
        s(&zero),
    ]);
    assert_eq!(code, 0);
    assert_eq!(
        std::fs::read(&zero).unwrap(),
        std::fs::read(tmp.path().join("lidar.csv")).unwrap()
    );

    let weights_path = tmp.path().join("w.bin");
    io::write_tumm_weights(&weights_path, &init_tumm_weights(16, 4).unwrap()).unwrap();
    let from_file = tmp.path().join("c.csv");
    hmkit(&[
        "fuse-demo",
        "--features",
        s(tmp.path()),
        "--weights",
        s(&weights_path),
        "--out",
        s(&from_file),
    ]);
    assert_eq!(
        std::fs::read(&out).unwrap(),
        std::fs::read(&from_file).unwrap()
    );
}

#[test]
fn fuse_demo_rejects_mismatched_shapes() {
    let tmp = TempDir::new().unwrap();
    write_features(tmp.path(), 4, 8);
    let wide = FeatureSequence::new(Mat::from_fn(4, 9, |r, c| (r + c) as f64)).unwrap();
    io::write_features(&tmp.path().join("rgb.csv"), &wide).unwrap();
    let out = tmp.path().join("fused.csv");
    let (code, _, err) = hmkit(&["fuse-demo", "--features", s(tmp.path()), "--out", s(&out)]);
    assert_eq!(code, 2, "{err}");
    assert!(!out.exists());
    std::fs::remove_file(tmp.path().join("event.csv")).unwrap();
    assert_eq!(hmkit(&["fuse-demo", "--features", s(tmp.path())]).0, 2);
}

#[test]
fn body_file_round_trip_through_eval() {
    let tmp = TempDir::new().unwrap();
    let body = SkinnedBody::procedural(&TemplateOptions::default()).unwrap();
    let p = tmp.path().join("body.json");
    io::write_body(&p, &body).unwrap();
    assert_eq!(
        io::read_body(&p).unwrap().template_vertices(),
        body.template_vertices()
    );
}
