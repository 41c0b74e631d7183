use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use diffreg::imageio;
use diffreg::metrics::psnr;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_diffreg"));
    c.env("DIFFREG_WORKERS", "1");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn scene(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes").join(name).to_string_lossy().into_owned()
}

fn gen(dir: &Path, out: &str, res: &str) {
    let o = run(&["gen-data", "--scene", &scene("sphere.json"), "--train-views", "3", "--res", res, "--seed", "7", "--out", out], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

fn small_config(dir: &Path, name: &str, steps: u64, lr: f64) -> PathBuf {
    let cfg = format!(
        r#"{{"dataset": "d", "output_dir": "{name}", "steps": {steps}, "batch_size": 64, "samples_per_ray": 16,
  "eval_every": {}, "lr": {lr}, "lr_decay_steps": 100000, "chunk_rays": 64, "probe_rays": 64,
  "model": {{"kind": "radiance", "config": {{"depth": 2, "width": 16, "skip_layer": null, "color_width": 8,
    "encoding": {{"num_frequencies_position": 2, "num_frequencies_direction": 1, "include_input": true}}}}}},
  "loss": {{"lambda_depth": 2e-4, "g_max": 20, "variant": "simplified_ortho"}}}}"#,
        steps.max(1)
    );
    let p = dir.join(format!("{name}.json"));
    std::fs::write(&p, cfg).unwrap();
    p
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn gen_data_is_deterministic_and_validates() {
    let t = tempfile::tempdir().unwrap();
    gen(t.path(), "a", "16");
    gen(t.path(), "b", "16");
    let a = files(&t.path().join("a"));
    assert!(a.iter().any(|(p, _)| p == Path::new("meta.json")));
    assert_eq!(a.iter().filter(|(p, _)| p.starts_with("rgb")).count(), 6);
    assert_eq!(a, files(&t.path().join("b")));

    let o = run(&["gen-data", "--scene", &scene("sphere.json"), "--res", "0", "--out", "c"], t.path());
    assert_eq!(code(&o), 2);

    std::fs::write(t.path().join("bad.json"), r#"{"objects": [{"shape": {"kind": "sphere", "center": [0,0,0], "radius": "x"}, "albedo": [1,1,1]}], "light": [0,0,1]}"#).unwrap();
    let o = run(&["gen-data", "--scene", "bad.json", "--out", "c"], t.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("objects[0].shape"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn train_help_lists_every_key() {
    let o = run(&["train", "--help"], Path::new("."));
    assert_eq!(code(&o), 0);
    let help = String::from_utf8_lossy(&o.stdout);
    for key in [
        "dataset",
        "output_dir",
        "steps",
        "batch_size",
        "lr_decay_rate",
        "adam.beta2",
        "sampling",
        "loss.lambda_depth",
        "loss.g_max",
        "loss.variant",
        "loss.lambda_normals",
        "loss.fd_step",
        "model.kind",
        "model.config.encoding.num_frequencies_position",
        "model.config.init_radius",
        "curvature.kind",
        "curvature.lambda",
        "curvature.kappa",
        "curvature.lambda_sdf",
    ] {
        assert!(help.contains(&format!("  {key} ")), "missing {key}");
    }
}

#[test]
fn train_render_eval_pipeline() {
    let t = tempfile::tempdir().unwrap();
    let dir = t.path();
    gen(dir, "d", "16");
    let cfg = small_config(dir, "run", 300, 1e-2);
    let o = run(&["train", "--config", cfg.to_str().unwrap()], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.json", "metrics.csv", "final.ckpt"] {
        assert!(dir.join("run").join(f).exists(), "{f}");
    }

    // the written config is complete and reads back to itself
    let written = std::fs::read(dir.join("run/config.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_slice(&written).unwrap();
    v["output_dir"] = "again".into();
    v["steps"] = 1.into();
    std::fs::write(dir.join("again.json"), serde_json::to_vec(&v).unwrap()).unwrap();
    let o = run(&["train", "--config", "again.json"], dir);
    assert_eq!(code(&o), 0);
    let back: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("again/config.json")).unwrap()).unwrap();
    assert_eq!(back, v);

    // render: dimensions, determinism, and better than a random init
    let render = |ckpt: &str, out: &str| {
        let o = run(&["render", "--checkpoint", ckpt, "--dataset", "d", "--view", "0", "--samples", "16", "--out", out], dir);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    };
    render("run/final.ckpt", "r1/v0");
    render("run/final.ckpt", "r2/v0");
    for f in ["v0.png", "v0_depth.pfm", "v0_normal.pfm"] {
        assert_eq!(std::fs::read(dir.join("r1").join(f)).unwrap(), std::fs::read(dir.join("r2").join(f)).unwrap());
    }
    let depth = imageio::read_pfm(&dir.join("r1/v0_depth.pfm")).unwrap();
    assert_eq!((depth.width, depth.height, depth.channels), (16, 16, 1));
    let normal = imageio::read_pfm(&dir.join("r1/v0_normal.pfm")).unwrap();
    assert_eq!(normal.channels, 3);

    let init = small_config(dir, "init", 0, 1e-2);
    assert_eq!(code(&run(&["train", "--config", init.to_str().unwrap()], dir)), 0);
    render("init/final.ckpt", "r0/v0");
    let (_, _, gt) = imageio::read_png(&dir.join("d/rgb/000.png")).unwrap();
    let (w, h, trained) = imageio::read_png(&dir.join("r1/v0.png")).unwrap();
    assert_eq!((w, h), (16, 16));
    let (_, _, random) = imageio::read_png(&dir.join("r0/v0.png")).unwrap();
    assert!(psnr(&trained, &gt).unwrap() > psnr(&random, &gt).unwrap());

    // eval: fixed columns, one row per view plus the mean
    let o = run(&["eval", "--checkpoint", "run/final.ckpt", "--dataset", "d", "--split", "train", "--samples", "16", "--out", "e.csv"], dir);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(dir.join("e.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "view,psnr,ssim,depth_mae,roughness,roughness_full");
    assert_eq!(lines.len(), 5);
    assert!(lines[4].starts_with("mean,"));
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 6 && !l.split(',').nth(3).unwrap().is_empty()));
}

#[test]
fn eval_marks_missing_depth_absent() {
    let t = tempfile::tempdir().unwrap();
    let dir = t.path();
    gen(dir, "d", "16");
    let meta_path = dir.join("d/meta.json");
    let mut meta: serde_json::Value = serde_json::from_slice(&std::fs::read(&meta_path).unwrap()).unwrap();
    meta["has_depth"] = false.into();
    std::fs::write(&meta_path, serde_json::to_vec_pretty(&meta).unwrap()).unwrap();
    std::fs::remove_dir_all(dir.join("d/depth")).unwrap();
    let cfg = small_config(dir, "run", 0, 1e-2);
    assert_eq!(code(&run(&["train", "--config", cfg.to_str().unwrap()], dir)), 0);
    let o = run(&["eval", "--checkpoint", "run/final.ckpt", "--dataset", "d", "--samples", "8", "--out", "e.csv"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.join("e.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[3], "", "{line}");
        assert!(!cols[1].is_empty());
    }
}

#[test]
fn config_errors_and_divergence_have_distinct_codes() {
    let t = tempfile::tempdir().unwrap();
    let dir = t.path();
    gen(dir, "d", "8");
    std::fs::write(dir.join("typo.json"), r#"{"dataset": "d", "output_dir": "o", "loss": {"lamda_depth": 1e-4}}"#).unwrap();
    let o = run(&["train", "--config", "typo.json"], dir);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("loss.lamda_depth"));

    std::fs::write(dir.join("fd.json"), r#"{"dataset": "d", "output_dir": "o", "steps": 0, "loss": {"variant": "finite_difference", "lambda_depth": 1e-3}}"#).unwrap();
    assert_eq!(code(&run(&["train", "--config", "fd.json"], dir)), 0);
    std::fs::write(
        dir.join("curv.json"),
        r#"{"dataset": "d", "output_dir": "o2", "steps": 0, "model": {"kind": "sdf", "config": {"depth": 2, "width": 8, "skip_layer": null}},
            "curvature": {"kind": "gaussian", "lambda": 0.0005, "kappa": 5}}"#,
    )
    .unwrap();
    let o = run(&["train", "--config", "curv.json"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let cfg = small_config(dir, "blowup", 5, 1e300);
    let o = run(&["train", "--config", cfg.to_str().unwrap()], dir);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.join("blowup/last_good.ckpt").exists());

    let o = run(&["train", "--config", "missing.json"], dir);
    assert_eq!(code(&o), 3);
}

#[test]
fn checkpoint_errors_are_io_failures() {
    let t = tempfile::tempdir().unwrap();
    let dir = t.path();
    gen(dir, "d", "8");
    let cfg = small_config(dir, "run", 0, 1e-2);
    assert_eq!(code(&run(&["train", "--config", cfg.to_str().unwrap()], dir)), 0);
    let mut bytes = std::fs::read(dir.join("run/final.ckpt")).unwrap();

    let mut versioned = bytes.clone();
    versioned[8..12].copy_from_slice(&99u32.to_le_bytes());
    std::fs::write(dir.join("v99.ckpt"), versioned).unwrap();
    let o = run(&["render", "--checkpoint", "v99.ckpt", "--dataset", "d", "--view", "0", "--out", "x"], dir);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("version 99"));

    bytes.truncate(bytes.len() - 5);
    std::fs::write(dir.join("cut.ckpt"), bytes).unwrap();
    let o = run(&["verify", "--checkpoint", "cut.ckpt", "--report", "rep.json"], dir);
    assert_eq!(code(&o), 3);
}

#[test]
fn verify_reports() {
    let t = tempfile::tempdir().unwrap();
    let dir = t.path();
    let o = run(&["verify", "--scene", &scene("sphere.json"), "--report", "rep.json"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let rep: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("rep.json")).unwrap()).unwrap();
    assert_eq!(rep["passed"], true);
    let checks = rep["checks"].as_array().unwrap();
    assert!(checks.iter().any(|c| c["name"].as_str().unwrap().contains("gaussian")));
    let frame = checks.iter().find(|c| c["name"] == "frame_independence").unwrap();
    assert!(frame["measured"].as_f64().unwrap() < 1e-10);

    let o = run(&["verify", "--scene", &scene("two_primitives.json"), "--report", "rep2.json"], dir);
    assert_eq!(code(&o), 0);
}
