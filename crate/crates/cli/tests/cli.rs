use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn igcn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_igcn")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gradcheck_passes_on_every_check() {
    let o = igcn(&["gradcheck"]);
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{table}\n{}", stderr(&o));
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert!(rows.len() >= 5 * 20);
    assert!(rows.iter().all(|r| r.ends_with("PASS")));
    for name in ["conv2d", "deconv2d", "igcn k=2 conv", "rrmb", "perceptual_loss", "generator/igcn", "classifier"] {
        assert!(rows.iter().any(|r| r.starts_with(name)), "{name} missing");
    }
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for target in [&a, &b] {
        let o = igcn(&["gen-data", "--n", "16", "--seed", "7", "--data_dir", s(target)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let (ta, tb) = (tree(&a), tree(&b));
    assert_eq!(ta.keys().filter(|k| k.extension().is_some_and(|e| e == "png")).count(), 32);
    assert_eq!(ta, tb);
    // Rerunning into the same directory overwrites identically.
    igcn(&["gen-data", "--n", "16", "--seed", "7", "--data_dir", s(&a)]);
    assert_eq!(tree(&a), tb);
}

#[test]
fn eval_without_generator_names_the_missing_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("classifier.ckpt"), b"placeholder").unwrap();
    let o = igcn(&["eval", "--out_dir", s(dir.path())]);
    assert!(!o.status.success());
    let expected = dir.path().join("gan_igcn.ckpt");
    assert!(stderr(&o).contains(s(&expected)), "{}", stderr(&o));
}

#[test]
fn bad_invocations_fail_with_a_message() {
    let unknown = igcn(&["train", "--learning_rate", "0.1"]);
    assert!(!unknown.status.success());
    assert!(stderr(&unknown).contains("learning_rate"));

    let missing = igcn(&["--config", "/nonexistent/run.toml", "pretrain-cls"]);
    assert!(!missing.status.success());
    assert!(stderr(&missing).contains("/nonexistent/run.toml"));

    let invalid = igcn(&["pretrain-cls", "--kernel_size", "4"]);
    assert!(!invalid.status.success());
    assert!(stderr(&invalid).contains("kernel_size"));

    let dir = tempfile::tempdir().unwrap();
    let no_data = igcn(&["pretrain-cls", "--data_dir", s(&dir.path().join("absent"))]);
    assert!(!no_data.status.success());
    assert!(stderr(&no_data).contains("absent"));
}

#[test]
fn every_config_key_has_a_flag() {
    let help = String::from_utf8_lossy(&igcn(&["train", "--help"]).stdout).into_owned();
    for key in [
        "lr", "batch_size", "kernel_size", "g_steps_per_d_step", "lambda1", "lambda2", "lambda3", "epochs", "seed",
        "data_dir", "out_dir", "n_au", "base_channels", "n_rrmb", "sim_threshold",
    ] {
        assert!(help.contains(&format!("--{key} ")), "--{key} missing from:\n{help}");
    }
}

#[test]
fn config_file_values_apply_and_flags_override_them() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let config = dir.path().join("run.toml");
    fs::write(&config, format!("seed = 3\nn_au = 12\ndata_dir = {:?}\n", s(&data))).unwrap();
    let o = igcn(&["--config", s(&config), "gen-data", "--n", "4", "--gt_side", "32"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let header = fs::read_to_string(data.join("dataset.json")).unwrap();
    assert!(header.contains("\"seed\": 3") && header.contains("\"n_au\": 12"), "{header}");

    let o = igcn(&["--config", s(&config), "gen-data", "--n", "4", "--gt_side", "32", "--seed", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(data.join("dataset.json")).unwrap().contains("\"seed\": 5"));
}

#[test]
fn pipeline_runs_end_to_end_at_toy_scale() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("runs");
    let common = ["--data_dir", s(&data), "--out_dir", s(&out)];
    let with = |args: &[&str]| -> Output {
        let mut all = args.to_vec();
        all.extend(common);
        igcn(&all)
    };
    let ok = |o: Output| {
        assert!(o.status.success(), "{}\n{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
        o
    };
    ok(with(&["gen-data", "--n", "30", "--gt_side", "32", "--input_side", "8", "--test_fraction", "0.2"]));
    ok(with(&["pretrain-cls", "--cls_epochs", "1"]));
    assert!(out.join("classifier.ckpt").is_file());

    let small = ["--epochs", "1", "--batch_size", "2", "--base_channels", "4", "--n_rrmb", "1", "--eval_samples", "4"];
    let mut train = vec!["train", "--generator", "both"];
    train.extend(small);
    ok(with(&train));
    for name in ["gan_igcn.ckpt", "gan_residual.ckpt", "metrics_igcn.jsonl", "metrics_residual.jsonl"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }

    ok(with(&["eval"]));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    for method in ["ground_truth", "bicubic", "baseline", "full"] {
        assert!(report.lines().any(|l| l.starts_with(&format!("{method},overall,"))), "{method} row missing");
    }
    ok(with(&["eval"]));
    assert_eq!(fs::read_to_string(out.join("report.csv")).unwrap(), report);

    let restored = dir.path().join("restored");
    ok(with(&["restore", "--input", s(&data.join("degraded")), "--output", s(&restored)]));
    let n_inputs = fs::read_dir(data.join("degraded")).unwrap().count();
    assert_eq!(fs::read_dir(&restored).unwrap().count(), n_inputs);
}
