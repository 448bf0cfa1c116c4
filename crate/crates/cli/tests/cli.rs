use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn aia(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_aia"));
    cmd.args(args).env_remove("AIA_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("run aia binary")
}

fn text(out: &Output) -> (String, String) {
    (
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn field(stdout: &str, key: &str) -> String {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(": ")))
        .unwrap_or_else(|| panic!("no `{key}` in:\n{stdout}"))
        .to_string()
}

fn ok(out: Output) -> String {
    let (stdout, stderr) = text(&out);
    assert_eq!(out.status.code(), Some(0), "stdout:\n{stdout}\nstderr:\n{stderr}");
    stdout
}

fn write_json(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn small_experiment(model: &str) -> Value {
    json!({
        "model": model,
        "hidden": [8],
        "data": {"poisson": {"class_count": 2, "neurons": 6, "timesteps": 4,
                              "rate_lo": 0.0, "rate_hi": 0.6, "n_per_class": 6, "seed": 3}},
        "test_fraction": 0.5,
        "train": {"epochs": 3, "batch_size": 4}
    })
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn events_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/events")
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_experiment("lif");
    cfg["train"]["lerning_rate"] = json!(0.01);
    let path = write_json(tmp.path(), "cfg.json", &cfg);
    let out = aia(&["train", "--config", p(&path), "--out", p(tmp.path())], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).1.contains("lerning_rate"));

    let gc = write_json(tmp.path(), "gc.json", &json!({"tolerence": 1e-3}));
    let out = aia(&["gradcheck", "--config", p(&gc)], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).1.contains("tolerence"));
}

#[test]
fn bad_usage_exits_2() {
    assert_eq!(aia(&["train"], &[]).status.code(), Some(2));
    assert_eq!(aia(&["gradcheck", "--model", "hodgkin"], &[]).status.code(), Some(2));
    let out = aia(&["gradcheck", "--model", "lif"], &[("AIA_THREADS", "0")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_single_model_and_negative_control() {
    let out = ok(aia(&["gradcheck", "--model", "cached-aia", "--seed", "4"], &[]));
    assert!(out.contains("cached-aia\tlayer0.beta\t"));
    assert!(!out.contains("\tlif\t"));
    let bad = aia(&["gradcheck", "--model", "plif", "--corrupt-backward"], &[]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(text(&bad).1.contains("plif layer0.w"));
}

#[test]
fn train_writes_artifacts_and_eval_reproduces_accuracy() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_json(tmp.path(), "cfg.json", &small_experiment("lif"));
    let stdout = ok(aia(
        &[
            "train",
            "--config",
            p(&cfg),
            "--out",
            p(&tmp.path().join("runs")),
            "--model",
            "aia",
            "--seed",
            "7",
        ],
        &[],
    ));
    let dir = PathBuf::from(field(&stdout, "run_dir"));
    assert!(dir.starts_with(tmp.path().join("runs")));
    for f in ["config.json", "checkpoint.json", "metrics.json", "metrics.csv"] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    let echoed: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed["model"], "aia");
    assert_eq!(echoed["train"]["seed"], 7);
    let metrics: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["epochs"].as_array().unwrap().len(), 3);

    // the echoed config is itself a valid config that reproduces the run
    let eval = ok(aia(
        &[
            "eval",
            "--checkpoint",
            p(&dir.join("checkpoint.json")),
            "--config",
            p(&dir.join("config.json")),
        ],
        &[],
    ));
    assert_eq!(field(&eval, "accuracy"), field(&stdout, "final_test_accuracy"));
    assert_eq!(field(&eval, "spike_counts"), field(&stdout, "test_spike_counts"));
}

#[test]
fn thread_count_does_not_change_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_json(tmp.path(), "cfg.json", &small_experiment("cached-aia"));
    let mut csvs = Vec::new();
    for threads in ["1", "3"] {
        let out = ok(aia(
            &["train", "--config", p(&cfg), "--out", p(tmp.path())],
            &[("AIA_THREADS", threads)],
        ));
        csvs.push(std::fs::read(PathBuf::from(field(&out, "run_dir")).join("metrics.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn merge_beta_eval() {
    let tmp = tempfile::tempdir().unwrap();
    for model in ["lif", "cached-aia"] {
        let cfg = write_json(tmp.path(), &format!("{model}.json"), &small_experiment(model));
        let run = ok(aia(&["train", "--config", p(&cfg), "--out", p(tmp.path())], &[]));
        let ckpt = PathBuf::from(field(&run, "run_dir")).join("checkpoint.json");
        let plain = ok(aia(&["eval", "--checkpoint", p(&ckpt), "--config", p(&cfg)], &[]));
        let merged = ok(aia(
            &["eval", "--checkpoint", p(&ckpt), "--config", p(&cfg), "--merge-beta"],
            &[],
        ));
        let deviation: f64 = field(&merged, "max_readout_deviation").parse().unwrap();
        assert!(deviation <= 1e-9, "{model}: {deviation}");
        for key in ["accuracy", "loss", "spike_counts"] {
            assert_eq!(field(&plain, key), field(&merged, key), "{model} {key}");
        }
        let params = field(&merged, "parameters");
        if model == "lif" {
            assert_eq!(deviation, 0.0);
            let (a, b) = params.split_once(" -> ").unwrap();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn eval_rejects_mismatched_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_json(tmp.path(), "cfg.json", &small_experiment("lif"));
    let run = ok(aia(&["train", "--config", p(&cfg), "--out", p(tmp.path())], &[]));
    let ckpt = PathBuf::from(field(&run, "run_dir")).join("checkpoint.json");
    let mut other = small_experiment("lif");
    other["data"]["poisson"]["neurons"] = json!(9);
    let other = write_json(tmp.path(), "other.json", &other);
    let out = aia(&["eval", "--checkpoint", p(&ckpt), "--config", p(&other)], &[]);
    assert_eq!(out.status.code(), Some(2));
    let out = aia(
        &[
            "analyze",
            p(&ckpt),
            p(&ckpt),
            "--config",
            p(&other),
            "--out",
            p(tmp.path()),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_identical_checkpoints_gives_zero_deltas() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_json(tmp.path(), "cfg.json", &small_experiment("plif"));
    let run = ok(aia(&["train", "--config", p(&cfg), "--out", p(tmp.path())], &[]));
    let ckpt = PathBuf::from(field(&run, "run_dir")).join("checkpoint.json");
    let out = ok(aia(
        &[
            "analyze",
            p(&ckpt),
            p(&ckpt),
            "--config",
            p(&cfg),
            "--out",
            p(tmp.path()),
            "--bins",
            "8",
        ],
        &[],
    ));
    let dir = PathBuf::from(field(&out, "run_dir"));
    let shift = std::fs::read_to_string(dir.join("weight_shift.csv")).unwrap();
    let mut lines = shift.lines();
    assert_eq!(lines.next(), Some("bin_lo,bin_hi,count_a,count_b,delta"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r.ends_with(",0")));
    let spikes = std::fs::read_to_string(dir.join("spike_counts.csv")).unwrap();
    assert!(spikes.starts_with("layer,count_a,count_b,delta,bound\n"));
    assert!(spikes.lines().skip(1).all(|r| r.split(',').nth(3) == Some("0")));
}

#[test]
fn divergence_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_experiment("lif");
    cfg["train"]["learning_rate"] = json!(1e308);
    let cfg = write_json(tmp.path(), "cfg.json", &cfg);
    let out = aia(&["train", "--config", p(&cfg), "--out", p(tmp.path())], &[]);
    let (_, stderr) = text(&out);
    assert_eq!(out.status.code(), Some(3), "{stderr}");
    assert!(stderr.contains("layer"), "{stderr}");
}

#[test]
fn gen_data_poisson_is_reproducible_and_trainable() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = write_json(
        tmp.path(),
        "gen.json",
        &json!({"poisson": {"class_count": 3, "neurons": 5, "timesteps": 4,
                            "rate_lo": 0.1, "rate_hi": 0.7, "n_per_class": 4, "seed": 11}}),
    );
    let runs: Vec<String> = (0..2)
        .map(|_| ok(aia(&["gen-data", "--config", p(&gen), "--out", p(tmp.path())], &[])))
        .collect();
    assert_eq!(field(&runs[0], "params_hash"), field(&runs[1], "params_hash"));
    let dirs: Vec<PathBuf> = runs.iter().map(|r| PathBuf::from(field(r, "run_dir"))).collect();
    assert_ne!(dirs[0], dirs[1]);
    assert_eq!(
        std::fs::read(dirs[0].join("dataset.bin")).unwrap(),
        std::fs::read(dirs[1].join("dataset.bin")).unwrap()
    );

    let reseeded = ok(aia(
        &["gen-data", "--config", p(&gen), "--out", p(tmp.path()), "--seed", "12"],
        &[],
    ));
    assert_ne!(field(&reseeded, "params_hash"), field(&runs[0], "params_hash"));

    let hash = field(&runs[0], "params_hash");
    let cache = dirs[0].join("dataset.bin");
    let mut cfg = small_experiment("lif");
    cfg["data"] = json!({"cache": {"path": cache, "params_hash": hash}});
    let cfg_path = write_json(tmp.path(), "train.json", &cfg);
    ok(aia(&["train", "--config", p(&cfg_path), "--out", p(tmp.path())], &[]));

    // a cache built with other parameters is stale
    cfg["data"]["cache"]["params_hash"] = json!(field(&reseeded, "params_hash"));
    let stale = write_json(tmp.path(), "stale.json", &cfg);
    let out = aia(&["train", "--config", p(&stale), "--out", p(tmp.path())], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).1.contains("stale"));
}

#[test]
fn gen_data_ingests_bundled_event_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let out = aia(
        &[
            "gen-data",
            "--config",
            p(&events_dir().join("gen.json")),
            "--out",
            p(tmp.path()),
        ],
        &[],
    );
    let (stdout, stderr) = text(&out);
    assert_eq!(out.status.code(), Some(0), "{stderr}");
    assert!(stderr.contains("skipped 1 sample"), "{stderr}");
    assert_eq!(field(&stdout, "skipped_empty"), "1");

    let dir = PathBuf::from(field(&stdout, "run_dir"));
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    let labels: Vec<u64> = manifest["samples"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["label"].as_u64().unwrap())
        .collect();
    assert_eq!(labels, [0, 0, 1, 1]);
    let sources: Vec<String> = manifest["samples"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| {
            Path::new(s["source"].as_str().unwrap())
                .file_name()
                .unwrap()
                .to_string_lossy()
                .into_owned()
        })
        .collect();
    assert_eq!(sources, ["a0.csv", "a1.csv", "b0.csv", "b1.csv"]);
    assert_eq!(manifest["class_count"], 2);
    assert_eq!(manifest["neurons"], 8);
    assert_eq!(manifest["per_class"], json!([2, 2]));

    let ds = aia_core::data::load_cache(&dir.join("dataset.bin"), None).unwrap();
    assert_eq!((ds.len(), ds.inputs.neurons(), ds.inputs.timesteps()), (4, 8, 4));
    // every bundled recording has an event at its first and last timestamp
    for b in 0..4 {
        for t in [0, 3] {
            assert!(
                (0..8).any(|n| ds.inputs.get(b, n, t) == 1.0),
                "sample {b} empty at t={t}"
            );
        }
    }
}
