//! End-to-end CLI tests against the compiled binary.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use graphleaf::model::{init_params, ModelConfig, Variant};
use graphleaf::optim::ParamSet;
use graphleaf::rng::Rng;

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_graphleaf")
}

fn run(args: &[&str]) -> Output {
    Command::new(binary())
        .args(args)
        .output()
        .expect("spawn graphleaf")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().to_string()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

fn workspace_with_corpus(per_class: usize, seed: u64) -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    common::write_hue_corpus(&root.join("data"), per_class, seed);
    Workspace { _dir: dir, root }
}

#[test]
fn help_exits_zero_for_every_subcommand() {
    for sub in ["preprocess", "train", "evaluate", "predict", "inspect"] {
        let out = run(&[sub, "--help"]);
        assert!(out.status.success(), "{} --help failed", sub);
        let text = stdout(&out);
        assert!(text.contains("--"), "{} --help lists no flags", sub);
    }
    assert!(run(&["--help"]).status.success());
}

#[test]
fn missing_required_flag_is_usage_error() {
    let out = run(&["preprocess"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error: usage:"), "{}", stderr(&out));
}

#[test]
fn unknown_flag_is_rejected() {
    let out = run(&["train", "--nonsense", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_cache_file_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("bogus.ragc");
    std::fs::write(&bogus, b"definitely not a cache").unwrap();
    let out = run(&["inspect", "--cache", &s(&bogus)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error: format:"), "{}", stderr(&out));
}

#[test]
fn missing_cache_file_is_data_error() {
    let out = run(&["inspect", "--cache", "/nonexistent/x.ragc"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error: io:"), "{}", stderr(&out));
}

#[test]
fn full_pipeline_round_trip() {
    let ws = workspace_with_corpus(6, 0xC11);
    let data = ws.root.join("data");
    let prefix = ws.root.join("cache");
    let rundir = ws.root.join("run");

    // preprocess
    let out = run(&[
        "preprocess",
        "--data",
        &s(&data),
        "--out",
        &s(&prefix),
        "--segments",
        "50",
        "--split",
        "0.75",
        "--seed",
        "9",
    ]);
    assert!(out.status.success(), "preprocess: {}", stderr(&out));
    let train_cache = ws.root.join("cache.train.ragc");
    let test_cache = ws.root.join("cache.test.ragc");
    assert!(train_cache.exists() && test_cache.exists());
    assert!(ws.root.join("cache.train.manifest.json").exists());

    // manifest JSON carries the documented keys
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(ws.root.join("cache.train.manifest.json")).unwrap(),
    )
    .unwrap();
    assert!(manifest["classes"].is_array());
    assert!(manifest["samples"][0]["path"].is_string());
    assert!(manifest["samples"][0]["class"].is_number());

    // train (tiny model via config file; flags still win for epochs)
    let config = ws.root.join("train-config.json");
    std::fs::write(
        &config,
        serde_json::json!({
            "hidden": 16,
            "epochs": 999,
            "batch": 8,
            "edge-aug-p": 0.25
        })
        .to_string(),
    )
    .unwrap();
    let out = run(&[
        "train",
        "--cache",
        &s(&prefix),
        "--model",
        "hybrid",
        "--epochs",
        "2",
        "--lr",
        "0.001",
        "--seed",
        "5",
        "--out",
        &s(&rundir),
        "--config",
        &s(&config),
    ]);
    assert!(out.status.success(), "train: {}", stderr(&out));
    for artifact in [
        "config.json",
        "final.ckpt",
        "best.ckpt",
        "curves.csv",
        "report.json",
        "confusion.csv",
    ] {
        assert!(rundir.join(artifact).exists(), "missing {}", artifact);
    }
    // the explicit --epochs 2 overrode the config file's 999
    let curves = std::fs::read_to_string(rundir.join("curves.csv")).unwrap();
    assert!(curves.starts_with("epoch,train_loss,train_acc,test_loss,test_acc\n"));
    assert_eq!(curves.lines().count(), 3, "2 epochs + header");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(rundir.join("report.json")).unwrap())
            .unwrap();
    assert!(report["metrics"]["accuracy"].is_number());
    assert!(report["confusion_matrix"]["classes"].is_array());
    assert_eq!(report["seed"], 5);
    assert!(report["wall_time_seconds"].is_number());
    assert_eq!(report["config"]["model"], "hybrid");
    assert_eq!(report["config"]["hidden"], 16);

    let confusion = std::fs::read_to_string(rundir.join("confusion.csv")).unwrap();
    assert!(confusion.starts_with("true\\predicted,blue,green,red,yellow"));

    // evaluate
    let out = run(&[
        "evaluate",
        "--checkpoint",
        &s(&rundir.join("final.ckpt")),
        "--cache",
        &s(&test_cache),
    ]);
    assert!(out.status.success(), "evaluate: {}", stderr(&out));
    let eval_doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(eval_doc["metrics"]["accuracy"].is_number());
    let acc = eval_doc["metrics"]["accuracy"].as_f64().unwrap();
    let recall = eval_doc["metrics"]["recall_weighted"].as_f64().unwrap();
    assert!((acc - recall).abs() < 1e-9);
    assert!(rundir.join("evaluate-report.json").exists());

    // predict
    let image = data.join("red").join("img_000.png");
    let out = run(&[
        "predict",
        "--checkpoint",
        &s(&rundir.join("final.ckpt")),
        "--image",
        &s(&image),
    ]);
    assert!(out.status.success(), "predict: {}", stderr(&out));
    let pred: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(pred["class"].is_string());
    let probs: Vec<f64> = pred["probabilities"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(probs.len(), 4);
    let total: f64 = probs.iter().sum();
    assert!((total - 1.0).abs() < 1e-6, "probabilities sum to {}", total);

    // inspect, text and json
    let out = run(&["inspect", "--cache", &s(&train_cache)]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("graphs: 16"), "{}", text);
    assert!(text.contains("class blue"));

    let out = run(&["inspect", "--cache", &s(&train_cache), "--format", "json"]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["graph_count"], 16);
    assert_eq!(doc["split"], "train");
    assert!(doc["graphs"].as_array().unwrap().len() == 16);
    assert!(doc["graphs"][0]["node_features"].is_array());
}

#[test]
fn preprocess_split_075_gives_900_train_300_test_on_1200_images() {
    // Table-style corpus: 3 classes x 400 images
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    for class in ["early_blight", "healthy", "late_blight"] {
        let class_dir = data.join(class);
        std::fs::create_dir_all(&class_dir).unwrap();
        let mut rng = Rng::seed_from_u64(0x707A70);
        for i in 0..400 {
            let shade = 60 + (i % 150) as u8;
            let img = image::RgbImage::from_fn(24, 24, |x, y| {
                let v = shade
                    .wrapping_add((x * 3) as u8)
                    .wrapping_add((y * 5) as u8)
                    .wrapping_add(rng.range(17) as u8);
                image::Rgb([v, v.wrapping_add(40), v / 2])
            });
            img.save(class_dir.join(format!("img_{:03}.png", i))).unwrap();
        }
    }
    let prefix = dir.path().join("potato");
    let out = run(&[
        "preprocess",
        "--data",
        &s(&data),
        "--out",
        &s(&prefix),
        "--split",
        "0.75",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.contains("900 train graphs") && text.contains("300 test graphs"),
        "{}",
        text
    );

    // the cache pair loads back with 1200 graphs across 3 class names
    for (suffix, expected) in [("train", 900u64), ("test", 300)] {
        let cache = dir.path().join(format!("potato.{}.ragc", suffix));
        let out = run(&["inspect", "--cache", &s(&cache), "--format", "json"]);
        assert!(out.status.success(), "{}", stderr(&out));
        let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
        assert_eq!(doc["graph_count"], expected);
        assert_eq!(doc["classes"].as_array().unwrap().len(), 3);
    }
}

#[test]
fn minimal_corpus_round_trips() {
    // smallest valid corpus: 2 classes with 2 images each
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    for (class, color) in [("a", [220u8, 40, 40]), ("b", [40, 220, 40])] {
        let class_dir = data.join(class);
        std::fs::create_dir_all(&class_dir).unwrap();
        for i in 0..2 {
            image::RgbImage::from_pixel(20, 20, image::Rgb(color))
                .save(class_dir.join(format!("{}.png", i)))
                .unwrap();
        }
    }
    let prefix = dir.path().join("c");
    assert!(run(&["preprocess", "--data", &s(&data), "--out", &s(&prefix)])
        .status
        .success());
    let rundir = dir.path().join("run");
    let config = dir.path().join("cfg.json");
    std::fs::write(&config, r#"{"hidden": 8, "epochs": 1, "batch": 2}"#).unwrap();
    let out = run(&[
        "train",
        "--cache",
        &s(&prefix),
        "--model",
        "hybrid",
        "--out",
        &s(&rundir),
        "--config",
        &s(&config),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = run(&[
        "evaluate",
        "--checkpoint",
        &s(&rundir.join("final.ckpt")),
        "--cache",
        &s(&dir.path().join("c.test.ragc")),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn flags_only_config_file_drives_evaluate() {
    let ws = workspace_with_corpus(3, 0xFC0F);
    let data = ws.root.join("data");
    let prefix = ws.root.join("cache");
    assert!(run(&["preprocess", "--data", &s(&data), "--out", &s(&prefix)])
        .status
        .success());
    let rundir = ws.root.join("run");
    let train_cfg = ws.root.join("train.json");
    std::fs::write(&train_cfg, r#"{"hidden": 16, "epochs": 1, "batch": 4}"#).unwrap();
    assert!(run(&[
        "train",
        "--cache",
        &s(&prefix),
        "--model",
        "gat",
        "--out",
        &s(&rundir),
        "--config",
        &s(&train_cfg),
    ])
    .status
    .success());

    // a config carrying only command flags: the model still loads from
    // the checkpoint's sibling config.json
    let eval_cfg = ws.root.join("eval.json");
    std::fs::write(
        &eval_cfg,
        serde_json::json!({
            "checkpoint": rundir.join("final.ckpt"),
            "cache": ws.root.join("cache.test.ragc"),
        })
        .to_string(),
    )
    .unwrap();
    let out = run(&["evaluate", "--config", &s(&eval_cfg)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["config"]["model"], "gat");
}

#[test]
fn preprocess_is_invariant_to_thread_count() {
    let ws = workspace_with_corpus(3, 0x7EAD);
    let data = ws.root.join("data");
    let mut caches = Vec::new();
    for (tag, threads) in [("one", "1"), ("many", "4")] {
        let prefix = ws.root.join(tag);
        let out = Command::new(binary())
            .args([
                "preprocess",
                "--data",
                &s(&data),
                "--out",
                &s(&prefix),
                "--seed",
                "5",
            ])
            .env("GRAPHLEAF_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        caches.push((
            std::fs::read(ws.root.join(format!("{}.train.ragc", tag))).unwrap(),
            std::fs::read(ws.root.join(format!("{}.test.ragc", tag))).unwrap(),
        ));
    }
    assert_eq!(caches[0].0, caches[1].0, "train caches differ by thread count");
    assert_eq!(caches[0].1, caches[1].1, "test caches differ by thread count");
}

#[test]
fn train_is_byte_identical_across_reruns() {
    let ws = workspace_with_corpus(4, 0xABCD);
    let data = ws.root.join("data");
    let prefix = ws.root.join("cache");
    let out = run(&[
        "preprocess",
        "--data",
        &s(&data),
        "--out",
        &s(&prefix),
        "--seed",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let config = ws.root.join("config.json");
    std::fs::write(
        &config,
        serde_json::json!({"hidden": 16, "epochs": 3, "batch": 4}).to_string(),
    )
    .unwrap();

    let mut curve_files = Vec::new();
    for run_idx in 0..2 {
        let rundir = ws.root.join(format!("run{}", run_idx));
        let out = run(&[
            "train",
            "--cache",
            &s(&prefix),
            "--model",
            "gcn",
            "--seed",
            "77",
            "--out",
            &s(&rundir),
            "--config",
            &s(&config),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        curve_files.push(std::fs::read(rundir.join("curves.csv")).unwrap());
    }
    assert_eq!(curve_files[0], curve_files[1], "curve CSVs differ");
}

#[test]
fn predict_with_untrained_he_init_checkpoint_gives_valid_probabilities() {
    let ws = workspace_with_corpus(2, 0x7E57);
    let rundir = ws.root.join("run");
    std::fs::create_dir_all(&rundir).unwrap();

    // fabricate an untrained model: He init at a fixed seed
    let model = ModelConfig {
        variant: Variant::Hybrid,
        hidden_dim: 16,
        gcn_layers: 2,
        gat_layers: 2,
        heads: 2,
        num_classes: 4,
        input_dim: 3,
        edge_aug_p: 0.5,
    };
    let params: ParamSet<f32> = init_params(&model, &mut Rng::substream(42, "init")).unwrap();
    params.write_checkpoint(&rundir.join("final.ckpt")).unwrap();
    std::fs::write(
        rundir.join("config.json"),
        serde_json::json!({
            "model": "hybrid",
            "hidden": 16,
            "heads": 2,
            "gcn-layers": 2,
            "gat-layers": 2,
            "classes": ["blue", "green", "red", "yellow"],
            "segments": 50
        })
        .to_string(),
    )
    .unwrap();

    // constant-black image
    let image_path = ws.root.join("black.png");
    image::RgbImage::from_pixel(32, 32, image::Rgb([0, 0, 0]))
        .save(&image_path)
        .unwrap();

    let out = run(&[
        "predict",
        "--checkpoint",
        &s(&rundir.join("final.ckpt")),
        "--image",
        &s(&image_path),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let pred: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let probs: Vec<f64> = pred["probabilities"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(probs.len(), 4);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    assert!(probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
}

#[test]
fn train_epochs_one_lr_zero_evaluates_like_the_init_checkpoint() {
    let ws = workspace_with_corpus(3, 0x1234);
    let data = ws.root.join("data");
    let prefix = ws.root.join("cache");
    assert!(run(&[
        "preprocess",
        "--data",
        &s(&data),
        "--out",
        &s(&prefix),
        "--seed",
        "2"
    ])
    .status
    .success());

    let config = ws.root.join("config.json");
    std::fs::write(&config, serde_json::json!({"hidden": 16}).to_string()).unwrap();
    let rundir = ws.root.join("run");
    let out = run(&[
        "train",
        "--cache",
        &s(&prefix),
        "--model",
        "gcn",
        "--epochs",
        "1",
        "--lr",
        "0",
        "--seed",
        "8",
        "--out",
        &s(&rundir),
        "--config",
        &s(&config),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    // the trained checkpoint must equal the untouched He init
    let trained = ParamSet::<f32>::read_checkpoint(&rundir.join("final.ckpt")).unwrap();
    let model = ModelConfig {
        variant: Variant::Gcn,
        hidden_dim: 16,
        gcn_layers: 2,
        gat_layers: 2,
        heads: 2,
        num_classes: 4,
        input_dim: 3,
        edge_aug_p: 0.5,
    };
    let init: ParamSet<f32> = init_params(&model, &mut Rng::substream(8, "init")).unwrap();
    for (name, p) in init.iter() {
        assert_eq!(p.value, *trained.get(name).unwrap(), "{} changed", name);
    }

    // evaluating the checkpoint reproduces the report's metrics
    let out = run(&[
        "evaluate",
        "--checkpoint",
        &s(&rundir.join("final.ckpt")),
        "--cache",
        &s(&ws.root.join("cache.test.ragc")),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let eval_doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(rundir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(
        eval_doc["metrics"]["accuracy"].as_f64().unwrap(),
        report["metrics"]["accuracy"].as_f64().unwrap()
    );
}
