//! End-to-end orchestration shared by the CLI and the C bindings:
//! corpus -> graph caches, cache -> trained run directory, and
//! checkpoint + image -> prediction.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::batch::GraphBatch;
use crate::dataset::{
    preprocess_image, scan_dataset, stratified_split, DatasetManifest, SkippedFile,
};
use crate::error::{Error, Result};
use crate::model::{check_params, forward_logits, ModelConfig, Variant};
use crate::nn::softmax_rows;
use crate::optim::ParamSet;
use crate::rag::{build_rag, read_cache, write_cache, GraphDataset, RegionGraph, SplitTag};
use crate::slic::{enforce_connectivity, slic_segment, SlicParams};
use crate::train::{curves_to_csv, evaluate_model, train_model, EvalReport, RunConfig, TrainOutput};

/// Cap the rayon worker pool from `GRAPHLEAF_THREADS` (unset or 0 means
/// automatic). Safe to call more than once; later calls are no-ops.
pub fn configure_threads() {
    if let Ok(v) = std::env::var("GRAPHLEAF_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PreprocessOptions {
    pub segments: usize,
    pub split: f64,
    pub seed: u64,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            segments: 50,
            split: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PreprocessSummary {
    pub classes: Vec<String>,
    pub train_graphs: usize,
    pub test_graphs: usize,
    pub skipped: usize,
    pub train_cache: PathBuf,
    pub test_cache: PathBuf,
}

pub fn cache_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let base = prefix.to_string_lossy();
    (
        PathBuf::from(format!("{}.train.ragc", base)),
        PathBuf::from(format!("{}.test.ragc", base)),
    )
}

fn image_to_graph(path: &Path, label: u32, slic: &SlicParams) -> Result<RegionGraph> {
    let image = preprocess_image(path)?;
    let raw = slic_segment(&image, slic)?;
    let min_size = slic.min_segment_size(image.width(), image.height());
    let seg = enforce_connectivity(&raw, min_size);
    build_rag(&seg, &image, label)
}

/// Scan a class-per-directory corpus, segment every image, build the
/// region graphs, split them stratified and write the cache pair.
/// Undecodable images are skipped (reported in the summary and via
/// warnings collected in `skip_log`).
pub fn preprocess_corpus(
    data: &Path,
    out_prefix: &Path,
    opts: &PreprocessOptions,
    skip_log: &mut Vec<SkippedFile>,
) -> Result<PreprocessSummary> {
    let outcome = scan_dataset(data)?;
    skip_log.extend(outcome.skipped.iter().cloned());
    let manifest = outcome.manifest;
    let slic = SlicParams::with_segments(opts.segments);

    // decode + segment + graph-build in parallel, order preserved
    let results: Vec<Result<RegionGraph>> = manifest
        .samples
        .par_iter()
        .map(|s| image_to_graph(&s.path, s.class as u32, &slic))
        .collect();

    let mut survivors = Vec::new();
    let mut graphs = Vec::new();
    for (sample, result) in manifest.samples.iter().zip(results) {
        match result {
            Ok(g) => {
                survivors.push(sample.clone());
                graphs.push(g);
            }
            Err(e) => skip_log.push(SkippedFile {
                path: sample.path.clone(),
                reason: e.to_string(),
            }),
        }
    }

    let surviving = DatasetManifest {
        classes: manifest.classes.clone(),
        samples: survivors,
        source_root: manifest.source_root.clone(),
    };
    for (class, &count) in surviving.per_class_counts().iter().enumerate() {
        if count < 2 {
            return Err(Error::Input(format!(
                "class '{}' has only {} usable image(s) after skips",
                surviving.classes[class], count
            )));
        }
    }

    let (train_manifest, test_manifest) = stratified_split(&surviving, opts.split, opts.seed)?;

    // map manifest rows back to their graphs by path
    let index_of: std::collections::HashMap<&Path, usize> = surviving
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| (s.path.as_path(), i))
        .collect();
    let collect = |m: &DatasetManifest, tag: SplitTag| GraphDataset {
        graphs: m
            .samples
            .iter()
            .map(|s| graphs[index_of[s.path.as_path()]].clone())
            .collect(),
        class_names: m.classes.clone(),
        split_tag: tag,
    };
    let train_ds = collect(&train_manifest, SplitTag::Train);
    let test_ds = collect(&test_manifest, SplitTag::Test);

    let (train_cache, test_cache) = cache_paths(out_prefix);
    write_cache(&train_ds, &train_cache)?;
    write_cache(&test_ds, &test_cache)?;
    let base = out_prefix.to_string_lossy();
    train_manifest.write_json(Path::new(&format!("{}.train.manifest.json", base)))?;
    test_manifest.write_json(Path::new(&format!("{}.test.manifest.json", base)))?;

    Ok(PreprocessSummary {
        classes: surviving.classes,
        train_graphs: train_ds.graphs.len(),
        test_graphs: test_ds.graphs.len(),
        skipped: skip_log.len(),
        train_cache,
        test_cache,
    })
}

/// The flat key/value config document: one JSON object whose keys mirror
/// the CLI flag names. Written into every run directory and accepted
/// back via `--config`.
pub fn flat_run_config(
    run: &RunConfig,
    class_names: &[String],
    segments: Option<usize>,
) -> Value {
    let mut m = Map::new();
    m.insert("model".into(), json!(run.model.variant.as_str()));
    m.insert("hidden".into(), json!(run.model.hidden_dim));
    m.insert("heads".into(), json!(run.model.heads));
    m.insert("gcn-layers".into(), json!(run.model.gcn_layers));
    m.insert("gat-layers".into(), json!(run.model.gat_layers));
    m.insert("edge-aug-p".into(), json!(run.model.edge_aug_p));
    m.insert("epochs".into(), json!(run.epochs));
    m.insert("batch".into(), json!(run.batch_size));
    m.insert("lr".into(), json!(run.lr));
    m.insert("seed".into(), json!(run.seed));
    if let Some(cache) = &run.cache {
        m.insert("cache".into(), json!(cache));
    }
    if let Some(out) = &run.out {
        m.insert("out".into(), json!(out));
    }
    m.insert("classes".into(), json!(class_names));
    if let Some(s) = segments {
        m.insert("segments".into(), json!(s));
    }
    Value::Object(m)
}

/// Everything a saved model needs at inference time.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub model: ModelConfig,
    pub class_names: Vec<String>,
    pub params: ParamSet<f32>,
    pub segments: usize,
}

#[derive(Debug, Clone, Deserialize)]
struct StoredConfig {
    model: String,
    #[serde(default = "default_hidden")]
    hidden: usize,
    #[serde(default = "default_heads")]
    heads: usize,
    #[serde(rename = "gcn-layers", default = "default_layers")]
    gcn_layers: usize,
    #[serde(rename = "gat-layers", default = "default_layers")]
    gat_layers: usize,
    #[serde(rename = "edge-aug-p", default = "default_aug")]
    edge_aug_p: f64,
    classes: Vec<String>,
    #[serde(default = "default_segments")]
    segments: usize,
}

fn default_hidden() -> usize {
    512
}
fn default_heads() -> usize {
    2
}
fn default_layers() -> usize {
    2
}
fn default_aug() -> f64 {
    0.5
}
fn default_segments() -> usize {
    50
}

impl ModelBundle {
    /// Load a checkpoint plus its run config. When `config` is `None` the
    /// sibling `config.json` of the checkpoint is used.
    pub fn load(checkpoint: &Path, config: Option<&Path>) -> Result<Self> {
        let config_path = match config {
            Some(p) => p.to_path_buf(),
            None => checkpoint
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join("config.json"),
        };
        let text = std::fs::read_to_string(&config_path).map_err(|e| {
            Error::Input(format!(
                "cannot read run config {}: {} (pass --config explicitly)",
                config_path.display(),
                e
            ))
        })?;
        let stored: StoredConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("run config {}: {}", config_path.display(), e)))?;
        let variant: Variant = stored.model.parse()?;
        let model = ModelConfig {
            variant,
            hidden_dim: stored.hidden,
            gcn_layers: stored.gcn_layers,
            gat_layers: stored.gat_layers,
            heads: stored.heads,
            num_classes: stored.classes.len(),
            input_dim: 3,
            edge_aug_p: stored.edge_aug_p,
        };
        model.validate()?;
        let params = ParamSet::<f32>::read_checkpoint(checkpoint)?;
        check_params(&model, &params)?;
        Ok(ModelBundle {
            model,
            class_names: stored.classes,
            params,
            segments: stored.segments,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Prediction {
    pub class: String,
    pub class_index: usize,
    pub probabilities: Vec<f32>,
    pub classes: Vec<String>,
}

/// Segment one image and push it through the model.
pub fn predict_image(bundle: &ModelBundle, image_path: &Path) -> Result<Prediction> {
    let graph = image_to_graph(image_path, 0, &SlicParams::with_segments(bundle.segments))?;
    let batch = GraphBatch::from_graphs(&[&graph])?;
    let logits = forward_logits(&batch, &bundle.params, &bundle.model)?;
    let probs = softmax_rows(&logits);
    let row = probs.row(0);
    let mut class_index = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > row[class_index] {
            class_index = i;
        }
    }
    Ok(Prediction {
        class: bundle.class_names[class_index].clone(),
        class_index,
        probabilities: row.to_vec(),
        classes: bundle.class_names.clone(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RunArtifacts {
    pub run_dir: PathBuf,
    pub config: PathBuf,
    pub final_checkpoint: PathBuf,
    pub best_checkpoint: PathBuf,
    pub curves: PathBuf,
    pub report: PathBuf,
    pub confusion: PathBuf,
    pub best_epoch: usize,
    pub best_test_acc: f64,
    pub final_test_acc: f64,
}

/// Full report JSON: metric bundle, per-class table, confusion matrix,
/// config echo, seed and wall time.
pub fn report_json(
    report: &EvalReport,
    run: &RunConfig,
    class_names: &[String],
    wall_seconds: f64,
    best_epoch: Option<usize>,
) -> Value {
    json!({
        "metrics": {
            "accuracy": report.metrics.accuracy,
            "precision_weighted": report.metrics.precision_weighted,
            "recall_weighted": report.metrics.recall_weighted,
            "f1_weighted": report.metrics.f1_weighted,
            "precision_macro": report.metrics.precision_macro,
            "recall_macro": report.metrics.recall_macro,
            "f1_macro": report.metrics.f1_macro,
            "average_loss": report.average_loss,
        },
        "per_class": report.metrics.per_class,
        "confusion_matrix": {
            "classes": report.confusion.class_names(),
            "rows_true_columns_predicted": (0..report.confusion.num_classes())
                .map(|t| (0..report.confusion.num_classes())
                    .map(|p| report.confusion.count(t, p))
                    .collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        },
        "config": flat_run_config(run, class_names, None),
        "seed": run.seed,
        "wall_time_seconds": wall_seconds,
        "best_epoch": best_epoch,
    })
}

/// Train from a cache pair and persist config, checkpoints, curves and
/// reports into `run_dir`.
pub fn run_training(run: &RunConfig) -> Result<(TrainOutput, EvalReport, RunArtifacts)> {
    let started = Instant::now();
    let cache_prefix = run
        .cache
        .as_ref()
        .ok_or_else(|| Error::Usage("train needs a cache prefix".into()))?;
    let run_dir = run
        .out
        .as_ref()
        .ok_or_else(|| Error::Usage("train needs an output directory".into()))?
        .clone();

    let (train_path, test_path) = cache_paths(cache_prefix);
    let train_ds = read_cache(&train_path)?;
    let test_ds = read_cache(&test_path)?;

    let mut run = run.clone();
    run.model.num_classes = train_ds.class_names.len();
    let output = train_model(&run, &train_ds, &test_ds)?;
    let report = evaluate_model(&output.final_params, &run.model, &test_ds)?;

    std::fs::create_dir_all(&run_dir)?;
    let artifacts = RunArtifacts {
        config: run_dir.join("config.json"),
        final_checkpoint: run_dir.join("final.ckpt"),
        best_checkpoint: run_dir.join("best.ckpt"),
        curves: run_dir.join("curves.csv"),
        report: run_dir.join("report.json"),
        confusion: run_dir.join("confusion.csv"),
        best_epoch: output.best_epoch,
        best_test_acc: output.best_test_acc,
        final_test_acc: output.curves.last().map(|r| r.test_acc).unwrap_or(0.0),
        run_dir,
    };

    let flat = flat_run_config(&run, &train_ds.class_names, None);
    std::fs::write(&artifacts.config, serde_json::to_string_pretty(&flat)?.as_bytes())?;
    output.final_params.write_checkpoint(&artifacts.final_checkpoint)?;
    output.best_params.write_checkpoint(&artifacts.best_checkpoint)?;
    std::fs::write(&artifacts.curves, curves_to_csv(&output.curves))?;
    let wall = started.elapsed().as_secs_f64();
    let report_doc = report_json(&report, &run, &train_ds.class_names, wall, Some(output.best_epoch));
    std::fs::write(
        &artifacts.report,
        serde_json::to_string_pretty(&report_doc)?,
    )?;
    std::fs::write(&artifacts.confusion, report.confusion.to_csv())?;

    Ok((output, report, artifacts))
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
