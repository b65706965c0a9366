//! Command-line interface: preprocess / train / evaluate / predict /
//! inspect, with a flat JSON config file whose keys mirror the flag
//! names. Explicit flags always win over config-file values.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric
//! failure. Every error prints one line: `error: <category>: <detail>`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::model::Variant;
use crate::pipeline::{
    self, configure_threads, report_json, ModelBundle, PreprocessOptions,
};
use crate::rag::read_cache;
use crate::train::{evaluate_model, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "graphleaf",
    version,
    about = "Leaf disease classification over superpixel region graphs",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scan an image corpus, segment it and write train/test graph caches
    Preprocess(PreprocessArgs),
    /// Train a model variant from a cache pair
    Train(TrainArgs),
    /// Evaluate a checkpoint against a test cache
    Evaluate(EvaluateArgs),
    /// Classify a single image with a saved checkpoint
    Predict(PredictArgs),
    /// Summarize or export a graph cache
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    /// Corpus root: one subdirectory per class
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output cache prefix (writes <out>.train.ragc and <out>.test.ragc)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Superpixels per image
    #[arg(long)]
    segments: Option<usize>,
    /// Train fraction of the stratified split
    #[arg(long)]
    split: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Flat JSON config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Cache prefix produced by preprocess
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Model variant: gcn, gat or hybrid
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Edge augmentation probability
    #[arg(long = "edge-aug-p")]
    edge_aug_p: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory for checkpoints, curves and reports
    #[arg(long)]
    out: Option<PathBuf>,
    /// Hidden width of the graph layers
    #[arg(long)]
    hidden: Option<usize>,
    /// Flat JSON config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Test cache file (.ragc)
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Report output path (default: alongside the checkpoint)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat JSON config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    image: Option<PathBuf>,
    /// Flat JSON config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    /// Cache file (.ragc)
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Output format: text or json
    #[arg(long)]
    format: Option<String>,
    /// Flat JSON config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

const KNOWN_CONFIG_KEYS: &[&str] = &[
    "data", "out", "segments", "split", "seed", "cache", "model", "epochs", "batch", "lr",
    "edge-aug-p", "hidden", "heads", "gcn-layers", "gat-layers", "checkpoint", "image", "format",
    "classes",
];

/// The flat JSON config document backing `--config`.
struct FileConfig(Map<String, Value>);

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig(Map::new()));
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("config {}: {}", path.display(), e)))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("config {}: {}", path.display(), e)))?;
        let Value::Object(map) = value else {
            return Err(Error::Format(format!(
                "config {} must be one flat JSON object",
                path.display()
            )));
        };
        for key in map.keys() {
            if !KNOWN_CONFIG_KEYS.contains(&key.as_str()) {
                eprintln!("warning: unknown config key '{}' ignored", key);
            }
        }
        Ok(FileConfig(map))
    }

    /// True when the document describes a model (as the config.json a
    /// training run writes does), not just command flags.
    fn describes_model(&self) -> bool {
        self.0.contains_key("model") && self.0.contains_key("classes")
    }

    fn string(&self, key: &str) -> Result<Option<String>> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(other) => Err(Error::Format(format!(
                "config key '{}' should be a string, got {}",
                key, other
            ))),
        }
    }

    fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        Ok(self.string(key)?.map(PathBuf::from))
    }

    fn unsigned(&self, key: &str) -> Result<Option<u64>> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Number(n)) if n.as_u64().is_some() => Ok(n.as_u64()),
            Some(other) => Err(Error::Format(format!(
                "config key '{}' should be a non-negative integer, got {}",
                key, other
            ))),
        }
    }

    fn float(&self, key: &str) -> Result<Option<f64>> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Number(n)) => Ok(n.as_f64()),
            Some(other) => Err(Error::Format(format!(
                "config key '{}' should be a number, got {}",
                key, other
            ))),
        }
    }
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| Error::Usage(format!("missing required --{} (or config key)", flag)))
}

/// Parse and run. Returns the process exit code.
pub fn run_cli<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{}", e);
                    0
                }
                _ => {
                    let detail = e.to_string();
                    let first = detail.lines().next().unwrap_or("invalid arguments");
                    eprintln!("error: usage: {}", first);
                    1
                }
            };
        }
    };
    configure_threads();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e);
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Preprocess(args) => cmd_preprocess(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Inspect(args) => cmd_inspect(args),
    }
}

fn cmd_preprocess(args: PreprocessArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let data = require(args.data.or(file.path("data")?), "data")?;
    let out = require(args.out.or(file.path("out")?), "out")?;
    let opts = PreprocessOptions {
        segments: args
            .segments
            .or(file.unsigned("segments")?.map(|v| v as usize))
            .unwrap_or(50),
        split: args.split.or(file.float("split")?).unwrap_or(0.8),
        seed: args.seed.or(file.unsigned("seed")?).unwrap_or(0),
    };
    if opts.segments == 0 {
        return Err(Error::Usage("--segments must be >= 1".into()));
    }

    let mut skips = Vec::new();
    let summary = pipeline::preprocess_corpus(&data, &out, &opts, &mut skips)?;
    for s in &skips {
        eprintln!("warning: skipped {}: {}", s.path.display(), s.reason);
    }
    println!(
        "preprocessed {} classes: {} train graphs -> {}, {} test graphs -> {} ({} skipped)",
        summary.classes.len(),
        summary.train_graphs,
        summary.train_cache.display(),
        summary.test_graphs,
        summary.test_cache.display(),
        summary.skipped
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let cache = require(args.cache.or(file.path("cache")?), "cache")?;
    let out = require(args.out.or(file.path("out")?), "out")?;
    let variant: Variant = require(args.model.or(file.string("model")?), "model")?.parse()?;

    let mut model = crate::model::ModelConfig::new(variant, 2);
    if let Some(h) = args.hidden.or(file.unsigned("hidden")?.map(|v| v as usize)) {
        model.hidden_dim = h;
    }
    if let Some(h) = file.unsigned("heads")? {
        model.heads = h as usize;
    }
    if let Some(l) = file.unsigned("gcn-layers")? {
        model.gcn_layers = l as usize;
    }
    if let Some(l) = file.unsigned("gat-layers")? {
        model.gat_layers = l as usize;
    }
    if let Some(p) = args.edge_aug_p.or(file.float("edge-aug-p")?) {
        model.edge_aug_p = p;
    }

    let run = RunConfig {
        model,
        epochs: args
            .epochs
            .or(file.unsigned("epochs")?.map(|v| v as usize))
            .unwrap_or(100),
        batch_size: args
            .batch
            .or(file.unsigned("batch")?.map(|v| v as usize))
            .unwrap_or(32),
        lr: args.lr.or(file.float("lr")?).unwrap_or(0.001),
        seed: args.seed.or(file.unsigned("seed")?).unwrap_or(0),
        cache: Some(cache),
        out: Some(out),
    };

    let (output, report, artifacts) = pipeline::run_training(&run)?;
    println!(
        "trained {} for {} epochs: final test accuracy {:.4}, best {:.4} at epoch {}",
        run.model.variant.as_str(),
        output.curves.len(),
        artifacts.final_test_acc,
        artifacts.best_test_acc,
        artifacts.best_epoch
    );
    println!(
        "run directory {} (curves, report, confusion, checkpoints); test loss {:.4}",
        artifacts.run_dir.display(),
        report.average_loss
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let checkpoint = require(args.checkpoint.or(file.path("checkpoint")?), "checkpoint")?;
    let cache = require(args.cache.or(file.path("cache")?), "cache")?;

    // a flags-only config defers to the checkpoint's sibling config.json
    let model_config = if file.describes_model() {
        args.config.as_deref()
    } else {
        None
    };
    let bundle = ModelBundle::load(&checkpoint, model_config)?;
    let test = read_cache(&cache)?;
    if test.class_names != bundle.class_names {
        return Err(Error::Input(format!(
            "checkpoint classes {:?} do not match cache classes {:?}",
            bundle.class_names, test.class_names
        )));
    }
    let started = std::time::Instant::now();
    let report = evaluate_model(&bundle.params, &bundle.model, &test)?;

    let run = RunConfig {
        model: bundle.model.clone(),
        epochs: 0,
        batch_size: 32,
        lr: 0.0,
        seed: 0,
        cache: Some(cache),
        out: None,
    };
    let doc = report_json(
        &report,
        &run,
        &bundle.class_names,
        started.elapsed().as_secs_f64(),
        None,
    );
    let rendered = serde_json::to_string_pretty(&doc)?;
    println!("{}", rendered);

    let out = args.out.unwrap_or_else(|| {
        checkpoint
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("evaluate-report.json")
    });
    std::fs::write(&out, rendered)?;
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let checkpoint = require(args.checkpoint.or(file.path("checkpoint")?), "checkpoint")?;
    let image = require(args.image.or(file.path("image")?), "image")?;

    let model_config = if file.describes_model() {
        args.config.as_deref()
    } else {
        None
    };
    let bundle = ModelBundle::load(&checkpoint, model_config)?;
    let prediction = pipeline::predict_image(&bundle, &image)?;
    println!("{}", serde_json::to_string(&prediction)?);
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let cache = require(args.cache.or(file.path("cache")?), "cache")?;
    let format = args
        .format
        .or(file.string("format")?)
        .unwrap_or_else(|| "text".to_string());

    let ds = read_cache(&cache)?;
    let node_counts: Vec<usize> = ds.graphs.iter().map(|g| g.node_count()).collect();
    let edge_counts: Vec<usize> = ds.graphs.iter().map(|g| g.edge_count()).collect();
    let stats = |xs: &[usize]| -> (usize, f64, usize) {
        if xs.is_empty() {
            return (0, 0.0, 0);
        }
        let min = *xs.iter().min().unwrap();
        let max = *xs.iter().max().unwrap();
        let mean = xs.iter().sum::<usize>() as f64 / xs.len() as f64;
        (min, mean, max)
    };
    let (n_min, n_mean, n_max) = stats(&node_counts);
    let (e_min, e_mean, e_max) = stats(&edge_counts);
    let histogram = ds.class_histogram();

    match format.as_str() {
        "text" => {
            println!("cache: {}", cache.display());
            println!("split: {}", ds.split_tag.as_str());
            println!("graphs: {}", ds.graphs.len());
            for (name, count) in ds.class_names.iter().zip(histogram.iter()) {
                println!("  class {}: {}", name, count);
            }
            println!("nodes per graph: min {} mean {:.1} max {}", n_min, n_mean, n_max);
            println!("edges per graph: min {} mean {:.1} max {}", e_min, e_mean, e_max);
        }
        "json" => {
            let doc = serde_json::json!({
                "cache": cache,
                "split": ds.split_tag.as_str(),
                "classes": ds.class_names,
                "class_histogram": histogram,
                "graph_count": ds.graphs.len(),
                "node_stats": {"min": n_min, "mean": n_mean, "max": n_max},
                "edge_stats": {"min": e_min, "mean": e_mean, "max": e_max},
                "graphs": ds.graphs,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
        other => {
            return Err(Error::Usage(format!(
                "unknown --format '{}' (expected text or json)",
                other
            )));
        }
    }
    Ok(())
}
