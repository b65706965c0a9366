//! Training loop, evaluation and per-epoch curve emission.
//!
//! One run: shuffle the training graphs each epoch, iterate batches with
//! edge augmentation live, take an Adam step per batch, and record train
//! and test loss/accuracy per epoch. Everything is driven by named
//! substreams of the run seed, so a (config, seed, dataset) triple pins
//! the curves bit-for-bit.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::batch::{make_batches, GraphBatch};
use crate::error::{Error, Result};
use crate::metrics::{metrics_from_confusion, ConfusionMatrix, MetricBundle};
use crate::model::{forward_logits, forward_loss, init_params, ModelConfig};
use crate::nn::softmax_cross_entropy;
use crate::optim::{AdamConfig, ParamSet};
use crate::rag::GraphDataset;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub seed: u64,
    /// Cache prefix the datasets were loaded from, echoed into reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
    /// Output directory for checkpoints, curves and reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_epochs() -> usize {
    100
}
fn default_batch_size() -> usize {
    32
}
fn default_lr() -> f64 {
    0.001
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Input("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Input("batch size must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Input(format!("learning rate {} is invalid", self.lr)));
        }
        self.model.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

pub fn curves_to_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from("epoch,train_loss,train_acc,test_loss,test_acc\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.train_loss, r.train_acc, r.test_loss, r.test_acc
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub final_params: ParamSet<f32>,
    pub best_params: ParamSet<f32>,
    pub best_epoch: usize,
    pub best_test_acc: f64,
    pub curves: Vec<CurveRow>,
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn check_datasets(cfg: &RunConfig, train: &GraphDataset, test: &GraphDataset) -> Result<()> {
    if train.class_names != test.class_names {
        return Err(Error::Input(
            "train and test caches disagree on class names".into(),
        ));
    }
    if cfg.model.num_classes != train.class_names.len() {
        return Err(Error::Input(format!(
            "model expects {} classes but the dataset has {}",
            cfg.model.num_classes,
            train.class_names.len()
        )));
    }
    if train.graphs.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    if test.graphs.is_empty() {
        return Err(Error::Input("test set is empty".into()));
    }
    Ok(())
}

/// Mean loss and accuracy over a dataset with augmentation disabled.
fn eval_pass(
    params: &ParamSet<f32>,
    model: &ModelConfig,
    ds: &GraphDataset,
    batch_size: usize,
) -> Result<(f64, f64)> {
    let batches = make_batches(&ds.graphs, batch_size, false, 0)?;
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut total = 0usize;
    for batch in &batches {
        let logits = forward_logits(batch, params, model)?;
        let ce = softmax_cross_entropy(&logits, &batch.labels)?;
        loss_sum += ce.loss * batch.graph_count() as f64;
        correct += count_correct(&logits, &batch.labels);
        total += batch.graph_count();
    }
    Ok((loss_sum / total as f64, correct as f64 / total as f64))
}

fn count_correct(logits: &Tensor<f32>, labels: &[u32]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|&(i, &label)| argmax(logits.row(i)) == label as usize)
        .count()
}

/// Full training run; returns the final and the best-test-accuracy
/// parameters plus the per-epoch curve table.
pub fn train_model(
    cfg: &RunConfig,
    train: &GraphDataset,
    test: &GraphDataset,
) -> Result<TrainOutput> {
    cfg.validate()?;
    check_datasets(cfg, train, test)?;

    let mut params: ParamSet<f32> = init_params(&cfg.model, &mut Rng::substream(cfg.seed, "init"))?;
    let mut shuffle_rng = Rng::substream(cfg.seed, "shuffle");
    let mut augment_rng = Rng::substream(cfg.seed, "augment");
    let adam = AdamConfig::with_lr(cfg.lr);

    let mut curves = Vec::with_capacity(cfg.epochs);
    let mut best_params = params.clone();
    let mut best_epoch = 0usize;
    let mut best_test_acc = f64::NEG_INFINITY;

    for epoch in 1..=cfg.epochs {
        let epoch_seed = shuffle_rng.next_u64();
        let batches = make_batches(&train.graphs, cfg.batch_size, true, epoch_seed)?;

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for (bi, batch) in batches.iter().enumerate() {
            let step = forward_loss(batch, &params, &cfg.model, true, &mut augment_rng)
                .map_err(|e| annotate(e, epoch, bi))?;
            if !step.loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {} batch {}",
                    epoch, bi
                )));
            }
            loss_sum += step.loss * batch.graph_count() as f64;
            correct += count_correct(&step.logits, &batch.labels);
            seen += batch.graph_count();
            params
                .adam_step(&step.grads, &adam)
                .map_err(|e| annotate(e, epoch, bi))?;
        }

        let (test_loss, test_acc) = eval_pass(&params, &cfg.model, test, cfg.batch_size)?;
        curves.push(CurveRow {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_acc: correct as f64 / seen as f64,
            test_loss,
            test_acc,
        });
        if test_acc > best_test_acc {
            best_test_acc = test_acc;
            best_epoch = epoch;
            best_params = params.clone();
        }
    }

    Ok(TrainOutput {
        final_params: params,
        best_params,
        best_epoch,
        best_test_acc,
        curves,
    })
}

fn annotate(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!(
            "{} (epoch {} batch {})",
            msg, epoch, batch
        )),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: MetricBundle,
    pub average_loss: f64,
    pub confusion: ConfusionMatrix,
}

/// Evaluate with augmentation disabled: argmax predictions, confusion
/// matrix and mean cross-entropy over the whole set.
pub fn evaluate_model(
    params: &ParamSet<f32>,
    model: &ModelConfig,
    test: &GraphDataset,
) -> Result<EvalReport> {
    if test.graphs.is_empty() {
        return Err(Error::Input("cannot evaluate on an empty test set".into()));
    }
    if model.num_classes != test.class_names.len() {
        return Err(Error::Input(format!(
            "model expects {} classes but the dataset has {}",
            model.num_classes,
            test.class_names.len()
        )));
    }
    let batches: Vec<GraphBatch> = make_batches(&test.graphs, 32, false, 0)?;
    let mut cm = ConfusionMatrix::new(test.class_names.clone());
    let mut loss_sum = 0.0;
    let mut total = 0usize;
    for batch in &batches {
        let logits = forward_logits(batch, params, model)?;
        let ce = softmax_cross_entropy(&logits, &batch.labels)?;
        loss_sum += ce.loss * batch.graph_count() as f64;
        total += batch.graph_count();
        for (i, &label) in batch.labels.iter().enumerate() {
            cm.record(label as usize, argmax(logits.row(i)))?;
        }
    }
    let metrics = metrics_from_confusion(&cm)?;
    Ok(EvalReport {
        metrics,
        average_loss: loss_sum / total as f64,
        confusion: cm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;
    use crate::rag::{RegionGraph, SplitTag};

    /// Two-class toy problem: the class is the dominant node color.
    fn synthetic_dataset(count: usize, seed: u64, tag: SplitTag) -> GraphDataset {
        let mut rng = Rng::seed_from_u64(seed);
        let mut graphs = Vec::new();
        for i in 0..count {
            let label = (i % 2) as u32;
            let n = 4 + rng.range_usize(4);
            let node_features = (0..n)
                .map(|_| {
                    let strong = 0.55 + 0.4 * rng.uniform_f64();
                    let weak = -0.55 - 0.4 * rng.uniform_f64();
                    let noise = 0.05 * rng.uniform_in(-1.0, 1.0);
                    if label == 0 {
                        [strong as f32, weak as f32, noise as f32]
                    } else {
                        [weak as f32, strong as f32, noise as f32]
                    }
                })
                .collect();
            let mut edges = Vec::new();
            for u in 0..n as u32 {
                for v in (u + 1)..n as u32 {
                    if rng.uniform_f64() < 0.5 {
                        edges.push((u, v));
                    }
                }
            }
            graphs.push(RegionGraph {
                node_features,
                edges,
                label,
            });
        }
        GraphDataset {
            graphs,
            class_names: vec!["cool".into(), "warm".into()],
            split_tag: tag,
        }
    }

    fn tiny_run_config(variant: Variant, epochs: usize, lr: f64) -> RunConfig {
        RunConfig {
            model: ModelConfig {
                variant,
                hidden_dim: 16,
                gcn_layers: 2,
                gat_layers: 2,
                heads: 2,
                num_classes: 2,
                input_dim: 3,
                edge_aug_p: 0.3,
            },
            epochs,
            batch_size: 8,
            lr,
            seed: 42,
            cache: None,
            out: None,
        }
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let train = synthetic_dataset(12, 1, SplitTag::Train);
        let test = synthetic_dataset(6, 2, SplitTag::Test);
        let cfg = tiny_run_config(Variant::Hybrid, 1, 0.0);
        let out = train_model(&cfg, &train, &test).unwrap();
        assert_eq!(out.curves.len(), 1);

        let init: ParamSet<f32> =
            init_params(&cfg.model, &mut Rng::substream(cfg.seed, "init")).unwrap();
        for (name, p) in init.iter() {
            assert_eq!(
                p.value,
                *out.final_params.get(name).unwrap(),
                "parameter {} moved",
                name
            );
        }
    }

    #[test]
    fn hybrid_overfits_separable_toy_data() {
        let train = synthetic_dataset(16, 3, SplitTag::Train);
        let test = synthetic_dataset(8, 4, SplitTag::Test);
        let mut cfg = tiny_run_config(Variant::Hybrid, 100, 0.001);
        cfg.model.edge_aug_p = 0.0;
        let out = train_model(&cfg, &train, &test).unwrap();
        let final_acc = out.curves.last().unwrap().train_acc;
        assert_eq!(final_acc, 1.0, "expected perfect training accuracy");
    }

    #[test]
    fn train_loss_decreases_over_first_ten_epochs() {
        let train = synthetic_dataset(24, 5, SplitTag::Train);
        let test = synthetic_dataset(8, 6, SplitTag::Test);
        let mut cfg = tiny_run_config(Variant::Hybrid, 10, 0.001);
        cfg.model.edge_aug_p = 0.0;
        let out = train_model(&cfg, &train, &test).unwrap();
        assert!(
            out.curves[9].train_loss < out.curves[0].train_loss,
            "{} -> {}",
            out.curves[0].train_loss,
            out.curves[9].train_loss
        );
    }

    #[test]
    fn identical_seed_gives_identical_curves() {
        let train = synthetic_dataset(14, 7, SplitTag::Train);
        let test = synthetic_dataset(6, 8, SplitTag::Test);
        let cfg = tiny_run_config(Variant::Hybrid, 3, 0.001);
        let a = train_model(&cfg, &train, &test).unwrap();
        let b = train_model(&cfg, &train, &test).unwrap();
        assert_eq!(a.curves, b.curves);
        assert_eq!(curves_to_csv(&a.curves), curves_to_csv(&b.curves));
    }

    #[test]
    fn curve_csv_header_matches_contract() {
        let rows = vec![CurveRow {
            epoch: 1,
            train_loss: 0.5,
            train_acc: 0.75,
            test_loss: 0.6,
            test_acc: 0.7,
        }];
        let csv = curves_to_csv(&rows);
        assert!(csv.starts_with("epoch,train_loss,train_acc,test_loss,test_acc\n"));
        assert!(csv.contains("1,0.5,0.75,0.6,0.7"));
    }

    #[test]
    fn evaluator_counts_every_sample() {
        let test = synthetic_dataset(10, 9, SplitTag::Test);
        let cfg = tiny_run_config(Variant::Gcn, 1, 0.001);
        let params: ParamSet<f32> =
            init_params(&cfg.model, &mut Rng::substream(1, "init")).unwrap();
        let report = evaluate_model(&params, &cfg.model, &test).unwrap();
        assert_eq!(report.confusion.total(), 10);
        assert!((report.metrics.recall_weighted - report.metrics.accuracy).abs() < 1e-9);
    }

    #[test]
    fn forced_constant_predictor_scores_half_on_balanced_set() {
        // zero classifier weights and a biased logit make the model
        // always predict class 0
        let test = synthetic_dataset(10, 13, SplitTag::Test); // 5 per class
        let cfg = tiny_run_config(Variant::Gcn, 1, 0.001);
        let mut params: ParamSet<f32> =
            init_params(&cfg.model, &mut Rng::substream(3, "init")).unwrap();
        params
            .set_value(
                "classifier.weight",
                Tensor::zeros(&[cfg.model.hidden_dim, 2]),
            )
            .unwrap();
        params
            .set_value(
                "classifier.bias",
                Tensor::from_vec(&[2], vec![1.0, 0.0]).unwrap(),
            )
            .unwrap();
        let report = evaluate_model(&params, &cfg.model, &test).unwrap();
        assert_eq!(report.metrics.accuracy, 0.5);
        assert_eq!(report.metrics.recall_weighted, 0.5);
        assert_eq!(report.confusion.count(0, 0), 5);
        assert_eq!(report.confusion.count(1, 0), 5);
    }

    #[test]
    fn evaluator_rejects_empty_set() {
        let cfg = tiny_run_config(Variant::Gcn, 1, 0.001);
        let params: ParamSet<f32> =
            init_params(&cfg.model, &mut Rng::substream(1, "init")).unwrap();
        let empty = GraphDataset {
            graphs: vec![],
            class_names: vec!["a".into(), "b".into()],
            split_tag: SplitTag::Test,
        };
        assert!(evaluate_model(&params, &cfg.model, &empty).is_err());
    }

    #[test]
    fn average_loss_matches_independent_recomputation() {
        let test = synthetic_dataset(9, 10, SplitTag::Test);
        let cfg = tiny_run_config(Variant::Hybrid, 1, 0.001);
        let params: ParamSet<f32> =
            init_params(&cfg.model, &mut Rng::substream(2, "init")).unwrap();
        let report = evaluate_model(&params, &cfg.model, &test).unwrap();

        // recompute per graph, one at a time
        let mut sum = 0.0;
        for g in &test.graphs {
            let batch = crate::batch::GraphBatch::from_graphs(&[g]).unwrap();
            let logits = forward_logits(&batch, &params, &cfg.model).unwrap();
            sum += softmax_cross_entropy(&logits, &batch.labels).unwrap().loss;
        }
        let independent = sum / test.graphs.len() as f64;
        assert!(
            (report.average_loss - independent).abs() < 1e-6,
            "{} vs {}",
            report.average_loss,
            independent
        );
    }

    #[test]
    fn mismatched_class_names_are_rejected() {
        let train = synthetic_dataset(8, 1, SplitTag::Train);
        let mut test = synthetic_dataset(4, 2, SplitTag::Test);
        test.class_names = vec!["x".into(), "y".into()];
        let cfg = tiny_run_config(Variant::Gcn, 1, 0.001);
        assert!(train_model(&cfg, &train, &test).is_err());
    }

    #[test]
    fn all_variants_train_one_epoch() {
        let train = synthetic_dataset(10, 11, SplitTag::Train);
        let test = synthetic_dataset(4, 12, SplitTag::Test);
        for variant in [Variant::Gcn, Variant::Gat, Variant::Hybrid] {
            let cfg = tiny_run_config(variant, 1, 0.001);
            let out = train_model(&cfg, &train, &test).unwrap();
            assert_eq!(out.curves.len(), 1);
            assert!(out.curves[0].train_loss.is_finite());
        }
    }
}
