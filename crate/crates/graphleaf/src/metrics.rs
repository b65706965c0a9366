//! Confusion matrix and the derived classification metrics.
//!
//! Per class i (one-vs-rest): precision = TP/(TP+FP), recall = TP/(TP+FN),
//! f1 = 2pr/(p+r), each defined as 0 when its denominator is 0 (and
//! flagged). The headline numbers are support-weighted averages, under
//! which weighted recall coincides with accuracy; macro averages ride
//! along for transparency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// Row-major C x C counts; rows are true classes, columns predicted.
    counts: Vec<u64>,
    class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Self {
        let c = class_names.len();
        ConfusionMatrix {
            counts: vec![0; c * c],
            class_names,
        }
    }

    pub fn from_counts(class_names: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != class_names.len() * class_names.len() {
            return Err(Error::Input(format!(
                "confusion matrix needs {} entries for {} classes, got {}",
                class_names.len() * class_names.len(),
                class_names.len(),
                counts.len()
            )));
        }
        Ok(ConfusionMatrix {
            counts,
            class_names,
        })
    }

    /// Tally (true, predicted) label pairs.
    pub fn from_labels(class_names: Vec<String>, truth: &[u32], predicted: &[u32]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Input(format!(
                "{} true labels vs {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut cm = ConfusionMatrix::new(class_names);
        for (&t, &p) in truth.iter().zip(predicted.iter()) {
            cm.record(t as usize, p as usize)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, true_class: usize, predicted_class: usize) -> Result<()> {
        let c = self.class_names.len();
        if true_class >= c || predicted_class >= c {
            return Err(Error::Input(format!(
                "label pair ({}, {}) out of range for {} classes",
                true_class, predicted_class, c
            )));
        }
        self.counts[true_class * c + predicted_class] += 1;
        Ok(())
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn count(&self, true_class: usize, predicted_class: usize) -> u64 {
        self.counts[true_class * self.num_classes() + predicted_class]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn true_positives(&self, class: usize) -> u64 {
        self.count(class, class)
    }

    pub fn false_positives(&self, class: usize) -> u64 {
        (0..self.num_classes())
            .filter(|&t| t != class)
            .map(|t| self.count(t, class))
            .sum()
    }

    pub fn false_negatives(&self, class: usize) -> u64 {
        (0..self.num_classes())
            .filter(|&p| p != class)
            .map(|p| self.count(class, p))
            .sum()
    }

    /// Number of samples whose true class is `class`.
    pub fn support(&self, class: usize) -> u64 {
        (0..self.num_classes()).map(|p| self.count(class, p)).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.count(i, i)).sum()
    }

    /// CSV with a class-name header row and a class-name leading column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for name in &self.class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (t, name) in self.class_names.iter().enumerate() {
            out.push_str(name);
            for p in 0..self.num_classes() {
                out.push(',');
                out.push_str(&self.count(t, p).to_string());
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// False when the corresponding denominator was zero and the value
    /// was pinned to 0 by convention.
    pub precision_defined: bool,
    pub recall_defined: bool,
    pub f1_defined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub accuracy: f64,
    pub precision_weighted: f64,
    pub recall_weighted: f64,
    pub f1_weighted: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub per_class: Vec<ClassMetrics>,
}

/// Derive the metric bundle from a confusion matrix with at least one
/// recorded sample.
pub fn metrics_from_confusion(cm: &ConfusionMatrix) -> Result<MetricBundle> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Input(
            "cannot compute metrics from an empty confusion matrix".into(),
        ));
    }
    let c = cm.num_classes();
    let mut per_class = Vec::with_capacity(c);
    for i in 0..c {
        let tp = cm.true_positives(i) as f64;
        let fp = cm.false_positives(i) as f64;
        let fn_ = cm.false_negatives(i) as f64;
        let precision_defined = tp + fp > 0.0;
        let recall_defined = tp + fn_ > 0.0;
        let precision = if precision_defined { tp / (tp + fp) } else { 0.0 };
        let recall = if recall_defined { tp / (tp + fn_) } else { 0.0 };
        let f1_defined = precision + recall > 0.0;
        let f1 = if f1_defined {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassMetrics {
            name: cm.class_names()[i].clone(),
            support: cm.support(i),
            precision,
            recall,
            f1,
            precision_defined,
            recall_defined,
            f1_defined,
        });
    }

    let total_f = total as f64;
    let weighted = |f: &dyn Fn(&ClassMetrics) -> f64| -> f64 {
        per_class
            .iter()
            .map(|m| f(m) * m.support as f64)
            .sum::<f64>()
            / total_f
    };
    let macro_avg = |f: &dyn Fn(&ClassMetrics) -> f64| -> f64 {
        per_class.iter().map(f).sum::<f64>() / c as f64
    };

    Ok(MetricBundle {
        accuracy: cm.trace() as f64 / total_f,
        precision_weighted: weighted(&|m| m.precision),
        recall_weighted: weighted(&|m| m.recall),
        f1_weighted: weighted(&|m| m.f1),
        precision_macro: macro_avg(&|m| m.precision),
        recall_macro: macro_avg(&|m| m.recall),
        f1_macro: macro_avg(&|m| m.f1),
        per_class,
    })
}
