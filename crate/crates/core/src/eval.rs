//! Confusion-matrix metrics, k-fold splitting and cross-validation reports.
//!
//! VF is the positive class.
//!
//! ```text
//! Se = TP / (TP + FN)    Sp = TN / (TN + FP)
//! Acc = (TP + TN) / total    G-Mean = sqrt(Se * Sp)
//! ```
//!
//! A metric whose denominator is zero is absent (`None`), never 0.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balance::{balance_dataset, SmoteConfig};
use crate::dataset::Dataset;
use crate::error::{invalid, Error, Result};
use crate::svm::{self, SvmParams};
use crate::wfdb::EpisodeLabel;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub accuracy: Option<f64>,
    pub g_mean: Option<f64>,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    pub fn from_labels(truth: &[EpisodeLabel], predicted: &[EpisodeLabel]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                actual: predicted.len(),
            });
        }
        let mut cm = Self::default();
        for (t, p) in truth.iter().zip(predicted) {
            cm.record(*t, *p);
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: EpisodeLabel, predicted: EpisodeLabel) {
        match (truth, predicted) {
            (EpisodeLabel::Vf, EpisodeLabel::Vf) => self.tp += 1,
            (EpisodeLabel::Vf, EpisodeLabel::NotVf) => self.fn_ += 1,
            (EpisodeLabel::NotVf, EpisodeLabel::NotVf) => self.tn += 1,
            (EpisodeLabel::NotVf, EpisodeLabel::Vf) => self.fp += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn metrics(&self) -> Result<Metrics> {
        metrics(self)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    if cm.total() == 0 {
        return Err(Error::EmptyInput("confusion matrix"));
    }
    let sensitivity = ratio(cm.tp, cm.tp + cm.fn_);
    let specificity = ratio(cm.tn, cm.tn + cm.fp);
    Ok(Metrics {
        sensitivity,
        specificity,
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        g_mean: sensitivity.zip(specificity).map(|(se, sp)| g_mean(se, sp)),
    })
}

pub fn g_mean(sensitivity: f64, specificity: f64) -> f64 {
    (sensitivity * specificity).sqrt()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partitions `0..n` into `k` shuffled test folds. With `labels`, each class
/// is shuffled separately and the classes are dealt round-robin so that every
/// fold holds `floor` or `ceil` of its share of each class.
pub fn kfold_split(n: usize, k: usize, labels: Option<&[EpisodeLabel]>, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(invalid("k", format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(invalid("k", format!("{k} folds for {n} samples")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = match labels {
        None => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            idx
        }
        Some(labels) => {
            if labels.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: labels.len(),
                });
            }
            let mut order = Vec::with_capacity(n);
            for class in [EpisodeLabel::Vf, EpisodeLabel::NotVf] {
                let mut idx: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
                idx.shuffle(&mut rng);
                order.extend(idx);
            }
            order
        }
    };
    let mut fold_of = vec![0usize; n];
    for (p, &i) in order.iter().enumerate() {
        fold_of[i] = p % k;
    }
    Ok((0..k)
        .map(|f| {
            let (test, train) = (0..n).partition(|&i| fold_of[i] == f);
            Fold { train, test }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation over the folds where the metric exists.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub defined_folds: usize,
}

fn summarize(values: impl Iterator<Item = Option<f64>>) -> Option<Summary> {
    let v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some(Summary {
        mean,
        std: var.sqrt(),
        min: v.iter().copied().fold(f64::INFINITY, f64::min),
        max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        defined_folds: v.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub sensitivity: Option<Summary>,
    pub specificity: Option<Summary>,
    pub accuracy: Option<Summary>,
    pub g_mean: Option<Summary>,
}

impl MetricsSummary {
    pub fn from_folds(metrics: &[Metrics]) -> Self {
        Self {
            sensitivity: summarize(metrics.iter().map(|m| m.sensitivity)),
            specificity: summarize(metrics.iter().map(|m| m.specificity)),
            accuracy: summarize(metrics.iter().map(|m| m.accuracy)),
            g_mean: summarize(metrics.iter().map(|m| m.g_mean)),
        }
    }

    fn rows(&self) -> [(&'static str, Option<Summary>); 4] {
        [
            ("sensitivity", self.sensitivity),
            ("specificity", self.specificity),
            ("accuracy", self.accuracy),
            ("g_mean", self.g_mean),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train: ConfusionMatrix,
    pub test: ConfusionMatrix,
    pub train_metrics: Metrics,
    pub test_metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub folds: Vec<FoldResult>,
    pub train_summary: MetricsSummary,
    pub test_summary: MetricsSummary,
    /// `key = value` lines describing the run.
    pub config_snapshot: String,
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "absent".to_string(), |x| format!("{:.3}", 100.0 * x))
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "absent".to_string(), |x| format!("{x:.6}"))
}

impl EvalReport {
    pub fn new(folds: Vec<FoldResult>, config_snapshot: String) -> Self {
        let train: Vec<Metrics> = folds.iter().map(|f| f.train_metrics).collect();
        let test: Vec<Metrics> = folds.iter().map(|f| f.test_metrics).collect();
        Self {
            train_summary: MetricsSummary::from_folds(&train),
            test_summary: MetricsSummary::from_folds(&test),
            folds,
            config_snapshot,
        }
    }

    /// Human-readable table, percentages, mean +/- population std.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# {}-fold cross-validation; +/- is the population std over folds (divisor k)",
            self.folds.len()
        );
        let _ = writeln!(out, "{:<10} {:>28} {:>28}", "metric (%)", "training data", "test data");
        for ((name, tr), (_, te)) in self.train_summary.rows().iter().zip(self.test_summary.rows()) {
            let cell = |s: Option<Summary>| {
                s.map_or_else(
                    || "absent".to_string(),
                    |s| format!("{:.3} +/- {:.3}", 100.0 * s.mean, 100.0 * s.std),
                )
            };
            let _ = writeln!(out, "{:<10} {:>28} {:>28}", name, cell(*tr), cell(te));
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:>4} {:>8} {:>8} {:>8} {:>8}   {:>7} {:>7} {:>7} {:>7}",
            "fold", "Se", "Sp", "Acc", "G-Mean", "TP", "FN", "TN", "FP"
        );
        for f in &self.folds {
            let m = &f.test_metrics;
            let _ = writeln!(
                out,
                "{:>4} {:>8} {:>8} {:>8} {:>8}   {:>7} {:>7} {:>7} {:>7}",
                f.fold,
                pct(m.sensitivity),
                pct(m.specificity),
                pct(m.accuracy),
                pct(m.g_mean),
                f.test.tp,
                f.test.fn_,
                f.test.tn,
                f.test.fp
            );
        }
        out
    }

    /// One `key=value` per line; metrics as fractions.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        for line in self.config_snapshot.lines().filter(|l| !l.trim().is_empty()) {
            let _ = writeln!(out, "config.{}", line.replace(" = ", "="));
        }
        let _ = writeln!(out, "std_formula=population");
        let _ = writeln!(out, "folds={}", self.folds.len());
        for f in &self.folds {
            for (split, cm, m) in [
                ("train", &f.train, &f.train_metrics),
                ("test", &f.test, &f.test_metrics),
            ] {
                let p = format!("fold.{}.{split}", f.fold);
                let _ = writeln!(
                    out,
                    "{p}.tp={}\n{p}.fn={}\n{p}.tn={}\n{p}.fp={}",
                    cm.tp, cm.fn_, cm.tn, cm.fp
                );
                let _ = writeln!(
                    out,
                    "{p}.sensitivity={}\n{p}.specificity={}\n{p}.accuracy={}\n{p}.g_mean={}",
                    num(m.sensitivity),
                    num(m.specificity),
                    num(m.accuracy),
                    num(m.g_mean)
                );
            }
        }
        for (split, summary) in [("train", &self.train_summary), ("test", &self.test_summary)] {
            for (name, s) in summary.rows() {
                let p = format!("summary.{split}.{name}");
                match s {
                    Some(s) => {
                        let _ = writeln!(out, "{p}.mean={:.6}\n{p}.std={:.6}", s.mean, s.std);
                    }
                    None => {
                        let _ = writeln!(out, "{p}.mean=absent\n{p}.std=absent");
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub k: usize,
    pub stratified: bool,
    pub seed: u64,
    pub svm: SvmParams,
    /// `None` disables oversampling.
    pub smote: Option<SmoteConfig>,
    /// Oversample each training split instead of the whole dataset.
    pub smote_within_folds: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k: 10,
            stratified: true,
            seed: 0,
            svm: SvmParams::default(),
            smote: Some(SmoteConfig::default()),
            smote_within_folds: false,
        }
    }
}

fn confusion_for(model: &svm::SvmModel, data: &Dataset) -> Result<ConfusionMatrix> {
    let predicted: Vec<EpisodeLabel> = model
        .predict_batch(&data.features)?
        .into_iter()
        .map(|(l, _)| l)
        .collect();
    ConfusionMatrix::from_labels(&data.labels, &predicted)
}

/// Trains an SVM per fold (folds in parallel) and reports train and test
/// metrics.
pub fn run_cross_validation(data: &Dataset, cfg: &CvConfig, config_snapshot: String) -> Result<EvalReport> {
    let mut data = data.clone();
    if let (Some(smote), false) = (&cfg.smote, cfg.smote_within_folds) {
        let added = balance_dataset(&mut data, smote)?;
        log::info!("SMOTE added {added} synthetic samples before splitting");
    }
    let folds = kfold_split(data.len(), cfg.k, cfg.stratified.then_some(&data.labels[..]), cfg.seed)?;
    let results: Vec<FoldResult> = folds
        .par_iter()
        .enumerate()
        .map(|(f, fold)| {
            let mut train_set = data.subset(&fold.train);
            let test_set = data.subset(&fold.test);
            if let (Some(smote), true) = (&cfg.smote, cfg.smote_within_folds) {
                let per_fold = SmoteConfig {
                    seed: smote.seed.wrapping_add(f as u64),
                    ..smote.clone()
                };
                balance_dataset(&mut train_set, &per_fold)?;
            }
            let model = svm::train(&train_set.features, &train_set.labels, &cfg.svm)?;
            let train = confusion_for(&model, &train_set)?;
            let test = confusion_for(&model, &test_set)?;
            log::debug!(
                "fold {f}: {} support vectors, test {:?}",
                model.support_vectors.len(),
                test
            );
            Ok(FoldResult {
                fold: f,
                train,
                test,
                train_metrics: train.metrics()?,
                test_metrics: test.metrics()?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport::new(results, config_snapshot))
}
