//! Confusion matrices, precision / recall / true-negative rate, and stratified
//! k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{train, Classifier, ClassifierSpec};
use crate::corpus::SentenceLabel;
use crate::error::{Error, Result};
use crate::features::Dataset;

pub const DEFAULT_FOLDS: usize = 5;

/// Cell counts with sensitive as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, predicted: SentenceLabel, truth: SentenceLabel) {
        match (predicted.is_sensitive(), truth.is_sensitive()) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn add(self, o: Self) -> Self {
        ConfusionMatrix {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl std::iter::Sum for ConfusionMatrix {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ConfusionMatrix::default(), |a, b| a + b)
    }
}

pub fn confusion(predicted: &[SentenceLabel], truth: &[SentenceLabel]) -> Result<ConfusionMatrix> {
    if predicted.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        cm.record(p, t);
    }
    Ok(cm)
}

/// Metric values; `None` marks a zero denominator and serializes as `null`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub true_negative_rate: Option<f64>,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Metrics {
        precision,
        recall,
        true_negative_rate: ratio(cm.tn, cm.tn + cm.fp),
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        f1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Training split held a single class; excluded from the aggregate.
    pub degenerate: bool,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub classifier: ClassifierSpec,
    pub folds: usize,
    pub seed: u64,
    pub per_fold: Vec<FoldResult>,
    /// Sum of the non-degenerate fold matrices.
    pub aggregate_confusion: ConfusionMatrix,
    pub aggregate: Metrics,
    /// Fold index of every dataset row, for replay.
    pub fold_assignment: Vec<usize>,
}

impl CvReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Seeded shuffle, then a label-stratified deal of rows onto folds.
///
/// Rows are shuffled, grouped by label (sensitive first, shuffled order kept
/// within a group) and dealt round-robin, so fold sizes differ by at most one
/// and every label is spread as evenly as possible.
pub fn assign_folds(labels: &[SentenceLabel], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidConfig("need at least 2 folds".into()));
    }
    if labels.len() < folds {
        return Err(Error::InvalidInput(format!(
            "{} rows cannot fill {folds} folds",
            labels.len()
        )));
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let grouped = SentenceLabel::ALL
        .iter()
        .flat_map(|&l| order.iter().copied().filter(move |&i| labels[i] == l));
    let mut assignment = vec![0; labels.len()];
    for (slot, row) in grouped.enumerate() {
        assignment[row] = slot % folds;
    }
    Ok(assignment)
}

pub fn cross_validate(spec: &ClassifierSpec, data: &Dataset, folds: usize, seed: u64) -> Result<CvReport> {
    spec.validate()?;
    for label in SentenceLabel::ALL {
        if data.count(label) == data.len() {
            return Err(Error::DegenerateLabels(label));
        }
    }
    let assignment = assign_folds(&data.labels(), folds, seed)?;
    cross_validate_with_assignment(spec, data, &assignment, seed)
}

/// Cross-validation over a given fold assignment (e.g. one read back from a
/// previous report).
pub fn cross_validate_with_assignment(
    spec: &ClassifierSpec,
    data: &Dataset,
    assignment: &[usize],
    seed: u64,
) -> Result<CvReport> {
    spec.validate()?;
    if assignment.len() != data.len() {
        return Err(Error::InvalidInput(format!(
            "fold assignment covers {} rows, dataset has {}",
            assignment.len(),
            data.len()
        )));
    }
    let folds = assignment.iter().max().map_or(0, |m| m + 1);
    if folds < 2 {
        return Err(Error::InvalidConfig("need at least 2 folds".into()));
    }

    let per_fold = (0..folds)
        .into_par_iter()
        .map(|fold| run_fold(spec, data, assignment, fold))
        .collect::<Result<Vec<_>>>()?;

    let aggregate_confusion: ConfusionMatrix = per_fold
        .iter()
        .filter(|f| !f.degenerate)
        .map(|f| f.confusion)
        .sum();
    Ok(CvReport {
        classifier: spec.clone(),
        folds,
        seed,
        aggregate: metrics(&aggregate_confusion),
        aggregate_confusion,
        per_fold,
        fold_assignment: assignment.to_vec(),
    })
}

fn run_fold(spec: &ClassifierSpec, data: &Dataset, assignment: &[usize], fold: usize) -> Result<FoldResult> {
    let (test, train_rows): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| assignment[i] == fold);
    let train_set = data.subset(&train_rows);
    let test_set = data.subset(&test);
    let model = match train(spec, &train_set) {
        Ok(m) => m,
        Err(Error::DegenerateLabels(label)) => {
            log::warn!("fold {fold}: training split only holds {label} rows, skipped");
            return Ok(FoldResult {
                fold,
                train_size: train_rows.len(),
                test_size: test.len(),
                degenerate: true,
                confusion: ConfusionMatrix::default(),
                metrics: Metrics::default(),
            });
        }
        Err(e) => return Err(e),
    };
    let predicted = test_set
        .rows
        .iter()
        .map(|r| model.predict(&r.features).map(|p| p.label))
        .collect::<Result<Vec<_>>>()?;
    let cm = confusion(&predicted, &test_set.labels())?;
    Ok(FoldResult {
        fold,
        train_size: train_rows.len(),
        test_size: test.len(),
        degenerate: false,
        confusion: cm,
        metrics: metrics(&cm),
    })
}
