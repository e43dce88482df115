//! Binary sentence classifiers: multinomial Naive Bayes, cosine KNN and a
//! linear SVM trained by stochastic subgradient descent.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::SentenceLabel;
use crate::error::{Error, Result};
use crate::features::{Dataset, FeatureVector, Vocabulary};
use crate::jsonl;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Nb,
    Knn,
    Svm,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Nb => "nb",
            ClassifierKind::Knn => "knn",
            ClassifierKind::Svm => "svm",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nb" => Ok(ClassifierKind::Nb),
            "knn" => Ok(ClassifierKind::Knn),
            "svm" => Ok(ClassifierKind::Svm),
            other => Err(Error::InvalidConfig(format!("unknown classifier {other:?}"))),
        }
    }
}

/// Classifier choice plus its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassifierSpec {
    /// Add-`alpha` smoothing.
    Nb { alpha: f64 },
    /// Majority vote of the `k` most cosine-similar training rows.
    Knn { k: usize },
    /// L2-regularised hinge loss, step size `1 / (lambda * t)`.
    Svm { lambda: f64, epochs: usize, seed: u64 },
}

impl ClassifierSpec {
    pub const DEFAULT_ALPHA: f64 = 1.0;
    pub const DEFAULT_K: usize = 5;
    pub const DEFAULT_LAMBDA: f64 = 1e-4;
    pub const DEFAULT_EPOCHS: usize = 20;
    pub const DEFAULT_SEED: u64 = 42;

    pub fn default_for(kind: ClassifierKind) -> Self {
        match kind {
            ClassifierKind::Nb => ClassifierSpec::Nb {
                alpha: Self::DEFAULT_ALPHA,
            },
            ClassifierKind::Knn => ClassifierSpec::Knn { k: Self::DEFAULT_K },
            ClassifierKind::Svm => ClassifierSpec::Svm {
                lambda: Self::DEFAULT_LAMBDA,
                epochs: Self::DEFAULT_EPOCHS,
                seed: Self::DEFAULT_SEED,
            },
        }
    }

    pub fn kind(&self) -> ClassifierKind {
        match self {
            ClassifierSpec::Nb { .. } => ClassifierKind::Nb,
            ClassifierSpec::Knn { .. } => ClassifierKind::Knn,
            ClassifierSpec::Svm { .. } => ClassifierKind::Svm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        match *self {
            ClassifierSpec::Nb { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                bad("nb alpha must be positive")
            }
            ClassifierSpec::Knn { k } if k == 0 || k % 2 == 0 => bad("knn k must be odd and >= 1"),
            ClassifierSpec::Svm { lambda, .. } if !(lambda > 0.0 && lambda.is_finite()) => {
                bad("svm lambda must be positive")
            }
            ClassifierSpec::Svm { epochs: 0, .. } => bad("svm epochs must be >= 1"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: SentenceLabel,
    pub score: f64,
}

/// A sentence record with its predicted label and raw score, as written by
/// `predict`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub doc_id: String,
    pub index: usize,
    pub text: String,
    pub label: SentenceLabel,
    pub score: f64,
}

/// Common interface of the trained models.
pub trait Classifier {
    fn dimension(&self) -> usize;

    fn score(&self, x: &FeatureVector) -> f64;

    fn label_for(&self, score: f64) -> SentenceLabel {
        if score > 0.0 {
            SentenceLabel::Sensitive
        } else {
            SentenceLabel::NonSensitive
        }
    }

    fn predict(&self, x: &FeatureVector) -> Result<Prediction> {
        if x.dimension() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                actual: x.dimension(),
            });
        }
        let score = self.score(x);
        Ok(Prediction {
            label: self.label_for(score),
            score,
        })
    }
}

fn class_index(label: SentenceLabel) -> usize {
    match label {
        SentenceLabel::Sensitive => 0,
        SentenceLabel::NonSensitive => 1,
    }
}

/// Relative rounding tolerance under which NB log-odds count as an exact tie.
pub const NB_TIE_TOLERANCE: f64 = 1e-13;

/// Multinomial Naive Bayes over count features. Index 0 is the sensitive
/// class, index 1 the non-sensitive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbModel {
    pub log_prior: [f64; 2],
    pub log_likelihood: [Vec<f64>; 2],
    pub alpha: f64,
    pub vocab_dimension: usize,
}

impl NbModel {
    pub fn fit(data: &Dataset, alpha: f64) -> Result<Self> {
        let dim = data.dimension();
        let mut word_counts = [vec![0.0f64; dim], vec![0.0f64; dim]];
        let mut doc_counts = [0usize; 2];
        for row in &data.rows {
            let c = class_index(row.label);
            doc_counts[c] += 1;
            for (p, n) in row.features.iter() {
                word_counts[c][p] += n as f64;
            }
        }
        let n = data.len() as f64;
        let log_prior = doc_counts.map(|d| (d as f64 / n).ln());
        let log_likelihood = word_counts.map(|counts| {
            let total: f64 = counts.iter().sum();
            let denom = total + alpha * dim as f64;
            counts.iter().map(|&c| ((c + alpha) / denom).ln()).collect()
        });
        Ok(NbModel {
            log_prior,
            log_likelihood,
            alpha,
            vocab_dimension: dim,
        })
    }

    /// `P(word at pos | label)`.
    pub fn word_probability(&self, label: SentenceLabel, pos: usize) -> f64 {
        self.log_likelihood[class_index(label)][pos].exp()
    }
}

impl Classifier for NbModel {
    fn dimension(&self) -> usize {
        self.vocab_dimension
    }

    /// Log-odds sensitive minus non-sensitive. Values within rounding noise
    /// of zero are returned as exactly zero, so exact ties stay ties.
    fn score(&self, x: &FeatureVector) -> f64 {
        let [ls, ln] = &self.log_likelihood;
        let mut score = self.log_prior[0] - self.log_prior[1];
        let mut magnitude = score.abs();
        for (p, n) in x.iter() {
            let term = n as f64 * (ls[p] - ln[p]);
            score += term;
            magnitude += n as f64 * (ls[p].abs() + ln[p].abs());
        }
        if score.abs() <= NB_TIE_TOLERANCE * magnitude.max(1.0) {
            0.0
        } else {
            score
        }
    }
}

/// `u.v / (|u| |v|)`, defined as 0 when either vector is zero.
pub fn cosine_similarity(u: &FeatureVector, v: &FeatureVector) -> f64 {
    let nu = u.norm();
    let nv = v.norm();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    u.dot(v) / (nu * nv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnRow {
    pub label: SentenceLabel,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub vocab_dimension: usize,
    pub rows: Vec<KnnRow>,
}

impl KnnModel {
    pub fn fit(data: &Dataset, k: usize) -> Result<Self> {
        if k > data.len() {
            return Err(Error::InvalidConfig(format!(
                "knn k = {k} exceeds {} training rows",
                data.len()
            )));
        }
        Ok(KnnModel {
            k,
            vocab_dimension: data.dimension(),
            rows: data
                .rows
                .iter()
                .map(|r| KnnRow {
                    label: r.label,
                    features: r.features.clone(),
                })
                .collect(),
        })
    }

    /// Training-row indices of the `k` nearest rows: similarity descending,
    /// lower row index first among equals.
    ///
    /// Similarities are compared exactly in integer arithmetic, so rows with
    /// mathematically equal cosine always fall back to the index order.
    pub fn neighbours(&self, x: &FeatureVector) -> Vec<usize> {
        let keys: Vec<SimilarityKey> = self
            .rows
            .iter()
            .map(|r| SimilarityKey::new(x, &r.features))
            .collect();
        let mut order: Vec<usize> = (0..self.rows.len()).collect();
        order.sort_by(|&a, &b| keys[b].cmp_similarity(&keys[a]).then(a.cmp(&b)));
        order.truncate(self.k);
        order
    }
}

/// Cosine similarity to a fixed query, as `dot / sqrt(norm_sq)` of the row.
#[derive(Debug, Clone, Copy)]
struct SimilarityKey {
    dot: u128,
    norm_sq: u128,
    approx: f64,
}

impl SimilarityKey {
    fn new(query: &FeatureVector, row: &FeatureVector) -> Self {
        let norm_sq = row.norm_sq_u128();
        let (dot, norm_sq) = if norm_sq == 0 || query.is_empty() {
            (0, 1)
        } else {
            (query.dot_u128(row), norm_sq)
        };
        SimilarityKey {
            dot,
            norm_sq,
            approx: cosine_similarity(query, row),
        }
    }

    /// Compares `dot_a^2 * norm_b` with `dot_b^2 * norm_a`; the query norm is
    /// common to both sides. Falls back to floats on overflow.
    fn cmp_similarity(&self, other: &Self) -> std::cmp::Ordering {
        let lhs = self
            .dot
            .checked_mul(self.dot)
            .and_then(|v| v.checked_mul(other.norm_sq));
        let rhs = other
            .dot
            .checked_mul(other.dot)
            .and_then(|v| v.checked_mul(self.norm_sq));
        match (lhs, rhs) {
            (Some(l), Some(r)) => l.cmp(&r),
            _ => self.approx.total_cmp(&other.approx),
        }
    }
}

impl Classifier for KnnModel {
    fn dimension(&self) -> usize {
        self.vocab_dimension
    }

    /// Fraction of the `k` neighbours labelled sensitive.
    fn score(&self, x: &FeatureVector) -> f64 {
        let nbrs = self.neighbours(x);
        let votes = nbrs
            .iter()
            .filter(|&&i| self.rows[i].label.is_sensitive())
            .count();
        votes as f64 / self.k as f64
    }

    fn label_for(&self, score: f64) -> SentenceLabel {
        if score > 0.5 {
            SentenceLabel::Sensitive
        } else {
            SentenceLabel::NonSensitive
        }
    }
}

/// Linear SVM. The bias is learned as the weight of a constant feature and is
/// regularised together with the other weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Regularised hinge loss on the training set after each epoch.
    pub epoch_losses: Vec<f64>,
}

fn sign(label: SentenceLabel) -> f64 {
    if label.is_sensitive() {
        1.0
    } else {
        -1.0
    }
}

impl SvmModel {
    pub fn fit(data: &Dataset, lambda: f64, epochs: usize, seed: u64) -> Result<Self> {
        let dim = data.dimension();
        let mut model = SvmModel {
            weights: vec![0.0; dim],
            bias: 0.0,
            lambda,
            epochs,
            seed,
            epoch_losses: Vec::with_capacity(epochs),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut t = 0u64;
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1;
                let row = &data.rows[i];
                let y = sign(row.label);
                let margin = y * model.margin(&row.features);
                let eta = 1.0 / (lambda * t as f64);
                let shrink = 1.0 - eta * lambda;
                model.weights.iter_mut().for_each(|w| *w *= shrink);
                model.bias *= shrink;
                if margin < 1.0 {
                    for (p, n) in row.features.iter() {
                        model.weights[p] += eta * y * n as f64;
                    }
                    model.bias += eta * y;
                }
            }
            let loss = model.objective(data);
            model.epoch_losses.push(loss);
        }
        if model.weights.iter().any(|w| !w.is_finite()) || !model.bias.is_finite() {
            return Err(Error::InvalidInput("svm training diverged".into()));
        }
        Ok(model)
    }

    /// Signed margin `w.x + b`.
    pub fn margin(&self, x: &FeatureVector) -> f64 {
        x.iter().map(|(p, n)| self.weights[p] * n as f64).sum::<f64>() + self.bias
    }

    /// `lambda/2 |(w, b)|^2 + mean hinge loss`.
    pub fn objective(&self, data: &Dataset) -> f64 {
        let reg = self.weights.iter().map(|w| w * w).sum::<f64>() + self.bias * self.bias;
        let hinge: f64 = data
            .rows
            .iter()
            .map(|r| (1.0 - sign(r.label) * self.margin(&r.features)).max(0.0))
            .sum();
        0.5 * self.lambda * reg + hinge / data.len().max(1) as f64
    }
}

impl Classifier for SvmModel {
    fn dimension(&self) -> usize {
        self.weights.len()
    }

    fn score(&self, x: &FeatureVector) -> f64 {
        self.margin(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Nb(NbModel),
    Knn(KnnModel),
    Svm(SvmModel),
}

impl Model {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Model::Nb(_) => ClassifierKind::Nb,
            Model::Knn(_) => ClassifierKind::Knn,
            Model::Svm(_) => ClassifierKind::Svm,
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            Model::Nb(m) => m,
            Model::Knn(m) => m,
            Model::Svm(m) => m,
        }
    }
}

impl Classifier for Model {
    fn dimension(&self) -> usize {
        self.inner().dimension()
    }

    fn score(&self, x: &FeatureVector) -> f64 {
        self.inner().score(x)
    }

    fn label_for(&self, score: f64) -> SentenceLabel {
        self.inner().label_for(score)
    }
}

/// Trains the classifier described by `spec`.
pub fn train(spec: &ClassifierSpec, data: &Dataset) -> Result<Model> {
    spec.validate()?;
    if data.vocabulary.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    if data.is_empty() {
        return Err(Error::InvalidInput("empty training dataset".into()));
    }
    for label in SentenceLabel::ALL {
        if data.count(label) == data.len() {
            return Err(Error::DegenerateLabels(label));
        }
    }
    Ok(match *spec {
        ClassifierSpec::Nb { alpha } => Model::Nb(NbModel::fit(data, alpha)?),
        ClassifierSpec::Knn { k } => Model::Knn(KnnModel::fit(data, k)?),
        ClassifierSpec::Svm { lambda, epochs, seed } => {
            Model::Svm(SvmModel::fit(data, lambda, epochs, seed)?)
        }
    })
}

/// A model bound to the vocabulary it was trained with, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub vocab_hash: String,
    pub vocabulary: Vec<String>,
    pub model: Model,
}

impl ModelFile {
    pub fn new(model: Model, vocabulary: &Vocabulary) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            vocab_hash: vocabulary.hash(),
            vocabulary: vocabulary.stems().to_vec(),
            model,
        }
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        let k = self.vocabulary.len().max(1);
        let v = Vocabulary::from_stems(self.vocabulary.clone(), k)?;
        self.check_vocabulary(&v)?;
        Ok(v)
    }

    /// Fails unless `vocab` is the vocabulary the model was trained with.
    pub fn check_vocabulary(&self, vocab: &Vocabulary) -> Result<()> {
        let actual = vocab.hash();
        if actual != self.vocab_hash {
            return Err(Error::VocabularyMismatch {
                expected: self.vocab_hash.clone(),
                actual,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        if file.model.dimension() != file.vocabulary.len() {
            return Err(Error::DimensionMismatch {
                expected: file.vocabulary.len(),
                actual: file.model.dimension(),
            });
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonl::write_file(path, self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&jsonl::read_to_string(path)?)
    }
}
