//! Frequency-ranked vocabulary and sparse bag-of-words vectors.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::SentenceLabel;
use crate::error::{Error, Result};
use crate::jsonl;
use crate::preprocess::{FrequencyTable, TokenizedSentence};

pub const DEFAULT_TOP_K: usize = 500;

/// Ordered stems; a stem's position is its feature index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    stems: Vec<String>,
    index: HashMap<String, usize>,
    top_k: usize,
}

impl Vocabulary {
    /// Uses `stems` as-is; duplicates are rejected.
    pub fn from_stems(stems: Vec<String>, top_k: usize) -> Result<Self> {
        let mut index = HashMap::with_capacity(stems.len());
        for (i, s) in stems.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate vocabulary stem {s:?}")));
            }
        }
        Ok(Vocabulary { stems, index, top_k })
    }

    pub fn stems(&self) -> &[String] {
        &self.stems
    }

    pub fn len(&self) -> usize {
        self.stems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stems.is_empty()
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }

    pub fn position(&self, stem: &str) -> Option<usize> {
        self.index.get(stem).copied()
    }

    pub fn contains(&self, stem: &str) -> bool {
        self.index.contains_key(stem)
    }

    /// SHA-256 over the newline-joined stems, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.stems {
            h.update(s.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// One stem per line.
    pub fn to_text(&self) -> String {
        self.stems.iter().map(|s| format!("{s}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let stems: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        let k = stems.len().max(1);
        Self::from_stems(stems, k)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&jsonl::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonl::write_file(path, self.to_text())
    }
}

/// The `top_k` most frequent stems, ties broken by stem ascending.
pub fn build_vocabulary(freq: &FrequencyTable, top_k: usize) -> Result<Vocabulary> {
    if top_k == 0 {
        return Err(Error::InvalidConfig("top_k must be at least 1".into()));
    }
    let stems = freq
        .ranked()
        .into_iter()
        .take(top_k)
        .map(|(s, _)| s.to_string())
        .collect();
    Vocabulary::from_stems(stems, top_k)
}

/// Sparse count vector over a vocabulary.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "SparseForm", try_from = "SparseForm")]
pub struct FeatureVector {
    entries: BTreeMap<usize, u32>,
    dimension: usize,
}

/// Serialized shape of a [`FeatureVector`]. Pairs rather than a map, because
/// integer map keys do not survive the buffering of internally tagged enums.
#[derive(Serialize, Deserialize)]
struct SparseForm {
    dimension: usize,
    entries: Vec<(usize, u32)>,
}

impl From<FeatureVector> for SparseForm {
    fn from(v: FeatureVector) -> Self {
        SparseForm {
            dimension: v.dimension,
            entries: v.entries.into_iter().collect(),
        }
    }
}

impl TryFrom<SparseForm> for FeatureVector {
    type Error = Error;

    fn try_from(f: SparseForm) -> Result<Self> {
        FeatureVector::from_pairs(f.dimension, f.entries)
    }
}

impl FeatureVector {
    pub fn new(dimension: usize) -> Self {
        FeatureVector {
            entries: BTreeMap::new(),
            dimension,
        }
    }

    /// Builds a vector from `(position, count)` pairs, summing repeats and
    /// dropping zeros.
    pub fn from_pairs(dimension: usize, pairs: impl IntoIterator<Item = (usize, u32)>) -> Result<Self> {
        let mut v = FeatureVector::new(dimension);
        for (pos, count) in pairs {
            if pos >= dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    actual: pos + 1,
                });
            }
            if count > 0 {
                *v.entries.entry(pos).or_insert(0) += count;
            }
        }
        Ok(v)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn get(&self, pos: usize) -> u32 {
        self.entries.get(&pos).copied().unwrap_or(0)
    }

    /// Non-zero entries in position order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.entries.iter().map(|(&p, &c)| (p, c))
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.entries.values().map(|&c| c as u64).sum()
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        let (small, large) = if self.nnz() <= other.nnz() {
            (self, other)
        } else {
            (other, self)
        };
        small.iter().map(|(p, c)| c as f64 * large.get(p) as f64).sum()
    }

    /// Exact integer dot product.
    pub fn dot_u128(&self, other: &FeatureVector) -> u128 {
        let (small, large) = if self.nnz() <= other.nnz() {
            (self, other)
        } else {
            (other, self)
        };
        small.iter().map(|(p, c)| c as u128 * large.get(p) as u128).sum()
    }

    /// Exact squared Euclidean norm.
    pub fn norm_sq_u128(&self) -> u128 {
        self.entries.values().map(|&c| c as u128 * c as u128).sum()
    }

    pub fn norm(&self) -> f64 {
        self.entries
            .values()
            .map(|&c| (c as f64) * (c as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// `pos:count;pos:count` in position order.
    pub fn to_sparse_string(&self) -> String {
        let mut out = String::new();
        for (i, (p, c)) in self.iter().enumerate() {
            if i > 0 {
                out.push(';');
            }
            let _ = write!(out, "{p}:{c}");
        }
        out
    }

    pub fn parse_sparse(dimension: usize, text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for item in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let (p, c) = item
                .split_once(':')
                .ok_or_else(|| Error::parse("sparse vector", format!("bad entry {item:?}")))?;
            let p: usize = p
                .parse()
                .map_err(|_| Error::parse("sparse vector", format!("bad position {p:?}")))?;
            let c: u32 = c
                .parse()
                .map_err(|_| Error::parse("sparse vector", format!("bad count {c:?}")))?;
            pairs.push((p, c));
        }
        Self::from_pairs(dimension, pairs)
    }
}

pub fn vectorize(ts: &TokenizedSentence, vocab: &Vocabulary) -> FeatureVector {
    vectorize_stems(&ts.stems, vocab)
}

pub fn vectorize_stems<S: AsRef<str>>(stems: &[S], vocab: &Vocabulary) -> FeatureVector {
    let mut v = FeatureVector::new(vocab.len());
    for s in stems {
        if let Some(p) = vocab.position(s.as_ref()) {
            *v.entries.entry(p).or_insert(0) += 1;
        }
    }
    v
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetRow {
    pub features: FeatureVector,
    pub label: SentenceLabel,
    pub doc_id: String,
    pub sentence_index: usize,
}

/// Labelled feature rows sharing one vocabulary.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocabulary: Vocabulary,
    pub rows: Vec<DatasetRow>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn labels(&self) -> Vec<SentenceLabel> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn count(&self, label: SentenceLabel) -> usize {
        self.rows.iter().filter(|r| r.label == label).count()
    }

    /// A dataset holding the rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            vocabulary: self.vocabulary.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// `doc_id,sentence_index,label,pos:count;...` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("doc_id,sentence_index,label,features\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.doc_id,
                r.sentence_index,
                r.label,
                r.features.to_sparse_string()
            );
        }
        out
    }

    pub fn parse_csv(text: &str, vocabulary: Vocabulary) -> Result<Self> {
        let dim = vocabulary.len();
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || (lineno == 0 && line.starts_with("doc_id,")) {
                continue;
            }
            let loc = || format!("dataset line {}", lineno + 1);
            // doc ids may contain commas, so split from the right.
            let mut parts = line.rsplitn(4, ',');
            let features = parts.next().unwrap_or("");
            let label = parts.next().ok_or_else(|| Error::parse(loc(), "missing label"))?;
            let index = parts.next().ok_or_else(|| Error::parse(loc(), "missing index"))?;
            let doc_id = parts
                .next()
                .ok_or_else(|| Error::parse(loc(), "missing doc_id"))?;
            rows.push(DatasetRow {
                features: FeatureVector::parse_sparse(dim, features)?,
                label: label.parse()?,
                doc_id: doc_id.to_string(),
                sentence_index: index
                    .parse()
                    .map_err(|_| Error::parse(loc(), format!("bad index {index:?}")))?,
            });
        }
        Ok(Dataset { vocabulary, rows })
    }

    pub fn load(csv: &Path, vocabulary: Vocabulary) -> Result<Self> {
        Self::parse_csv(&jsonl::read_to_string(csv)?, vocabulary)
    }
}

/// One row per sentence, input order preserved; every sentence needs a label.
pub fn build_dataset(sentences: &[TokenizedSentence], vocab: &Vocabulary) -> Result<Dataset> {
    let rows = sentences
        .iter()
        .map(|ts| {
            let label = ts.label.ok_or_else(|| Error::MissingLabel {
                doc_id: ts.doc_id.clone(),
                index: ts.sentence_index,
            })?;
            Ok(DatasetRow {
                features: vectorize(ts, vocab),
                label,
                doc_id: ts.doc_id.clone(),
                sentence_index: ts.sentence_index,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        vocabulary: vocab.clone(),
        rows,
    })
}
