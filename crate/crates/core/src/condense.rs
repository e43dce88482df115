//! Shortened policies: the sentences predicted sensitive, in original order.

use serde::{Deserialize, Serialize};

use crate::classify::{Classifier, ModelFile, Prediction};
use crate::corpus::{segment_sentences, PolicyDocument, Sentence};
use crate::error::{Error, Result};
use crate::features::{vectorize_stems, Vocabulary};
use crate::preprocess::{stems_of, StopwordList};

/// Anything that can label a sentence.
pub trait SentencePredictor {
    fn predict_sentence(&self, sentence: &Sentence) -> Result<Prediction>;
}

/// A trained model with the vocabulary and stop list it expects.
pub struct SentenceModel<'a> {
    model: &'a ModelFile,
    vocab: &'a Vocabulary,
    stoplist: &'a StopwordList,
}

impl<'a> SentenceModel<'a> {
    /// Fails when `vocab` is not the model's training vocabulary.
    pub fn new(model: &'a ModelFile, vocab: &'a Vocabulary, stoplist: &'a StopwordList) -> Result<Self> {
        model.check_vocabulary(vocab)?;
        Ok(SentenceModel {
            model,
            vocab,
            stoplist,
        })
    }

    pub fn predict_text(&self, text: &str) -> Result<Prediction> {
        let stems = stems_of(text, self.stoplist);
        self.model.model.predict(&vectorize_stems(&stems, self.vocab))
    }
}

impl SentencePredictor for SentenceModel<'_> {
    fn predict_sentence(&self, sentence: &Sentence) -> Result<Prediction> {
        self.predict_text(&sentence.text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortenedPolicy {
    pub doc_id: String,
    pub kept: Vec<Sentence>,
    pub removed_count: usize,
    pub original_sentences: usize,
    pub original_words: usize,
    pub kept_words: usize,
    pub sentence_reduction_ratio: f64,
}

/// Scalar fields of a [`ShortenedPolicy`], as written to the stats file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortenStats {
    pub doc_id: String,
    pub kept_sentences: usize,
    pub removed_count: usize,
    pub original_sentences: usize,
    pub original_words: usize,
    pub kept_words: usize,
    pub sentence_reduction_ratio: f64,
}

/// Whitespace-separated words of raw text.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

impl ShortenedPolicy {
    pub fn stats(&self) -> ShortenStats {
        ShortenStats {
            doc_id: self.doc_id.clone(),
            kept_sentences: self.kept.len(),
            removed_count: self.removed_count,
            original_sentences: self.original_sentences,
            original_words: self.original_words,
            kept_words: self.kept_words,
            sentence_reduction_ratio: self.sentence_reduction_ratio,
        }
    }

    /// Kept sentences joined by a space, or by a blank line where the
    /// original had a paragraph break between them.
    pub fn render(&self, doc: &PolicyDocument) -> String {
        let mut out = String::new();
        let mut prev_end: Option<usize> = None;
        for s in &self.kept {
            if let Some(end) = prev_end {
                let gap = &doc.raw_text[end..s.char_span.0];
                let parts: Vec<&str> = gap.split('\n').collect();
                let paragraph =
                    parts.len() > 2 && parts[1..parts.len() - 1].iter().any(|p| p.trim().is_empty());
                out.push_str(if paragraph {
                    "\n\n"
                } else if gap.contains('\n') {
                    "\n"
                } else {
                    " "
                });
            }
            out.push_str(&s.text);
            prev_end = Some(s.char_span.1);
        }
        if !out.is_empty() {
            out.push('\n');
        }
        out
    }
}

/// Keeps exactly the sentences `predictor` labels sensitive.
pub fn shorten(doc: &PolicyDocument, predictor: &dyn SentencePredictor) -> Result<ShortenedPolicy> {
    let sentences = segment_sentences(doc);
    if sentences.is_empty() {
        return Err(Error::InvalidInput(format!(
            "document {} has no sentences",
            doc.id
        )));
    }
    let labels = sentences
        .iter()
        .map(|s| predictor.predict_sentence(s).map(|p| p.label))
        .collect::<Result<Vec<_>>>()?;
    Ok(shorten_with_labels(doc, sentences, &labels))
}

/// Shortens given precomputed labels, one per sentence.
pub fn shorten_with_labels(
    doc: &PolicyDocument,
    sentences: Vec<Sentence>,
    labels: &[crate::corpus::SentenceLabel],
) -> ShortenedPolicy {
    debug_assert_eq!(sentences.len(), labels.len());
    let original_sentences = sentences.len();
    let original_words = sentences.iter().map(|s| word_count(&s.text)).sum();
    let kept: Vec<Sentence> = sentences
        .into_iter()
        .zip(labels)
        .filter(|(_, l)| l.is_sensitive())
        .map(|(s, _)| s)
        .collect();
    let kept_words = kept.iter().map(|s| word_count(&s.text)).sum();
    let removed_count = original_sentences - kept.len();
    ShortenedPolicy {
        doc_id: doc.id.clone(),
        removed_count,
        original_sentences,
        original_words,
        kept_words,
        sentence_reduction_ratio: if original_sentences == 0 {
            0.0
        } else {
            removed_count as f64 / original_sentences as f64
        },
        kept,
    }
}
