//! Report emitters (topic-highlighted HTML, data-practice DOT graphs) and the
//! end-to-end pipeline.

mod dot;
mod html;
pub mod pipeline;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use dot::emit_graph_dot;
pub use html::emit_highlight_html;
pub use pipeline::{file_stem_for, run_pipeline, PipelineConfig, RunManifest, Stage, StageError};

use crate::corpus::{PolicyDocument, Sentence, SentenceLabel};
use crate::error::{Error, Result};
use crate::preprocess::TokenizedSentence;
use crate::topics::{TopicAssignment, TopicModel, TopicName};

/// Stems of a sentence's own topics ranked at or above this position count as
/// characteristic, alongside seed stems.
pub const HIGH_PHI_RANK: usize = 10;

/// A stem worth drawing in the practice graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KeyStem {
    pub stem: String,
    /// Topics the stem seeds; empty for high-phi stems.
    pub seed_of: Vec<TopicName>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub sentence: Sentence,
    pub label: SentenceLabel,
    pub topics: Option<TopicAssignment>,
    pub key_stems: Vec<KeyStem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedPolicy {
    pub doc: PolicyDocument,
    pub sentences: Vec<AnnotatedSentence>,
}

impl AnnotatedPolicy {
    /// Checks that every sensitive sentence carries a topic assignment.
    pub fn validate(&self) -> Result<()> {
        for s in &self.sentences {
            if s.label.is_sensitive() && s.topics.is_none() {
                return Err(Error::InvalidInput(format!(
                    "sensitive sentence {}#{} has no topics",
                    s.sentence.doc_id, s.sentence.index
                )));
            }
        }
        Ok(())
    }

    pub fn sensitive(&self) -> impl Iterator<Item = &AnnotatedSentence> {
        self.sentences.iter().filter(|s| s.label.is_sensitive())
    }
}

/// The in-vocabulary stems of `stems` that seed a topic or rank among the top
/// stems of one of `assigned`, sorted and deduplicated.
pub fn key_stems(model: &TopicModel, stems: &[String], assigned: &[TopicName]) -> Vec<KeyStem> {
    let high: BTreeSet<&str> = assigned
        .iter()
        .flat_map(|&t| model.top_stems(t, HIGH_PHI_RANK))
        .map(|(s, _)| s)
        .collect();
    let mut out: Vec<KeyStem> = stems
        .iter()
        .filter(|s| model.position(s).is_some())
        .filter_map(|s| {
            let seed_of: Vec<TopicName> = model
                .topics
                .iter()
                .filter(|t| t.seed_stems.contains(s))
                .map(|t| t.name)
                .collect();
            (!seed_of.is_empty() || high.contains(s.as_str())).then(|| KeyStem {
                stem: s.clone(),
                seed_of,
            })
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Joins a document's sentences with their labels and, for sensitive ones,
/// their topic assignments. `tokenized` and `labels` are indexed like
/// `sentences`; `assignments` may list any subset of sentences.
pub fn annotate(
    doc: &PolicyDocument,
    sentences: &[Sentence],
    labels: &[SentenceLabel],
    tokenized: &[TokenizedSentence],
    assignments: &[TopicAssignment],
    model: Option<&TopicModel>,
) -> Result<AnnotatedPolicy> {
    if labels.len() != sentences.len() || tokenized.len() != sentences.len() {
        return Err(Error::InvalidInput(format!(
            "{}: {} sentences, {} labels, {} tokenized",
            doc.id,
            sentences.len(),
            labels.len(),
            tokenized.len()
        )));
    }
    let annotated = sentences
        .iter()
        .zip(labels)
        .zip(tokenized)
        .map(|((s, &label), ts)| {
            let topics = label
                .is_sensitive()
                .then(|| {
                    assignments
                        .iter()
                        .find(|a| a.doc_id == s.doc_id && a.sentence_index == s.index)
                        .cloned()
                })
                .flatten();
            let key_stems = match (model, &topics) {
                (Some(m), Some(a)) => key_stems(m, &ts.stems, &a.assigned),
                _ => Vec::new(),
            };
            AnnotatedSentence {
                sentence: s.clone(),
                label,
                topics,
                key_stems,
            }
        })
        .collect();
    let ap = AnnotatedPolicy {
        doc: doc.clone(),
        sentences: annotated,
    };
    ap.validate()?;
    Ok(ap)
}
