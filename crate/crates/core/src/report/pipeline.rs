//! `run`: every stage end to end, with all artifacts under one directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{annotate, emit_graph_dot, emit_highlight_html};
use crate::classify::{train, Classifier, ClassifierKind, ClassifierSpec, ModelFile, PredictionRecord};
use crate::condense::shorten_with_labels;
use crate::corpus::{load_corpus, segment_sentences, sentence_records, LabelSet, Sentence, SentenceLabel};
use crate::error::{Error, Result};
use crate::features::{build_dataset, build_vocabulary, vectorize, DEFAULT_TOP_K};
use crate::jsonl;
use crate::preprocess::{preprocess_sentence, term_frequency, StopwordList, TokenizedSentence};
use crate::topics::{
    all_seeds, assign_topics, default_topics, filter_rare_terms, fit_labeled_lda, topic_distribution,
    topic_distribution_by_policy, TopicAssignment, TopicConfig, DEFAULT_THRESHOLD,
};

pub const MANIFEST_FILE: &str = "run.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Preprocess,
    Vectorize,
    Train,
    Predict,
    Shorten,
    Topics,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().unwrap_or_default())
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed: {}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Directory of `.txt` policies (or a single file).
    pub corpus: PathBuf,
    /// Sentence JSONL with gold labels; required when no model is given.
    pub labels: Option<PathBuf>,
    /// Pretrained model; when absent one is trained from `labels`.
    pub model: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub stoplist: Option<PathBuf>,
    pub classifier: ClassifierSpec,
    pub top_k: usize,
    pub topics: TopicConfig,
    pub threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: PathBuf::new(),
            labels: None,
            model: None,
            out_dir: PathBuf::from("out"),
            stoplist: None,
            classifier: ClassifierSpec::default_for(ClassifierKind::Svm),
            top_k: DEFAULT_TOP_K,
            topics: TopicConfig::default(),
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl PipelineConfig {
    /// Uses `seed` for both the classifier (where seeded) and the topic sampler.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if let ClassifierSpec::Svm { seed: s, .. } = &mut self.classifier {
            *s = seed;
        }
        self.topics.rng_seed = seed;
        self
    }
}

/// Contents of `run.json`. Timestamps appear only here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub status: String,
    pub failed_stage: Option<Stage>,
    pub error: Option<String>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub corpus: PathBuf,
    pub labels: Option<PathBuf>,
    pub model_input: Option<PathBuf>,
    pub classifier: ClassifierSpec,
    pub top_k: usize,
    pub topics: TopicConfig,
    pub threshold: f64,
    pub stoplist_version: Option<String>,
    pub vocab_hash: Option<String>,
    pub model_hash: Option<String>,
    pub completed_stages: Vec<Stage>,
    pub documents: Vec<String>,
    pub load_errors: Vec<String>,
    pub shortened: Vec<String>,
    /// SHA-256 of every other file in the output directory.
    pub artifacts: BTreeMap<String, String>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Relative path -> SHA-256 of every file under `root` except the manifest.
fn hash_tree(root: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(root).expect("under root");
            let rel = rel.to_string_lossy().replace('\\', "/");
            if rel == MANIFEST_FILE {
                continue;
            }
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            out.insert(rel, sha256_hex(&bytes));
        }
    }
    Ok(out)
}

/// A file name that is safe to create from a document id.
pub fn file_stem_for(doc_id: &str) -> String {
    doc_id
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

struct Run<'a> {
    config: &'a PipelineConfig,
    out: &'a Path,
    manifest: RunManifest,
}

impl Run<'_> {
    fn write(&self, rel: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        jsonl::write_file(&self.out.join(rel), contents)
    }

    fn stage<T>(
        &mut self,
        stage: Stage,
        f: impl FnOnce(&mut Self) -> Result<T>,
    ) -> std::result::Result<T, StageError> {
        log::info!("stage {stage}");
        match f(self) {
            Ok(v) => {
                self.manifest.completed_stages.push(stage);
                Ok(v)
            }
            Err(source) => Err(StageError { stage, source }),
        }
    }
}

/// Runs ingest, preprocess, vectorize, train (when no model is given),
/// predict, shorten, topics and report, writing every artifact under
/// `config.out_dir` plus a `run.json` manifest. On failure the outputs so
/// far are kept and the manifest names the failing stage.
pub fn run_pipeline(config: &PipelineConfig) -> std::result::Result<RunManifest, StageError> {
    let out = config.out_dir.as_path();
    let mut run = Run {
        config,
        out,
        manifest: RunManifest {
            tool: "policylens".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            status: "running".into(),
            failed_stage: None,
            error: None,
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
            corpus: config.corpus.clone(),
            labels: config.labels.clone(),
            model_input: config.model.clone(),
            classifier: config.classifier.clone(),
            top_k: config.top_k,
            topics: config.topics.clone(),
            threshold: config.threshold,
            stoplist_version: None,
            vocab_hash: None,
            model_hash: None,
            completed_stages: Vec::new(),
            documents: Vec::new(),
            load_errors: Vec::new(),
            shortened: Vec::new(),
            artifacts: BTreeMap::new(),
        },
    };
    let result = stages(&mut run);
    let manifest = &mut run.manifest;
    match &result {
        Ok(()) => manifest.status = "ok".into(),
        Err(e) => {
            log::error!("{e}");
            manifest.status = "failed".into();
            manifest.failed_stage = Some(e.stage);
            manifest.error = Some(e.source.to_string());
        }
    }
    let finish = |run: &mut Run| -> Result<()> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        run.manifest.artifacts = hash_tree(out)?;
        run.manifest.finished_unix_ms = now_ms();
        let json = serde_json::to_string_pretty(&run.manifest)? + "\n";
        run.write(MANIFEST_FILE, json)
    };
    let stage = result.as_ref().err().map_or(Stage::Report, |e| e.stage);
    finish(&mut run).map_err(|source| StageError { stage, source })?;
    result.map(|()| run.manifest)
}

fn stages(run: &mut Run) -> std::result::Result<(), StageError> {
    let config = run.config;

    let (docs, sentences, gold) = run.stage(Stage::Ingest, |run| {
        let report = load_corpus(&config.corpus)?;
        for issue in &report.errors {
            log::warn!("{}: {}", issue.path.display(), issue.message);
        }
        run.manifest.load_errors = report
            .errors
            .iter()
            .map(|i| format!("{}: {}", i.path.display(), i.message))
            .collect();
        if report.documents.is_empty() {
            return Err(Error::EmptyCorpus(config.corpus.display().to_string()));
        }
        let gold = config.labels.as_deref().map(LabelSet::load).transpose()?;
        let sentences: Vec<Vec<Sentence>> = report.documents.par_iter().map(segment_sentences).collect();
        let records = sentence_records(&report.documents, gold.as_ref());
        run.write("sentences.jsonl", jsonl::to_jsonl_string(&records)?)?;
        run.manifest.documents = report.documents.iter().map(|d| d.id.clone()).collect();
        Ok((report.documents, sentences, gold))
    })?;

    let tokenized = run.stage(Stage::Preprocess, |run| {
        let stoplist = match &config.stoplist {
            Some(p) => StopwordList::from_file(p)?,
            None => StopwordList::default(),
        };
        run.manifest.stoplist_version = Some(stoplist.version().to_string());
        let tokenized: Vec<Vec<TokenizedSentence>> = sentences
            .par_iter()
            .map(|doc| {
                doc.iter()
                    .map(|s| {
                        let mut ts = preprocess_sentence(s, &stoplist);
                        ts.label = gold.as_ref().and_then(|g| g.get(&s.doc_id, s.index));
                        ts
                    })
                    .collect()
            })
            .collect();
        let flat: Vec<&TokenizedSentence> = tokenized.iter().flatten().collect();
        run.write("stems.jsonl", jsonl::to_jsonl_string(&flat)?)?;
        let owned: Vec<TokenizedSentence> = flat.into_iter().cloned().collect();
        run.write("frequency.csv", term_frequency(&owned).to_csv())?;
        Ok(tokenized)
    })?;
    let flat: Vec<TokenizedSentence> = tokenized.iter().flatten().cloned().collect();

    let dataset = run.stage(Stage::Vectorize, |run| {
        let vocab = build_vocabulary(&term_frequency(&flat), config.top_k)?;
        run.write("vocab.txt", vocab.to_text())?;
        if gold.is_none() {
            return Ok(None);
        }
        let data = build_dataset(&flat, &vocab)?;
        run.write("dataset.csv", data.to_csv())?;
        Ok(Some(data))
    })?;

    let trained = match &config.model {
        Some(_) => None,
        None => Some(run.stage(Stage::Train, |run| {
            let data = dataset
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("no model given and no labels to train one".into()))?;
            let model = ModelFile::new(train(&config.classifier, data)?, &data.vocabulary);
            let json = model.to_json()?;
            run.write("model.json", &json)?;
            run.manifest.model_hash = Some(sha256_hex(json.as_bytes()));
            Ok(model)
        })?),
    };

    let labels = run.stage(Stage::Predict, |run| {
        let model = match (trained, &config.model) {
            (Some(m), _) => m,
            (None, Some(path)) => {
                let text = jsonl::read_to_string(path)?;
                run.manifest.model_hash = Some(sha256_hex(text.as_bytes()));
                ModelFile::from_json(&text)?
            }
            (None, None) => unreachable!("train stage ran"),
        };
        let vocab = model.vocabulary()?;
        run.manifest.vocab_hash = Some(vocab.hash());
        let labels: Vec<Vec<(SentenceLabel, f64)>> = tokenized
            .par_iter()
            .map(|doc| {
                doc.iter()
                    .map(|ts| {
                        model
                            .model
                            .predict(&vectorize(ts, &vocab))
                            .map(|p| (p.label, p.score))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let records: Vec<PredictionRecord> = sentences
            .iter()
            .flatten()
            .zip(labels.iter().flatten())
            .map(|(s, &(label, score))| PredictionRecord {
                doc_id: s.doc_id.clone(),
                index: s.index,
                text: s.text.clone(),
                label,
                score,
            })
            .collect();
        run.write("predictions.jsonl", jsonl::to_jsonl_string(&records)?)?;
        Ok(labels
            .into_iter()
            .map(|doc| doc.into_iter().map(|(l, _)| l).collect::<Vec<_>>())
            .collect::<Vec<_>>())
    })?;

    run.stage(Stage::Shorten, |run| {
        let outputs: Vec<(String, String, String)> = docs
            .par_iter()
            .zip(&sentences)
            .zip(&labels)
            .map(|((doc, sents), labels)| {
                let short = shorten_with_labels(doc, sents.clone(), labels);
                let stats = serde_json::to_string_pretty(&short.stats())? + "\n";
                Ok((file_stem_for(&doc.id), short.render(doc), stats))
            })
            .collect::<Result<_>>()?;
        for (stem, text, stats) in outputs {
            let rel = format!("shortened/{stem}.txt");
            run.write(&rel, text)?;
            run.write(&format!("shortened/{stem}.stats.json"), stats)?;
            run.manifest.shortened.push(rel);
        }
        Ok(())
    })?;

    let (topic_model, assignments) = run.stage(Stage::Topics, |run| {
        let sensitive: Vec<TokenizedSentence> = tokenized
            .iter()
            .flatten()
            .zip(labels.iter().flatten())
            .filter(|(_, l)| l.is_sensitive())
            .map(|(ts, _)| ts.clone())
            .collect();
        let topics = default_topics();
        let filtered = filter_rare_terms(&sensitive, config.topics.min_policy_df, &all_seeds(&topics));
        let model = fit_labeled_lda(&filtered, &topics, &config.topics)?;
        let assignments: Vec<TopicAssignment> = sensitive
            .par_iter()
            .map(|ts| assign_topics(&model, ts, config.threshold))
            .collect();
        run.write("topics/model.json", model.to_json()?)?;
        run.write("topics/assignments.jsonl", jsonl::to_jsonl_string(&assignments)?)?;
        run.write(
            "topics/distribution.csv",
            topic_distribution(&assignments).to_csv(),
        )?;
        run.write(
            "topics/distribution_policy.csv",
            topic_distribution_by_policy(&assignments).to_csv(),
        )?;
        Ok((model, assignments))
    })?;

    run.stage(Stage::Report, |run| {
        let rendered: Vec<(String, String, String)> = docs
            .par_iter()
            .enumerate()
            .map(|(i, doc)| {
                let doc_assignments: Vec<TopicAssignment> = assignments
                    .iter()
                    .filter(|a| a.doc_id == doc.id)
                    .cloned()
                    .collect();
                let ap = annotate(
                    doc,
                    &sentences[i],
                    &labels[i],
                    &tokenized[i],
                    &doc_assignments,
                    Some(&topic_model),
                )?;
                Ok((
                    file_stem_for(&doc.id),
                    emit_highlight_html(&ap),
                    emit_graph_dot(&ap, None),
                ))
            })
            .collect::<Result<_>>()?;
        for (stem, html, dot) in rendered {
            run.write(&format!("reports/{stem}.html"), html)?;
            run.write(&format!("graphs/{stem}.dot"), dot)?;
        }
        Ok(())
    })?;
    Ok(())
}
