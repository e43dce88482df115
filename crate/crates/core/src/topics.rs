//! Data-practice topics: a seeded labeled-LDA model fitted by collapsed Gibbs
//! sampling, with each sentence treated as one document.
//!
//! Six fixed topics are anchored by seed stems. A seed stem gets a prior of
//! `beta * seed_boost` in its own topic and `beta` elsewhere, which pulls the
//! sampler's topics onto the predefined labels. With `lock_seeds` (the
//! default) seed tokens are also kept in their own topics during sampling, so
//! frequent seeds cannot drag a whole topic onto another label.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::preprocess::TokenizedSentence;
use crate::stem::stem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TopicName {
    Information,
    Collection,
    Sharing,
    Permission,
    Purpose,
    Technology,
}

impl TopicName {
    pub const ALL: [TopicName; 6] = [
        TopicName::Information,
        TopicName::Collection,
        TopicName::Sharing,
        TopicName::Permission,
        TopicName::Purpose,
        TopicName::Technology,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TopicName::Information => "Information",
            TopicName::Collection => "Collection",
            TopicName::Sharing => "Sharing",
            TopicName::Permission => "Permission",
            TopicName::Purpose => "Purpose",
            TopicName::Technology => "Technology",
        }
    }

    /// Lowercase identifier used in CSS classes and graph node ids.
    pub fn slug(self) -> &'static str {
        match self {
            TopicName::Information => "information",
            TopicName::Collection => "collection",
            TopicName::Sharing => "sharing",
            TopicName::Permission => "permission",
            TopicName::Purpose => "purpose",
            TopicName::Technology => "technology",
        }
    }
}

impl fmt::Display for TopicName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TopicName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TopicName::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown topic {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicSpec {
    pub name: TopicName,
    pub seed_stems: BTreeSet<String>,
}

impl TopicSpec {
    /// Seeds given as surface words; they are stemmed here.
    pub fn from_words(name: TopicName, words: &[&str]) -> Self {
        TopicSpec {
            name,
            seed_stems: words.iter().map(|w| stem(&w.to_lowercase())).collect(),
        }
    }
}

/// Seed words per topic: the topic's own name followed by its example words.
pub const DEFAULT_SEED_WORDS: [(TopicName, &[&str]); 6] = [
    (
        TopicName::Information,
        &[
            "information",
            "personal",
            "data",
            "email",
            "audio",
            "mailing",
            "address",
        ],
    ),
    (
        TopicName::Collection,
        &["collection", "collect", "access", "use", "store"],
    ),
    (
        TopicName::Sharing,
        &["sharing", "disclose", "share", "reveal", "party"],
    ),
    (
        TopicName::Permission,
        &["permission", "agree", "consent", "allow", "permit"],
    ),
    (TopicName::Purpose, &["purpose", "provide", "help", "offer"]),
    (
        TopicName::Technology,
        &["technology", "cookie", "device", "session", "service"],
    ),
];

pub fn default_topics() -> Vec<TopicSpec> {
    DEFAULT_SEED_WORDS
        .iter()
        .map(|(name, words)| TopicSpec::from_words(*name, words))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicConfig {
    pub alpha: f64,
    pub beta: f64,
    pub seed_boost: f64,
    pub iterations: usize,
    pub rng_seed: u64,
    pub min_policy_df: usize,
    /// Seed tokens may only be sampled into the topics they seed.
    #[serde(default = "default_lock_seeds")]
    pub lock_seeds: bool,
}

fn default_lock_seeds() -> bool {
    true
}

impl Default for TopicConfig {
    fn default() -> Self {
        TopicConfig {
            alpha: 0.5,
            beta: 0.01,
            seed_boost: 50.0,
            iterations: 500,
            rng_seed: 42,
            min_policy_df: 4,
            lock_seeds: true,
        }
    }
}

impl TopicConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.alpha) || !positive(self.beta) || !positive(self.seed_boost) {
            return Err(Error::InvalidConfig(
                "alpha, beta and seed_boost must be positive".into(),
            ));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        Ok(())
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.25;

/// Drops stems found in fewer than `min_policy_df` distinct policies; seed
/// stems always survive.
pub fn filter_rare_terms(
    corpus: &[TokenizedSentence],
    min_policy_df: usize,
    seeds: &BTreeSet<String>,
) -> Vec<TokenizedSentence> {
    let mut policies: HashMap<&str, BTreeSet<&str>> = HashMap::new();
    for s in corpus {
        for w in &s.stems {
            policies.entry(w.as_str()).or_default().insert(s.doc_id.as_str());
        }
    }
    let keep = |w: &str| seeds.contains(w) || policies.get(w).map_or(0, BTreeSet::len) >= min_policy_df;
    corpus
        .iter()
        .map(|s| TokenizedSentence {
            stems: s.stems.iter().filter(|w| keep(w)).cloned().collect(),
            ..s.clone()
        })
        .collect()
}

/// Union of all seed stems.
pub fn all_seeds(topics: &[TopicSpec]) -> BTreeSet<String> {
    topics.iter().flat_map(|t| t.seed_stems.iter().cloned()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub topics: Vec<TopicSpec>,
    pub vocabulary: Vec<String>,
    /// `phi[t][w]`: probability of vocabulary stem `w` under topic `t`.
    pub phi: Vec<Vec<f64>>,
    pub config: TopicConfig,
    index: HashMap<String, usize>,
}

impl TopicModel {
    fn new(topics: Vec<TopicSpec>, vocabulary: Vec<String>, phi: Vec<Vec<f64>>, config: TopicConfig) -> Self {
        let index = vocabulary
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        TopicModel {
            topics,
            vocabulary,
            phi,
            config,
            index,
        }
    }

    pub fn position(&self, stem: &str) -> Option<usize> {
        self.index.get(stem).copied()
    }

    pub fn phi_of(&self, topic: TopicName, stem: &str) -> Option<f64> {
        let t = self.topics.iter().position(|s| s.name == topic)?;
        self.position(stem).map(|w| self.phi[t][w])
    }

    /// The `n` most probable stems of a topic, ties by stem ascending.
    pub fn top_stems(&self, topic: TopicName, n: usize) -> Vec<(&str, f64)> {
        let Some(t) = self.topics.iter().position(|s| s.name == topic) else {
            return Vec::new();
        };
        let mut ranked: Vec<(&str, f64)> = self
            .vocabulary
            .iter()
            .map(String::as_str)
            .zip(self.phi[t].iter().copied())
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(n);
        ranked
    }

    pub fn to_file(&self) -> TopicModelFile {
        TopicModelFile {
            format_version: 1,
            alpha: self.config.alpha,
            beta: self.config.beta,
            seed_boost: self.config.seed_boost,
            iterations: self.config.iterations,
            rng_seed: self.config.rng_seed,
            min_policy_df: self.config.min_policy_df,
            lock_seeds: self.config.lock_seeds,
            topics: self
                .topics
                .iter()
                .map(|spec| TopicEntry {
                    name: spec.name,
                    seeds: spec.seed_stems.iter().cloned().collect(),
                    phi: self
                        .top_stems(spec.name, self.vocabulary.len())
                        .into_iter()
                        .map(|(w, p)| format!("{w}:{p}"))
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_file(file: TopicModelFile) -> Result<Self> {
        let vocabulary: BTreeSet<String> = file
            .topics
            .iter()
            .flat_map(|t| t.phi.iter())
            .map(|e| e.rsplit_once(':').map_or(e.as_str(), |(w, _)| w).to_string())
            .collect();
        let vocabulary: Vec<String> = vocabulary.into_iter().collect();
        let index: HashMap<&str, usize> = vocabulary
            .iter()
            .enumerate()
            .map(|(i, w)| (w.as_str(), i))
            .collect();
        let mut phi = Vec::with_capacity(file.topics.len());
        let mut topics = Vec::with_capacity(file.topics.len());
        for t in &file.topics {
            let mut row = vec![0.0; vocabulary.len()];
            for e in &t.phi {
                let (w, p) = e
                    .rsplit_once(':')
                    .ok_or_else(|| Error::parse("topic model", format!("bad phi entry {e:?}")))?;
                row[index[w]] = p
                    .parse()
                    .map_err(|_| Error::parse("topic model", format!("bad probability {p:?}")))?;
            }
            if row.iter().any(|&p| p <= 0.0) {
                return Err(Error::parse(
                    "topic model",
                    format!("topic {} does not cover the vocabulary", t.name),
                ));
            }
            phi.push(row);
            topics.push(TopicSpec {
                name: t.name,
                seed_stems: t.seeds.iter().cloned().collect(),
            });
        }
        let config = TopicConfig {
            alpha: file.alpha,
            beta: file.beta,
            seed_boost: file.seed_boost,
            iterations: file.iterations,
            rng_seed: file.rng_seed,
            min_policy_df: file.min_policy_df,
            lock_seeds: file.lock_seeds,
        };
        Ok(TopicModel::new(topics, vocabulary, phi, config))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonl::write_file(path, self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: TopicModelFile = serde_json::from_str(&jsonl::read_to_string(path)?)?;
        Self::from_file(file)
    }
}

/// On-disk topic model: hyperparameters plus, per topic, `stem:prob` entries
/// sorted by probability descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModelFile {
    pub format_version: u32,
    pub alpha: f64,
    pub beta: f64,
    pub seed_boost: f64,
    pub iterations: usize,
    pub rng_seed: u64,
    pub min_policy_df: usize,
    #[serde(default = "default_lock_seeds")]
    pub lock_seeds: bool,
    pub topics: Vec<TopicEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicEntry {
    pub name: TopicName,
    pub seeds: Vec<String>,
    pub phi: Vec<String>,
}

/// Fits the seeded topic model on (already filtered) sensitive sentences.
pub fn fit_labeled_lda(
    corpus: &[TokenizedSentence],
    topics: &[TopicSpec],
    config: &TopicConfig,
) -> Result<TopicModel> {
    config.validate()?;
    if topics.is_empty() {
        return Err(Error::InvalidConfig("no topics".into()));
    }
    let k = topics.len();

    let vocabulary: Vec<String> = corpus
        .iter()
        .flat_map(|s| s.stems.iter().cloned())
        .chain(all_seeds(topics))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<&str, usize> = vocabulary
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i))
        .collect();
    let v = vocabulary.len();

    let docs: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| s.stems.iter().map(|w| index[w.as_str()]).collect::<Vec<_>>())
        .filter(|d| !d.is_empty())
        .collect();
    if docs.is_empty() {
        return Err(Error::EmptyCorpus("no stems left for topic modelling".into()));
    }

    // Per-topic, per-word prior and its row sums.
    let mut seeded_in: Vec<Vec<usize>> = vec![Vec::new(); v];
    let mut beta_tw = vec![vec![config.beta; v]; k];
    for (t, spec) in topics.iter().enumerate() {
        for s in &spec.seed_stems {
            let w = index[s.as_str()];
            beta_tw[t][w] = config.beta * config.seed_boost;
            seeded_in[w].push(t);
        }
    }
    let beta_sum: Vec<f64> = beta_tw.iter().map(|row| row.iter().sum()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut n_tw = vec![vec![0u32; v]; k];
    let mut n_t = vec![0u32; k];
    let mut n_dt = vec![vec![0u32; k]; docs.len()];
    let mut z: Vec<Vec<usize>> = Vec::with_capacity(docs.len());
    for (d, doc) in docs.iter().enumerate() {
        let zd: Vec<usize> = doc
            .iter()
            .map(|&w| {
                seeded_in[w]
                    .first()
                    .copied()
                    .unwrap_or_else(|| rng.gen_range(0..k))
            })
            .collect();
        for (&w, &t) in doc.iter().zip(&zd) {
            n_tw[t][w] += 1;
            n_t[t] += 1;
            n_dt[d][t] += 1;
        }
        z.push(zd);
    }

    let mut weights = vec![0.0f64; k];
    for _ in 0..config.iterations {
        for (d, doc) in docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = z[d][i];
                n_tw[old][w] -= 1;
                n_t[old] -= 1;
                n_dt[d][old] -= 1;

                let mut total = 0.0;
                let locked = config.lock_seeds && !seeded_in[w].is_empty();
                for t in 0..k {
                    if locked && !seeded_in[w].contains(&t) {
                        weights[t] = total;
                        continue;
                    }
                    let p = (n_dt[d][t] as f64 + config.alpha) * (n_tw[t][w] as f64 + beta_tw[t][w])
                        / (n_t[t] as f64 + beta_sum[t]);
                    total += p;
                    weights[t] = total;
                }
                let u = rng.gen::<f64>() * total;
                let new = weights.iter().position(|&c| u < c).unwrap_or(k - 1);

                z[d][i] = new;
                n_tw[new][w] += 1;
                n_t[new] += 1;
                n_dt[d][new] += 1;
            }
        }
    }

    let phi = (0..k)
        .map(|t| {
            let denom = n_t[t] as f64 + beta_sum[t];
            (0..v)
                .map(|w| (n_tw[t][w] as f64 + beta_tw[t][w]) / denom)
                .collect()
        })
        .collect();
    Ok(TopicModel::new(topics.to_vec(), vocabulary, phi, config.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicAssignment {
    pub doc_id: String,
    pub sentence_index: usize,
    pub scores: BTreeMap<TopicName, f64>,
    pub assigned: Vec<TopicName>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

impl TopicAssignment {
    pub fn has(&self, topic: TopicName) -> bool {
        self.assigned.contains(&topic)
    }
}

/// Scores a sentence by the normalised sum of its stems' topic probabilities
/// and assigns every topic scoring at least `threshold`, or the best topic
/// alone when none does. Sentences with no in-vocabulary stem fall back to
/// Information with uniform scores.
pub fn assign_topics(model: &TopicModel, sentence: &TokenizedSentence, threshold: f64) -> TopicAssignment {
    let k = model.topics.len();
    let mut raw = vec![0.0f64; k];
    let mut known = 0usize;
    for w in sentence.stems.iter().filter_map(|s| model.position(s)) {
        known += 1;
        for (t, r) in raw.iter_mut().enumerate() {
            *r += model.phi[t][w];
        }
    }

    let names = model.topics.iter().map(|t| t.name);
    if known == 0 {
        let uniform = 1.0 / k as f64;
        return TopicAssignment {
            doc_id: sentence.doc_id.clone(),
            sentence_index: sentence.sentence_index,
            scores: names.map(|n| (n, uniform)).collect(),
            assigned: vec![TopicName::Information],
            fallback: true,
        };
    }

    let total: f64 = raw.iter().sum();
    let scores: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let mut assigned: Vec<TopicName> = names
        .clone()
        .zip(&scores)
        .filter(|(_, &s)| s >= threshold)
        .map(|(n, _)| n)
        .collect();
    if assigned.is_empty() {
        let best = (0..k)
            .max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a)))
            .expect("at least one topic");
        assigned.push(model.topics[best].name);
    }
    assigned.sort();
    TopicAssignment {
        doc_id: sentence.doc_id.clone(),
        sentence_index: sentence.sentence_index,
        scores: names.zip(scores).collect(),
        assigned,
        fallback: false,
    }
}

/// Fraction of units (sentences or policies) carrying each topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicDistribution {
    pub fractions: BTreeMap<TopicName, f64>,
}

impl TopicDistribution {
    pub fn get(&self, topic: TopicName) -> f64 {
        self.fractions.get(&topic).copied().unwrap_or(0.0)
    }

    /// `topic,fraction` CSV in topic order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("topic,fraction\n");
        for t in TopicName::ALL {
            out.push_str(&format!("{},{}\n", t, self.get(t)));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Sentence,
    Policy,
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sentence" => Ok(Granularity::Sentence),
            "policy" => Ok(Granularity::Policy),
            other => Err(Error::InvalidConfig(format!("unknown granularity {other:?}"))),
        }
    }
}

/// Per topic: |sentences assigned the topic| / |sentences|.
pub fn topic_distribution(assignments: &[TopicAssignment]) -> TopicDistribution {
    let n = assignments.len();
    let fractions = TopicName::ALL
        .into_iter()
        .map(|t| {
            let c = assignments.iter().filter(|a| a.has(t)).count();
            (t, if n == 0 { 0.0 } else { c as f64 / n as f64 })
        })
        .collect();
    TopicDistribution { fractions }
}

/// Per topic: |policies with at least one sentence assigned it| / |policies|.
pub fn topic_distribution_by_policy(assignments: &[TopicAssignment]) -> TopicDistribution {
    let mut by_policy: BTreeMap<&str, BTreeSet<TopicName>> = BTreeMap::new();
    for a in assignments {
        by_policy
            .entry(a.doc_id.as_str())
            .or_default()
            .extend(a.assigned.iter().copied());
    }
    let n = by_policy.len();
    let fractions = TopicName::ALL
        .into_iter()
        .map(|t| {
            let c = by_policy.values().filter(|s| s.contains(&t)).count();
            (t, if n == 0 { 0.0 } else { c as f64 / n as f64 })
        })
        .collect();
    TopicDistribution { fractions }
}

pub fn distribution(assignments: &[TopicAssignment], by: Granularity) -> TopicDistribution {
    match by {
        Granularity::Sentence => topic_distribution(assignments),
        Granularity::Policy => topic_distribution_by_policy(assignments),
    }
}
