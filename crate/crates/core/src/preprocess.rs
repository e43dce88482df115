//! Tokenization, stop-word removal, stemming and term frequencies.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Sentence, SentenceLabel, SentenceRecord};
use crate::error::Result;
use crate::jsonl;
use crate::stem::stem;

/// Stems shorter than this are dropped.
pub const MIN_STEM_LEN: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedSentence {
    pub doc_id: String,
    pub sentence_index: usize,
    pub stems: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<SentenceLabel>,
}

/// A versioned set of lowercase stop words.
///
/// Besides the words themselves the list keeps their stems, so that a
/// stemmed token can never reproduce a stop word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordList {
    version: String,
    words: BTreeSet<String>,
    stems: BTreeSet<String>,
}

const DEFAULT_STOPWORDS: &str = include_str!("stopwords.txt");
pub const DEFAULT_STOPLIST_VERSION: &str = "en-ir-175-v1";

impl StopwordList {
    pub fn new<I, S>(version: impl Into<String>, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words: BTreeSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        let stems = words.iter().map(|w| stem(w)).collect();
        StopwordList {
            version: version.into(),
            words,
            stems,
        }
    }

    /// Parses one word per line; `#` starts a comment.
    pub fn parse(version: impl Into<String>, text: &str) -> Self {
        Self::new(
            version,
            text.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim())
                .filter(|l| !l.is_empty()),
        )
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = jsonl::read_to_string(path)?;
        let version = format!("file:{}", path.file_name().unwrap_or_default().to_string_lossy());
        Ok(Self::parse(version, &text))
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    /// Whether `s` is the stem of some stop word.
    pub fn contains_stem(&self, s: &str) -> bool {
        self.stems.contains(s)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

impl Default for StopwordList {
    fn default() -> Self {
        Self::parse(DEFAULT_STOPLIST_VERSION, DEFAULT_STOPWORDS)
    }
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Lowercase runs of letters; an apostrophe between two letters stays in the
/// word (normalised to `'`).
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphabetic() {
            current.extend(c.to_lowercase());
        } else if is_apostrophe(c)
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphabetic())
        {
            current.push('\'');
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

pub fn remove_stopwords(tokens: Vec<String>, stoplist: &StopwordList) -> Vec<String> {
    tokens.into_iter().filter(|t| !stoplist.contains(t)).collect()
}

/// tokenize -> remove stop words -> stem, dropping short or stop-word stems.
pub fn stems_of(text: &str, stoplist: &StopwordList) -> Vec<String> {
    remove_stopwords(tokenize(text), stoplist)
        .iter()
        .map(|t| stem(t))
        .filter(|s| s.chars().count() >= MIN_STEM_LEN && !stoplist.contains_stem(s))
        .collect()
}

pub fn preprocess_sentence(sentence: &Sentence, stoplist: &StopwordList) -> TokenizedSentence {
    TokenizedSentence {
        doc_id: sentence.doc_id.clone(),
        sentence_index: sentence.index,
        stems: stems_of(&sentence.text, stoplist),
        label: None,
    }
}

pub fn preprocess_record(record: &SentenceRecord, stoplist: &StopwordList) -> TokenizedSentence {
    TokenizedSentence {
        doc_id: record.doc_id.clone(),
        sentence_index: record.index,
        stems: stems_of(&record.text, stoplist),
        label: record.label,
    }
}

/// Stem occurrence counts over some scope.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTable {
    counts: BTreeMap<String, u64>,
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, stem: &str, n: u64) {
        *self.counts.entry(stem.to_string()).or_insert(0) += n;
    }

    /// Adds every count of `other`; associative and commutative.
    pub fn merge(&mut self, other: &FrequencyTable) {
        for (s, &n) in &other.counts {
            self.add(s, n);
        }
    }

    pub fn get(&self, stem: &str) -> u64 {
        self.counts.get(stem).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(s, &n)| (s.as_str(), n))
    }

    /// Entries by count descending, then stem ascending.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut entries: Vec<_> = self.iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        entries
    }

    /// `stem,count` CSV in ranked order, with header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stem,count\n");
        for (s, n) in self.ranked() {
            out.push_str(&format!("{s},{n}\n"));
        }
        out
    }
}

impl<'a> FromIterator<&'a str> for FrequencyTable {
    fn from_iter<T: IntoIterator<Item = &'a str>>(iter: T) -> Self {
        let mut table = FrequencyTable::new();
        for s in iter {
            table.add(s, 1);
        }
        table
    }
}

pub fn term_frequency(sentences: &[TokenizedSentence]) -> FrequencyTable {
    sentences
        .iter()
        .flat_map(|s| s.stems.iter().map(String::as_str))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHARING_SENTENCE: &str = "We may share Personal Information: With our family of affiliated companies and brands for the purposes described in this Privacy Statement.";

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("... !!! 2018").is_empty());
        assert_eq!(
            tokenize("We may share Personal Information."),
            toks(&["we", "may", "share", "personal", "information"])
        );
        assert_eq!(
            tokenize("IoT-enabled devices (2018)!"),
            toks(&["iot", "enabled", "devices"])
        );
        assert_eq!(
            tokenize("We don't sell; users’ 'quoted' data"),
            toks(&["we", "don't", "sell", "users", "quoted", "data"])
        );
    }

    #[test]
    fn stop_words_of_sharing_sentence() {
        let kept = remove_stopwords(tokenize(SHARING_SENTENCE), &StopwordList::default());
        assert_eq!(
            kept,
            toks(&[
                "share",
                "personal",
                "information",
                "family",
                "affiliated",
                "companies",
                "brands",
                "purposes",
                "described",
                "privacy",
                "statement"
            ])
        );
    }

    #[test]
    fn remove_stopwords_trivial() {
        let sl = StopwordList::default();
        assert!(remove_stopwords(vec![], &sl).is_empty());
        assert!(remove_stopwords(toks(&["the", "the", "the"]), &sl).is_empty());
    }

    #[test]
    fn default_list_shape() {
        let sl = StopwordList::default();
        assert_eq!(sl.len(), 175);
        assert_eq!(sl.version(), DEFAULT_STOPLIST_VERSION);
        assert!(sl.words().all(|w| w == w.to_lowercase()));
        // Stem closure.
        assert!(sl.contains_stem("wa"));
        assert!(sl.contains_stem("have"));
    }

    #[test]
    fn sharing_sentence_stems() {
        let stems = stems_of(SHARING_SENTENCE, &StopwordList::default());
        assert_eq!(
            stems,
            toks(&[
                "share",
                "person",
                "inform",
                "famili",
                "affili",
                "compani",
                "brand",
                "purpos",
                "describ",
                "privaci",
                "statement"
            ])
        );
    }

    #[test]
    fn all_stop_words_sentence_is_empty() {
        let s = Sentence {
            doc_id: "d".into(),
            index: 0,
            text: "The of and.".into(),
            char_span: (0, 11),
        };
        assert!(preprocess_sentence(&s, &StopwordList::default()).stems.is_empty());
    }

    #[test]
    fn stemmed_stop_words_do_not_leak() {
        // "doings" is not listed but stems to "do".
        let stems = stems_of("doings collect", &StopwordList::default());
        assert_eq!(stems, toks(&["collect"]));
    }

    #[test]
    fn collect_frequency_pools_derivations() {
        let sl = StopwordList::default();
        let sentences: Vec<TokenizedSentence> = [
            "We collect information on how your Kinect device and platform software are functioning.",
            "Voice data may be collected to enable search and to control the console.",
            "Kinect collects and uses body recognition data to enable you to control and play games.",
        ]
        .iter()
        .enumerate()
        .map(|(i, t)| TokenizedSentence {
            doc_id: "kinect".into(),
            sentence_index: i,
            stems: stems_of(t, &sl),
            label: None,
        })
        .collect();
        let f = term_frequency(&sentences);
        assert_eq!(f.get("collect"), 3);
        let total: usize = sentences.iter().map(|s| s.stems.len()).sum();
        assert_eq!(f.total() as usize, total);
        assert!(term_frequency(&[]).is_empty());
    }

    #[test]
    fn frequency_csv_order() {
        let f: FrequencyTable = ["b", "a", "c", "a", "b", "d"].into_iter().collect();
        assert_eq!(f.to_csv(), "stem,count\na,2\nb,2\nc,1\nd,1\n");
    }

    #[test]
    fn custom_stoplist_parse() {
        let sl = StopwordList::parse("t", "# comment\nThe\n\nand # trailing\n");
        assert!(sl.contains("the"));
        assert!(sl.contains("and"));
        assert_eq!(sl.len(), 2);
    }
}
