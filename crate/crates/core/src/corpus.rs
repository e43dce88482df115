//! Policy loading and sentence segmentation.
//!
//! A corpus is a directory of plain-text policies, one per `.txt` file, with an
//! optional `manifest.json` sidecar mapping file names to their source kind.
//! Every document is split into ordered [`Sentence`]s whose byte spans point
//! back into the original text.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

/// Where a policy came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Iot,
    Mobile,
    #[default]
    Unknown,
}

/// A sentence either describes a data practice / user choice or it does not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentenceLabel {
    Sensitive,
    NonSensitive,
}

impl SentenceLabel {
    pub const ALL: [SentenceLabel; 2] = [SentenceLabel::Sensitive, SentenceLabel::NonSensitive];

    pub fn as_str(self) -> &'static str {
        match self {
            SentenceLabel::Sensitive => "sensitive",
            SentenceLabel::NonSensitive => "non_sensitive",
        }
    }

    pub fn is_sensitive(self) -> bool {
        self == SentenceLabel::Sensitive
    }
}

impl fmt::Display for SentenceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SentenceLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sensitive" => Ok(SentenceLabel::Sensitive),
            "non_sensitive" => Ok(SentenceLabel::NonSensitive),
            other => Err(Error::InvalidInput(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDocument {
    pub id: String,
    pub title: String,
    pub source_kind: SourceKind,
    pub raw_text: String,
}

impl PolicyDocument {
    /// Builds a document from text, using the first non-blank line as title.
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>) -> Self {
        let raw_text = raw_text.into();
        let title = raw_text
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .map(|l| l.chars().take(120).collect())
            .unwrap_or_default();
        PolicyDocument {
            id: id.into(),
            title,
            source_kind: SourceKind::Unknown,
            raw_text,
        }
    }

    pub fn with_source_kind(mut self, kind: SourceKind) -> Self {
        self.source_kind = kind;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub index: usize,
    pub text: String,
    /// Byte offsets `[start, end)` into the document's raw text.
    pub char_span: (usize, usize),
}

/// One line of the sentence JSONL format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub doc_id: String,
    pub index: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<SentenceLabel>,
}

impl From<&Sentence> for SentenceRecord {
    fn from(s: &Sentence) -> Self {
        SentenceRecord {
            doc_id: s.doc_id.clone(),
            index: s.index,
            text: s.text.clone(),
            label: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadIssue {
    pub path: PathBuf,
    pub message: String,
}

/// Result of loading a corpus: documents plus per-file problems.
#[derive(Debug, Default)]
pub struct LoadReport {
    pub documents: Vec<PolicyDocument>,
    pub errors: Vec<LoadIssue>,
    pub warnings: Vec<LoadIssue>,
}

/// Sidecar mapping `file name -> source kind`.
pub type Manifest = BTreeMap<String, SourceKind>;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Loads every `.txt` file of a directory, or a single file.
///
/// Only a missing path is fatal; unreadable files are reported per file and
/// empty files are skipped with a warning.
pub fn load_corpus(path: &Path) -> Result<LoadReport> {
    if path.is_file() {
        return Ok(load_files(&[path.to_path_buf()], &Manifest::new()));
    }
    let entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        let p = entry.path();
        if p.is_file() && p.extension().is_some_and(|ext| ext == "txt") {
            files.push(p);
        }
    }
    let manifest_path = path.join(MANIFEST_FILE);
    let manifest = if manifest_path.is_file() {
        let text = jsonl::read_to_string(&manifest_path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::parse(manifest_path.display().to_string(), e.to_string()))?
    } else {
        Manifest::new()
    };
    Ok(load_files(&files, &manifest))
}

/// Loads an explicit list of files, ordered by file name.
pub fn load_files(files: &[PathBuf], manifest: &Manifest) -> LoadReport {
    let mut files: Vec<&PathBuf> = files.iter().collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()).then_with(|| a.cmp(b)));

    let mut report = LoadReport::default();
    let mut seen = HashSet::new();
    for path in files {
        let issue = |message: String| LoadIssue {
            path: path.clone(),
            message,
        };
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) => {
                report.errors.push(issue(e.to_string()));
                continue;
            }
        };
        let raw_text = match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => {
                let lossy = String::from_utf8_lossy(e.as_bytes()).into_owned();
                log::warn!("{}: invalid UTF-8 replaced", path.display());
                report
                    .warnings
                    .push(issue("invalid UTF-8 bytes replaced with U+FFFD".into()));
                lossy
            }
        };
        if raw_text.trim().is_empty() {
            log::warn!("{}: empty file skipped", path.display());
            report.warnings.push(issue("empty file skipped".into()));
            continue;
        }
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if !seen.insert(id.clone()) {
            report.errors.push(issue(format!("duplicate document id {id:?}")));
            continue;
        }
        let file_name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let kind = manifest.get(&file_name).copied().unwrap_or_default();
        report
            .documents
            .push(PolicyDocument::new(id, raw_text).with_source_kind(kind));
    }
    report
}

/// Abbreviations after which a period never ends a sentence.
const HARD_ABBREVIATIONS: &[&str] = &[
    "e.g.", "i.e.", "mr.", "mrs.", "ms.", "dr.", "prof.", "vs.", "cf.", "no.", "approx.", "fig.", "jr.",
    "sr.", "st.", "viz.", "esp.",
];

/// Abbreviations that end a sentence only when the next word is not lowercase.
const SOFT_ABBREVIATIONS: &[&str] = &["etc.", "inc.", "ltd.", "co.", "corp.", "llc.", "al."];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '}', '\u{201D}', '\u{2019}', '\u{00BB}'];
const OPENERS: &[char] = &['"', '\'', '(', '[', '{', '\u{201C}', '\u{2018}', '\u{00AB}'];

pub fn segment_sentences(doc: &PolicyDocument) -> Vec<Sentence> {
    segment_text(&doc.id, &doc.raw_text)
}

/// Splits `text` into sentences.
///
/// Boundaries: `.`, `?`, `!` or `;` (plus any closing quotes or brackets)
/// followed by whitespace or end of text; a blank line; a line that starts
/// with a bullet marker. Periods after abbreviations, initials and list
/// enumerators are guarded.
pub fn segment_text(doc_id: &str, text: &str) -> Vec<Sentence> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut pos = 0;

    while let Some(c) = text[pos..].chars().next() {
        let next = pos + c.len_utf8();
        let Some(s) = start else {
            if !c.is_whitespace() {
                start = Some(pos);
            }
            pos = next;
            continue;
        };

        if c == '\n' && breaks_after_newline(&text[next..]) {
            spans.push((s, s + text[s..pos].trim_end().len()));
            start = None;
            pos = next;
            continue;
        }

        if matches!(c, '.' | '?' | '!' | ';') {
            let mut end = next;
            while let Some(cl) = text[end..].chars().next().filter(|ch| CLOSERS.contains(ch)) {
                end += cl.len_utf8();
            }
            let at_gap = text[end..].chars().next().is_none_or(char::is_whitespace);
            if at_gap && !(c == '.' && period_is_guarded(text, s, pos, end)) {
                spans.push((s, end));
                start = None;
                pos = end;
                continue;
            }
        }
        pos = next;
    }
    if let Some(s) = start {
        spans.push((s, s + text[s..].trim_end().len()));
    }

    spans
        .into_iter()
        .filter(|&(a, b)| b > a)
        .enumerate()
        .map(|(index, (a, b))| Sentence {
            doc_id: doc_id.to_string(),
            index,
            text: text[a..b].to_string(),
            char_span: (a, b),
        })
        .collect()
}

/// `rest` is the text right after a newline.
fn breaks_after_newline(rest: &str) -> bool {
    let line_end = rest.find('\n').unwrap_or(rest.len());
    let line = &rest[..line_end];
    if line.trim().is_empty() {
        // Blank line, unless it is trailing whitespace at end of text (handled by caller).
        return line_end < rest.len();
    }
    starts_with_bullet(line.trim_start())
}

fn starts_with_bullet(line: &str) -> bool {
    let mut chars = line.chars();
    match chars.next() {
        Some('-' | '*' | '\u{2022}' | '\u{00B7}' | '\u{2013}') => {
            chars.next().is_some_and(char::is_whitespace)
        }
        Some(d) if d.is_ascii_digit() => {
            let rest = line.trim_start_matches(|ch: char| ch.is_ascii_digit());
            let mut rc = rest.chars();
            matches!(rc.next(), Some('.' | ')')) && rc.next().is_some_and(char::is_whitespace)
        }
        _ => false,
    }
}

/// Whether the period at `dot` (sentence started at `sent_start`, candidate
/// end at `end`) belongs to an abbreviation rather than ending the sentence.
fn period_is_guarded(text: &str, sent_start: usize, dot: usize, end: usize) -> bool {
    let token_start = text[sent_start..dot]
        .rfind(char::is_whitespace)
        .map(|i| sent_start + i + 1)
        .unwrap_or(sent_start);
    let raw_token = &text[token_start..=dot];
    let token = raw_token.trim_start_matches(OPENERS).to_lowercase();

    if HARD_ABBREVIATIONS.contains(&token.as_str()) {
        return true;
    }

    let body = &token[..token.len() - 1];
    if !body.is_empty() && body.chars().all(|c| c.is_ascii_digit()) {
        // "1." opening a line is a list enumerator.
        let line_start = text[..token_start].rfind('\n').map(|i| i + 1).unwrap_or(0);
        if text[line_start..token_start].trim().is_empty() {
            return true;
        }
    }

    let single_letter = {
        let mut cs = body.chars();
        matches!((cs.next(), cs.next()), (Some(c), None) if c.is_alphabetic())
    };
    let acronym = body.len() >= 3
        && body.split('.').all(|p| {
            let mut cs = p.chars();
            matches!((cs.next(), cs.next()), (Some(c), None) if c.is_alphabetic())
        });
    if single_letter || acronym || SOFT_ABBREVIATIONS.contains(&token.as_str()) {
        let following = text[end..].trim_start().chars().next();
        return following.is_some_and(char::is_lowercase);
    }
    false
}

/// Gold labels keyed by `(doc_id, sentence index)`.
#[derive(Debug, Clone, Default)]
pub struct LabelSet {
    labels: HashMap<(String, usize), SentenceLabel>,
}

impl LabelSet {
    pub fn from_records(records: &[SentenceRecord]) -> Self {
        let labels = records
            .iter()
            .filter_map(|r| r.label.map(|l| ((r.doc_id.clone(), r.index), l)))
            .collect();
        LabelSet { labels }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let records: Vec<SentenceRecord> = jsonl::read_jsonl(path)?;
        Ok(Self::from_records(&records))
    }

    pub fn get(&self, doc_id: &str, index: usize) -> Option<SentenceLabel> {
        self.labels.get(&(doc_id.to_string(), index)).copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Sentence records for a whole corpus, labelled where `labels` has an entry.
pub fn sentence_records(docs: &[PolicyDocument], labels: Option<&LabelSet>) -> Vec<SentenceRecord> {
    docs.iter()
        .flat_map(segment_sentences)
        .map(|s| {
            let mut r = SentenceRecord::from(&s);
            r.label = labels.and_then(|l| l.get(&s.doc_id, s.index));
            r
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(text: &str) -> Vec<String> {
        segment_text("d", text).into_iter().map(|s| s.text).collect()
    }

    #[test]
    fn three_terminators() {
        assert_eq!(texts("A. B? C."), ["A.", "B?", "C."]);
    }

    #[test]
    fn empty_text_has_no_sentences() {
        assert!(texts("").is_empty());
        assert!(texts("  \n\t ").is_empty());
    }

    #[test]
    fn no_terminator_is_one_sentence() {
        assert_eq!(texts("We collect data"), ["We collect data"]);
    }

    #[test]
    fn semicolon_and_exclamation_split() {
        assert_eq!(
            texts("We collect data; we share it! Really"),
            ["We collect data;", "we share it!", "Really"]
        );
    }

    #[test]
    fn abbreviations_do_not_split() {
        assert_eq!(
            texts("We use tools, e.g. Google Analytics, to measure use. Done."),
            ["We use tools, e.g. Google Analytics, to measure use.", "Done."]
        );
        assert_eq!(
            texts("Amazon.com, Inc. and its affiliates (i.e. Audible) collect data."),
            ["Amazon.com, Inc. and its affiliates (i.e. Audible) collect data."]
        );
        assert_eq!(
            texts("We follow U.S. law. We comply."),
            ["We follow U.S. law.", "We comply."]
        );
        assert_eq!(
            texts("Name, email, etc. We also log."),
            ["Name, email, etc.", "We also log."]
        );
        assert_eq!(texts("Version 1.5 applies."), ["Version 1.5 applies."]);
    }

    #[test]
    fn closing_quotes_stay_with_sentence() {
        assert_eq!(
            texts("\"Alexa\" means this.\" Next (see below.) Last"),
            ["\"Alexa\" means this.\"", "Next (see below.)", "Last"]
        );
    }

    #[test]
    fn bullets_and_paragraphs() {
        let text = "We collect:\n- your name\n- your email address\n\nHeading\n\nBody text.\n1. first item\n2. second item";
        assert_eq!(
            texts(text),
            [
                "We collect:",
                "- your name",
                "- your email address",
                "Heading",
                "Body text.",
                "1. first item",
                "2. second item"
            ]
        );
    }

    #[test]
    fn wrapped_lines_join() {
        assert_eq!(
            texts("We collect your\nname and email.\nThen more."),
            ["We collect your\nname and email.", "Then more."]
        );
    }

    #[test]
    fn spans_slice_back_to_text() {
        let text = "  Héllo wörld. Ünïcode?  \n\n- ok ";
        for s in segment_text("d", text) {
            assert_eq!(&text[s.char_span.0..s.char_span.1], s.text);
        }
    }

    #[test]
    fn label_parse_roundtrip() {
        for l in SentenceLabel::ALL {
            assert_eq!(l.as_str().parse::<SentenceLabel>().unwrap(), l);
        }
        assert!("maybe".parse::<SentenceLabel>().is_err());
    }

    #[test]
    fn load_orders_by_file_name_and_skips_empty() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.txt"), "B policy.").unwrap();
        std::fs::write(dir.path().join("a.txt"), "A policy.").unwrap();
        std::fs::write(dir.path().join("c.txt"), "   \n").unwrap();
        std::fs::write(dir.path().join("notes.md"), "ignored").unwrap();
        std::fs::write(dir.path().join(MANIFEST_FILE), r#"{"a.txt":"iot"}"#).unwrap();
        let report = load_corpus(dir.path()).unwrap();
        let ids: Vec<_> = report.documents.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(report.documents[0].source_kind, SourceKind::Iot);
        assert_eq!(report.documents[1].source_kind, SourceKind::Unknown);
        assert_eq!(report.warnings.len(), 1);
        assert!(report.errors.is_empty());
    }

    #[test]
    fn load_empty_dir() {
        let dir = tempfile::tempdir().unwrap();
        let report = load_corpus(dir.path()).unwrap();
        assert!(report.documents.is_empty());
    }

    #[test]
    fn invalid_utf8_is_replaced() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("x.txt"), b"We collect \xff data.").unwrap();
        let report = load_corpus(dir.path()).unwrap();
        assert_eq!(report.documents.len(), 1);
        assert!(report.documents[0].raw_text.contains('\u{FFFD}'));
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn unreadable_file_is_collected_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "Fine.").unwrap();
        let missing = dir.path().join("missing.txt");
        let report = load_files(&[dir.path().join("a.txt"), missing], &Manifest::new());
        assert_eq!(report.documents.len(), 1);
        assert_eq!(report.errors.len(), 1);
    }

    #[test]
    fn missing_dir_is_an_error() {
        assert!(load_corpus(Path::new("/definitely/not/here")).is_err());
    }
}
