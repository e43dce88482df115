//! Helpers shared by the integration tests: fixture loading, a gold-label
//! annotation of the fixture corpus, and structural checkers for DOT and HTML.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use policylens::corpus::{load_corpus, segment_sentences, LabelSet, PolicyDocument, SentenceLabel};
use policylens::features::{build_dataset, build_vocabulary, Dataset};
use policylens::preprocess::{preprocess_sentence, term_frequency, StopwordList, TokenizedSentence};
use policylens::report::{annotate, AnnotatedPolicy};
use policylens::topics::{
    all_seeds, assign_topics, default_topics, filter_rare_terms, fit_labeled_lda, TopicConfig, TopicModel,
    DEFAULT_THRESHOLD,
};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn corpus_dir() -> PathBuf {
    fixtures().join("corpus")
}

pub fn labels_path() -> PathBuf {
    fixtures().join("labels.jsonl")
}

pub fn fixture_docs() -> Vec<PolicyDocument> {
    load_corpus(&corpus_dir()).unwrap().documents
}

pub fn gold_labels() -> LabelSet {
    LabelSet::load(&labels_path()).unwrap()
}

/// The fixture corpus, tokenized, with the gold label of every sentence.
pub struct GoldCorpus {
    pub docs: Vec<PolicyDocument>,
    pub tokenized: Vec<Vec<TokenizedSentence>>,
    pub labels: Vec<Vec<SentenceLabel>>,
}

impl GoldCorpus {
    pub fn load() -> Self {
        let docs = fixture_docs();
        let gold = gold_labels();
        let stoplist = StopwordList::default();
        let mut tokenized = Vec::new();
        let mut labels = Vec::new();
        for doc in &docs {
            let sentences = segment_sentences(doc);
            labels.push(
                sentences
                    .iter()
                    .map(|s| {
                        gold.get(&s.doc_id, s.index)
                            .expect("every fixture sentence is labelled")
                    })
                    .collect(),
            );
            tokenized.push(
                sentences
                    .iter()
                    .map(|s| preprocess_sentence(s, &stoplist))
                    .collect(),
            );
        }
        GoldCorpus {
            docs,
            tokenized,
            labels,
        }
    }

    pub fn sensitive(&self) -> Vec<TokenizedSentence> {
        self.tokenized
            .iter()
            .flatten()
            .zip(self.labels.iter().flatten())
            .filter(|(_, l)| l.is_sensitive())
            .map(|(ts, _)| ts.clone())
            .collect()
    }

    /// Labelled feature rows over the top-`top_k` vocabulary of the corpus.
    pub fn dataset(&self, top_k: usize) -> Dataset {
        let labelled: Vec<TokenizedSentence> = self
            .tokenized
            .iter()
            .flatten()
            .zip(self.labels.iter().flatten())
            .map(|(ts, &l)| TokenizedSentence {
                label: Some(l),
                ..ts.clone()
            })
            .collect();
        let vocab = build_vocabulary(&term_frequency(&labelled), top_k).unwrap();
        build_dataset(&labelled, &vocab).unwrap()
    }

    /// Topic model fitted on the gold-sensitive sentences, as the pipeline does.
    pub fn topic_model(&self, config: &TopicConfig) -> TopicModel {
        let topics = default_topics();
        let filtered = filter_rare_terms(&self.sensitive(), config.min_policy_df, &all_seeds(&topics));
        fit_labeled_lda(&filtered, &topics, config).unwrap()
    }

    pub fn annotations(&self, model: &TopicModel) -> Vec<AnnotatedPolicy> {
        self.docs
            .iter()
            .zip(&self.tokenized)
            .zip(&self.labels)
            .map(|((doc, ts), labels)| {
                let assignments: Vec<_> = ts
                    .iter()
                    .zip(labels)
                    .filter(|(_, l)| l.is_sensitive())
                    .map(|(t, _)| assign_topics(model, t, DEFAULT_THRESHOLD))
                    .collect();
                annotate(
                    doc,
                    &segment_sentences(doc),
                    labels,
                    ts,
                    &assignments,
                    Some(model),
                )
                .unwrap()
            })
            .collect()
    }
}

/// Compares `actual` with a golden file, or rewrites the file when
/// `POLICYLENS_UPDATE_GOLDEN` is set.
pub fn check_golden(path: &Path, actual: &str) -> Result<(), String> {
    if std::env::var_os("POLICYLENS_UPDATE_GOLDEN").is_some() {
        std::fs::write(path, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        let line = expected
            .lines()
            .zip(actual.lines())
            .position(|(a, b)| a != b)
            .map_or_else(|| "length".to_string(), |i| format!("line {}", i + 1));
        Err(format!("{} differs at {line}", path.display()))
    }
}

// ---------------------------------------------------------------------------
// DOT

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Id(String),
    Punct(char),
    Arrow(&'static str),
}

fn dot_tokens(src: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line_start = true;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line_start = true;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' && line_start {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        line_start = false;
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            loop {
                if i + 1 >= chars.len() {
                    return Err("unterminated comment".into());
                }
                if chars[i] == '*' && chars[i + 1] == '/' {
                    i += 2;
                    break;
                }
                i += 1;
            }
            continue;
        }
        if c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err("unterminated string".into()),
                    Some('"') => break,
                    Some('\\') => {
                        let next = *chars.get(i + 1).ok_or("dangling escape")?;
                        s.push('\\');
                        s.push(next);
                        i += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            i += 1;
            out.push(Tok::Id(s));
            continue;
        }
        if c == '-' && matches!(chars.get(i + 1), Some('>') | Some('-')) {
            out.push(Tok::Arrow(if chars[i + 1] == '>' { "->" } else { "--" }));
            i += 2;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Id(chars[start..i].iter().collect()));
            continue;
        }
        if c.is_ascii_digit() || c == '.' || c == '-' {
            let start = i;
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            out.push(Tok::Id(chars[start..i].iter().collect()));
            continue;
        }
        if "{}[]=;,:".contains(c) {
            out.push(Tok::Punct(c));
            i += 1;
            continue;
        }
        return Err(format!("unexpected character {c:?}"));
    }
    Ok(out)
}

struct DotParser {
    toks: Vec<Tok>,
    pos: usize,
    directed: bool,
}

impl DotParser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Id(s)) if s.eq_ignore_ascii_case(kw))
    }

    fn punct(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), String> {
        if self.punct(c) {
            Ok(())
        } else {
            Err(format!(
                "expected {c:?} at token {} ({:?})",
                self.pos,
                self.peek()
            ))
        }
    }

    fn id(&mut self) -> Result<String, String> {
        match self.peek() {
            Some(Tok::Id(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            other => Err(format!(
                "expected identifier at token {}, found {other:?}",
                self.pos
            )),
        }
    }

    fn graph(&mut self) -> Result<(), String> {
        if self.keyword("strict") {
            self.pos += 1;
        }
        if self.keyword("digraph") {
            self.directed = true;
        } else if !self.keyword("graph") {
            return Err("expected graph or digraph".into());
        }
        self.pos += 1;
        if matches!(self.peek(), Some(Tok::Id(_))) {
            self.pos += 1;
        }
        self.expect('{')?;
        self.stmt_list()?;
        self.expect('}')?;
        if self.pos != self.toks.len() {
            return Err("trailing tokens after graph".into());
        }
        Ok(())
    }

    fn stmt_list(&mut self) -> Result<(), String> {
        while self.peek().is_some() && self.peek() != Some(&Tok::Punct('}')) {
            self.stmt()?;
            self.punct(';');
        }
        Ok(())
    }

    fn attr_list(&mut self) -> Result<(), String> {
        while self.punct('[') {
            while !self.punct(']') {
                self.id()?;
                if self.punct('=') {
                    self.id()?;
                }
                if !self.punct(',') {
                    self.punct(';');
                }
            }
        }
        Ok(())
    }

    fn subgraph(&mut self) -> Result<(), String> {
        if self.keyword("subgraph") {
            self.pos += 1;
            if matches!(self.peek(), Some(Tok::Id(_))) {
                self.pos += 1;
            }
        }
        self.expect('{')?;
        self.stmt_list()?;
        self.expect('}')
    }

    fn node_or_subgraph(&mut self) -> Result<(), String> {
        if self.keyword("subgraph") || self.peek() == Some(&Tok::Punct('{')) {
            return self.subgraph();
        }
        self.id()?;
        if self.punct(':') {
            self.id()?;
            if self.punct(':') {
                self.id()?;
            }
        }
        Ok(())
    }

    fn stmt(&mut self) -> Result<(), String> {
        if ["graph", "node", "edge"].iter().any(|k| self.keyword(k)) {
            self.pos += 1;
            return self.attr_list();
        }
        if let (Some(Tok::Id(_)), Some(Tok::Punct('='))) = (self.peek(), self.toks.get(self.pos + 1)) {
            self.pos += 2;
            return self.id().map(|_| ());
        }
        self.node_or_subgraph()?;
        while let Some(Tok::Arrow(a)) = self.peek() {
            let wanted = if self.directed { "->" } else { "--" };
            if *a != wanted {
                return Err(format!("edge operator {a} in the wrong graph kind"));
            }
            self.pos += 1;
            self.node_or_subgraph()?;
        }
        self.attr_list()
    }
}

/// Parses `src` against the DOT language grammar (graph, statements,
/// attribute lists, edges, subgraphs, comments).
pub fn check_dot(src: &str) -> Result<(), String> {
    let toks = dot_tokens(src)?;
    DotParser {
        toks,
        pos: 0,
        directed: false,
    }
    .graph()
}

/// `(from, to)` pairs of every single-hop edge statement, by string match.
pub fn dot_edges(src: &str) -> Vec<(String, String)> {
    src.lines()
        .filter_map(|l| {
            let (a, b) = l.trim().split_once(" -> ")?;
            let b = b.trim_end_matches(';');
            let b = b.split(" [").next().unwrap_or(b);
            Some((a.trim_matches('"').to_string(), b.trim_matches('"').to_string()))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// HTML

const VOID_ELEMENTS: [&str; 14] = [
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "param", "source", "track",
    "wbr",
];

/// Checks that every element is closed in order, that void elements are not
/// closed, that text holds no raw `<` and only well-formed entity references,
/// and that attribute values are quoted.
pub fn check_html(src: &str) -> Result<(), String> {
    let mut stack: Vec<String> = Vec::new();
    let mut rest = src;
    let mut raw_text_end: Option<String> = None;
    while !rest.is_empty() {
        if let Some(end) = &raw_text_end {
            let idx = rest
                .find(end.as_str())
                .ok_or(format!("unclosed raw text element {end}"))?;
            rest = &rest[idx..];
            raw_text_end = None;
            continue;
        }
        let Some(lt) = rest.find('<') else {
            check_text(rest)?;
            break;
        };
        check_text(&rest[..lt])?;
        rest = &rest[lt..];
        let gt = rest.find('>').ok_or("unterminated tag")?;
        let tag = &rest[1..gt];
        rest = &rest[gt + 1..];
        if tag.starts_with("!--") {
            continue;
        }
        if let Some(doctype) = tag.strip_prefix('!') {
            if !doctype.eq_ignore_ascii_case("DOCTYPE html") {
                return Err(format!("unexpected declaration <{tag}>"));
            }
            continue;
        }
        if let Some(name) = tag.strip_prefix('/') {
            let name = name.trim().to_ascii_lowercase();
            match stack.pop() {
                Some(open) if open == name => {}
                Some(open) => return Err(format!("</{name}> closes <{open}>")),
                None => return Err(format!("</{name}> without an open element")),
            }
            continue;
        }
        let self_closing = tag.ends_with('/');
        let body = tag.trim_end_matches('/');
        let name_end = body.find(|c: char| c.is_whitespace()).unwrap_or(body.len());
        let name = body[..name_end].to_ascii_lowercase();
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric()) {
            return Err(format!("bad tag name in <{tag}>"));
        }
        check_attributes(&body[name_end..])?;
        if VOID_ELEMENTS.contains(&name.as_str()) || self_closing {
            continue;
        }
        if name == "style" || name == "script" {
            raw_text_end = Some(format!("</{name}>"));
        }
        stack.push(name);
    }
    match stack.last() {
        Some(open) => Err(format!("<{open}> never closed")),
        None => Ok(()),
    }
}

fn check_text(text: &str) -> Result<(), String> {
    let mut rest = text;
    while let Some(amp) = rest.find('&') {
        let after = &rest[amp + 1..];
        let semi = after.find(';').ok_or("bare ampersand")?;
        let entity = &after[..semi];
        let ok = matches!(entity, "amp" | "lt" | "gt" | "quot" | "apos" | "#39")
            || (entity.starts_with('#')
                && entity[1..].chars().all(|c| c.is_ascii_digit())
                && entity.len() > 1);
        if !ok {
            return Err(format!("unknown entity &{entity};"));
        }
        rest = &after[semi + 1..];
    }
    Ok(())
}

fn check_attributes(mut attrs: &str) -> Result<(), String> {
    loop {
        attrs = attrs.trim_start();
        if attrs.is_empty() {
            return Ok(());
        }
        let name_end = attrs
            .find(|c: char| c == '=' || c.is_whitespace())
            .unwrap_or(attrs.len());
        let name = &attrs[..name_end];
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
            return Err(format!("bad attribute name {name:?}"));
        }
        attrs = &attrs[name_end..];
        if let Some(v) = attrs.strip_prefix('=') {
            let v = v.strip_prefix('"').ok_or("unquoted attribute value")?;
            let close = v.find('"').ok_or("unterminated attribute value")?;
            check_text(&v[..close])?;
            if v[..close].contains('<') {
                return Err("raw < in attribute".into());
            }
            attrs = &v[close + 1..];
        }
    }
}
