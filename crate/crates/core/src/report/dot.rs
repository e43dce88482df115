use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use super::AnnotatedPolicy;
use crate::topics::TopicName;

const LABEL_CHARS: usize = 60;

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' | '\r' => out.push(' '),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn short(text: &str) -> String {
    let flat: String = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if flat.chars().count() <= LABEL_CHARS {
        flat
    } else {
        let cut: String = flat.chars().take(LABEL_CHARS - 3).collect();
        format!("{}...", cut.trim_end())
    }
}

fn topic_id(t: TopicName) -> String {
    format!("t_{}", t.slug())
}

fn sentence_id(doc: &str, index: usize) -> String {
    format!("s_{doc}_{index}")
}

fn stem_id(stem: &str) -> String {
    format!("w_{stem}")
}

/// Three-layer graph of sensitive sentences, their characteristic stems and
/// their topics. `sentence_filter` restricts it to the given sentence indices.
///
/// Edges run sentence -> topic for each assignment, sentence -> stem for each
/// key stem, and stem -> topic where the stem seeds a topic that is present.
pub fn emit_graph_dot(ap: &AnnotatedPolicy, sentence_filter: Option<&[usize]>) -> String {
    let mut out = format!("// data-practice graph for {}\n", ap.doc.id.replace('\n', " "));
    let sentences: Vec<_> = ap
        .sensitive()
        .filter(|s| s.topics.is_some())
        .filter(|s| sentence_filter.is_none_or(|f| f.contains(&s.sentence.index)))
        .collect();
    if sentences.is_empty() {
        out.push_str("digraph { }\n");
        return out;
    }

    let mut topics: BTreeSet<TopicName> = BTreeSet::new();
    let mut stems: BTreeMap<&str, &[TopicName]> = BTreeMap::new();
    let mut edges: BTreeSet<(String, String)> = BTreeSet::new();
    for s in &sentences {
        let sid = sentence_id(&s.sentence.doc_id, s.sentence.index);
        for &t in &s.topics.as_ref().expect("filtered above").assigned {
            topics.insert(t);
            edges.insert((sid.clone(), topic_id(t)));
        }
        for k in &s.key_stems {
            stems.insert(&k.stem, &k.seed_of);
            edges.insert((sid.clone(), stem_id(&k.stem)));
        }
    }
    for (stem, seed_of) in &stems {
        for t in seed_of.iter().filter(|t| topics.contains(t)) {
            edges.insert((stem_id(stem), topic_id(*t)));
        }
    }

    out.push_str("digraph \"practices\" {\n  rankdir=LR;\n");
    for t in &topics {
        let _ = writeln!(
            out,
            "  {} [label={}, shape=box];",
            quote(&topic_id(*t)),
            quote(t.as_str())
        );
    }
    for s in &sentences {
        let _ = writeln!(
            out,
            "  {} [label={}, shape=note];",
            quote(&sentence_id(&s.sentence.doc_id, s.sentence.index)),
            quote(&short(&s.sentence.text))
        );
    }
    for stem in stems.keys() {
        let _ = writeln!(
            out,
            "  {} [label={}, shape=ellipse];",
            quote(&stem_id(stem)),
            quote(stem)
        );
    }
    for (from, to) in &edges {
        let _ = writeln!(out, "  {} -> {};", quote(from), quote(to));
    }
    out.push_str("}\n");
    out
}
