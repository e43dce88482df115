use std::fmt::Write;

use super::AnnotatedPolicy;
use crate::topics::TopicName;

/// Background colour per topic, in topic order.
const PALETTE: [(TopicName, &str); 6] = [
    (TopicName::Information, "#fde68a"),
    (TopicName::Collection, "#a7f3d0"),
    (TopicName::Sharing, "#bfdbfe"),
    (TopicName::Permission, "#fbcfe8"),
    (TopicName::Purpose, "#ddd6fe"),
    (TopicName::Technology, "#fed7aa"),
];

pub(crate) fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn style() -> String {
    let mut css = String::from(
        "body { font-family: sans-serif; max-width: 48em; margin: 2em auto; line-height: 1.5; }\n\
         .sentence { padding: 0 0.15em; border-radius: 0.2em; }\n\
         .topics { font-size: 0.75em; color: #555; margin-left: 0.4em; }\n\
         details.removed s { color: #777; }\n",
    );
    for (topic, colour) in PALETTE {
        let _ = writeln!(css, ".topic-{} {{ background: {colour}; }}", topic.slug());
    }
    css
}

/// Renders a policy with sensitive sentences highlighted by topic and
/// non-sensitive sentences struck through in a collapsed section.
///
/// A multi-topic sentence carries one `topic-*` class per topic and is
/// coloured by the first; the topic names follow it in a small label.
pub fn emit_highlight_html(ap: &AnnotatedPolicy) -> String {
    let title = escape(&ap.doc.title);
    let mut h = String::new();
    h.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    let _ = writeln!(h, "<title>{title}</title>");
    let _ = write!(h, "<style>\n{}</style>\n</head>\n<body>\n", style());
    let _ = writeln!(h, "<h1>{title}</h1>");

    h.push_str("<p class=\"legend\">");
    for (i, (topic, _)) in PALETTE.iter().enumerate() {
        if i > 0 {
            h.push(' ');
        }
        let _ = write!(
            h,
            "<span class=\"sentence topic-{}\">{}</span>",
            topic.slug(),
            topic
        );
    }
    h.push_str("</p>\n");

    h.push_str("<section class=\"sensitive\">\n");
    for s in ap.sensitive() {
        let topics = s.topics.as_ref().map(|a| a.assigned.as_slice()).unwrap_or(&[]);
        let classes: String = topics.iter().map(|t| format!(" topic-{}", t.slug())).collect();
        let names: Vec<&str> = topics.iter().map(|t| t.as_str()).collect();
        let _ = writeln!(
            h,
            "<p id=\"s{}\"><span class=\"sentence{classes}\">{}</span><span class=\"topics\">{}</span></p>",
            s.sentence.index,
            escape(&s.sentence.text),
            escape(&names.join(", "))
        );
    }
    h.push_str("</section>\n");

    let removed: Vec<_> = ap.sentences.iter().filter(|s| !s.label.is_sensitive()).collect();
    h.push_str("<details class=\"removed\">\n");
    let _ = writeln!(h, "<summary>{} non-sensitive sentences</summary>", removed.len());
    for s in removed {
        let _ = writeln!(
            h,
            "<p id=\"s{}\"><s>{}</s></p>",
            s.sentence.index,
            escape(&s.sentence.text)
        );
    }
    h.push_str("</details>\n</body>\n</html>\n");
    h
}
