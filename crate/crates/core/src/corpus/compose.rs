use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::types::{Constraint, Example, Position};
use crate::error::{Error, Result};

/// One fragment added to an existing instruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "lowercase")]
pub enum Addition {
    /// A `contain` keyword constraint.
    Constraint(String),
    /// Author whose style the output should follow.
    Style(String),
    Emotion(String),
}

const CONTAINING: &str = " containing \"";

/// Splits at the first `": "` that separates the instruction from its payload.
fn split_head(input: &str) -> (&str, &str) {
    match input.find(": ") {
        Some(i) => (&input[..i], &input[i..]),
        None => (input, ""),
    }
}

/// Appends constraint, style and emotion fragments to an instruction.
///
/// Fragments are applied in a fixed order (constraints, style, emotion)
/// regardless of the order of `additions`. Keywords are joined into a single
/// clause `containing "X" and "Y"`; a base that already ends in such a clause is
/// extended rather than given a second one.
pub fn compose_instruction(base: &Example, additions: &[Addition]) -> Result<Example> {
    if additions.is_empty() {
        return Err(Error::invalid("compose_instruction needs at least one addition"));
    }

    let mut seen: HashSet<&str> = base.meta.constraints.iter().map(|c| c.keyword.as_str()).collect();
    let mut keywords = Vec::new();
    let mut style = None;
    let mut emotion = None;
    for add in additions {
        match add {
            Addition::Constraint(k) => {
                let k = k.trim();
                if k.is_empty() || k.contains(char::is_whitespace) {
                    return Err(Error::invalid(format!("constraint keyword must be a single token, got `{k}`")));
                }
                if !seen.insert(k) {
                    return Err(Error::DuplicateKeyword(k.to_string()));
                }
                keywords.push(k);
            }
            Addition::Style(a) => style = Some(a.trim()),
            Addition::Emotion(e) => emotion = Some(e.trim()),
        }
    }

    let (head, tail) = split_head(&base.input_text);
    let mut head = head.to_string();
    if !keywords.is_empty() {
        let quoted: Vec<String> = keywords.iter().map(|k| format!("\"{k}\"")).collect();
        let joined = quoted.join(" and ");
        if head.ends_with('"') && head.contains(CONTAINING) {
            head.push_str(" and ");
        } else if tail.is_empty() {
            head.push_str(", containing ");
        } else {
            head.push_str(" containing ");
        }
        head.push_str(&joined);
    }
    if let Some(author) = style {
        head.push_str(", in the style of ");
        head.push_str(author);
    }
    let mut input_text = head + tail;
    if let Some(emotion) = emotion {
        if !input_text.ends_with(['.', '!', '?']) {
            input_text.push('.');
        }
        input_text.push_str(&format!(" The associated emotion is \"{emotion}\"."));
    }

    let mut out = base.clone();
    out.input_text = input_text;
    out.meta
        .constraints
        .extend(keywords.iter().map(|k| Constraint::new(*k, Position::Contain)));
    if let Some(author) = style {
        out.meta.author = Some(author.to_string());
    }
    if let Some(emotion) = emotion {
        out.meta.emotion = Some(emotion.to_string());
    }
    Ok(out)
}
