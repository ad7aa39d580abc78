//! `{name}` placeholder templates and instruction rendering.

use super::constraint::derive_headline_constraint;
use super::types::{Constraint, Example, ExampleMeta, RawRecord, TaskSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Literal(String),
    Field(String),
}

/// Splits a template into literal and placeholder segments.
pub fn parse(template: &str) -> Result<Vec<Segment>> {
    let mut out = Vec::new();
    let mut lit = String::new();
    let mut chars = template.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' if chars.peek() == Some(&'{') => {
                chars.next();
                lit.push('{');
            }
            '}' if chars.peek() == Some(&'}') => {
                chars.next();
                lit.push('}');
            }
            '{' => {
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some('{') | None => {
                            return Err(Error::Template(format!("unclosed placeholder in `{template}`")))
                        }
                        Some(ch) => name.push(ch),
                    }
                }
                let name = name.trim().to_string();
                if name.is_empty() {
                    return Err(Error::Template(format!("empty placeholder in `{template}`")));
                }
                if !lit.is_empty() {
                    out.push(Segment::Literal(std::mem::take(&mut lit)));
                }
                out.push(Segment::Field(name));
            }
            '}' => return Err(Error::Template(format!("stray `}}` in `{template}`"))),
            other => lit.push(other),
        }
    }
    if !lit.is_empty() {
        out.push(Segment::Literal(lit));
    }
    Ok(out)
}

/// Names of all placeholders, in order of first appearance.
pub fn placeholders(template: &str) -> Result<Vec<String>> {
    let mut names: Vec<String> = Vec::new();
    for seg in parse(template)? {
        if let Segment::Field(name) = seg {
            if !names.contains(&name) {
                names.push(name);
            }
        }
    }
    Ok(names)
}

/// Substitutes placeholders verbatim. `lookup` returns `None` for unresolved names.
pub fn fill<'a>(template: &str, lookup: impl Fn(&str) -> Option<&'a str>) -> Result<String> {
    let mut out = String::with_capacity(template.len() + 32);
    for seg in parse(template)? {
        match seg {
            Segment::Literal(s) => out.push_str(&s),
            Segment::Field(name) => {
                let value = lookup(&name).ok_or_else(|| Error::UnresolvedPlaceholder(name.clone()))?;
                out.push_str(value);
            }
        }
    }
    Ok(out)
}

/// Renders one raw record through the chosen template.
///
/// Placeholders `author`, `emotion`, `topic` and `source` are copied into the
/// example metadata. A constrained template binds `{keyword}`; when the record
/// has no `keyword` field it is derived from the record's `target` using the
/// template's position and `seed`.
pub fn render_instruction(
    spec: &TaskSpec,
    record: &RawRecord,
    template_index: usize,
    seed: u64,
) -> Result<Example> {
    let template = spec.templates.get(template_index).ok_or_else(|| {
        Error::invalid(format!(
            "template index {template_index} out of range for task `{}` ({} templates)",
            spec.task_id,
            spec.templates.len()
        ))
    })?;

    let mut record = record.clone();
    let mut meta = ExampleMeta::default();
    let names = placeholders(&template.text)?;

    if let Some(position) = template.constraint {
        let keyword = match record.get("keyword") {
            Some(k) => k.to_string(),
            None => {
                let target = record
                    .get("target")
                    .ok_or_else(|| Error::UnresolvedPlaceholder("keyword".into()))?;
                derive_headline_constraint(target, position, seed)?.0.keyword
            }
        };
        record.fields.insert("keyword".into(), keyword.clone());
        meta.constraints.push(Constraint::new(keyword, position));
    }

    let input_text = fill(&template.text, |name| record.get(name))?;

    for name in &names {
        let value = record.get(name).map(str::to_string);
        match name.as_str() {
            "author" => meta.author = value,
            "emotion" => meta.emotion = value,
            "topic" => meta.topic = value,
            "source" => meta.source = value,
            _ => {}
        }
    }

    let id = record
        .get("id")
        .map(str::to_string)
        .unwrap_or_else(|| format!("{}:{}", spec.task_id, seed));

    Ok(Example {
        id,
        task_id: spec.task_id.clone(),
        input_text,
        target_text: record.get("target").unwrap_or_default().to_string(),
        meta,
    })
}
