//! Line-delimited JSON dataset files.
//!
//! One object per line with `input` (optional when raw template fields are
//! given), `target`, `task`, `meta`, and optionally `id` and `template`.
//! Any other string-valued key is treated as a raw template field.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::{Map, Value};

use super::template::render_instruction;
use super::types::{Dataset, Example, ExampleMeta, RawRecord, Split, TaskSpec};
use crate::error::{Error, Result};

const RESERVED: &[&str] = &["id", "input", "target", "task", "meta", "template", "fields"];

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn string_field(obj: &Map<String, Value>, key: &str, line: usize) -> Result<Option<String>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(other) => Err(parse_err(line, format!("`{key}` must be a string, got {other}"))),
    }
}

fn parse_line(spec: &TaskSpec, split: Split, line_no: usize, line: &str) -> Result<Example> {
    let value: Value = serde_json::from_str(line).map_err(|e| parse_err(line_no, e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(parse_err(line_no, "expected a JSON object"));
    };

    if let Some(task) = string_field(&obj, "task", line_no)? {
        if task != spec.task_id {
            return Err(parse_err(
                line_no,
                format!("task `{task}` does not match `{}`", spec.task_id),
            ));
        }
    }

    let target = string_field(&obj, "target", line_no)?.unwrap_or_default();
    if split == Split::Train && target.trim().is_empty() {
        return Err(Error::MissingField {
            line: line_no,
            field: "target".into(),
        });
    }
    let id = string_field(&obj, "id", line_no)?.unwrap_or_else(|| format!("{}:{line_no}", spec.task_id));
    let meta: ExampleMeta = match obj.get("meta") {
        None | Some(Value::Null) => ExampleMeta::default(),
        Some(m) => serde_json::from_value(m.clone()).map_err(|e| parse_err(line_no, format!("meta: {e}")))?,
    };

    if let Some(input) = string_field(&obj, "input", line_no)? {
        if input.trim().is_empty() {
            return Err(Error::MissingField {
                line: line_no,
                field: "input".into(),
            });
        }
        return Ok(Example {
            id,
            task_id: spec.task_id.clone(),
            input_text: input,
            target_text: target,
            meta,
        });
    }

    let mut record = RawRecord::new();
    let mut absorb = |map: &Map<String, Value>, skip_reserved: bool| {
        for (k, v) in map {
            if skip_reserved && RESERVED.contains(&k.as_str()) {
                continue;
            }
            if let Value::String(s) = v {
                record.fields.insert(k.clone(), s.clone());
            }
        }
    };
    absorb(&obj, true);
    if let Some(Value::Object(fields)) = obj.get("fields") {
        absorb(fields, false);
    }
    if !target.is_empty() {
        record.fields.insert("target".into(), target.clone());
    }
    let template_index = match obj.get("template") {
        None | Some(Value::Null) => line_no % spec.templates.len(),
        Some(v) => v
            .as_u64()
            .map(|i| i as usize)
            .ok_or_else(|| parse_err(line_no, "`template` must be a non-negative integer"))?,
    };

    let mut example = render_instruction(spec, &record, template_index, line_no as u64).map_err(|e| match e {
        Error::UnresolvedPlaceholder(field) => Error::MissingField { line: line_no, field },
        Error::InvalidArgument(m) => parse_err(line_no, m),
        other => other,
    })?;
    example.id = id;
    example.target_text = target;
    // explicit meta wins over what the template derived
    if !meta.constraints.is_empty() {
        example.meta.constraints = meta.constraints;
    }
    example.meta.author = meta.author.or(example.meta.author);
    example.meta.emotion = meta.emotion.or(example.meta.emotion);
    example.meta.topic = meta.topic.or(example.meta.topic);
    example.meta.source = meta.source.or(example.meta.source);
    example.meta.references = meta.references;
    Ok(example)
}

/// Loads a dataset file, one example per non-blank line, in file order.
///
/// Line numbers in ids and errors are zero-based.
pub fn load_dataset(path: &Path, spec: &TaskSpec, split: Split) -> Result<Dataset> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut examples = Vec::new();
    let mut ids = HashSet::new();
    for (line_no, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let example = parse_line(spec, split, line_no, line)?;
        if !ids.insert(example.id.clone()) {
            return Err(parse_err(line_no, format!("duplicate id `{}`", example.id)));
        }
        examples.push(example);
    }
    Ok(Dataset::new(spec.task_id.clone(), split, examples))
}

/// Writes examples in the same line format `load_dataset` reads.
pub fn save_examples<'a>(path: &Path, examples: impl IntoIterator<Item = &'a Example>) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    save_examples(path, dataset.iter())
}

/// Loads examples without re-rendering; every line must carry `input`.
pub fn load_examples(path: &Path) -> Result<Vec<Example>> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    body.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_err(i, e.to_string())))
        .collect()
}
