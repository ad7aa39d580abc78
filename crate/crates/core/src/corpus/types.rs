use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a constraint keyword must appear in the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Position {
    Start,
    End,
    Contain,
}

impl Position {
    pub const ALL: [Position; 3] = [Position::Start, Position::End, Position::Contain];

    pub fn as_str(&self) -> &'static str {
        match self {
            Position::Start => "start",
            Position::End => "end",
            Position::Contain => "contain",
        }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Position {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "start" => Ok(Position::Start),
            "end" => Ok(Position::End),
            "contain" => Ok(Position::Contain),
            other => Err(Error::invalid(format!(
                "position must be start|end|contain, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Constraint {
    pub keyword: String,
    pub position: Position,
}

impl Constraint {
    pub fn new(keyword: impl Into<String>, position: Position) -> Self {
        Self {
            keyword: keyword.into(),
            position,
        }
    }
}

/// Per-example metadata carried alongside the rendered instruction.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExampleMeta {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<Constraint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    /// Untransformed source text, needed by source-aware metrics such as SARI.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Additional gold references beyond `target_text`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub references: Vec<String>,
}

/// One instruction-rendered item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    #[serde(rename = "task")]
    pub task_id: String,
    #[serde(rename = "input")]
    pub input_text: String,
    #[serde(rename = "target")]
    pub target_text: String,
    #[serde(default)]
    pub meta: ExampleMeta,
}

impl Example {
    /// Id of the example this one was copied from during upsampling.
    pub fn origin_id(&self) -> &str {
        match self.id.rfind('#') {
            Some(i) if self.id[i + 1..].bytes().all(|b| b.is_ascii_digit()) => &self.id[..i],
            _ => &self.id,
        }
    }

    /// Target plus any extra references.
    pub fn references(&self) -> Vec<&str> {
        std::iter::once(self.target_text.as_str())
            .chain(self.meta.references.iter().map(String::as_str))
            .collect()
    }
}

/// Named raw text fields for one record before rendering.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawRecord {
    pub fields: BTreeMap<String, String>,
}

impl RawRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.fields.insert(key.to_string(), value.into());
        self
    }

    /// Returns the trimmed field, or `None` if absent or blank.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .get(key)
            .map(|v| v.trim())
            .filter(|v| !v.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An ordered, immutable collection of examples for one task split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task_id: String,
    pub split: Split,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn new(task_id: impl Into<String>, split: Split, examples: Vec<Example>) -> Self {
        Self {
            task_id: task_id.into(),
            split,
            examples,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Example> {
        self.examples.iter()
    }
}

/// One instruction template. Placeholders are `{name}`; `{{` and `}}` are literal braces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub text: String,
    /// Set when the template carries a `{keyword}` placeholder bound to a position constraint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<Position>,
}

impl Template {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            constraint: None,
        }
    }

    pub fn constrained(text: impl Into<String>, position: Position) -> Self {
        Self {
            text: text.into(),
            constraint: Some(position),
        }
    }
}

pub const DEFAULT_CAP: usize = 100_000;

fn default_cap() -> usize {
    DEFAULT_CAP
}

fn default_true() -> bool {
    true
}

/// Identity, templates and bookkeeping flags of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub name: String,
    pub templates: Vec<Template>,
    /// Unconstrained form used as the starting point for instruction composition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_template: Option<Template>,
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default = "default_true")]
    pub rehearsable: bool,
    #[serde(default)]
    pub zero_shot_only: bool,
    #[serde(default)]
    pub metric_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_path: Option<PathBuf>,
}

impl TaskSpec {
    pub fn new(task_id: impl Into<String>, templates: Vec<Template>) -> Self {
        let task_id = task_id.into();
        Self {
            name: task_id.clone(),
            task_id,
            templates,
            base_template: None,
            cap: DEFAULT_CAP,
            rehearsable: true,
            zero_shot_only: false,
            metric_ids: Vec::new(),
            train_path: None,
            test_path: None,
        }
    }

    pub fn with_metrics(mut self, ids: &[&str]) -> Self {
        self.metric_ids = ids.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    /// Marks the task as evaluation-only; it will never be rehearsed.
    pub fn zero_shot(mut self) -> Self {
        self.zero_shot_only = true;
        self.rehearsable = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.task_id.trim().is_empty() {
            return Err(Error::invalid("task id must be non-empty"));
        }
        if self.templates.is_empty() {
            return Err(Error::task(&self.task_id, "at least one template is required"));
        }
        if self.cap == 0 {
            return Err(Error::task(&self.task_id, "cap must be >= 1"));
        }
        if self.zero_shot_only && self.rehearsable {
            return Err(Error::task(
                &self.task_id,
                "zero-shot-only tasks cannot be rehearsable",
            ));
        }
        for t in self.templates.iter().chain(self.base_template.iter()) {
            super::template::parse(&t.text)?;
        }
        Ok(())
    }
}
