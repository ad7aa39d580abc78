//! Synthetic desk-scale task suites.
//!
//! Each fixture task applies a deterministic token transformation to a random
//! source sequence. Transformations are registered by name so configs can
//! select them at runtime.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::io::{load_dataset, save_dataset};
use super::template::render_instruction;
use super::types::{Dataset, Position, RawRecord, Split, TaskSpec, Template};
use crate::error::{Error, Result};
use crate::text;

/// Fields produced by a transformation for one source sequence.
pub struct Generated {
    pub record: RawRecord,
    pub template_index: usize,
}

pub trait Transform: Send + Sync {
    fn name(&self) -> &'static str;

    /// Instruction word used when the config does not override it.
    fn default_prefix(&self) -> &'static str;

    fn templates(&self, prefix: &str) -> Vec<Template> {
        vec![Template::new(format!("{prefix}: {{source}}"))]
    }

    fn base_template(&self, _prefix: &str) -> Option<Template> {
        None
    }

    fn metric_ids(&self) -> &'static [&'static str] {
        &["exact_match"]
    }

    fn generate(&self, source: &[String], vocab: &[String], rng: &mut ChaCha8Rng) -> Generated;
}

fn simple(source: &[String], target: Vec<String>) -> Generated {
    Generated {
        record: RawRecord::new()
            .with("source", source.join(" "))
            .with("target", target.join(" ")),
        template_index: 0,
    }
}

struct Copy;
impl Transform for Copy {
    fn name(&self) -> &'static str {
        "copy"
    }
    fn default_prefix(&self) -> &'static str {
        "copy"
    }
    fn generate(&self, source: &[String], _: &[String], _: &mut ChaCha8Rng) -> Generated {
        simple(source, source.to_vec())
    }
}

struct Reverse;
impl Transform for Reverse {
    fn name(&self) -> &'static str {
        "reverse"
    }
    fn default_prefix(&self) -> &'static str {
        "reverse"
    }
    fn generate(&self, source: &[String], _: &[String], _: &mut ChaCha8Rng) -> Generated {
        simple(source, source.iter().rev().cloned().collect())
    }
}

struct TokenSort;
impl Transform for TokenSort {
    fn name(&self) -> &'static str {
        "token-sort"
    }
    fn default_prefix(&self) -> &'static str {
        "sort"
    }
    fn generate(&self, source: &[String], _: &[String], _: &mut ChaCha8Rng) -> Generated {
        let mut t = source.to_vec();
        t.sort();
        simple(source, t)
    }
}

struct CaseMarker;
impl Transform for CaseMarker {
    fn name(&self) -> &'static str {
        "case-marker"
    }
    fn default_prefix(&self) -> &'static str {
        "shout"
    }
    fn generate(&self, source: &[String], _: &[String], _: &mut ChaCha8Rng) -> Generated {
        simple(source, source.iter().map(|t| t.to_uppercase()).collect())
    }
}

/// Inserts a keyword at the start, at the end, or after the first source token.
struct KeywordInsertion;

impl KeywordInsertion {
    pub fn apply(source: &[String], keyword: &str, position: Position) -> Vec<String> {
        let mut t = source.to_vec();
        match position {
            Position::Start => t.insert(0, keyword.to_string()),
            Position::End => t.push(keyword.to_string()),
            Position::Contain => t.insert(1.min(t.len()), keyword.to_string()),
        }
        t
    }
}

impl Transform for KeywordInsertion {
    fn name(&self) -> &'static str {
        "keyword-insertion"
    }
    fn default_prefix(&self) -> &'static str {
        "insert"
    }
    fn templates(&self, prefix: &str) -> Vec<Template> {
        vec![
            Template::constrained(format!("{prefix} starting with \"{{keyword}}\": {{source}}"), Position::Start),
            Template::constrained(format!("{prefix} ending with \"{{keyword}}\": {{source}}"), Position::End),
            Template::constrained(format!("{prefix} containing \"{{keyword}}\": {{source}}"), Position::Contain),
        ]
    }
    fn base_template(&self, prefix: &str) -> Option<Template> {
        Some(Template::new(format!("{prefix}: {{source}}")))
    }
    fn metric_ids(&self) -> &'static [&'static str] {
        &["exact_match", "constraint"]
    }
    fn generate(&self, source: &[String], vocab: &[String], rng: &mut ChaCha8Rng) -> Generated {
        let template_index = rng.gen_range(0..3);
        let position = Position::ALL[template_index];
        let keyword = loop {
            let k = vocab.choose(rng).expect("vocabulary is non-empty");
            if !source.contains(k) {
                break k.clone();
            }
        };
        let target = Self::apply(source, &keyword, position);
        Generated {
            record: RawRecord::new()
                .with("source", source.join(" "))
                .with("keyword", keyword)
                .with("target", target.join(" ")),
            template_index,
        }
    }
}

pub const STYLE_AUTHORS: &[(&str, &str)] = &[("ann", "oh"), ("bob", "well"), ("cyd", "hey"), ("dee", "so")];

/// Prefixes the source with the author's signature opener.
struct StyleTag;
impl Transform for StyleTag {
    fn name(&self) -> &'static str {
        "style-tag"
    }
    fn default_prefix(&self) -> &'static str {
        "write"
    }
    fn templates(&self, prefix: &str) -> Vec<Template> {
        vec![Template::new(format!("{prefix} in the style of {{author}}: {{source}}"))]
    }
    fn metric_ids(&self) -> &'static [&'static str] {
        &["exact_match", "clf"]
    }
    fn generate(&self, source: &[String], _: &[String], rng: &mut ChaCha8Rng) -> Generated {
        let (author, opener) = STYLE_AUTHORS.choose(rng).expect("non-empty");
        let mut target = vec![opener.to_string()];
        target.extend(source.iter().cloned());
        Generated {
            record: RawRecord::new()
                .with("source", source.join(" "))
                .with("author", *author)
                .with("target", target.join(" ")),
            template_index: 0,
        }
    }
}

pub const QUESTION_WORDS: &[&str] = &["why", "how", "what", "when"];

/// Turns the source into a question whose first word depends on the first source token.
struct FirstWordQuestion;
impl Transform for FirstWordQuestion {
    fn name(&self) -> &'static str {
        "first-word-question"
    }
    fn default_prefix(&self) -> &'static str {
        "ask"
    }
    fn metric_ids(&self) -> &'static [&'static str] {
        &["exact_match", "1tok"]
    }
    fn generate(&self, source: &[String], _: &[String], _: &mut ChaCha8Rng) -> Generated {
        let first = source.first().map(String::as_str).unwrap_or_default();
        let wh = QUESTION_WORDS[(text::fnv1a(first.as_bytes()) % QUESTION_WORDS.len() as u64) as usize];
        let mut target = vec![wh.to_string()];
        target.extend(source.iter().cloned());
        target.push("?".into());
        simple(source, target)
    }
}

/// Name → transformation lookup.
pub struct TransformRegistry {
    entries: BTreeMap<&'static str, Box<dyn Transform>>,
}

impl Default for TransformRegistry {
    fn default() -> Self {
        let mut r = Self {
            entries: BTreeMap::new(),
        };
        r.register(Box::new(Copy));
        r.register(Box::new(Reverse));
        r.register(Box::new(TokenSort));
        r.register(Box::new(CaseMarker));
        r.register(Box::new(KeywordInsertion));
        r.register(Box::new(StyleTag));
        r.register(Box::new(FirstWordQuestion));
        r
    }
}

impl TransformRegistry {
    pub fn register(&mut self, t: Box<dyn Transform>) {
        self.entries.insert(t.name(), t);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Transform> {
        self.entries.get(name).map(|b| b.as_ref()).ok_or_else(|| Error::Unknown {
            kind: "transformation",
            name: name.to_string(),
            known: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

/// Deterministic pronounceable pseudo-words (`kapo`, `mire`, ...).
pub fn vocabulary(size: usize) -> Vec<String> {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    let syl = |i: usize| {
        let i = i % (C.len() * V.len());
        format!("{}{}", C[i / V.len()] as char, V[i % V.len()] as char)
    };
    let n = C.len() * V.len();
    (0..size).map(|i| format!("{}{}", syl(i * 17 + 3), syl(i / n + i * 3))).collect()
}

fn default_vocab_size() -> usize {
    48
}
fn default_min_len() -> usize {
    3
}
fn default_max_len() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureTask {
    pub id: String,
    pub kind: String,
    pub train: usize,
    pub test: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    #[serde(default)]
    pub zero_shot: bool,
    /// Overrides the transformation's instruction word.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

impl FixtureTask {
    pub fn new(id: &str, kind: &str, train: usize, test: usize) -> Self {
        Self {
            id: id.into(),
            kind: kind.into(),
            train,
            test,
            cap: None,
            zero_shot: false,
            prefix: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_vocab_size")]
    pub vocab_size: usize,
    #[serde(default = "default_min_len")]
    pub min_len: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    pub tasks: Vec<FixtureTask>,
}

impl FixtureConfig {
    pub fn new(tasks: Vec<FixtureTask>) -> Self {
        Self {
            seed: 0,
            vocab_size: default_vocab_size(),
            min_len: default_min_len(),
            max_len: default_max_len(),
            tasks,
        }
    }
}

/// A generated task with both splits.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSuiteTask {
    pub spec: TaskSpec,
    pub train: Dataset,
    pub test: Dataset,
}

/// Builds every configured task. Test sources never occur in the train split.
pub fn generate_synthetic_suite(config: &FixtureConfig, seed: u64) -> Result<Vec<FixtureSuiteTask>> {
    let registry = TransformRegistry::default();
    if config.tasks.len() < 2 {
        return Err(Error::invalid("a fixture suite needs at least two tasks"));
    }
    if config.min_len == 0 || config.min_len > config.max_len {
        return Err(Error::invalid("need 1 <= min_len <= max_len"));
    }
    if config.vocab_size <= config.max_len {
        return Err(Error::invalid("vocab_size must exceed max_len"));
    }
    let vocab = vocabulary(config.vocab_size);
    let mut ids = HashSet::new();
    let mut prefixes = HashSet::new();
    let mut out = Vec::with_capacity(config.tasks.len());
    for task in &config.tasks {
        let transform = registry.get(&task.kind)?;
        if !ids.insert(task.id.as_str()) {
            return Err(Error::invalid(format!("duplicate fixture task id `{}`", task.id)));
        }
        let prefix = task.prefix.clone().unwrap_or_else(|| transform.default_prefix().to_string());
        if !prefixes.insert(prefix.clone()) {
            return Err(Error::invalid(format!("instruction prefix `{prefix}` used by two tasks")));
        }
        if task.train == 0 || task.test == 0 {
            return Err(Error::invalid(format!("task `{}` needs non-empty splits", task.id)));
        }

        let mut spec = TaskSpec::new(task.id.clone(), transform.templates(&prefix));
        spec.name = format!("{} ({})", task.id, transform.name());
        spec.base_template = transform.base_template(&prefix);
        spec.metric_ids = transform.metric_ids().iter().map(|s| s.to_string()).collect();
        spec.cap = task.cap.unwrap_or(task.train);
        if task.zero_shot {
            spec = spec.zero_shot();
        }

        let mut rng = text::rng(seed ^ config.seed, &format!("fixture/{}", task.id));
        let mut seen = HashSet::new();
        let mut make_split = |split: Split, n: usize, rng: &mut ChaCha8Rng| -> Result<Dataset> {
            let mut examples = Vec::with_capacity(n);
            let mut attempts = 0usize;
            while examples.len() < n {
                attempts += 1;
                if attempts > n * 100 + 1000 {
                    return Err(Error::invalid(format!(
                        "task `{}`: cannot draw {n} distinct sources from vocabulary of {}",
                        task.id, config.vocab_size
                    )));
                }
                let len = rng.gen_range(config.min_len..=config.max_len);
                let source: Vec<String> = vocab.choose_multiple(rng, len).cloned().collect();
                if !seen.insert(source.join(" ")) {
                    continue;
                }
                let generated = transform.generate(&source, &vocab, rng);
                let line = examples.len();
                let mut ex = render_instruction(&spec, &generated.record, generated.template_index, line as u64)?;
                ex.id = format!("{}:{}:{line}", task.id, split);
                examples.push(ex);
            }
            Ok(Dataset::new(task.id.clone(), split, examples))
        };
        let train = make_split(Split::Train, task.train, &mut rng)?;
        let test = make_split(Split::Test, task.test, &mut rng)?;
        out.push(FixtureSuiteTask { spec, train, test });
    }
    Ok(out)
}

/// Writes `<id>.train.jsonl`, `<id>.test.jsonl` and `<id>.task.json` per task.
pub fn write_suite(dir: &Path, suite: &[FixtureSuiteTask]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for t in suite {
        let train_name = format!("{}.train.jsonl", t.spec.task_id);
        let test_name = format!("{}.test.jsonl", t.spec.task_id);
        save_dataset(&dir.join(&train_name), &t.train)?;
        save_dataset(&dir.join(&test_name), &t.test)?;
        let mut spec = t.spec.clone();
        spec.train_path = Some(train_name.into());
        spec.test_path = Some(test_name.into());
        let path = dir.join(format!("{}.task.json", spec.task_id));
        let body = serde_json::to_string_pretty(&spec)?;
        fs::write(&path, body + "\n").map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Reads every `*.task.json` in `dir` with its splits, sorted by task id.
pub fn load_suite(dir: &Path) -> Result<Vec<FixtureSuiteTask>> {
    let mut specs = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.to_string_lossy().ends_with(".task.json") {
            let body = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let spec: TaskSpec = serde_json::from_str(&body)?;
            spec.validate()?;
            specs.push(spec);
        }
    }
    specs.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    specs
        .into_iter()
        .map(|spec| {
            let split_path = |p: &Option<std::path::PathBuf>, split: Split| {
                let rel = p
                    .clone()
                    .unwrap_or_else(|| format!("{}.{}.jsonl", spec.task_id, split).into());
                dir.join(rel)
            };
            let train = load_dataset(&split_path(&spec.train_path, Split::Train), &spec, Split::Train)?;
            let test = load_dataset(&split_path(&spec.test_path, Split::Test), &spec, Split::Test)?;
            Ok(FixtureSuiteTask { spec, train, test })
        })
        .collect()
}
