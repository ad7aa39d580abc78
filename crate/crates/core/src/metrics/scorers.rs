//! Pluggable similarity and sentiment scorers.

use std::io::Write;
use std::process::{Command, Stdio};

use serde_json::json;

use super::rouge::rouge1;
use crate::error::{Error, Result};

/// Scores (candidate, reference) pairs; higher is more similar.
pub trait SimilarityScorer: Send + Sync {
    fn name(&self) -> &str;
    fn score_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>>;
}

/// Signed sentiment per text; a text counts as positive iff its score is > 0.
pub trait SentimentScorer: Send + Sync {
    fn name(&self) -> &str;
    fn score_texts(&self, texts: &[&str]) -> Result<Vec<f64>>;
}

/// Unigram-overlap F1, the built-in stand-in for a learned similarity model.
#[derive(Debug, Default, Clone, Copy)]
pub struct UnigramSimilarity;

impl SimilarityScorer for UnigramSimilarity {
    fn name(&self) -> &str {
        "unigram-f1"
    }

    fn score_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>> {
        Ok(pairs.iter().map(|(c, r)| rouge1(c, r)).collect())
    }
}

const POSITIVE: &[&str] = &[
    "beautiful", "bliss", "bright", "calm", "cheer", "cheerful", "delight", "gentle", "glad", "glow", "good", "grace",
    "great", "happy", "hope", "joy", "joyful", "kind", "laugh", "love", "lovely", "peace", "peaceful", "pleasant",
    "proud", "serene", "smile", "sweet", "warm", "wonderful",
];

const NEGATIVE: &[&str] = &[
    "afraid", "alone", "anger", "angry", "bad", "bitter", "cold", "cry", "dark", "dead", "despair", "fear", "gloom",
    "grief", "hate", "hurt", "lonely", "lost", "pain", "sad", "scared", "sorrow", "tears", "terrible", "weep",
    "worry",
];

/// Counts positive minus negative lexicon words.
#[derive(Debug, Clone)]
pub struct LexiconSentiment {
    positive: Vec<String>,
    negative: Vec<String>,
}

impl Default for LexiconSentiment {
    fn default() -> Self {
        Self::new(POSITIVE, NEGATIVE)
    }
}

impl LexiconSentiment {
    pub fn new(positive: &[&str], negative: &[&str]) -> Self {
        let own = |ws: &[&str]| {
            let mut v: Vec<String> = ws.iter().map(|w| w.to_lowercase()).collect();
            v.sort();
            v
        };
        Self {
            positive: own(positive),
            negative: own(negative),
        }
    }

    pub fn score(&self, text: &str) -> f64 {
        let lowered = text.to_lowercase();
        crate::corpus::word_tokens(&lowered)
            .into_iter()
            .map(|w| {
                let w = w.to_string();
                if self.positive.binary_search(&w).is_ok() {
                    1.0
                } else if self.negative.binary_search(&w).is_ok() {
                    -1.0
                } else {
                    0.0
                }
            })
            .sum()
    }
}

impl SentimentScorer for LexiconSentiment {
    fn name(&self) -> &str {
        "lexicon"
    }

    fn score_texts(&self, texts: &[&str]) -> Result<Vec<f64>> {
        Ok(texts.iter().map(|t| self.score(t)).collect())
    }
}

/// Fraction of texts with a strictly positive score. Empty input gives 0.
pub fn sentiment_positive_rate(texts: &[&str], scorer: &dyn SentimentScorer) -> Result<f64> {
    if texts.is_empty() {
        return Ok(0.0);
    }
    let scores = scorer.score_texts(texts)?;
    if scores.len() != texts.len() {
        return Err(Error::LengthMismatch(scores.len(), texts.len()));
    }
    Ok(scores.iter().filter(|&&s| s > 0.0).count() as f64 / texts.len() as f64)
}

/// Delegates scoring to an external process.
///
/// The process receives one JSON object per line on stdin
/// (`{"candidate", "reference"}` for similarity, `{"text"}` for sentiment)
/// and must print one number per line on stdout, in order.
#[derive(Debug, Clone)]
pub struct CommandScorer {
    pub program: String,
    pub args: Vec<String>,
}

impl CommandScorer {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
        }
    }

    fn run(&self, lines: Vec<String>) -> Result<Vec<f64>> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::io(&self.program, e))?;
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            let payload = lines.join("\n") + "\n";
            let writer = std::thread::spawn(move || stdin.write_all(payload.as_bytes()));
            let out = child.wait_with_output().map_err(|e| Error::io(&self.program, e))?;
            writer
                .join()
                .map_err(|_| Error::invalid("scorer stdin writer panicked"))?
                .map_err(|e| Error::io(&self.program, e))?;
            if !out.status.success() {
                return Err(Error::invalid(format!("scorer `{}` exited with {}", self.program, out.status)));
            }
            let stdout = String::from_utf8_lossy(&out.stdout);
            let values: Vec<f64> = stdout
                .lines()
                .filter(|l| !l.trim().is_empty())
                .enumerate()
                .map(|(i, l)| {
                    l.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line: i,
                        message: format!("scorer output: {e}"),
                    })
                })
                .collect::<Result<_>>()?;
            if values.len() != lines.len() {
                return Err(Error::LengthMismatch(values.len(), lines.len()));
            }
            Ok(values)
        }
    }
}

impl SimilarityScorer for CommandScorer {
    fn name(&self) -> &str {
        &self.program
    }

    fn score_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>> {
        self.run(pairs.iter().map(|(c, r)| json!({"candidate": c, "reference": r}).to_string()).collect())
    }
}

impl SentimentScorer for CommandScorer {
    fn name(&self) -> &str {
        &self.program
    }

    fn score_texts(&self, texts: &[&str]) -> Result<Vec<f64>> {
        self.run(texts.iter().map(|t| json!({"text": t}).to_string()).collect())
    }
}
