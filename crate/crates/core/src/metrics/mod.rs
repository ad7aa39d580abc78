//! Automatic metrics and the registry that maps metric ids to scorers.
//!
//! Every metric consumes `(example, prediction)` pairs and aggregates to one
//! number. Per-item metrics aggregate by mean; `1tok` and `constraint` are
//! corpus-level.

mod bleu;
mod haiku;
mod rouge;
mod sari;
mod scorers;
mod simple;
mod stylometry;

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use bleu::{bleu4, bleu4_tokens, BLEU_EPSILON};
pub use haiku::{haiku_components, haiku_lines, haiku_score, syllable_count, HaikuComponents};
pub use rouge::rouge1;
pub use sari::{sari, sari_components};
pub use scorers::{
    sentiment_positive_rate, CommandScorer, LexiconSentiment, SentimentScorer, SimilarityScorer, UnigramSimilarity,
};
pub use simple::{
    constraint_satisfaction, exact_match_accuracy, first_token_jsd, inverse_first_token_jsd, ConstraintCheck,
    JSD_FLOOR,
};
pub use stylometry::{author_style_accuracy, fit_author_classifier, ridge_gradient_norm, StyleClassifier};

use crate::corpus::{Dataset, Example};
use crate::error::{Error, Result};

pub const BLEU4: &str = "bleu4";
pub const ROUGE1: &str = "rouge1";
pub const SARI: &str = "sari";
pub const EXACT_MATCH: &str = "exact_match";
pub const CONSTRAINT: &str = "constraint";
pub const ONE_TOK: &str = "1tok";
pub const H_CUST: &str = "h_cust";
pub const CLF: &str = "clf";
pub const SIMILARITY: &str = "similarity";
pub const SENTIMENT_POS: &str = "sentiment_pos";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Value in `[0, 1]`.
    Unit,
    /// Value in `[0, 100]`.
    Percent,
    /// Unbounded positive value (the capped inverse divergence).
    Inverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub metric_id: String,
    pub value: f64,
    pub scale: Scale,
    pub n: usize,
}

/// One model output paired with the example it answers.
#[derive(Debug, Clone, Copy)]
pub struct Scored<'a> {
    pub example: &'a Example,
    pub prediction: &'a str,
}

pub trait Metric: Send + Sync {
    fn id(&self) -> &str;
    fn scale(&self) -> Scale;
    fn score(&self, items: &[Scored<'_>]) -> Result<f64>;
}

fn mean(items: &[Scored<'_>], f: impl Fn(&Scored<'_>) -> Result<f64>) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::invalid("cannot score zero predictions"));
    }
    let mut total = 0.0;
    for it in items {
        total += f(it)?;
    }
    Ok(total / items.len() as f64)
}

fn best_over_refs(item: &Scored<'_>, f: impl Fn(&str, &str) -> f64) -> f64 {
    item.example
        .references()
        .into_iter()
        .map(|r| f(item.prediction, r))
        .fold(0.0, f64::max)
}

fn meta_field<'a>(item: &Scored<'a>, name: &str, v: &'a Option<String>) -> Result<&'a str> {
    v.as_deref()
        .ok_or_else(|| Error::task(&item.example.task_id, format!("example `{}` has no {name}", item.example.id)))
}

struct FnMetric<F> {
    id: &'static str,
    scale: Scale,
    f: F,
}

impl<F> Metric for FnMetric<F>
where
    F: Fn(&[Scored<'_>]) -> Result<f64> + Send + Sync,
{
    fn id(&self) -> &str {
        self.id
    }

    fn scale(&self) -> Scale {
        self.scale
    }

    fn score(&self, items: &[Scored<'_>]) -> Result<f64> {
        (self.f)(items)
    }
}

fn metric<F>(id: &'static str, scale: Scale, f: F) -> Arc<dyn Metric>
where
    F: Fn(&[Scored<'_>]) -> Result<f64> + Send + Sync + 'static,
{
    Arc::new(FnMetric { id, scale, f })
}

/// Metrics addressable by id. The defaults cover every text-only metric;
/// `clf` needs a fitted classifier via [`MetricRegistry::with_style_classifier`].
#[derive(Clone)]
pub struct MetricRegistry {
    metrics: BTreeMap<String, Arc<dyn Metric>>,
}

impl Default for MetricRegistry {
    fn default() -> Self {
        let mut r = Self {
            metrics: BTreeMap::new(),
        };
        r.register(metric(BLEU4, Scale::Unit, |items| {
            mean(items, |it| Ok(bleu4(it.prediction, &it.example.references())))
        }));
        r.register(metric(ROUGE1, Scale::Unit, |items| mean(items, |it| Ok(best_over_refs(it, rouge1)))));
        r.register(metric(SARI, Scale::Percent, |items| {
            mean(items, |it| {
                let src = meta_field(it, "source", &it.example.meta.source)?;
                sari(src, it.prediction, &it.example.references())
            })
        }));
        r.register(metric(EXACT_MATCH, Scale::Unit, |items| {
            mean(items, |it| {
                let p = crate::text::normalize(it.prediction);
                let hit = it.example.references().iter().any(|r| crate::text::normalize(r) == p);
                Ok(if hit { 1.0 } else { 0.0 })
            })
        }));
        r.register(metric(CONSTRAINT, Scale::Unit, |items| {
            let constrained: Vec<_> = items.iter().filter(|it| !it.example.meta.constraints.is_empty()).collect();
            if constrained.is_empty() {
                return Err(Error::invalid("constraint metric: no example carries constraints"));
            }
            let ok = constrained
                .iter()
                .filter(|it| constraint_satisfaction(it.prediction, &it.example.meta.constraints).fully_respected)
                .count();
            Ok(ok as f64 / constrained.len() as f64)
        }));
        r.register(metric(ONE_TOK, Scale::Inverse, |items| {
            let preds: Vec<&str> = items.iter().map(|it| it.prediction).collect();
            let golds: Vec<&str> = items.iter().map(|it| it.example.target_text.as_str()).collect();
            inverse_first_token_jsd(&preds, &golds)
        }));
        r.register(metric(H_CUST, Scale::Percent, |items| {
            mean(items, |it| {
                let topic = meta_field(it, "topic", &it.example.meta.topic)?;
                Ok(haiku_score(it.prediction, &it.example.target_text, topic))
            })
        }));
        r.with_similarity(Arc::new(UnigramSimilarity));
        r.with_sentiment(Arc::new(LexiconSentiment::default()));
        r
    }
}

impl MetricRegistry {
    pub fn register(&mut self, m: Arc<dyn Metric>) {
        self.metrics.insert(m.id().to_string(), m);
    }

    pub fn with_style_classifier(&mut self, clf: Arc<StyleClassifier>) -> &mut Self {
        self.register(metric(CLF, Scale::Unit, move |items| {
            mean(items, |it| {
                let author = meta_field(it, "author", &it.example.meta.author)?;
                author_style_accuracy(&clf, &[(it.prediction, author)])
            })
        }));
        self
    }

    pub fn with_similarity(&mut self, scorer: Arc<dyn SimilarityScorer>) -> &mut Self {
        self.register(metric(SIMILARITY, Scale::Unit, move |items| {
            if items.is_empty() {
                return Err(Error::invalid("cannot score zero predictions"));
            }
            let mut pairs = Vec::new();
            let mut owner = Vec::new();
            for (i, it) in items.iter().enumerate() {
                for r in it.example.references() {
                    pairs.push((it.prediction, r));
                    owner.push(i);
                }
            }
            let scores = scorer.score_pairs(&pairs)?;
            if scores.len() != pairs.len() {
                return Err(Error::LengthMismatch(scores.len(), pairs.len()));
            }
            let mut best = vec![f64::NEG_INFINITY; items.len()];
            for (i, s) in owner.into_iter().zip(scores) {
                best[i] = best[i].max(s);
            }
            Ok(best.iter().sum::<f64>() / items.len() as f64)
        }));
        self
    }

    pub fn with_sentiment(&mut self, scorer: Arc<dyn SentimentScorer>) -> &mut Self {
        self.register(metric(SENTIMENT_POS, Scale::Unit, move |items| {
            let texts: Vec<&str> = items.iter().map(|it| it.prediction).collect();
            sentiment_positive_rate(&texts, scorer.as_ref())
        }));
        self
    }

    pub fn get(&self, id: &str) -> Result<&dyn Metric> {
        self.metrics.get(id).map(|m| m.as_ref()).ok_or_else(|| Error::Unknown {
            kind: "metric",
            name: id.to_string(),
            known: self.ids().join(", "),
        })
    }

    pub fn ids(&self) -> Vec<&str> {
        self.metrics.keys().map(String::as_str).collect()
    }

    /// Scores `items` with each metric in `ids`, in order.
    pub fn score(&self, ids: &[String], items: &[Scored<'_>]) -> Result<Vec<MetricValue>> {
        let metrics: Vec<&dyn Metric> = ids.iter().map(|id| self.get(id)).collect::<Result<_>>()?;
        metrics
            .into_iter()
            .map(|m| {
                let value = m.score(items)?;
                if !value.is_finite() {
                    return Err(Error::invalid(format!("metric `{}` produced a non-finite value", m.id())));
                }
                Ok(MetricValue {
                    metric_id: m.id().to_string(),
                    value,
                    scale: m.scale(),
                    n: items.len(),
                })
            })
            .collect()
    }
}

#[derive(Debug, Deserialize)]
struct PredictionLine {
    id: String,
    prediction: String,
}

/// Reads a line-delimited `{"id", "prediction"}` file.
pub fn load_predictions(path: &Path) -> Result<BTreeMap<String, String>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i,
            message: e.to_string(),
        })?;
        if out.insert(rec.id.clone(), rec.prediction).is_some() {
            return Err(Error::Parse {
                line: i,
                message: format!("duplicate prediction id `{}`", rec.id),
            });
        }
    }
    Ok(out)
}

/// Metric id → (value, n), as written by batch scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task_id: String,
    pub metrics: BTreeMap<String, MetricValue>,
}

/// Joins predictions to `dataset` by id and scores them. Every example must
/// have a prediction and every prediction must name an example.
pub fn score_predictions(
    predictions: &BTreeMap<String, String>,
    dataset: &Dataset,
    ids: &[String],
    registry: &MetricRegistry,
) -> Result<MetricReport> {
    for id in ids {
        registry.get(id)?;
    }
    let known: HashSet<&str> = dataset.iter().map(|e| e.id.as_str()).collect();
    if let Some(extra) = predictions.keys().find(|k| !known.contains(k.as_str())) {
        return Err(Error::task(&dataset.task_id, format!("prediction for unknown id `{extra}`")));
    }
    let items: Vec<Scored<'_>> = dataset
        .iter()
        .map(|e| {
            predictions
                .get(&e.id)
                .map(|p| Scored {
                    example: e,
                    prediction: p,
                })
                .ok_or_else(|| Error::task(&dataset.task_id, format!("no prediction for id `{}`", e.id)))
        })
        .collect::<Result<_>>()?;
    let values = registry.score(ids, &items)?;
    Ok(MetricReport {
        task_id: dataset.task_id.clone(),
        metrics: values.into_iter().map(|v| (v.metric_id.clone(), v)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Constraint, ExampleMeta, Position, Split};

    fn ex(id: &str, target: &str) -> Example {
        Example {
            id: id.into(),
            task_id: "t".into(),
            input_text: "in".into(),
            target_text: target.into(),
            meta: ExampleMeta::default(),
        }
    }

    #[test]
    fn unknown_metric_lists_known_ids() {
        let r = MetricRegistry::default();
        let err = r.get("bertscore").err().unwrap().to_string();
        assert!(err.contains("rouge1") && err.contains("sari"), "{err}");
    }

    #[test]
    fn identity_report() {
        let d = Dataset::new("t", Split::Test, vec![ex("a", "x y z"), ex("b", "p q")]);
        let preds: BTreeMap<String, String> =
            d.iter().map(|e| (e.id.clone(), e.target_text.clone())).collect();
        let rep = score_predictions(&preds, &d, &[ROUGE1.into(), EXACT_MATCH.into()], &MetricRegistry::default())
            .unwrap();
        assert_eq!(rep.metrics[ROUGE1].value, 1.0);
        assert_eq!(rep.metrics[EXACT_MATCH].n, 2);
        let mut missing = preds.clone();
        missing.remove("a");
        assert!(score_predictions(&missing, &d, &[ROUGE1.into()], &MetricRegistry::default()).is_err());
    }

    #[test]
    fn constraint_metric_skips_unconstrained() {
        let mut a = ex("a", "k x");
        a.meta.constraints = vec![Constraint::new("k", Position::Start)];
        let b = ex("b", "y");
        let items = [
            Scored { example: &a, prediction: "k z" },
            Scored { example: &b, prediction: "nothing" },
        ];
        let v = MetricRegistry::default().score(&[CONSTRAINT.into()], &items).unwrap();
        assert_eq!(v[0].value, 1.0);
    }
}
