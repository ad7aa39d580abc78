use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{word_tokens, Constraint, Position};
use crate::error::{Error, Result};
use crate::text;

/// Fraction of pairs equal after lowercasing and whitespace collapsing.
pub fn exact_match_accuracy<S: AsRef<str>, T: AsRef<str>>(predictions: &[S], golds: &[T]) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(Error::LengthMismatch(predictions.len(), golds.len()));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("exact match over zero pairs"));
    }
    let hits = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| text::normalize(p.as_ref()) == text::normalize(g.as_ref()))
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub fully_respected: bool,
    pub per_constraint: Vec<bool>,
}

/// Checks each keyword at its position. Words are compared case-insensitively
/// with surrounding punctuation stripped.
pub fn constraint_satisfaction(prediction: &str, constraints: &[Constraint]) -> ConstraintCheck {
    let lowered = prediction.to_lowercase();
    let words = word_tokens(&lowered);
    let per_constraint: Vec<bool> = constraints
        .iter()
        .map(|c| {
            let kw = c.keyword.trim().to_lowercase();
            let kw = text::strip_punct(&kw);
            match c.position {
                Position::Start => words.first() == Some(&kw),
                Position::End => words.last() == Some(&kw),
                Position::Contain => words.contains(&kw),
            }
        })
        .collect();
    ConstraintCheck {
        fully_respected: per_constraint.iter().all(|&b| b),
        per_constraint,
    }
}

/// Floor on the divergence, which caps the inverse at 100.
pub const JSD_FLOOR: f64 = 0.01;

fn first_token(s: &str) -> String {
    s.split_whitespace().next().unwrap_or("").to_lowercase()
}

fn distribution<S: AsRef<str>>(texts: &[S]) -> BTreeMap<String, f64> {
    let mut d = BTreeMap::new();
    for t in texts {
        *d.entry(first_token(t.as_ref())).or_insert(0.0) += 1.0;
    }
    let n = texts.len() as f64;
    d.values_mut().for_each(|v| *v /= n);
    d
}

/// Jensen-Shannon divergence (natural log) between the first-token distributions.
pub fn first_token_jsd<S: AsRef<str>, T: AsRef<str>>(predictions: &[S], golds: &[T]) -> Result<f64> {
    if predictions.is_empty() || golds.is_empty() {
        return Err(Error::invalid("first-token divergence needs non-empty lists"));
    }
    let p = distribution(predictions);
    let q = distribution(golds);
    let mut keys: Vec<&String> = p.keys().chain(q.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut jsd = 0.0;
    for k in keys {
        let pk = p.get(k).copied().unwrap_or(0.0);
        let qk = q.get(k).copied().unwrap_or(0.0);
        let m = 0.5 * (pk + qk);
        if pk > 0.0 {
            jsd += 0.5 * pk * (pk / m).ln();
        }
        if qk > 0.0 {
            jsd += 0.5 * qk * (qk / m).ln();
        }
    }
    Ok(jsd.max(0.0))
}

/// `1 / max(JSD, 0.01)` of the first-token distributions.
pub fn inverse_first_token_jsd<S: AsRef<str>, T: AsRef<str>>(predictions: &[S], golds: &[T]) -> Result<f64> {
    Ok(1.0 / first_token_jsd(predictions, golds)?.max(JSD_FLOOR))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_match() {
        assert_eq!(exact_match_accuracy(&["Yes", "no"], &["yes", "maybe"]).unwrap(), 0.5);
        assert_eq!(exact_match_accuracy(&[" a  b "], &["A b"]).unwrap(), 1.0);
        assert!(matches!(exact_match_accuracy(&["a"], &["a", "b"]), Err(Error::LengthMismatch(1, 2))));
    }

    #[test]
    fn constraint_positions() {
        let c = |k: &str, p| vec![Constraint::new(k, p)];
        assert!(constraint_satisfaction("protesters target french research ship", &c("protesters", Position::Start)).fully_respected);
        assert!(
            constraint_satisfaction("sri lanka closes schools as war with tamils escalates", &c("escalates", Position::End))
                .fully_respected
        );
        assert!(constraint_satisfaction("ends here escalates.", &c("escalates", Position::End)).fully_respected);
        assert!(!constraint_satisfaction("a b c", &c("d", Position::Contain)).fully_respected);
        let both = vec![Constraint::new("a", Position::Start), Constraint::new("z", Position::Contain)];
        let r = constraint_satisfaction("a b c", &both);
        assert_eq!(r.per_constraint, vec![true, false]);
        assert!(!r.fully_respected);
    }

    #[test]
    fn one_tok() {
        assert_eq!(inverse_first_token_jsd(&["why a", "how b"], &["why c", "how d"]).unwrap(), 100.0);
        let v = inverse_first_token_jsd(&["what x"; 3], &["why y"; 5]).unwrap();
        assert!((v - 1.0 / std::f64::consts::LN_2).abs() < 1e-12);
        let a = inverse_first_token_jsd(&["why", "how", "how"], &["why", "what"]).unwrap();
        let b = inverse_first_token_jsd(&["why", "what"], &["why", "how", "how"]).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(inverse_first_token_jsd::<&str, &str>(&[], &["a"]).is_err());
    }
}
