use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

/// One-vs-rest ridge classifier over IDF-weighted unigram counts.
///
/// The last feature is a constant bias, so scaling a feature vector by a
/// positive factor scales every author score by the same factor and leaves
/// the argmax unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleClassifier {
    /// Sorted author labels; row `i` of `weights` belongs to `authors[i]`.
    pub authors: Vec<String>,
    pub vocab: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
}

impl StyleClassifier {
    pub fn dim(&self) -> usize {
        self.idf.len() + 1
    }

    pub fn features(&self, tweet: &str) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for tok in text::tweet_tokens(tweet) {
            if let Some(&j) = self.vocab.get(&tok) {
                x[j] += self.idf[j];
            }
        }
        x[self.idf.len()] = 1.0;
        x
    }

    pub fn scores_for(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Argmax author; ties go to the lexicographically first author.
    pub fn predict_features(&self, x: &[f64]) -> &str {
        let scores = self.scores_for(x);
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        &self.authors[best]
    }

    pub fn predict(&self, tweet: &str) -> &str {
        self.predict_features(&self.features(tweet))
    }
}

/// Fits the classifier by solving the ridge normal equations exactly
/// (primal or dual form, whichever system is smaller). `l2 = +inf` yields
/// all-zero weights.
pub fn fit_author_classifier<S: AsRef<str>, A: AsRef<str>>(corpus: &[(S, A)], l2: f64) -> Result<StyleClassifier> {
    if !(l2 > 0.0) {
        return Err(Error::invalid("l2 must be positive"));
    }
    let mut per_author: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, a) in corpus {
        *per_author.entry(a.as_ref()).or_default() += 1;
    }
    if per_author.len() < 2 {
        return Err(Error::invalid("author classifier needs at least two authors"));
    }
    if let Some((a, _)) = per_author.iter().find(|(_, &n)| n < 2) {
        return Err(Error::invalid(format!("author `{a}` has fewer than two examples")));
    }
    let authors: Vec<String> = per_author.keys().map(|a| a.to_string()).collect();

    let docs: Vec<Vec<String>> = corpus.iter().map(|(t, _)| text::tweet_tokens(t.as_ref())).collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for d in &docs {
        let mut seen: Vec<&str> = d.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_default() += 1;
        }
    }
    let n = corpus.len();
    let vocab: BTreeMap<String, usize> = df.keys().enumerate().map(|(i, t)| (t.to_string(), i)).collect();
    let idf: Vec<f64> = df
        .values()
        .map(|&c| ((1.0 + n as f64) / (1.0 + c as f64)).ln() + 1.0)
        .collect();
    let mut clf = StyleClassifier {
        authors,
        vocab,
        idf,
        weights: Vec::new(),
    };
    let d = clf.dim();
    let k = clf.authors.len();
    if l2.is_infinite() {
        clf.weights = vec![vec![0.0; d]; k];
        return Ok(clf);
    }

    let x = DMatrix::from_fn(n, d, {
        let rows: Vec<Vec<f64>> = corpus.iter().map(|(t, _)| clf.features(t.as_ref())).collect();
        move |i, j| rows[i][j]
    });
    let y = DMatrix::from_fn(n, k, |i, a| if corpus[i].1.as_ref() == clf.authors[a] { 1.0 } else { -1.0 });
    let w = if d <= n {
        let gram = x.transpose() * &x + DMatrix::identity(d, d) * l2;
        let chol = gram.cholesky().ok_or_else(|| Error::invalid("ridge system is not positive definite"))?;
        chol.solve(&(x.transpose() * &y))
    } else {
        let gram = &x * x.transpose() + DMatrix::identity(n, n) * l2;
        let chol = gram.cholesky().ok_or_else(|| Error::invalid("ridge system is not positive definite"))?;
        x.transpose() * chol.solve(&y)
    };
    clf.weights = (0..k).map(|a| w.column(a).iter().copied().collect()).collect();
    Ok(clf)
}

/// Norm of the ridge objective's gradient at the fitted weights, summed over authors.
pub fn ridge_gradient_norm<S: AsRef<str>, A: AsRef<str>>(clf: &StyleClassifier, corpus: &[(S, A)], l2: f64) -> f64 {
    let d = clf.dim();
    let mut total = 0.0;
    for (a, w) in clf.authors.iter().zip(&clf.weights) {
        let mut g = DVector::from_iterator(d, w.iter().map(|v| l2 * v));
        for (t, au) in corpus {
            let x = clf.features(t.as_ref());
            let y = if au.as_ref() == a { 1.0 } else { -1.0 };
            let r: f64 = x.iter().zip(w).map(|(p, q)| p * q).sum::<f64>() - y;
            for j in 0..d {
                g[j] += r * x[j];
            }
        }
        total += g.norm_squared();
    }
    total.sqrt()
}

/// Fraction of generations the classifier attributes to their intended author.
pub fn author_style_accuracy<S: AsRef<str>, A: AsRef<str>>(clf: &StyleClassifier, generations: &[(S, A)]) -> Result<f64> {
    if generations.is_empty() {
        return Err(Error::invalid("author accuracy over zero generations"));
    }
    let mut hits = 0;
    for (t, a) in generations {
        let a = a.as_ref();
        if !clf.authors.iter().any(|x| x == a) {
            return Err(Error::Unknown {
                kind: "author",
                name: a.to_string(),
                known: clf.authors.join(", "),
            });
        }
        if clf.predict(t.as_ref()) == a {
            hits += 1;
        }
    }
    Ok(hits as f64 / generations.len() as f64)
}
