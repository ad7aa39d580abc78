use std::collections::HashMap;

use crate::text;

/// Smoothing constant substituted for a zero clipped n-gram count.
pub const BLEU_EPSILON: f64 = 1e-9;

pub(crate) fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU-4 over whitespace tokens.
///
/// Orders longer than the prediction are skipped, so a prediction identical to
/// its reference always scores exactly 1.
pub fn bleu4(prediction: &str, references: &[&str]) -> f64 {
    let pred = text::tokens(prediction);
    let refs: Vec<Vec<&str>> = references.iter().map(|r| text::tokens(r)).collect();
    bleu4_tokens(&pred, &refs)
}

pub fn bleu4_tokens(pred: &[&str], refs: &[Vec<&str>]) -> f64 {
    if pred.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let max_order = pred.len().min(4);
    let mut log_sum = 0.0;
    for n in 1..=max_order {
        let counts = ngram_counts(pred, n);
        let ref_counts: Vec<_> = refs.iter().map(|r| ngram_counts(r, n)).collect();
        let total: usize = counts.values().sum();
        let clipped: usize = counts
            .iter()
            .map(|(g, &c)| {
                let max_ref = ref_counts.iter().map(|rc| rc.get(g).copied().unwrap_or(0)).max().unwrap_or(0);
                c.min(max_ref)
            })
            .sum();
        let num = if clipped == 0 { BLEU_EPSILON } else { clipped as f64 };
        log_sum += (num / total as f64).ln();
    }
    let precision = (log_sum / max_order as f64).exp();

    let c = pred.len();
    // closest reference length, ties to the shorter one
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(0);
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    (bp * precision).clamp(0.0, 1.0)
}
