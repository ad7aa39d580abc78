use std::collections::HashMap;

use crate::corpus::word_tokens;

/// ROUGE-1 F1 over lowercased words with surrounding punctuation stripped.
pub fn rouge1(prediction: &str, reference: &str) -> f64 {
    let p = prediction.to_lowercase();
    let r = reference.to_lowercase();
    let pred = word_tokens(&p);
    let refs = word_tokens(&r);
    if pred.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    for t in &refs {
        *ref_counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &pred {
        if let Some(c) = ref_counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / refs.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cases() {
        assert!((rouge1("a b c", "a b d") - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rouge1("Same text.", "same text"), 1.0);
        assert_eq!(rouge1("x y", "z"), 0.0);
        assert_eq!(rouge1("", ""), 0.0);
        // clipped: "a a a" vs "a b" -> overlap 1, P 1/3, R 1/2
        assert!((rouge1("a a a", "a b") - 0.4).abs() < 1e-12);
    }
}
