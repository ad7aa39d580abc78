use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

type Counter = HashMap<Vec<String>, f64>;

fn grams(tokens: &[String], n: usize) -> Counter {
    let mut c = Counter::new();
    for g in tokens.windows(n) {
        *c.entry(g.to_vec()).or_default() += 1.0;
    }
    c
}

fn scaled(c: &Counter, k: f64) -> Counter {
    c.iter().map(|(g, v)| (g.clone(), v * k)).collect()
}

fn intersect(a: &Counter, b: &Counter) -> Counter {
    a.iter()
        .filter_map(|(g, &v)| b.get(g).map(|&w| (g.clone(), v.min(w))))
        .collect()
}

fn subtract(a: &Counter, b: &Counter) -> Counter {
    a.iter()
        .filter_map(|(g, &v)| {
            let rest = v - b.get(g).copied().unwrap_or(0.0);
            (rest > 0.0).then(|| (g.clone(), rest))
        })
        .collect()
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// (keep F1, deletion precision, addition F1) for one n-gram order.
fn sari_order(src: &Counter, pred: &Counter, refs: &[Counter]) -> (f64, f64, f64) {
    let k = refs.len() as f64;
    let mut ref_all = Counter::new();
    for r in refs {
        for (g, v) in r {
            *ref_all.entry(g.clone()).or_default() += v;
        }
    }
    let src_rep = scaled(src, k);
    let pred_rep = scaled(pred, k);

    let keep = intersect(&src_rep, &pred_rep);
    let keep_good = intersect(&keep, &ref_all);
    let keep_all = intersect(&src_rep, &ref_all);
    let get = |c: &Counter, g: &Vec<String>| c.get(g).copied().unwrap_or(0.0);
    let keep_p = if keep.is_empty() {
        1.0
    } else {
        keep.iter().map(|(g, v)| get(&keep_good, g) / v).sum::<f64>() / keep.len() as f64
    };
    let keep_r = if keep_all.is_empty() {
        1.0
    } else {
        keep_good.values().sum::<f64>() / keep_all.values().sum::<f64>()
    };

    let del = subtract(&src_rep, &pred_rep);
    let del_good = subtract(&del, &ref_all);
    let del_p = if del.is_empty() {
        1.0
    } else {
        del.iter().map(|(g, v)| get(&del_good, g) / v).sum::<f64>() / del.len() as f64
    };

    let src_set: HashSet<&Vec<String>> = src.keys().collect();
    let ref_set: HashSet<&Vec<String>> = ref_all.keys().collect();
    let add: HashSet<&Vec<String>> = pred.keys().filter(|g| !src_set.contains(g)).collect();
    let add_all: HashSet<&Vec<String>> = ref_set.difference(&src_set).copied().collect();
    let add_good = add.intersection(&ref_set).count() as f64;
    // no candidates on either side counts as 0, not as a perfect score
    let add_p = if add.is_empty() { 0.0 } else { add_good / add.len() as f64 };
    let add_r = if add_all.is_empty() { 0.0 } else { add_good / add_all.len() as f64 };

    (f1(keep_p, keep_r), del_p, f1(add_p, add_r))
}

fn lower_tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_lowercase).collect()
}

/// SARI on a 0..100 scale, over lowercased whitespace tokens.
pub fn sari(source: &str, prediction: &str, references: &[&str]) -> Result<f64> {
    let src = lower_tokens(source);
    if src.is_empty() {
        return Err(Error::invalid("sari: empty source"));
    }
    if references.is_empty() {
        return Err(Error::invalid("sari: no references"));
    }
    let pred = lower_tokens(prediction);
    let refs: Vec<Vec<String>> = references.iter().map(|r| lower_tokens(r)).collect();
    let mut total = 0.0;
    for n in 1..=4 {
        let ref_grams: Vec<Counter> = refs.iter().map(|r| grams(r, n)).collect();
        let (keep, del, add) = sari_order(&grams(&src, n), &grams(&pred, n), &ref_grams);
        total += (keep + del + add) / 3.0;
    }
    Ok(100.0 * total / 4.0)
}

/// Per-component averages over orders 1..4, on a 0..1 scale: (keep, del, add).
pub fn sari_components(source: &str, prediction: &str, references: &[&str]) -> Result<(f64, f64, f64)> {
    let src = lower_tokens(source);
    if src.is_empty() || references.is_empty() {
        return Err(Error::invalid("sari: empty source or no references"));
    }
    let pred = lower_tokens(prediction);
    let refs: Vec<Vec<String>> = references.iter().map(|r| lower_tokens(r)).collect();
    let mut acc = (0.0, 0.0, 0.0);
    for n in 1..=4 {
        let ref_grams: Vec<Counter> = refs.iter().map(|r| grams(r, n)).collect();
        let (k, d, a) = sari_order(&grams(&src, n), &grams(&pred, n), &ref_grams);
        acc = (acc.0 + k / 4.0, acc.1 + d / 4.0, acc.2 + a / 4.0);
    }
    Ok(acc)
}
