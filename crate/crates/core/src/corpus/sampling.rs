use rand::seq::{index, SliceRandom};

use super::types::{Dataset, Example};
use crate::error::{Error, Result};
use crate::text;

fn copy_with_suffix(ex: &Example, copy: usize) -> Example {
    let mut out = ex.clone();
    if copy > 0 {
        out.id = format!("{}#{copy}", ex.id);
    }
    out
}

/// Brings a dataset to exactly `cap` examples.
///
/// Larger datasets are shuffled and truncated. Smaller ones are duplicated
/// whole `cap / n` times and topped up with a seeded sample (without
/// replacement) of `cap % n` originals, so every original appears at least
/// `floor(cap / n)` times. Copies get `#k` id suffixes to keep ids unique.
pub fn resample_to_cap(d: &Dataset, cap: usize, seed: u64) -> Result<Dataset> {
    if cap == 0 {
        return Err(Error::invalid("cap must be >= 1"));
    }
    if d.is_empty() {
        return Err(Error::EmptyDataset(format!("cannot resample `{}`", d.task_id)));
    }
    let mut rng = text::rng(seed, "resample-to-cap");
    let n = d.len();
    let mut out: Vec<Example> = Vec::with_capacity(cap);
    if n >= cap {
        let picked = index::sample(&mut rng, n, cap);
        out.extend(picked.into_iter().map(|i| d.examples[i].clone()));
    } else {
        let whole = cap / n;
        for copy in 0..whole {
            out.extend(d.examples.iter().map(|e| copy_with_suffix(e, copy)));
        }
        let rest = index::sample(&mut rng, n, cap % n);
        out.extend(rest.into_iter().map(|i| copy_with_suffix(&d.examples[i], whole)));
    }
    out.shuffle(&mut rng);
    Ok(Dataset::new(d.task_id.clone(), d.split, out))
}

/// Seeded uniform subset of `min(n, |d|)` examples, kept in dataset order.
pub fn subsample_eval_set(d: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("eval subset size must be >= 1"));
    }
    if d.is_empty() {
        return Err(Error::EmptyDataset(format!("cannot subsample `{}`", d.task_id)));
    }
    if n >= d.len() {
        return Ok(d.clone());
    }
    let mut rng = text::rng(seed, "subsample-eval");
    let mut picked = index::sample(&mut rng, d.len(), n).into_vec();
    picked.sort_unstable();
    Ok(Dataset::new(
        d.task_id.clone(),
        d.split,
        picked.into_iter().map(|i| d.examples[i].clone()).collect(),
    ))
}
