use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::protocol::{generate_all, EvalConfig};
use super::sequence::RelativeGainSeries;
use crate::corpus::{compose_instruction, subsample_eval_set, Addition, Example, FixtureSuiteTask};
use crate::error::{Error, Result};
use crate::learner::Learner;
use crate::metrics::constraint_satisfaction;
use crate::text;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    /// Task → |final RG forward − final RG reversed| on the task's primary metric.
    pub gaps: BTreeMap<String, f64>,
    pub max_gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Trained tasks of a run; every scored task when the run records no schedule.
fn trained_ids(s: &RelativeGainSeries) -> BTreeSet<&str> {
    if s.task_end_steps.is_empty() {
        s.task_ids().into_iter().collect()
    } else {
        s.task_end_steps.iter().map(|(t, _)| t.as_str()).collect()
    }
}

/// Compares final relative gains of a forward and a reversed run.
///
/// Only trained tasks are compared. A zero-shot task's score depends on which
/// task came last, so it is not expected to match across orders.
pub fn order_invariance_report(
    forward: &RelativeGainSeries,
    reversed: &RelativeGainSeries,
    tolerance: f64,
) -> Result<OrderReport> {
    let a = trained_ids(forward);
    let b = trained_ids(reversed);
    if a != b {
        return Err(Error::invalid(format!(
            "runs cover different tasks: {:?} vs {:?}",
            a.iter().collect::<Vec<_>>(),
            b.iter().collect::<Vec<_>>()
        )));
    }
    let mut gaps = BTreeMap::new();
    for t in a {
        let f = forward.final_rg(t).ok_or_else(|| Error::task(t, "no final score in forward run"))?;
        let r = reversed.final_rg(t).ok_or_else(|| Error::task(t, "no final score in reversed run"))?;
        gaps.insert(t.to_string(), (f - r).abs());
    }
    let max_gap = gaps.values().copied().fold(0.0, f64::max);
    Ok(OrderReport {
        gaps,
        max_gap,
        tolerance,
        pass: max_gap <= tolerance,
    })
}

/// Fully-respected percentages for one constraint count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub items: usize,
    /// % of composed prompts whose output satisfies every keyword.
    pub constrained_pct: f64,
    /// Same keyword sets, checked against outputs for the bare base prompt.
    pub control_pct: f64,
}

/// Composes `n` keyword constraints onto the task's base prompt and measures
/// how often every keyword appears in the output.
///
/// Keywords are drawn from the tokens of the test split's gold targets,
/// excluding the item's own source tokens, so copying the source never
/// satisfies a constraint by accident.
pub fn compositionality_sweep(
    learner: &dyn Learner,
    task: &FixtureSuiteTask,
    n: usize,
    eval: &EvalConfig,
    seed: u64,
) -> Result<SweepRow> {
    if !(1..=3).contains(&n) {
        return Err(Error::invalid(format!("constraint count must be in 1..=3, got {n}")));
    }
    let spec = &task.spec;
    if !spec.templates.iter().any(|t| t.constraint.is_some()) {
        return Err(Error::task(&spec.task_id, "task has no constraint-bearing templates"));
    }
    let base_template = spec
        .base_template
        .as_ref()
        .ok_or_else(|| Error::task(&spec.task_id, "task has no base template"))?;

    let subset = subsample_eval_set(&task.test, eval.eval_cap, text::derive_seed(seed, "sweep/subset"))?;
    let pool: Vec<String> = task
        .test
        .iter()
        .flat_map(|e| text::tokens(&e.target_text).into_iter().map(str::to_string))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut composed: Vec<Example> = Vec::with_capacity(subset.len());
    let mut bare: Vec<String> = Vec::with_capacity(subset.len());
    for e in subset.iter() {
        let source = e
            .meta
            .source
            .as_deref()
            .ok_or_else(|| Error::task(&spec.task_id, format!("example `{}` has no source", e.id)))?;
        let input = crate::corpus::template::fill(&base_template.text, |name| (name == "source").then_some(source))?;
        let base = Example {
            input_text: input.clone(),
            meta: Default::default(),
            ..e.clone()
        };
        let own: BTreeSet<&str> = text::tokens(source).into_iter().collect();
        let candidates: Vec<&String> = pool.iter().filter(|w| !own.contains(w.as_str())).collect();
        if candidates.len() < n {
            return Err(Error::task(&spec.task_id, "keyword pool too small"));
        }
        let mut rng = text::rng(seed, &format!("sweep/{n}/{}", e.id));
        let picked: Vec<Addition> = candidates
            .choose_multiple(&mut rng, n)
            .map(|k| Addition::Constraint(k.to_string()))
            .collect();
        composed.push(compose_instruction(&base, &picked)?);
        bare.push(input);
    }

    let inputs: Vec<&str> = composed.iter().map(|e| e.input_text.as_str()).collect();
    let with = generate_all(learner, &inputs, eval.max_len);
    let bare_refs: Vec<&str> = bare.iter().map(String::as_str).collect();
    let without = generate_all(learner, &bare_refs, eval.max_len);
    let pct = |outs: &[String]| {
        let ok = composed
            .iter()
            .zip(outs)
            .filter(|(e, o)| constraint_satisfaction(o, &e.meta.constraints).fully_respected)
            .count();
        100.0 * ok as f64 / composed.len() as f64
    };
    Ok(SweepRow {
        n,
        items: composed.len(),
        constrained_pct: pct(&with),
        control_pct: pct(&without),
    })
}
