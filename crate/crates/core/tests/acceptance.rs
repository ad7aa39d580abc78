//! Acceptance suite. Every criterion prints one `[PASS]`/`[FAIL]` line to
//! stderr (written directly, so it shows even when output is captured) and
//! then asserts.
//!
//! Run with `cargo test -p rehearsekit --test acceptance`.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rehearsekit::corpus::{
    generate_synthetic_suite, Constraint, FixtureConfig, FixtureTask, Position,
};
use rehearsekit::evaluation::*;
use rehearsekit::learner::{
    init_learner, pretrain_on_mixture, FeatureConfig, HashedLearner, Learner, Param, TrainHyper,
};
use rehearsekit::metrics::{
    bleu4, constraint_satisfaction, fit_author_classifier, haiku_score, inverse_first_token_jsd, rouge1, sari,
    MetricRegistry, EXACT_MATCH,
};
use rehearsekit::rehearsal::{
    build_rehearsal_buffer, build_task_schedule, compose_training_stream, Direction, RehearsalConfig,
};

fn report(id: &str, pass: bool, detail: impl AsRef<str>) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{tag}] criterion {id}: {}", detail.as_ref());
}

// ---------------------------------------------------------------------------
// shared fixture runs

const SEQUENCE: [&str; 3] = ["copy", "reverse", "insert"];
const MIXTURE: [&str; 4] = ["sort", "shout", "ask", "write"];
const ZERO_SHOT: &str = "repeat";
const TRAIN_PER_TASK: usize = 2000;
const TEST_PER_TASK: usize = 200;

fn hyper() -> TrainHyper {
    TrainHyper {
        learning_rate: 2.0,
        epochs: 4,
        batch_size: 16,
        l2: 0.0005,
    }
}

fn eval() -> EvalConfig {
    EvalConfig {
        eval_cap: 200,
        seed: 3,
        max_len: 16,
    }
}

const DATA_SEED: u64 = 11;
const UB_SEED: u64 = 5;

fn catalog() -> &'static TaskCatalog {
    static C: OnceLock<TaskCatalog> = OnceLock::new();
    C.get_or_init(|| {
        let mut tasks: Vec<FixtureTask> = vec![
            FixtureTask::new("copy", "copy", TRAIN_PER_TASK, TEST_PER_TASK),
            FixtureTask::new("reverse", "reverse", TRAIN_PER_TASK, TEST_PER_TASK),
            FixtureTask::new("insert", "keyword-insertion", TRAIN_PER_TASK, TEST_PER_TASK),
            FixtureTask::new("sort", "token-sort", TRAIN_PER_TASK, TEST_PER_TASK),
            FixtureTask::new("shout", "case-marker", TRAIN_PER_TASK, TEST_PER_TASK),
            FixtureTask::new("ask", "first-word-question", TRAIN_PER_TASK, TEST_PER_TASK),
            FixtureTask::new("write", "style-tag", TRAIN_PER_TASK, TEST_PER_TASK),
        ];
        let mut zs = FixtureTask::new(ZERO_SHOT, "copy", TRAIN_PER_TASK, TEST_PER_TASK);
        zs.zero_shot = true;
        zs.prefix = Some("repeat".into());
        tasks.push(zs);
        TaskCatalog::new(generate_synthetic_suite(&FixtureConfig::new(tasks), 7).unwrap()).unwrap()
    })
}

fn random_base() -> &'static HashedLearner {
    static B: OnceLock<HashedLearner> = OnceLock::new();
    B.get_or_init(|| init_learner(1, &catalog().all_datasets(), FeatureConfig::default()).unwrap())
}

fn ids(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn run(base: &dyn Learner, ubs: &UpperBoundTable, r: f64, dir: Direction, zero_shot: bool) -> RunOutcome {
    let zs = if zero_shot { ids(&[ZERO_SHOT]) } else { Vec::new() };
    let config = SequenceConfig {
        schedule: build_task_schedule(&ids(&SEQUENCE), &zs, dir).unwrap(),
        r,
        hyper: hyper(),
        cadence: Cadence::PerTask(1),
        eval: eval(),
        data_seed: DATA_SEED,
    };
    run_continual_sequence(&format!("{dir:?}-{r}"), &config, catalog(), base, ubs, &MetricRegistry::default(), None)
        .unwrap()
}

struct Paired {
    ubs: UpperBoundTable,
    r0: RunOutcome,
    r01: RunOutcome,
    elapsed: Duration,
}

/// Upper bounds plus the forward r=0 / r=0.01 pair (with the zero-shot task attached).
fn paired() -> &'static Paired {
    static P: OnceLock<Paired> = OnceLock::new();
    P.get_or_init(|| {
        let t0 = Instant::now();
        let mut all = ids(&SEQUENCE);
        all.push(ZERO_SHOT.into());
        let ubs = compute_upper_bounds(
            &all,
            catalog(),
            random_base(),
            &hyper(),
            &MetricRegistry::default(),
            &eval(),
            UB_SEED,
        )
        .unwrap();
        let (r0, r01) = rayon::join(
            || run(random_base(), &ubs, 0.0, Direction::Forward, true),
            || run(random_base(), &ubs, 0.01, Direction::Forward, true),
        );
        Paired {
            ubs,
            r0,
            r01,
            elapsed: t0.elapsed(),
        }
    })
}

fn fmt_rg(s: &RelativeGainSeries) -> String {
    SEQUENCE
        .iter()
        .map(|t| format!("{t}={:.3}", s.final_rg(t).unwrap()))
        .collect::<Vec<_>>()
        .join(" ")
}

// ---------------------------------------------------------------------------
// 1

#[test]
fn c01_stream_composition_is_exact() {
    let mut tasks = vec![
        FixtureTask::new("a", "copy", 2400, 10),
        FixtureTask::new("b", "reverse", 1500, 10),
        FixtureTask::new("c", "token-sort", 1000, 10),
    ];
    tasks[0].cap = Some(2000);
    let cat = TaskCatalog::new(generate_synthetic_suite(&FixtureConfig::new(tasks), 1).unwrap()).unwrap();
    let cfg = RehearsalConfig::new(0.01, 4).unwrap();
    let capped: Vec<_> = ["a", "b", "c"].iter().map(|t| cat.capped_train(t, 4).unwrap()).collect();
    let sizes: Vec<usize> = capped.iter().map(|d| d.len()).collect();
    let buffers: Vec<_> = ["a", "b"]
        .iter()
        .zip(&capped)
        .map(|(t, d)| build_rehearsal_buffer(d, &cat.get(t).unwrap().spec, &cfg).unwrap())
        .collect();
    let buf_sizes: Vec<usize> = buffers.iter().map(|b| b.len()).collect();
    let epochs = 3;
    let stream = compose_training_stream(&capped[2], &buffers, 16, epochs, 9).unwrap();
    let mut per_origin: BTreeMap<&str, usize> = BTreeMap::new();
    for item in stream.items() {
        *per_origin.entry(item.origin_task_id.as_str()).or_default() += 1;
    }
    let floors: Vec<usize> = sizes[..2].iter().map(|&n| (0.01 * n as f64).floor() as usize).collect();
    let pass = sizes == [2000, 1500, 1000]
        && stream.items_per_epoch == 1000 + 20 + 15
        && buf_sizes == floors
        && per_origin == BTreeMap::from([("a", 20 * epochs), ("b", 15 * epochs), ("c", 1000 * epochs)]);
    report(
        "1 (stream composition)",
        pass,
        format!("sizes {sizes:?}, buffers {buf_sizes:?}, items/epoch {}", stream.items_per_epoch),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 2

#[test]
fn c02_forgetting_and_retention() {
    let p = paired();
    let (s0, s1) = (&p.r0.series, &p.r01.series);
    let earlier = &SEQUENCE[..SEQUENCE.len() - 1];
    let a = s0.final_rg(SEQUENCE[0]).unwrap() <= 0.7;
    let b = earlier.iter().all(|t| s1.final_rg(t).unwrap() >= 0.9);
    let c = earlier.iter().all(|t| s1.final_rg(t).unwrap() > s0.final_rg(t).unwrap());
    let fast = p.elapsed < Duration::from_secs(300);
    let detail = format!(
        "r=0 [{}] r=0.01 [{}]; (a) {a} (b) {b} (c) {c}; {:.1}s",
        fmt_rg(s0),
        fmt_rg(s1),
        p.elapsed.as_secs_f64()
    );
    report("2 (forgetting vs retention)", a && b && c && fast, detail);
    assert!(a, "r=0 did not forget the first task");
    assert!(b, "r=0.01 did not retain every earlier task");
    assert!(c, "r=0.01 is not strictly better than r=0 on every earlier task");
    assert!(fast, "took {:?}", p.elapsed);
}

// ---------------------------------------------------------------------------
// 3

#[test]
fn c03_zero_shot_task_is_not_hurt_by_rehearsal() {
    let p = paired();
    let items = subsample_len(ZERO_SHOT);
    let r0 = p.r0.series.final_raw(ZERO_SHOT).unwrap();
    let r1 = p.r01.series.final_raw(ZERO_SHOT).unwrap();
    let pass = r1 >= r0 && items >= 200;
    report(
        "3 (zero-shot retention)",
        pass,
        format!("{ZERO_SHOT}: r=0 {r0:.3}, r=0.01 {r1:.3} over {items} items"),
    );
    assert!(pass);
}

fn subsample_len(task: &str) -> usize {
    catalog().get(task).unwrap().test.len().min(eval().eval_cap)
}

// ---------------------------------------------------------------------------
// 4

#[test]
fn c04_full_rehearsal_matches_joint_training() {
    let ubs = &paired().ubs;
    let seq = run(random_base(), ubs, 1.0, Direction::Forward, false);
    let config = &seq.manifest.config;
    let budget = sequence_step_budget(config, catalog()).unwrap();
    let joint = run_joint_training(&ids(&SEQUENCE), catalog(), random_base(), &hyper(), budget, DATA_SEED).unwrap();
    let reg = MetricRegistry::default();
    let finals = seq.series.final_points();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for t in SEQUENCE {
        let task = catalog().get(t).unwrap();
        let j = evaluate_task(joint.as_ref(), &task.spec, &task.test, &reg, &eval())
            .unwrap()
            .into_iter()
            .find(|v| v.metric_id == EXACT_MATCH)
            .unwrap()
            .value;
        let s = finals[&(t.to_string(), EXACT_MATCH.to_string())].raw;
        worst = worst.max((s - j).abs());
        parts.push(format!("{t} seq {s:.3} joint {j:.3}"));
    }
    let pass = worst <= 0.02 && seq.learner.step_count() as usize == budget && joint.step_count() as usize == budget;
    report(
        "4 (r=1 vs joint)",
        pass,
        format!("{}; {budget} steps; max gap {worst:.3}", parts.join(", ")),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 5

#[test]
fn c05_order_invariance() {
    let p = paired();
    let rev = run(random_base(), &p.ubs, 0.01, Direction::Reversed, true);
    let rep = order_invariance_report(&p.r01.series, &rev.series, 0.1).unwrap();
    let gaps: Vec<String> = rep.gaps.iter().map(|(t, g)| format!("{t}={g:.3}")).collect();
    report(
        "5 (order invariance)",
        rep.pass,
        format!("reversed [{}]; gaps {}", fmt_rg(&rev.series), gaps.join(" ")),
    );
    assert!(rep.pass);
}

// ---------------------------------------------------------------------------
// 6

#[test]
fn c06_relative_gain_arithmetic() {
    let a = relative_gain(40.7, 41.9).unwrap();
    let b = relative_gain(49.8, 49.8).unwrap();
    let flag = forgetting_flag(a, FORGETTING_THRESHOLD);
    let pass = (a - 0.9714).abs() <= 1e-4 && b == 1.0 && !flag;
    report(
        "6 (relative gain arithmetic)",
        pass,
        format!("40.7/41.9 = {a:.6}, 49.8/49.8 = {b}, forgetting_flag(0.9714) = {flag}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 7: brute-force oracles

const WORDS: &[&str] = &["the", "cat", "sat", "on", "a", "mat", "dog", "ran", "The", "Cat."];

fn random_text(rng: &mut ChaCha8Rng, min: usize) -> String {
    let n = rng.gen_range(min..=10);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// Occurrences of `gram` in `toks`, by scanning every offset.
fn occurrences(toks: &[String], gram: &[String]) -> usize {
    if gram.len() > toks.len() {
        return 0;
    }
    (0..=toks.len() - gram.len()).filter(|&i| toks[i..i + gram.len()] == *gram).count()
}

/// Distinct n-grams of `toks` in first-seen order.
fn distinct(toks: &[String], n: usize) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = Vec::new();
    if n == 0 || n > toks.len() {
        return out;
    }
    for i in 0..=toks.len() - n {
        let g = toks[i..i + n].to_vec();
        if !out.contains(&g) {
            out.push(g);
        }
    }
    out
}

fn ws(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn bleu_oracle(pred: &[String], refs: &[Vec<String>]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    let orders = pred.len().min(4);
    let mut logs = 0.0;
    for n in 1..=orders {
        let mut clipped = 0usize;
        for g in distinct(pred, n) {
            let best_ref = refs.iter().map(|r| occurrences(r, &g)).max().unwrap();
            clipped += occurrences(pred, &g).min(best_ref);
        }
        let total = pred.len() + 1 - n;
        let num = if clipped == 0 { 1e-9 } else { clipped as f64 };
        logs += (num / total as f64).ln();
    }
    let mut best = refs[0].len();
    for r in refs {
        let (d, bd) = (r.len().abs_diff(pred.len()), best.abs_diff(pred.len()));
        if d < bd || (d == bd && r.len() < best) {
            best = r.len();
        }
    }
    let bp = if pred.len() >= best { 1.0 } else { (1.0 - best as f64 / pred.len() as f64).exp() };
    bp * (logs / orders as f64).exp()
}

fn strip(t: &str) -> String {
    let punct = ['.', '!', '?', ',', ';', ':', '"', '\'', '`'];
    let mut s = t;
    while let Some(c) = s.chars().next() {
        if punct.contains(&c) {
            s = &s[c.len_utf8()..];
        } else {
            break;
        }
    }
    while let Some(c) = s.chars().last() {
        if punct.contains(&c) {
            s = &s[..s.len() - c.len_utf8()];
        } else {
            break;
        }
    }
    s.to_string()
}

fn words_lower(s: &str) -> Vec<String> {
    s.split_whitespace().map(|t| strip(&t.to_lowercase())).filter(|t| !t.is_empty()).collect()
}

fn rouge_oracle(pred: &str, reference: &str) -> f64 {
    let p = words_lower(pred);
    let r = words_lower(reference);
    if p.is_empty() || r.is_empty() {
        return 0.0;
    }
    let overlap: usize = distinct(&p, 1).iter().map(|g| occurrences(&p, g).min(occurrences(&r, g))).sum();
    if overlap == 0 {
        return 0.0;
    }
    let (pr, rc) = (overlap as f64 / p.len() as f64, overlap as f64 / r.len() as f64);
    2.0 * pr * rc / (pr + rc)
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn sari_oracle(source: &str, pred: &str, refs: &[&str]) -> f64 {
    let low = |s: &str| ws(&s.to_lowercase());
    let src = low(source);
    let prd = low(pred);
    let rfs: Vec<Vec<String>> = refs.iter().map(|r| low(r)).collect();
    let k = refs.len() as f64;
    let mut total = 0.0;
    for n in 1..=4 {
        let s_grams = distinct(&src, n);
        let p_grams = distinct(&prd, n);
        let mut r_grams: Vec<Vec<String>> = Vec::new();
        for r in &rfs {
            for g in distinct(r, n) {
                if !r_grams.contains(&g) {
                    r_grams.push(g);
                }
            }
        }
        let s_cnt = |g: &[String]| occurrences(&src, g) as f64 * k;
        let p_cnt = |g: &[String]| occurrences(&prd, g) as f64 * k;
        let r_cnt = |g: &[String]| rfs.iter().map(|r| occurrences(r, g)).sum::<usize>() as f64;

        // keep: grams in both source and prediction
        let keep: Vec<&Vec<String>> = s_grams.iter().filter(|g| p_grams.contains(g)).collect();
        let keep_p = if keep.is_empty() {
            1.0
        } else {
            keep.iter()
                .map(|g| {
                    let kept = s_cnt(g).min(p_cnt(g));
                    kept.min(r_cnt(g)) / kept
                })
                .sum::<f64>()
                / keep.len() as f64
        };
        let keep_all: Vec<&Vec<String>> = s_grams.iter().filter(|g| r_grams.contains(g)).collect();
        let keep_r = if keep_all.is_empty() {
            1.0
        } else {
            let good: f64 = keep.iter().map(|g| s_cnt(g).min(p_cnt(g)).min(r_cnt(g))).sum();
            let all: f64 = keep_all.iter().map(|g| s_cnt(g).min(r_cnt(g))).sum();
            good / all
        };

        // delete: source surplus over the prediction
        let del: Vec<(&Vec<String>, f64)> = s_grams
            .iter()
            .map(|g| (g, s_cnt(g) - p_cnt(g)))
            .filter(|(_, c)| *c > 0.0)
            .collect();
        let del_p = if del.is_empty() {
            1.0
        } else {
            del.iter().map(|(g, c)| (c - r_cnt(g)).max(0.0) / c).sum::<f64>() / del.len() as f64
        };

        // add: prediction grams absent from the source
        let add: Vec<&Vec<String>> = p_grams.iter().filter(|g| !s_grams.contains(g)).collect();
        let add_all = r_grams.iter().filter(|g| !s_grams.contains(g)).count();
        let good = add.iter().filter(|g| r_grams.contains(g)).count() as f64;
        let add_p = if add.is_empty() { 0.0 } else { good / add.len() as f64 };
        let add_r = if add_all == 0 { 0.0 } else { good / add_all as f64 };

        total += (f1(keep_p, keep_r) + del_p + f1(add_p, add_r)) / 3.0;
    }
    100.0 * total / 4.0
}

fn constraint_oracle(pred: &str, cs: &[Constraint]) -> Vec<bool> {
    let w = words_lower(pred);
    cs.iter()
        .map(|c| {
            let kw = strip(&c.keyword.trim().to_lowercase());
            match c.position {
                Position::Start => !w.is_empty() && w[0] == kw,
                Position::End => !w.is_empty() && w[w.len() - 1] == kw,
                Position::Contain => w.contains(&kw),
            }
        })
        .collect()
}

fn jsd_oracle(preds: &[String], golds: &[String]) -> f64 {
    let first = |s: &String| s.split_whitespace().next().unwrap_or("").to_lowercase();
    let pf: Vec<String> = preds.iter().map(first).collect();
    let gf: Vec<String> = golds.iter().map(first).collect();
    let mut support: Vec<String> = pf.iter().chain(&gf).cloned().collect();
    support.sort();
    support.dedup();
    let mut jsd = 0.0;
    for w in &support {
        let p = pf.iter().filter(|x| *x == w).count() as f64 / pf.len() as f64;
        let q = gf.iter().filter(|x| *x == w).count() as f64 / gf.len() as f64;
        let m = (p + q) / 2.0;
        if p > 0.0 {
            jsd += 0.5 * p * (p / m).ln();
        }
        if q > 0.0 {
            jsd += 0.5 * q * (q / m).ln();
        }
    }
    1.0 / jsd.max(0.0).max(0.01)
}

fn syllables_oracle(text: &str) -> usize {
    let vowel = |c: char| "aeiouy".contains(c);
    let mut total = 0;
    for word in text.split_whitespace() {
        let letters: Vec<char> = word.to_lowercase().chars().filter(|c| c.is_alphabetic()).collect();
        if letters.is_empty() {
            continue;
        }
        let mut groups = 0usize;
        for i in 0..letters.len() {
            if vowel(letters[i]) && (i == 0 || !vowel(letters[i - 1])) {
                groups += 1;
            }
        }
        let n = letters.len();
        let silent_e = n >= 2 && letters[n - 1] == 'e' && !vowel(letters[n - 2]);
        let le_syllable = n >= 3 && letters[n - 2] == 'l' && !vowel(letters[n - 3]);
        if silent_e && !le_syllable && groups > 0 {
            groups -= 1;
        }
        total += groups.max(1);
    }
    total
}

fn haiku_oracle(pred: &str, gold: &str, topic: &str) -> f64 {
    let lines = |s: &str| s.split(['\n', '/']).filter(|l| !l.trim().is_empty()).count();
    let words = |s: &str| -> Vec<String> {
        s.split(|c: char| c.is_whitespace() || c == '/')
            .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
            .filter(|t| !t.is_empty())
            .collect()
    };
    let line = (1.0 - lines(pred).abs_diff(lines(gold)) as f64 / 3.0).max(0.0);
    let syl = (1.0 - syllables_oracle(pred).abs_diff(syllables_oracle(gold)) as f64 / 17.0).max(0.0);
    let bleu = bleu_oracle(&words(pred), &[words(gold)]);
    let norm = |s: &str| ws(&s.to_lowercase()).join(" ");
    let hit = norm(topic).is_empty() || norm(pred).contains(&norm(topic));
    100.0 * (line + syl + bleu + if hit { 1.0 } else { 0.0 }) / 4.0
}

#[test]
fn c07_metrics_match_brute_force_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut note = |name: &'static str, a: f64, b: f64| {
        let e = worst.entry(name).or_insert(0.0);
        *e = e.max((a - b).abs());
    };
    let mut constraint_mismatch = 0;
    for _ in 0..200 {
        let pred = random_text(&mut rng, 0);
        let refs: Vec<String> = (0..rng.gen_range(1..=3)).map(|_| random_text(&mut rng, 1)).collect();
        let ref_strs: Vec<&str> = refs.iter().map(String::as_str).collect();
        let ref_toks: Vec<Vec<String>> = refs.iter().map(|r| ws(r)).collect();
        note("bleu4", bleu4(&pred, &ref_strs), bleu_oracle(&ws(&pred), &ref_toks));
        note("rouge1", rouge1(&pred, &refs[0]), rouge_oracle(&pred, &refs[0]));

        let source = random_text(&mut rng, 1);
        note("sari", sari(&source, &pred, &ref_strs).unwrap(), sari_oracle(&source, &pred, &ref_strs));

        let positions = [Position::Start, Position::End, Position::Contain];
        let cs: Vec<Constraint> = (0..rng.gen_range(1..=3))
            .map(|_| Constraint::new(*WORDS.choose(&mut rng).unwrap(), *positions.choose(&mut rng).unwrap()))
            .collect();
        let got = constraint_satisfaction(&pred, &cs);
        let want = constraint_oracle(&pred, &cs);
        if got.per_constraint != want || got.fully_respected != want.iter().all(|&b| b) {
            constraint_mismatch += 1;
        }

        let preds: Vec<String> = (0..rng.gen_range(1..=5)).map(|_| random_text(&mut rng, 0)).collect();
        let golds: Vec<String> = (0..rng.gen_range(1..=5)).map(|_| random_text(&mut rng, 0)).collect();
        note("1tok", inverse_first_token_jsd(&preds, &golds).unwrap(), jsd_oracle(&preds, &golds));

        let slashy = |rng: &mut ChaCha8Rng, s: String| -> String {
            s.split(' ')
                .map(|w| if rng.gen_bool(0.2) { format!("{w} /") } else { w.to_string() })
                .collect::<Vec<_>>()
                .join(" ")
        };
        let hp = slashy(&mut rng, pred.clone());
        let hg = slashy(&mut rng, refs[0].clone());
        let topic = if rng.gen_bool(0.5) { random_text(&mut rng, 1).split(' ').take(2).collect::<Vec<_>>().join(" ") } else { String::new() };
        note("haiku", haiku_score(&hp, &hg, &topic), haiku_oracle(&hp, &hg, &topic));
    }
    let max = worst.values().copied().fold(0.0, f64::max);
    let pass = max <= 1e-9 && constraint_mismatch == 0;
    let detail: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    report(
        "7 (metric oracles)",
        pass,
        format!("200 instances; max |diff| {}; constraint mismatches {constraint_mismatch}", detail.join(", ")),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 8

#[test]
fn c08_pinned_constraint_cases() {
    let a = constraint_satisfaction(
        "protesters target french research ship",
        &[Constraint::new("protesters", Position::Start)],
    )
    .fully_respected;
    let b = constraint_satisfaction(
        "sri lanka closes schools as war with tamils escalates",
        &[Constraint::new("escalates", Position::End)],
    )
    .fully_respected;
    report("8 (pinned constraint cases)", a && b, format!("start:protesters {a}, end:escalates {b}"));
    assert!(a && b);
}

// ---------------------------------------------------------------------------
// 9

#[test]
fn c09_compositionality_sweep() {
    let learner = paired().r01.learner.as_ref();
    let task = catalog().get("insert").unwrap();
    let rows: Vec<SweepRow> = (1..=3).map(|n| compositionality_sweep(learner, task, n, &eval(), 9).unwrap()).collect();
    let monotone = rows.windows(2).all(|w| w[1].constrained_pct <= w[0].constrained_pct);
    let beats = rows.iter().all(|r| r.constrained_pct > r.control_pct);
    let detail: Vec<String> = rows
        .iter()
        .map(|r| format!("n={} {:.1}% vs {:.1}%", r.n, r.constrained_pct, r.control_pct))
        .collect();
    report("9 (compositionality)", monotone && beats, detail.join(", "));
    assert!(monotone && beats);
}

// ---------------------------------------------------------------------------
// 10

#[test]
fn c10_pretraining_helps_continual_learning() {
    let p = paired();
    let mut pre = random_base().clone();
    let mixture: Vec<_> = MIXTURE.iter().map(|t| &catalog().get(t).unwrap().train).collect();
    pretrain_on_mixture(&mut pre, &mixture, &TrainHyper { epochs: 2, ..hyper() }, 3).unwrap();
    let ubs = compute_upper_bounds(
        &ids(&SEQUENCE),
        catalog(),
        &pre,
        &hyper(),
        &MetricRegistry::default(),
        &eval(),
        UB_SEED,
    )
    .unwrap();
    let out = run(&pre, &ubs, 0.01, Direction::Forward, false);
    let random: Vec<f64> = SEQUENCE.iter().map(|t| p.r01.series.final_rg(t).unwrap()).collect();
    let pretrained: Vec<f64> = SEQUENCE.iter().map(|t| out.series.final_rg(t).unwrap()).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let not_worse = mean(&pretrained) >= mean(&random);
    let strictly = pretrained.iter().zip(&random).any(|(a, b)| a > b);
    report(
        "10 (pretraining origin)",
        not_worse && strictly,
        format!(
            "random [{}] mean {:.3}; pretrained [{}] mean {:.3}",
            fmt_rg(&p.r01.series),
            mean(&random),
            fmt_rg(&out.series),
            mean(&pretrained)
        ),
    );
    assert!(not_worse, "pretrained mean RG below random init");
    assert!(strictly, "pretrained learner is not better on any task");
}

// ---------------------------------------------------------------------------
// 11

#[test]
fn c11_learner_numerics() {
    let cat = catalog();
    let pool: Vec<(&str, &str)> = SEQUENCE
        .iter()
        .flat_map(|t| cat.get(t).unwrap().train.iter().take(300))
        .map(|e| (e.input_text.as_str(), e.target_text.as_str()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut learner = random_base().clone();
    let warm = TrainHyper {
        learning_rate: 0.5,
        l2: 0.001,
        ..hyper()
    };
    for chunk in pool.chunks(16).take(30) {
        learner.train_batch(chunk.iter().copied(), &warm).unwrap();
    }

    // analytic vs central differences
    let examples: Vec<(&str, &str)> = pool.choose_multiple(&mut rng, 50).copied().collect();
    let h = 1e-5;
    let mut worst_rel: f64 = 0.0;
    let mut checked = 0;
    let mut relational = 0;
    for &(x, y) in &examples {
        let (_, grad) = learner.loss_and_gradient(x, y);
        let mut params: Vec<(&Param, &f64)> = grad.iter().filter(|(_, g)| g.abs() >= 1e-4).collect();
        params.shuffle(&mut rng);
        // always include a relational weight when the example has one
        if let Some(i) = params.iter().position(|(p, _)| matches!(p, Param::Relation(_))) {
            params.swap(0, i);
        }
        for (&p, &g) in params.into_iter().take(4) {
            let w = learner.weight(p);
            let mut probe = learner.clone();
            probe.set_weight(p, w + h);
            let up = probe.example_loss(x, y);
            probe.set_weight(p, w - h);
            let down = probe.example_loss(x, y);
            let numeric = (up - down) / (2.0 * h);
            worst_rel = worst_rel.max((g - numeric).abs() / g.abs().max(numeric.abs()));
            checked += 1;
            relational += matches!(p, Param::Relation(_)) as usize;
        }
    }

    // every step distribution sums to one
    let mut worst_norm: f64 = 0.0;
    for &(x, y) in &examples {
        let toks: Vec<&str> = y.split_whitespace().collect();
        for t in 0..=toks.len() {
            let p = learner.next_token_distribution(x, &toks[..t]);
            worst_norm = worst_norm.max((p.iter().sum::<f64>() - 1.0).abs());
        }
    }

    // snapshot, restore, and keep training in lockstep
    let bytes = learner.snapshot();
    let mut restored = HashedLearner::from_bytes(&bytes).unwrap();
    let mut original = learner.clone();
    for chunk in pool.chunks(16).skip(30).take(10) {
        original.train_batch(chunk.iter().copied(), &warm).unwrap();
        restored.train_batch(chunk.iter().copied(), &warm).unwrap();
    }
    let bitwise = original.snapshot() == restored.snapshot();

    let pass = worst_rel <= 1e-4 && checked >= 50 && relational > 0 && worst_norm <= 1e-9 && bitwise;
    report(
        "11 (learner numerics)",
        pass,
        format!(
            "{checked} gradient entries ({relational} relational) max rel err {worst_rel:.1e}; \
             max |sum p - 1| {worst_norm:.1e}; 10-step replay after restore identical: {bitwise}"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 12

#[test]
fn c12_stylometry_classifier() {
    let authors = ["ann", "bob", "cyd", "dee"];
    let markers = [["#sun", "lovely"], ["#rain", "grim"], ["@cyd_fans", "epic"], ["#tea", "cozy"]];
    let filler = ["today", "we", "went", "out", "again", "city", "big", "news", "with", "friends", "late", "night"];
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (a, m) in authors.iter().zip(&markers) {
        for i in 0..100 {
            let len = rng.gen_range(3..7);
            let mut words: Vec<&str> = filler.choose_multiple(&mut rng, len).copied().collect();
            words.insert(rng.gen_range(0..=words.len()), m[i % 2]);
            let tweet = words.join(" ");
            if i < 75 {
                train.push((tweet, a.to_string()));
            } else {
                test.push((tweet, a.to_string()));
            }
        }
    }
    let clf = fit_author_classifier(&train, 1.0).unwrap();
    let correct = test.iter().filter(|(t, a)| clf.predict(t) == a).count();
    let accuracy = correct as f64 / test.len() as f64;
    let mut invariant = true;
    for (t, _) in &test {
        let x = clf.features(t);
        for c in [0.01, 0.5, 3.0, 1e4] {
            let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
            invariant &= clf.predict_features(&scaled) == clf.predict_features(&x);
        }
    }
    let pass = accuracy >= 0.95 && invariant;
    report(
        "12 (stylometry)",
        pass,
        format!("held-out accuracy {accuracy:.3} on {} tweets; scale invariant: {invariant}", test.len()),
    );
    assert!(pass);
}
