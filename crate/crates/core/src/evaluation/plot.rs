//! CSV and SVG renderings of a results file. Read-only with respect to results.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::sequence::SeriesPoint;
use crate::error::{Error, Result};

/// Step → task → RG, using each task's first metric in file order.
fn table(points: &[SeriesPoint]) -> Result<(Vec<String>, BTreeMap<u64, BTreeMap<String, f64>>)> {
    if points.is_empty() {
        return Err(Error::invalid("results are empty"));
    }
    let mut metric_of: BTreeMap<&str, &str> = BTreeMap::new();
    let mut tasks = Vec::new();
    for p in points {
        if !metric_of.contains_key(p.task_id.as_str()) {
            metric_of.insert(&p.task_id, &p.metric_id);
            tasks.push(p.task_id.clone());
        }
    }
    let mut rows: BTreeMap<u64, BTreeMap<String, f64>> = BTreeMap::new();
    for p in points {
        if metric_of[p.task_id.as_str()] == p.metric_id {
            rows.entry(p.sequence_step).or_default().insert(p.task_id.clone(), p.rg);
        }
    }
    Ok((tasks, rows))
}

/// `step,<task>,...` with one row per evaluation step.
pub fn series_csv(points: &[SeriesPoint]) -> Result<String> {
    let (tasks, rows) = table(points)?;
    let mut out = String::from("step");
    for t in &tasks {
        out.push(',');
        out.push_str(t);
    }
    out.push('\n');
    for (step, vals) in rows {
        out.push_str(&step.to_string());
        for t in &tasks {
            out.push(',');
            if let Some(v) = vals.get(t) {
                write!(out, "{v:.6}").expect("write to string");
            }
        }
        out.push('\n');
    }
    Ok(out)
}

const PALETTE: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

/// Line chart of RG over training steps, one polyline per task.
pub fn series_svg(points: &[SeriesPoint]) -> Result<String> {
    let (tasks, rows) = table(points)?;
    let (w, h, pad) = (640.0, 360.0, 40.0);
    let max_step = rows.keys().copied().max().unwrap_or(0).max(1) as f64;
    let max_rg = rows
        .values()
        .flat_map(|r| r.values().copied())
        .fold(1.0f64, f64::max)
        .max(1e-9);
    let x = |s: u64| pad + (w - 2.0 * pad) * s as f64 / max_step;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * v.max(0.0) / max_rg;

    let mut svg = String::new();
    writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).unwrap();
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        svg,
        r#"<line x1="{pad}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{b}" stroke="black"/>"#,
        b = h - pad,
        r = w - pad
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">training batches</text>"#,
        w / 2.0,
        h - 8.0
    )
    .unwrap();
    writeln!(svg, r#"<text x="12" y="{}" font-size="12" transform="rotate(-90 12 {})">relative gain</text>"#, h / 2.0, h / 2.0)
        .unwrap();
    for (i, t) in tasks.iter().enumerate() {
        let pts: Vec<String> = rows
            .iter()
            .filter_map(|(s, r)| r.get(t).map(|v| format!("{:.2},{:.2}", x(*s), y(*v))))
            .collect();
        let color = PALETTE[i % PALETTE.len()];
        writeln!(
            svg,
            r#"<polyline data-task="{t}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{t}</text>"#,
            w - pad - 80.0,
            pad + 14.0 * i as f64
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
