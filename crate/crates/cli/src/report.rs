//! Evaluation reports as CSV and as a plain-text table.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use bnsurrogate_core::eval::{EvalReport, MtaCurve};

fn threshold_label(t: f64) -> String {
    format!("mta@{t}")
}

/// CSV with one row per report. All reports must share thresholds.
pub fn to_csv(reports: &[EvalReport]) -> Result<String> {
    let thresholds: Vec<f64> = reports
        .first()
        .map(|r| r.mta.points.iter().map(|p| p.0).collect())
        .unwrap_or_default();
    let mut out = String::from("method,dataset,n,avg_kl,time_per_inference");
    for &t in &thresholds {
        write!(out, ",{}", threshold_label(t)).unwrap();
    }
    out.push_str(",failures,config\n");
    for r in reports {
        if r.mta.points.iter().map(|p| p.0).ne(thresholds.iter().copied()) {
            bail!("reports use different MTA thresholds");
        }
        write!(
            out,
            "{},{},{},{},{}",
            r.method, r.dataset, r.n_examples, r.avg_kl, r.time_per_inference_seconds
        )
        .unwrap();
        for &(_, acc) in &r.mta.points {
            write!(out, ",{acc}").unwrap();
        }
        writeln!(out, ",{},{}", r.failures, r.config_fingerprint).unwrap();
    }
    Ok(out)
}

pub fn from_csv(text: &str) -> Result<Vec<EvalReport>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().context("empty report")?.split(',').collect();
    let thresholds: Vec<f64> = header
        .iter()
        .filter_map(|h| h.strip_prefix("mta@"))
        .map(|t| t.parse::<f64>())
        .collect::<Result<_, _>>()
        .context("bad threshold column")?;
    let k = thresholds.len();
    if header.len() != 7 + k {
        bail!("unexpected report columns");
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != header.len() {
                bail!("row has {} fields, expected {}", f.len(), header.len());
            }
            let points = thresholds
                .iter()
                .zip(&f[5..5 + k])
                .map(|(&t, v)| Ok((t, v.parse()?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(EvalReport {
                method: f[0].to_string(),
                dataset: f[1].to_string(),
                n_examples: f[2].parse()?,
                avg_kl: f[3].parse()?,
                time_per_inference_seconds: f[4].parse()?,
                mta: MtaCurve { points },
                failures: f[5 + k].parse()?,
                config_fingerprint: f[6 + k].to_string(),
            })
        })
        .collect()
}

pub fn write_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    std::fs::write(path, to_csv(reports)?).with_context(|| format!("writing {}", path.display()))
}

/// Aligned text table for terminals.
pub fn table(reports: &[EvalReport]) -> String {
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec![
        "method".to_string(),
        "dataset".into(),
        "n".into(),
        "avg KL".into(),
        "s/inference".into(),
    ];
    if let Some(r) = reports.first() {
        header.extend(r.mta.points.iter().map(|p| threshold_label(p.0)));
    }
    rows.push(header);
    for r in reports {
        let mut row = vec![
            r.method.clone(),
            r.dataset.clone(),
            r.n_examples.to_string(),
            format!("{:.4}", r.avg_kl),
            format!("{:.3e}", r.time_per_inference_seconds),
        ];
        row.extend(r.mta.points.iter().map(|p| format!("{:.4}", p.1)));
        rows.push(row);
    }
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(s, &w)| format!("{s:>w$}")).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    for r in reports.iter().filter(|r| r.failures > 0) {
        writeln!(
            out,
            "{} on {}: {} queries had zero total weight",
            r.method, r.dataset, r.failures
        )
        .unwrap();
    }
    out
}
