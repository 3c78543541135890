//! Leaderboard rendering.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use polyeval_core::{ModelScore, RunResults};

use crate::codec::{self, CodecError};
use crate::orchestrator::RESULTS_FILE;

const FILLED: char = '★';
const OPEN: char = '☆';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum ReportFormat {
    #[default]
    Table,
    Markdown,
    Csv,
    Structured,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("report_missing: no results file at {0} (run incomplete?)")]
    Missing(PathBuf),
    #[error(transparent)]
    Unreadable(CodecError),
}

pub fn load_results(run_dir: &Path) -> Result<RunResults, ReportError> {
    let path = run_dir.join(RESULTS_FILE);
    codec::read(&path).map_err(|e| {
        if e.is_not_found() {
            ReportError::Missing(path)
        } else {
            ReportError::Unreadable(e)
        }
    })
}

pub fn quality(stars: u8) -> String {
    let filled = stars.min(5) as usize;
    let mut s = String::with_capacity(5 * FILLED.len_utf8());
    s.extend(std::iter::repeat_n(FILLED, filled));
    s.extend(std::iter::repeat_n(OPEN, 5 - filled));
    s
}

fn headers(results: &RunResults) -> Vec<String> {
    let mut h: Vec<String> = ["Model", "Product", "Parameters", "Tasks", "Accurate"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(results.k_values.iter().map(|k| format!("pass@{k}")));
    h.push("Quality".into());
    h
}

fn sorted(results: &RunResults) -> Vec<&ModelScore> {
    let mut rows: Vec<&ModelScore> = results.models.iter().collect();
    rows.sort_by(|a, b| {
        b.accurate_tasks
            .cmp(&a.accurate_tasks)
            .then_with(|| a.model_id.cmp(&b.model_id))
    });
    rows
}

fn display_row(results: &RunResults, m: &ModelScore) -> Vec<String> {
    let mut row = vec![
        m.model_id.clone(),
        m.vendor.clone(),
        m.parameter_count.clone().unwrap_or_else(|| "-".into()),
        m.tasks.to_string(),
        m.accurate_tasks.to_string(),
    ];
    for k in &results.k_values {
        row.push(m.per_k.get(k).map_or_else(|| "-".into(), |v| format!("{v:.3}")));
    }
    row.push(quality(m.stars));
    row
}

pub fn render_leaderboard(results: &RunResults, format: ReportFormat) -> String {
    match format {
        ReportFormat::Table => render_table(results),
        ReportFormat::Markdown => render_markdown(results),
        ReportFormat::Csv => render_csv(results),
        ReportFormat::Structured => codec::encode(results),
    }
}

fn width(s: &str) -> usize {
    s.chars().count()
}

fn pad(s: &str, w: usize) -> String {
    let mut out = s.to_string();
    out.extend(std::iter::repeat_n(' ', w.saturating_sub(width(s))));
    out
}

fn render_table(results: &RunResults) -> String {
    let header = headers(results);
    let rows: Vec<Vec<String>> = sorted(results).into_iter().map(|m| display_row(results, m)).collect();
    let mut widths: Vec<usize> = header.iter().map(|h| width(h)).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(width(cell));
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| pad(c, *w)).collect();
        padded.join("  ").trim_end().to_string()
    };
    let mut out = String::new();
    let _ = writeln!(out, "{}", line(&header));
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", rule.join("  "));
    for row in &rows {
        let _ = writeln!(out, "{}", line(row));
    }
    out
}

fn render_markdown(results: &RunResults) -> String {
    let escape = |s: &str| s.replace('|', "\\|");
    let header = headers(results);
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for m in sorted(results) {
        let cells: Vec<String> = display_row(results, m).iter().map(|c| escape(c)).collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
    out
}

fn render_csv(results: &RunResults) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = headers(results)
        .iter()
        .map(|h| h.to_lowercase().replace(' ', "_"))
        .collect();
    w.write_record(&header).expect("in-memory csv write");
    for m in sorted(results) {
        let mut row = vec![
            m.model_id.clone(),
            m.vendor.clone(),
            m.parameter_count.clone().unwrap_or_default(),
            m.tasks.to_string(),
            m.accurate_tasks.to_string(),
        ];
        for k in &results.k_values {
            row.push(m.per_k.get(k).map(|v| v.to_string()).unwrap_or_default());
        }
        row.push(m.stars.to_string());
        w.write_record(&row).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv of strings is utf-8")
}
