//! Summary tables and the invocation-count curve.

use std::io::Write;

use expost_core::accounting::{expected_invocations, invocation_stddev};
use expost_core::random_drop::DropMode;
use serde::Serialize;

use crate::error::Result;
use crate::experiment::TrialResult;

/// Sample mean and standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub dataset: String,
    pub algorithm: String,
    pub mean_precision: f64,
    pub std_precision: f64,
    pub mean_answers: f64,
    pub std_answers: f64,
}

/// One row per experiment; precision averages over trials that produced an
/// answer.
pub fn emit_table(dataset: &str, algorithm: &str, results: &[TrialResult]) -> TableRow {
    let answers: Vec<f64> = results.iter().map(|r| r.answers as f64).collect();
    let precision: Vec<f64> = results.iter().filter_map(TrialResult::precision).collect();
    let (mean_answers, std_answers) = mean_std(&answers);
    let (mean_precision, std_precision) = mean_std(&precision);
    TableRow {
        dataset: dataset.to_string(),
        algorithm: algorithm.to_string(),
        mean_precision,
        std_precision,
        mean_answers,
        std_answers,
    }
}

pub fn write_csv<W: Write>(rows: &[TableRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Aligned text with `mean ± std` cells.
pub fn render_text(rows: &[TableRow]) -> String {
    let header = ["dataset", "algorithm", "precision", "answers"];
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|r| {
            [
                r.dataset.clone(),
                r.algorithm.clone(),
                format!("{:.3} ± {:.3}", r.mean_precision, r.std_precision),
                format!("{:.2} ± {:.2}", r.mean_answers, r.std_answers),
            ]
        })
        .collect();
    let width = |c: usize| {
        cells
            .iter()
            .map(|row| row[c].chars().count())
            .chain(std::iter::once(header[c].len()))
            .max()
            .unwrap_or(0)
    };
    let widths: Vec<usize> = (0..4).map(width).collect();
    let line = |row: [&str; 4]| {
        row.iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(header);
    out.push('\n');
    for row in &cells {
        out.push_str(&line([&row[0], &row[1], &row[2], &row[3]]));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvocationPoint {
    pub repetitions: u64,
    pub expectation: f64,
    pub stddev: f64,
}

/// Mean and standard deviation of the number of executions of one mechanism
/// repeated `t` times under geometric dropping, for every `t` in `grid`.
pub fn figure1_points(eps: f64, eps_prime: f64, grid: &[u64]) -> Vec<InvocationPoint> {
    grid.iter()
        .map(|&t| InvocationPoint {
            repetitions: t,
            expectation: expected_invocations(DropMode::Geometric, eps, eps_prime, t),
            stddev: invocation_stddev(DropMode::Geometric, eps, eps_prime, t),
        })
        .collect()
}

/// `10, 110, ..., 910`.
pub fn figure1_grid() -> Vec<u64> {
    (0..10).map(|i| 10 + 100 * i).collect()
}

pub fn write_points_csv<W: Write>(points: &[InvocationPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
