//! The five evaluation metrics — RMSE, Pearson and Spearman correlation,
//! and the within-half/within-one grade percentages — plus report assembly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// All five metrics for one prediction/reference pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pcc: f64,
    pub src: f64,
    pub rmse: f64,
    pub within_half: f64,
    pub within_one: f64,
    pub n: usize,
}

fn check_lengths(pred: &[f64], reference: &[f64]) -> Result<()> {
    if pred.len() != reference.len() {
        return Err(Error::shape(format!(
            "prediction length {} != reference length {}",
            pred.len(),
            reference.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::shape("empty metric input".to_string()));
    }
    Ok(())
}

/// Root-mean-square error.
pub fn rmse(pred: &[f64], reference: &[f64]) -> Result<f64> {
    check_lengths(pred, reference)?;
    let sum: f64 = pred
        .iter()
        .zip(reference)
        .map(|(p, r)| (p - r) * (p - r))
        .sum();
    Ok((sum / pred.len() as f64).sqrt())
}

/// Sample Pearson correlation coefficient.
pub fn pcc(pred: &[f64], reference: &[f64]) -> Result<f64> {
    check_lengths(pred, reference)?;
    if pred.len() < 2 {
        return Err(Error::DegenerateInput(
            "correlation needs at least 2 points".to_string(),
        ));
    }
    let n = pred.len() as f64;
    let mean_p = pred.iter().sum::<f64>() / n;
    let mean_r = reference.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_p = 0.0;
    let mut var_r = 0.0;
    for (p, r) in pred.iter().zip(reference) {
        let dp = p - mean_p;
        let dr = r - mean_r;
        cov += dp * dr;
        var_p += dp * dp;
        var_r += dr * dr;
    }
    if var_p == 0.0 || var_r == 0.0 {
        return Err(Error::DegenerateInput(
            "correlation undefined for zero-variance input".to_string(),
        ));
    }
    Ok(cov / (var_p.sqrt() * var_r.sqrt()))
}

/// Average ranks (1-based); ties receive the mean of their rank span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j hold equal values; ranks are 1-based.
        let rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn src(pred: &[f64], reference: &[f64]) -> Result<f64> {
    check_lengths(pred, reference)?;
    pcc(&average_ranks(pred), &average_ranks(reference))
}

/// Percentage of predictions within `tau` of the reference (inclusive at
/// the boundary: a difference of exactly `tau` counts as within).
pub fn within(pred: &[f64], reference: &[f64], tau: f64) -> Result<f64> {
    check_lengths(pred, reference)?;
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::shape("tau must be positive".to_string()));
    }
    let hits = pred
        .iter()
        .zip(reference)
        .filter(|(p, r)| (*p - *r).abs() <= tau)
        .count();
    Ok(100.0 * hits as f64 / pred.len() as f64)
}

/// Assembles all five metrics.
pub fn report(pred: &[f64], reference: &[f64]) -> Result<MetricsReport> {
    Ok(MetricsReport {
        pcc: pcc(pred, reference)?,
        src: src(pred, reference)?,
        rmse: rmse(pred, reference)?,
        within_half: within(pred, reference, 0.5)?,
        within_one: within(pred, reference, 1.0)?,
        n: pred.len(),
    })
}

impl MetricsReport {
    /// Markdown table with one row per labelled report, columns in the
    /// standard order.
    pub fn render_markdown(rows: &[(String, MetricsReport)]) -> String {
        let mut out = String::new();
        out.push_str("| Model | PCC | SRC | RMSE | %<=0.5 | %<=1.0 |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        for (label, r) in rows {
            out.push_str(&format!(
                "| {label} | {:.3} | {:.3} | {:.3} | {:.1} | {:.1} |\n",
                r.pcc, r.src, r.rmse, r.within_half, r.within_one
            ));
        }
        out
    }
}

/// Writes `(speaker, reference, predicted)` scatter data for external
/// plotting.
pub fn write_scatter_csv(rows: &[(String, f64, f64)], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["speaker", "reference", "predicted"])?;
    for (speaker, reference, predicted) in rows {
        w.write_record([
            speaker.as_str(),
            &format!("{reference}"),
            &format!("{predicted}"),
        ])?;
    }
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}
