//! Per-part calibration and multi-grader combination: the overall grade is
//! predicted as an affine function of per-part grader outputs, with
//! coefficients fitted by ordinary least squares on the calibration split.
//! Equal weighting (every part coefficient 0.2, no intercept) reproduces
//! plain averaging and serves as the baseline.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exam::{Dataset, Grade, PartId};
use crate::io::{load_predictions, write_json_precise, PredictionRecord};

/// Design matrix for combination fitting: one row per speaker, one column
/// per (grader, part) pair, targets are reference overall grades.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    pub column_tags: Vec<String>,
    pub speakers: Vec<String>,
    /// Row-major values, `rows[i][j]` belongs to `column_tags[j]`.
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    /// Speakers excluded by the inner join (missing predictions or target).
    pub dropped: Vec<String>,
}

impl PredictionMatrix {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.column_tags.len()
    }

    /// Row values keyed by column tag, as consumed by [`apply`].
    pub fn row_map(&self, i: usize) -> BTreeMap<String, f64> {
        self.column_tags
            .iter()
            .cloned()
            .zip(self.rows[i].iter().copied())
            .collect()
    }
}

/// Intercept plus one coefficient per (grader, part) column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationModel {
    pub intercept: f64,
    pub coefficients: BTreeMap<String, f64>,
    pub regularized: bool,
}

/// Combination column tag for a grader and part label, `grader:part`.
pub fn column_tag(grader: &str, part: &str) -> String {
    format!("{grader}:{part}")
}

/// Mean of exactly five part scores: the equal-weight baseline with every
/// coefficient 0.2 and no intercept. Matches `overall_grade` bit for bit.
pub fn equal_weight_combine(part_scores: &[Grade]) -> Result<Grade> {
    if part_scores.len() != 5 {
        return Err(Error::Arity {
            expected: 5,
            got: part_scores.len(),
        });
    }
    let mut sum = 0.0;
    for s in part_scores {
        sum += s;
    }
    Ok(sum / 5.0)
}

/// Applies the fitted combination to one row of per-column scores.
pub fn apply(model: &CombinationModel, row: &BTreeMap<String, Grade>) -> Result<Grade> {
    let mut acc = model.intercept;
    for (tag, beta) in &model.coefficients {
        let value = row
            .get(tag)
            .ok_or_else(|| Error::MissingColumn(tag.clone()))?;
        acc += beta * value;
    }
    Ok(acc)
}

/// Predictions of `model` on every matrix row (column sets must agree).
pub fn predict_matrix(model: &CombinationModel, matrix: &PredictionMatrix) -> Result<Vec<f64>> {
    (0..matrix.num_rows())
        .map(|i| apply(model, &matrix.row_map(i)))
        .collect()
}

/// Gram-matrix condition threshold above which the fit falls back to ridge.
const CONDITION_LIMIT: f64 = 1e12;
/// Ridge term applied to non-intercept coefficients on fallback.
const RIDGE_LAMBDA: f64 = 1e-8;

/// Least-squares fit of the combination coefficients via the normal
/// equations with an intercept column. A numerically singular Gram matrix
/// (1-norm condition estimate above 1e12) triggers a ridge refit with
/// lambda 1e-8 on the non-intercept coefficients, flagged on the model.
pub fn fit_ols(matrix: &PredictionMatrix) -> Result<CombinationModel> {
    let n = matrix.num_rows();
    let k = matrix.num_cols();
    if n < k + 1 {
        return Err(Error::Underdetermined {
            rows: n,
            cols: k + 1,
        });
    }

    // Gram = Xt*X and rhs = Xt*y for the augmented X = [1 | columns].
    let dim = k + 1;
    let mut gram = vec![vec![0.0; dim]; dim];
    let mut rhs = vec![0.0; dim];
    for (row, &y) in matrix.rows.iter().zip(&matrix.targets) {
        let mut aug = Vec::with_capacity(dim);
        aug.push(1.0);
        aug.extend_from_slice(row);
        for i in 0..dim {
            for j in i..dim {
                gram[i][j] += aug[i] * aug[j];
            }
            rhs[i] += aug[i] * y;
        }
    }
    for i in 0..dim {
        for j in 0..i {
            gram[i][j] = gram[j][i];
        }
    }

    let cond = condition_1norm(&gram);
    let regularized = cond.is_nan() || cond > CONDITION_LIMIT;
    if regularized {
        for g in gram.iter_mut().skip(1).enumerate() {
            let (i, row) = g;
            row[i + 1] += RIDGE_LAMBDA;
        }
    }
    let beta = solve(gram, rhs).ok_or_else(|| {
        Error::DegenerateInput("normal equations singular even after ridge".to_string())
    })?;

    let coefficients = matrix
        .column_tags
        .iter()
        .cloned()
        .zip(beta[1..].iter().copied())
        .collect();
    Ok(CombinationModel {
        intercept: beta[0],
        coefficients,
        regularized,
    })
}

/// Gaussian elimination with partial pivoting; `None` on a zero pivot.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col] == 0.0 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                a[row][j] -= f * a[col][j];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in row + 1..n {
            acc -= a[row][j] * x[j];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

fn norm_1(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    (0..n)
        .map(|j| a.iter().map(|row| row[j].abs()).sum())
        .fold(0.0, f64::max)
}

/// 1-norm condition estimate via an explicit inverse; infinite when the
/// matrix is singular to working precision.
fn condition_1norm(a: &[Vec<f64>]) -> f64 {
    match invert(a) {
        Some(inv) => norm_1(a) * norm_1(&inv),
        None => f64::INFINITY,
    }
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut work: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| work[i][col].abs().total_cmp(&work[j][col].abs()))?;
        if work[pivot][col] == 0.0 {
            return None;
        }
        work.swap(col, pivot);
        let p = work[col][col];
        for v in &mut work[col] {
            *v /= p;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = work[row][col];
            if f == 0.0 {
                continue;
            }
            for j in 0..2 * n {
                let delta = f * work[col][j];
                work[row][j] -= delta;
            }
        }
    }
    Some(work.into_iter().map(|row| row[n..].to_vec()).collect())
}

/// Builds the design matrix from prediction CSV files, inner-joining
/// speakers across all (grader, part) columns against the targets dataset.
pub fn build_matrix(files: &[std::path::PathBuf], targets: &Dataset) -> Result<PredictionMatrix> {
    let mut records = Vec::new();
    for path in files {
        records.extend(load_predictions(path)?);
    }
    build_matrix_from_records(&records, &targets.overall_targets())
}

/// [`build_matrix`] over in-memory records and a speaker -> overall-grade
/// target map.
pub fn build_matrix_from_records(
    records: &[PredictionRecord],
    targets: &BTreeMap<String, f64>,
) -> Result<PredictionMatrix> {
    let mut cells: BTreeMap<(String, String), f64> = BTreeMap::new();
    let mut tags: BTreeSet<String> = BTreeSet::new();
    let mut pred_speakers: BTreeSet<String> = BTreeSet::new();
    for r in records {
        let tag = column_tag(&r.grader, &r.part.to_string());
        tags.insert(tag.clone());
        pred_speakers.insert(r.speaker.clone());
        if cells.insert((r.speaker.clone(), tag), r.score).is_some() {
            return Err(Error::DuplicatePrediction {
                speaker: r.speaker.clone(),
                grader: r.grader.clone(),
                part: r.part.to_string(),
            });
        }
    }

    let column_tags: Vec<String> = tags.into_iter().collect();
    let mut speakers = Vec::new();
    let mut rows = Vec::new();
    let mut target_vec = Vec::new();
    let mut dropped: BTreeSet<String> = BTreeSet::new();

    for (speaker, &target) in targets {
        let mut row = Vec::with_capacity(column_tags.len());
        let mut complete = true;
        for tag in &column_tags {
            match cells.get(&(speaker.clone(), tag.clone())) {
                Some(&v) => row.push(v),
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if complete && !column_tags.is_empty() {
            speakers.push(speaker.clone());
            rows.push(row);
            target_vec.push(target);
        } else {
            dropped.insert(speaker.clone());
        }
    }
    for speaker in pred_speakers {
        if !targets.contains_key(&speaker) {
            dropped.insert(speaker);
        }
    }

    if rows.is_empty() {
        return Err(Error::EmptyJoin);
    }
    if !dropped.is_empty() {
        log::debug!("combination join dropped {} speaker(s)", dropped.len());
    }
    Ok(PredictionMatrix {
        column_tags,
        speakers,
        rows,
        targets: target_vec,
        dropped: dropped.into_iter().collect(),
    })
}

impl CombinationModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json_precise(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// Graders named in the column tags, in tag order.
    pub fn graders(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for tag in self.coefficients.keys() {
            let grader = tag.split(':').next().unwrap_or(tag).to_string();
            if !out.contains(&grader) {
                out.push(grader);
            }
        }
        out
    }

    /// Markdown table of per-part coefficients, one row per grader, with
    /// the intercept printed on the first row.
    pub fn render_coefficient_table(&self) -> String {
        let mut parts: Vec<String> = PartId::ALL.iter().map(|p| p.to_string()).collect();
        if self.coefficients.keys().any(|t| t.ends_with(":overall")) {
            parts.push("overall".to_string());
        }
        let mut out = String::new();
        out.push_str(&format!("| Model | {} | b0 |\n", parts.join(" | ")));
        out.push_str(&format!("|---|{}---|\n", "---|".repeat(parts.len())));
        for (i, grader) in self.graders().iter().enumerate() {
            let mut row = format!("| {grader} |");
            for part in &parts {
                match self.coefficients.get(&column_tag(grader, part)) {
                    Some(beta) => row.push_str(&format!(" {beta:.2} |")),
                    None => row.push_str(" |"),
                }
            }
            if i == 0 {
                row.push_str(&format!(" {:.2} |", self.intercept));
            } else {
                row.push_str(" |");
            }
            out.push_str(&row);
            out.push('\n');
        }
        out
    }
}
