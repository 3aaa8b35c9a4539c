//! Least-squares fits used for scaling exponents and decay profiles.

use faer::prelude::*;
use faer::Mat;
use serde::Serialize;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Serialize)]
pub struct LinearFit {
    pub coef: Vec<f64>,
    pub residual_rms: f64,
    pub r2: f64,
    pub n_points: usize,
}

/// Solves min ‖X c − y‖ with X given row by row.
pub fn least_squares(design: &[Vec<f64>], y: &[f64]) -> Result<LinearFit> {
    let m = design.len();
    if m == 0 || m != y.len() {
        return invalid("least squares needs matching nonempty design and data");
    }
    let k = design[0].len();
    if m < k || design.iter().any(|r| r.len() != k) {
        return invalid(format!("least squares needs at least {k} rows of width {k}"));
    }
    let x = Mat::from_fn(m, k, |i, j| design[i][j]);
    let rhs = Mat::from_fn(m, 1, |i, _| y[i]);
    let sol = x.qr().solve_lstsq(&rhs);
    let coef: Vec<f64> = (0..k).map(|j| sol[(j, 0)]).collect();
    if coef.iter().any(|c| !c.is_finite()) {
        return invalid("least squares produced a non-finite solution");
    }
    let mean = y.iter().sum::<f64>() / m as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (row, yi) in design.iter().zip(y) {
        let pred: f64 = row.iter().zip(&coef).map(|(a, b)| a * b).sum();
        ss_res += (yi - pred).powi(2);
        ss_tot += (yi - mean).powi(2);
    }
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(LinearFit { coef, residual_rms: (ss_res / m as f64).sqrt(), r2, n_points: m })
}

/// Slope of log|y| against log x; points with y = 0 are skipped.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let (design, ly): (Vec<Vec<f64>>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && b.abs() > 0.0)
        .map(|(a, b)| (vec![1.0, a.ln()], b.abs().ln()))
        .unzip();
    if design.len() < 2 {
        return invalid("log-log fit needs two points with nonzero data");
    }
    least_squares(&design, &ly)
}

impl LinearFit {
    pub fn slope(&self) -> f64 {
        self.coef[self.coef.len() - 1]
    }
}
