//! Smooth switching functions with exact derivatives.
//!
//! The mollified step is f(t) = h(t+1) / (h(t+1) + h(-t)) with
//! h(x) = exp(-1/x) for x > 0 and 0 otherwise. Derivatives come from
//! truncated Taylor arithmetic, so no finite differences are involved.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const MAX_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchKind {
    /// exp(-1/x) mollified step from 0 at t = -1 to 1 at t = 0.
    MollifiedStep,
    /// f ≡ 1.
    AlwaysOn,
}

#[derive(Debug, Clone)]
pub struct SwitchingFunction {
    pub kind: SwitchKind,
    pub derivative_order_max: usize,
    smoothness_norm_cache: Vec<f64>,
}

impl SwitchingFunction {
    pub fn new(kind: SwitchKind, derivative_order_max: usize) -> Result<Self> {
        if derivative_order_max > MAX_ORDER {
            return invalid(format!("derivative order {derivative_order_max} exceeds {MAX_ORDER}"));
        }
        let mut sf = SwitchingFunction { kind, derivative_order_max, smoothness_norm_cache: Vec::new() };
        let grid: Vec<f64> = (1..2000).map(|k| -1.0 + k as f64 / 2000.0).collect();
        sf.smoothness_norm_cache = (0..=derivative_order_max)
            .map(|k| grid.iter().map(|&t| sf.jet(t, k)[k].abs()).fold(0.0, f64::max))
            .collect();
        Ok(sf)
    }

    pub fn mollified() -> Self {
        Self::new(SwitchKind::MollifiedStep, 8).expect("order within bounds")
    }

    pub fn always_on() -> Self {
        Self::new(SwitchKind::AlwaysOn, 8).expect("order within bounds")
    }

    /// Sampled sup-norm of f^{(k)} on [-1, 0].
    pub fn sup_norm(&self, k: usize) -> Option<f64> {
        self.smoothness_norm_cache.get(k).copied()
    }

    /// f^{(order)}(t).
    pub fn eval(&self, t: f64, order: usize) -> Result<f64> {
        if order > self.derivative_order_max {
            return invalid(format!("derivative order {order} above {}", self.derivative_order_max));
        }
        Ok(self.jet(t, order)[order])
    }

    pub fn value(&self, t: f64) -> f64 {
        self.jet(t, 0)[0]
    }

    /// Derivatives f(t), f'(t), ..., f^{(k)}(t).
    pub fn jet(&self, t: f64, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; k + 1];
        match self.kind {
            SwitchKind::AlwaysOn => out[0] = 1.0,
            SwitchKind::MollifiedStep => {
                if t <= -1.0 {
                } else if t >= 0.0 {
                    out[0] = 1.0;
                } else {
                    let taylor = mollified_taylor(t, k);
                    let mut fact = 1.0;
                    for (j, c) in taylor.into_iter().enumerate() {
                        if j > 0 {
                            fact *= j as f64;
                        }
                        out[j] = c * fact;
                    }
                }
            }
        }
        out
    }
}

/// Taylor coefficients of f at t in (-1, 0).
fn mollified_taylor(t: f64, k: usize) -> Vec<f64> {
    let mut x1 = vec![0.0; k + 1];
    let mut x2 = vec![0.0; k + 1];
    x1[0] = t + 1.0;
    x2[0] = -t;
    if k >= 1 {
        x1[1] = 1.0;
        x2[1] = -1.0;
    }
    // u = 1/x1 - 1/x2 so that f = 1 / (1 + e^u)
    let u = sub(&recip(&x1), &recip(&x2));
    let one = {
        let mut o = vec![0.0; k + 1];
        o[0] = 1.0;
        o
    };
    if u[0] <= 0.0 {
        recip(&add(&one, &exp(&u)))
    } else {
        let e = exp(&neg(&u));
        mul(&e, &recip(&add(&one, &e)))
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn neg(a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| -x).collect()
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    (0..n).map(|k| (0..=k).map(|j| a[j] * b[k - j]).sum()).collect()
}

fn recip(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut b = vec![0.0; n];
    b[0] = 1.0 / a[0];
    for k in 1..n {
        let s: f64 = (1..=k).map(|j| a[j] * b[k - j]).sum();
        b[k] = -s * b[0];
    }
    b
}

fn exp(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut b = vec![0.0; n];
    b[0] = a[0].exp();
    for k in 1..n {
        let s: f64 = (1..=k).map(|j| j as f64 * a[j] * b[k - j]).sum();
        b[k] = s / k as f64;
    }
    b
}
