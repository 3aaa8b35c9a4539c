//! The gap-g weight function w(t) = c ∏ sinc²(a_n t), its antiderivative form
//! W, and its Fourier transform.
//!
//! With a_n = a_1 / (n log² n) and Σ a_n = g/2, ŵ is (up to normalization)
//! the density of Σ a_n (U_n + U'_n) with U, U' uniform on [-1, 1], i.e. an
//! iterated convolution of triangles supported in [-2a_n, 2a_n].

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightParams {
    pub n_factors: usize,
    /// Half-width of the quadrature window; `None` means 200 / g^{1/q}.
    pub t_max: Option<f64>,
    pub n_points: usize,
    pub panel_order: usize,
    pub q: f64,
    /// Cutoff of the explicit normalizing series for a_1.
    pub series_cutoff: usize,
}

impl Default for WeightParams {
    fn default() -> Self {
        WeightParams {
            n_factors: 4096,
            t_max: None,
            n_points: 4096,
            panel_order: 16,
            q: 0.9,
            series_cutoff: 1_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WeightFunction {
    pub g: f64,
    pub params: WeightParams,
    pub a: Vec<f64>,
    pub series_sum: f64,
    pub c_norm: f64,
    pub t_max: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    w_nodes: Vec<f64>,
    big_w_cache: OnceLock<Vec<f64>>,
    /// Exact support half-width 2 Σ_{n≤N} a_n of the truncated ŵ.
    pub support_edge: f64,
}

/// Σ_{n≥1} 1/(n log² n) with the n = 1 term read as 1.
pub fn normalizing_series(cutoff: usize) -> f64 {
    let mut s = 0.0;
    // sum small terms first
    for n in (2..=cutoff).rev() {
        let x = n as f64;
        let l = x.ln();
        s += 1.0 / (x * l * l);
    }
    let nc = cutoff as f64;
    let lc = nc.ln();
    // Euler-Maclaurin tail Σ_{n>N} f(n) ≈ ∫_N^∞ f - f(N)/2
    s + 1.0 + 1.0 / lc - 0.5 / (nc * lc * lc)
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn sinc_sq(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        let s = 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
        s * s
    } else {
        let s = x.sin() / x;
        s * s
    }
}

impl WeightFunction {
    pub fn new(g: f64) -> Result<Self> {
        Self::build(g, WeightParams::default())
    }

    pub fn build(g: f64, params: WeightParams) -> Result<Self> {
        if !(g > 0.0) || !g.is_finite() {
            return invalid(format!("gap parameter must be positive, got {g}"));
        }
        if params.n_factors < 2 {
            return invalid("n_factors must be at least 2");
        }
        if params.panel_order < 2 || params.n_points < params.panel_order || params.n_points % params.panel_order != 0 {
            return invalid("n_points must be a positive multiple of panel_order");
        }
        if !(params.q > 0.0 && params.q < 1.0) {
            return invalid("q must lie in (0, 1)");
        }
        let series_sum = normalizing_series(params.series_cutoff.max(10));
        if !series_sum.is_finite() {
            return Err(Error::Numerical("normalizing series did not converge".into()));
        }
        let a1 = g / (2.0 * series_sum);
        let a: Vec<f64> = (1..=params.n_factors)
            .map(|n| {
                if n == 1 {
                    a1
                } else {
                    let x = n as f64;
                    let l = x.ln();
                    a1 / (x * l * l)
                }
            })
            .collect();
        let support_edge = 2.0 * a.iter().rev().sum::<f64>();
        let t_max = params.t_max.unwrap_or(200.0 / g.powf(1.0 / params.q));
        let (gx, gw) = gauss_legendre(params.panel_order);
        let panels = params.n_points / params.panel_order;
        let h = 2.0 * t_max / panels as f64;
        let mut nodes = Vec::with_capacity(params.n_points);
        let mut weights = Vec::with_capacity(params.n_points);
        for p in 0..panels {
            let lo = -t_max + p as f64 * h;
            for (x, w) in gx.iter().zip(&gw) {
                nodes.push(lo + 0.5 * h * (x + 1.0));
                weights.push(0.5 * h * w);
            }
        }
        let mut wf = WeightFunction {
            g,
            params,
            a,
            series_sum,
            c_norm: 1.0,
            t_max,
            nodes,
            weights,
            w_nodes: Vec::new(),
            big_w_cache: OnceLock::new(),
            support_edge,
        };
        let prod: Vec<f64> = wf.nodes.par_iter().map(|&t| wf.product(t)).collect();
        let mass: f64 = prod.iter().zip(&wf.weights).map(|(p, w)| p * w).sum();
        if !(mass > 0.0) {
            return Err(Error::Numerical("weight function has no mass on the quadrature grid".into()));
        }
        wf.c_norm = 1.0 / mass;
        wf.w_nodes = prod.iter().map(|p| p * wf.c_norm).collect();
        Ok(wf)
    }

    fn product(&self, t: f64) -> f64 {
        let t = t.abs();
        let mut p = 1.0;
        for &an in &self.a {
            p *= sinc_sq(an * t);
            if p == 0.0 {
                break;
            }
        }
        p
    }

    pub fn a1(&self) -> f64 {
        self.a[0]
    }

    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.nodes, &self.weights)
    }

    pub fn w_at_node(&self, k: usize) -> f64 {
        self.w_nodes[k]
    }

    /// W at the quadrature nodes. Partial panel integrals use the spectral
    /// integration matrix of the panel's Gauss-Legendre interpolant.
    pub fn big_w_nodes(&self) -> &[f64] {
        self.big_w_cache.get_or_init(|| {
            let k = self.params.panel_order;
            let (gx, _) = gauss_legendre(k);
            let imat = integration_matrix(&gx);
            let panels = self.params.n_points / k;
            let h = 2.0 * self.t_max / panels as f64;
            let mut out = Vec::with_capacity(self.nodes.len());
            let mut acc = 0.0;
            for p in 0..panels {
                let wv = &self.w_nodes[p * k..(p + 1) * k];
                for i in 0..k {
                    let part: f64 = (0..k).map(|j| imat[i][j] * wv[j]).sum::<f64>() * 0.5 * h;
                    let t = self.nodes[p * k + i];
                    let ind = if t >= 0.0 { 1.0 } else { 0.0 };
                    out.push(-(acc + part) + ind);
                }
                acc += (0..k).map(|j| self.weights[p * k + j] * wv[j]).sum::<f64>();
            }
            out
        })
    }

    pub fn w(&self, t: f64) -> f64 {
        self.c_norm * self.product(t)
    }

    /// ∫ w under the stored quadrature.
    pub fn mass(&self) -> f64 {
        self.w_nodes.iter().zip(&self.weights).map(|(a, b)| a * b).sum()
    }

    /// W(t) = -∫_{-∞}^t w + 1_{t ≥ 0}.
    pub fn big_w(&self, t: f64) -> f64 {
        let ind = if t >= 0.0 { 1.0 } else { 0.0 };
        -self.cumulative(t) + ind
    }

    /// ∫_{-t_max}^t w by panel cumulative sums plus a partial panel.
    pub fn cumulative(&self, t: f64) -> f64 {
        if t <= -self.t_max {
            return 0.0;
        }
        if t >= self.t_max {
            return self.mass();
        }
        let k = self.params.panel_order;
        let panels = self.params.n_points / k;
        let h = 2.0 * self.t_max / panels as f64;
        let p = (((t + self.t_max) / h).floor() as usize).min(panels - 1);
        let full: f64 = (0..p * k).map(|i| self.w_nodes[i] * self.weights[i]).sum();
        let lo = -self.t_max + p as f64 * h;
        let (gx, gw) = gauss_legendre(k);
        let half = 0.5 * (t - lo);
        let part: f64 = gx
            .iter()
            .zip(&gw)
            .map(|(x, w)| half * w * self.w(lo + half * (x + 1.0)))
            .sum();
        full + part
    }

    /// √(2π) ŵ(ω) = ∫ w(t) cos(ωt) dt by quadrature, with the exact support
    /// of the truncated product enforced.
    pub fn fourier_mass(&self, omega: f64) -> f64 {
        if omega.abs() >= self.support_edge {
            return 0.0;
        }
        self.fourier_mass_quadrature(omega)
    }

    pub fn fourier_mass_quadrature(&self, omega: f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .zip(&self.w_nodes)
            .map(|((t, wt), w)| wt * w * (omega * t).cos())
            .sum()
    }

    /// ŵ(ω) by quadrature (values path).
    pub fn w_hat(&self, omega: f64) -> f64 {
        self.fourier_mass(omega) / SQRT_2PI
    }

    /// Spectral kernel of the inverse Liouvillian divided by i:
    /// K(ω)/i = (1 - √(2π) ŵ(ω)) / ω, zero at ω = 0.
    pub fn inverse_kernel_im(&self, omega: f64) -> f64 {
        if omega == 0.0 {
            return 0.0;
        }
        (1.0 - self.fourier_mass(omega)) / omega
    }

    /// ŵ on a grid by iterated convolution of triangle densities (support
    /// path). Factors narrower than a few grid cells are folded into one
    /// Gaussian of matching variance. Returns (grid, values).
    pub fn w_hat_convolution(&self, delta: f64) -> (Vec<f64>, Vec<f64>) {
        let kmax = (self.support_edge / delta).ceil() as usize + 8;
        let len = 2 * kmax + 1;
        let mut dens = vec![0.0; len];
        dens[kmax] = 1.0 / delta;
        let mut narrow_var = 0.0;
        for &an in &self.a {
            if 2.0 * an < 4.0 * delta {
                narrow_var += 2.0 * an * an / 3.0;
                continue;
            }
            let m = (2.0 * an / delta).floor() as usize;
            let ker: Vec<f64> = (0..=2 * m)
                .map(|j| {
                    let x = (j as f64 - m as f64) * delta;
                    ((2.0 * an - x.abs()) / (4.0 * an * an)).max(0.0)
                })
                .collect();
            dens = convolve_normalized(&dens, &ker, delta);
        }
        if narrow_var > 0.0 {
            let sd = narrow_var.sqrt();
            let m = ((8.0 * sd) / delta).ceil() as usize;
            let ker: Vec<f64> = (0..=2 * m)
                .map(|j| {
                    let x = (j as f64 - m as f64) * delta;
                    (-0.5 * x * x / narrow_var).exp()
                })
                .collect();
            dens = convolve_normalized(&dens, &ker, delta);
        }
        let grid: Vec<f64> = (0..len).map(|k| (k as f64 - kmax as f64) * delta).collect();
        let vals = grid
            .iter()
            .zip(&dens)
            .map(|(x, d)| {
                if x.abs() >= self.support_edge {
                    0.0
                } else {
                    self.c_norm * SQRT_2PI * d
                }
            })
            .collect();
        (grid, vals)
    }

    fn cgf(&self, s: f64) -> (f64, f64, f64) {
        // cumulant generating function of Σ a_n (U_n + U'_n) and two derivatives
        let (mut k0, mut k1, mut k2) = (0.0, 0.0, 0.0);
        for &an in &self.a {
            let x = an * s;
            if x < 1e-3 {
                let x2 = x * x;
                k0 += 2.0 * (x2 / 6.0 - x2 * x2 / 180.0);
                k1 += 2.0 * an * (x / 3.0 - x2 * x / 45.0);
                k2 += 2.0 * an * an * (1.0 / 3.0 - x2 / 15.0);
            } else {
                // log(sinh x / x) = x + log1p(-e^{-2x}) - log(2x)
                let e = (-2.0 * x).exp();
                k0 += 2.0 * (x + (-e).ln_1p() - (2.0 * x).ln());
                let coth = (1.0 + e) / (1.0 - e);
                k1 += 2.0 * an * (coth - 1.0 / x);
                let csch2 = 4.0 * e / ((1.0 - e) * (1.0 - e));
                k2 += 2.0 * an * an * (1.0 / (x * x) - csch2);
            }
        }
        (k0, k1, k2)
    }

    /// log ŵ(ω) from the saddle-point approximation of the triangle
    /// convolution; finite exactly on the open support. Used where ŵ is far
    /// below double precision.
    pub fn log_w_hat(&self, omega: f64) -> f64 {
        let w = omega.abs();
        if w >= self.support_edge {
            return f64::NEG_INFINITY;
        }
        let log_dens = |w: f64| -> f64 {
            // solve K'(s) = w by safeguarded Newton on s >= 0
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            while self.cgf(hi).1 < w {
                hi *= 2.0;
                if hi > 1e300 {
                    break;
                }
            }
            let mut s = 0.5 * (lo + hi);
            for _ in 0..200 {
                let (_, k1, k2) = self.cgf(s);
                let f = k1 - w;
                if f > 0.0 {
                    hi = s;
                } else {
                    lo = s;
                }
                let mut next = s - f / k2;
                if !(next > lo && next < hi) || !next.is_finite() {
                    next = 0.5 * (lo + hi);
                }
                if (next - s).abs() <= 1e-15 * s.max(1e-300) {
                    s = next;
                    break;
                }
                s = next;
            }
            let (k0, _, k2) = self.cgf(s);
            k0 - s * w - 0.5 * (2.0 * std::f64::consts::PI * k2).ln()
        };
        (self.c_norm * SQRT_2PI).ln() + log_dens(w)
    }

    /// Fitted C of the envelope |w(t)| ≤ C exp(-|t|^q) on nodes with
    /// |t| ≤ t_fit, and the largest violation ratio on nodes with |t| ≤ t_check.
    pub fn envelope(&self, t_fit: f64, t_check: f64) -> (f64, f64) {
        let q = self.params.q;
        let ratio = |t: f64, w: f64| w.abs() * t.abs().powf(q).exp();
        let c = self
            .nodes
            .iter()
            .zip(&self.w_nodes)
            .filter(|(t, _)| t.abs() <= t_fit)
            .map(|(t, w)| ratio(*t, *w))
            .fold(0.0, f64::max);
        let worst = self
            .nodes
            .iter()
            .zip(&self.w_nodes)
            .filter(|(t, _)| t.abs() <= t_check)
            .map(|(t, w)| ratio(*t, *w) / c)
            .fold(0.0, f64::max);
        (c, worst)
    }

    /// Smallest N whose tail satisfies t_max² Σ_{n>N} a_n² / 3 ≤ tol.
    pub fn auto_factors(g: f64, tol: f64, t_max: f64) -> usize {
        let s = normalizing_series(1_000_000);
        let a1 = g / (2.0 * s);
        let mut n = 2usize;
        loop {
            let x = n as f64;
            let l = x.ln();
            // Σ_{m>n} 1/(m log² m)² ≤ ∫_n^∞ dx / (x² log⁴ x) ≤ 1 / (n log⁴ n)
            let tail = a1 * a1 / (x * l.powi(4));
            if t_max * t_max * tail / 3.0 <= tol || n > 1 << 24 {
                return n;
            }
            n *= 2;
        }
    }
}

/// m[i][j] = ∫_{-1}^{x_i} L_j(x) dx for the Lagrange basis on nodes `x`.
fn integration_matrix(x: &[f64]) -> Vec<Vec<f64>> {
    let k = x.len();
    let (gx, gw) = gauss_legendre(k);
    let lag = |j: usize, y: f64| -> f64 {
        let mut v = 1.0;
        for m in 0..k {
            if m != j {
                v *= (y - x[m]) / (x[j] - x[m]);
            }
        }
        v
    };
    (0..k)
        .map(|i| {
            let half = 0.5 * (x[i] + 1.0);
            (0..k)
                .map(|j| gx.iter().zip(&gw).map(|(u, w)| half * w * lag(j, -1.0 + half * (u + 1.0))).sum())
                .collect()
        })
        .collect()
}

fn convolve_normalized(f: &[f64], ker: &[f64], delta: f64) -> Vec<f64> {
    let ks: f64 = ker.iter().sum::<f64>() * delta;
    let m = ker.len() / 2;
    let n = f.len();
    let nz: Vec<usize> = (0..n).filter(|&i| f[i] != 0.0).collect();
    let (lo, hi) = (nz.first().copied().unwrap_or(0), nz.last().copied().unwrap_or(0));
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            let j0 = i.saturating_sub(m).max(lo);
            let j1 = (i + m).min(hi);
            if j0 <= j1 {
                for j in j0..=j1 {
                    s += f[j] * ker[i + m - j];
                }
            }
            s * delta / ks
        })
        .collect()
}
