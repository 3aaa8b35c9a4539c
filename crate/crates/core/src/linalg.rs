//! Dense complex matrix helpers on top of faer.

use faer::{Mat, Scale, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMat = Mat<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn zeros(n: usize) -> CMat {
    Mat::zeros(n, n)
}

pub fn identity(n: usize) -> CMat {
    Mat::identity(n, n)
}

pub fn from_rows(rows: &[&[C64]]) -> CMat {
    let n = rows.len();
    Mat::from_fn(n, n, |i, j| rows[i][j])
}

pub fn diag_real(d: &[f64]) -> CMat {
    let n = d.len();
    Mat::from_fn(n, n, |i, j| if i == j { C64::new(d[i], 0.0) } else { ZERO })
}

pub fn scale(c: C64, a: &CMat) -> CMat {
    Scale(c) * a
}

pub fn scale_re(c: f64, a: &CMat) -> CMat {
    Scale(C64::new(c, 0.0)) * a
}

pub fn adjoint(a: &CMat) -> CMat {
    a.adjoint().to_owned()
}

/// Commutator `ab - ba`.
pub fn comm(a: &CMat, b: &CMat) -> CMat {
    let ab = a * b;
    let ba = b * a;
    ab - ba
}

pub fn trace(a: &CMat) -> C64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// `tr(a b)` without forming the product.
pub fn trace_prod(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    let mut s = ZERO;
    for j in 0..n {
        for i in 0..n {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

pub fn frobenius(a: &CMat) -> f64 {
    a.norm_l2()
}

pub fn max_abs(a: &CMat) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn add_assign_scaled(acc: &mut CMat, c: C64, a: &CMat) {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc[(i, j)] += c * a[(i, j)];
        }
    }
}

pub fn singular_values(a: &CMat) -> Result<Vec<f64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    a.singular_values()
        .map_err(|e| Error::Numerical(format!("svd failed: {e:?}")))
}

pub fn op_norm(a: &CMat) -> f64 {
    if max_abs(a) == 0.0 {
        return 0.0;
    }
    singular_values(a)
        .map(|s| s.into_iter().fold(0.0, f64::max))
        .unwrap_or(f64::NAN)
}

pub fn trace_norm(a: &CMat) -> f64 {
    if max_abs(a) == 0.0 {
        return 0.0;
    }
    singular_values(a).map(|s| s.into_iter().sum()).unwrap_or(f64::NAN)
}

pub fn hermiticity_defect(a: &CMat) -> f64 {
    let d = a - a.adjoint();
    frobenius(&d)
}

pub fn is_hermitian(a: &CMat, rel: f64) -> bool {
    hermiticity_defect(a) <= rel * frobenius(a).max(f64::MIN_POSITIVE)
}

pub fn hermitian_part(a: &CMat) -> CMat {
    let s = a + a.adjoint();
    scale_re(0.5, &s)
}

/// Kronecker product with `a` as the slow (leading) factor.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca) = (a.nrows(), a.ncols());
    let (rb, cb) = (b.nrows(), b.ncols());
    Mat::from_fn(ra * rb, ca * cb, |i, j| a[(i / rb, j / cb)] * b[(i % rb, j % cb)])
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), zeros(0)));
    }
    let h = hermitian_part(a);
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S();
    let vals: Vec<f64> = (0..n).map(|i| s[i].re).collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn eigvalsh(a: &CMat) -> Result<Vec<f64>> {
    let h = hermitian_part(a);
    let mut v: Vec<f64> = h
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?
        .into_iter()
        .collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `u diag(d) u†` for real `d`.
pub fn reconstruct(u: &CMat, d: &[C64]) -> CMat {
    let n = u.nrows();
    let ud = Mat::from_fn(n, n, |i, j| u[(i, j)] * d[j]);
    &ud * u.adjoint()
}

/// exp(-i t H) for Hermitian `h`, through its eigendecomposition.
pub fn expm_herm(h: &CMat, t: f64) -> Result<CMat> {
    let (vals, u) = eigh(h)?;
    let ph: Vec<C64> = vals.iter().map(|&e| C64::from_polar(1.0, -t * e)).collect();
    Ok(reconstruct(&u, &ph))
}

pub fn matvec(a: &CMat, v: &[C64]) -> Vec<C64> {
    let (r, c) = (a.nrows(), a.ncols());
    let mut out = vec![ZERO; r];
    for j in 0..c {
        let x = v[j];
        if x == ZERO {
            continue;
        }
        let col = a.col(j);
        for i in 0..r {
            out[i] += col[i] * x;
        }
    }
    out
}

pub fn vnorm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Gershgorin-type bound on the spectral radius (max absolute row sum).
pub fn row_sum_bound(a: &CMat) -> f64 {
    let mut m = 0.0f64;
    for i in 0..a.nrows() {
        let mut s = 0.0;
        for j in 0..a.ncols() {
            s += a[(i, j)].norm();
        }
        m = m.max(s);
    }
    m
}

/// exp(-i tau H) v by a Taylor series with enough substeps that each has
/// `|tau_k| * bound <= 0.5`.
pub fn expm_vec(h: &CMat, tau: f64, v: &[C64], bound: f64) -> Vec<C64> {
    let nsub = ((tau.abs() * bound) / 0.5).ceil().max(1.0) as usize;
    let dt = tau / nsub as f64;
    let mut cur = v.to_vec();
    for _ in 0..nsub {
        let mut term = cur.clone();
        let mut acc = cur.clone();
        let scale0 = vnorm(&cur).max(f64::MIN_POSITIVE);
        for k in 1..40 {
            let hv = matvec(h, &term);
            let c = C64::new(0.0, -dt / k as f64);
            for (t, x) in term.iter_mut().zip(hv) {
                *t = c * x;
            }
            for (a, t) in acc.iter_mut().zip(&term) {
                *a += t;
            }
            if vnorm(&term) <= 1e-17 * scale0 {
                break;
            }
        }
        cur = acc;
    }
    cur
}

pub fn outer(a: &[C64], b: &[C64]) -> CMat {
    let n = a.len();
    let m = b.len();
    Mat::from_fn(n, m, |i, j| a[i] * b[j].conj())
}

pub fn col_vec(a: &CMat, j: usize) -> Vec<C64> {
    (0..a.nrows()).map(|i| a[(i, j)]).collect()
}
