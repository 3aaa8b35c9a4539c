//! Liouvillian, the inverse Liouvillian I_{H,g}, the map J_{H,g} and the
//! dynamical gap check.
//!
//! In the eigenbasis of H, with ω = E_n - E_m and F(ω) = ∫ w(t) cos(ωt) dt:
//!   I[A]_{nm} = i (1 - F(ω)) / ω · A_{nm}   (0 on the diagonal ω = 0)
//!   J[A]_{nm} = F(ω) · A_{nm}
//! so that L∘I[A] - A = -J[A].

use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use faer::Mat;
use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, CMat, I};
use crate::weight::WeightFunction;

/// Global sign s in L∘I[A] - A = s·J[A].
pub const IDENTITY_SIGN: f64 = -1.0;

/// Frequencies are bucketed on this grid before kernel evaluation.
const OMEGA_GRID: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SpectralData {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMat,
    pub source_hash: u64,
}

pub fn matrix_hash(h: &CMat) -> u64 {
    let mut s = std::collections::hash_map::DefaultHasher::new();
    h.nrows().hash(&mut s);
    for j in 0..h.ncols() {
        for i in 0..h.nrows() {
            h[(i, j)].re.to_bits().hash(&mut s);
            h[(i, j)].im.to_bits().hash(&mut s);
        }
    }
    s.finish()
}

impl SpectralData {
    pub fn new(h: &CMat) -> Result<Self> {
        if h.nrows() != h.ncols() {
            return Err(Error::Dimension("Hamiltonian must be square".into()));
        }
        if !linalg::is_hermitian(h, 1e-12) {
            return invalid("Hamiltonian is not Hermitian");
        }
        let (eigenvalues, eigenvectors) = linalg::eigh(h)?;
        Ok(SpectralData { eigenvalues, eigenvectors, source_hash: matrix_hash(h) })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Returns (‖U†HU - D‖ / ‖H‖, ‖U†U - 1‖).
    pub fn defects(&self, h: &CMat) -> (f64, f64) {
        let u = &self.eigenvectors;
        let d = u.adjoint() * h * u;
        let diag = linalg::diag_real(&self.eigenvalues);
        let hn = linalg::frobenius(h).max(f64::MIN_POSITIVE);
        let e1 = linalg::frobenius(&(d - diag)) / hn;
        let e2 = linalg::frobenius(&(u.adjoint() * u - linalg::identity(self.dim())));
        (e1, e2)
    }

    pub fn to_eigenbasis(&self, a: &CMat) -> CMat {
        let u = &self.eigenvectors;
        u.adjoint() * a * u
    }

    pub fn from_eigenbasis(&self, a: &CMat) -> CMat {
        let u = &self.eigenvectors;
        u * a * u.adjoint()
    }

    pub fn ground_vector(&self) -> Vec<C64> {
        linalg::col_vec(&self.eigenvectors, 0)
    }

    pub fn spectral_gap(&self) -> f64 {
        let e0 = self.eigenvalues[0];
        self.eigenvalues.iter().find(|&&e| e - e0 > 1e-9).map(|e| e - e0).unwrap_or(f64::INFINITY)
    }

    /// Projection onto eigenvectors with the given indices.
    pub fn projection(&self, idx: &[usize]) -> CMat {
        let u = &self.eigenvectors;
        let n = self.dim();
        let sub = Mat::from_fn(n, idx.len(), |i, k| u[(i, idx[k])]);
        &sub * sub.adjoint()
    }
}

/// Kernel values D(ω) = 1 - F(ω) for every eigenvalue pair, reused for I
/// and J on one (H, g) pair.
#[derive(Debug, Clone)]
pub struct SpectralKernels {
    pub omega: Mat<f64>,
    pub d: Mat<f64>,
    pub source_hash: u64,
    pub g: f64,
}

impl SpectralKernels {
    pub fn new(spec: &SpectralData, wf: &WeightFunction) -> Self {
        let n = spec.dim();
        let e = &spec.eigenvalues;
        let mut keys: Vec<i64> = Vec::new();
        let mut seen = HashMap::new();
        for a in 0..n {
            for b in 0..n {
                let k = ((e[a] - e[b]) / OMEGA_GRID).round() as i64;
                if seen.insert(k, ()).is_none() {
                    keys.push(k);
                }
            }
        }
        let vals: HashMap<i64, f64> = keys
            .par_iter()
            .map(|&k| (k, one_minus_f(wf, k as f64 * OMEGA_GRID)))
            .collect();
        let omega = Mat::from_fn(n, n, |a, b| e[a] - e[b]);
        let d = Mat::from_fn(n, n, |a, b| vals[&(((e[a] - e[b]) / OMEGA_GRID).round() as i64)]);
        SpectralKernels { omega, d, source_hash: spec.source_hash, g: wf.g }
    }

    /// I[A] in the eigenbasis.
    pub fn apply_i_eig(&self, a: &CMat) -> CMat {
        Mat::from_fn(a.nrows(), a.ncols(), |n, m| {
            let w = self.omega[(n, m)];
            let dv = self.d[(n, m)];
            if dv == 0.0 || w == 0.0 {
                linalg::ZERO
            } else {
                I * (dv / w) * a[(n, m)]
            }
        })
    }

    /// J[A] in the eigenbasis.
    pub fn apply_j_eig(&self, a: &CMat) -> CMat {
        Mat::from_fn(a.nrows(), a.ncols(), |n, m| (1.0 - self.d[(n, m)]) * a[(n, m)])
    }
}

/// 1 - F(ω) = ∫ w(t) 2 sin²(ωt/2) dt, free of cancellation at small ω.
fn one_minus_f(wf: &WeightFunction, omega: f64) -> f64 {
    if omega == 0.0 {
        return 0.0;
    }
    if omega.abs() >= wf.support_edge {
        return 1.0;
    }
    let (t, wt) = wf.nodes();
    let mut s = 0.0;
    for (k, (tk, wk)) in t.iter().zip(wt).enumerate() {
        let sn = (0.5 * omega * tk).sin();
        s += wk * wf_node(wf, k) * 2.0 * sn * sn;
    }
    s
}

fn wf_node(wf: &WeightFunction, k: usize) -> f64 {
    wf.w_at_node(k)
}

/// L_H[A] = -i [H, A].
pub fn liouvillian_apply(h: &CMat, a: &CMat) -> Result<CMat> {
    if h.nrows() != a.nrows() || h.ncols() != a.ncols() {
        return Err(Error::Dimension("Liouvillian operands differ in size".into()));
    }
    Ok(linalg::scale(-I, &linalg::comm(h, a)))
}

pub fn inverse_liouvillian(spec: &SpectralData, wf: &WeightFunction, a: &CMat) -> CMat {
    let k = SpectralKernels::new(spec, wf);
    inverse_liouvillian_with(spec, &k, a)
}

pub fn inverse_liouvillian_with(spec: &SpectralData, k: &SpectralKernels, a: &CMat) -> CMat {
    spec.from_eigenbasis(&k.apply_i_eig(&spec.to_eigenbasis(a)))
}

pub fn j_map(spec: &SpectralData, wf: &WeightFunction, a: &CMat) -> CMat {
    let k = SpectralKernels::new(spec, wf);
    j_map_with(spec, &k, a)
}

pub fn j_map_with(spec: &SpectralData, k: &SpectralKernels, a: &CMat) -> CMat {
    spec.from_eigenbasis(&k.apply_j_eig(&spec.to_eigenbasis(a)))
}

/// Time-domain evaluation I[A] = ∫ W(t) e^{iHt} A e^{-iHt} dt with
/// W(t) = -∫_{-∞}^t w + 1_{t≥0}, i.e. the double integral with the inner
/// time integral swapped outside. Uses no closed-form kernel.
pub fn inverse_liouvillian_time_domain(spec: &SpectralData, wf: &WeightFunction, a: &CMat) -> CMat {
    let at = spec.to_eigenbasis(a);
    let n = spec.dim();
    let (t, wt) = wf.nodes();
    let bw = wf.big_w_nodes();
    let e = &spec.eigenvalues;
    let out = Mat::from_fn(n, n, |r, c| {
        let om = e[r] - e[c];
        let mut s = C64::new(0.0, 0.0);
        for k in 0..t.len() {
            s += C64::from_polar(wt[k] * bw[k], om * t[k]);
        }
        s * at[(r, c)]
    });
    spec.from_eigenbasis(&out)
}

#[derive(Debug, Clone)]
pub struct GdgReport {
    pub holds: bool,
    pub worst_witness: f64,
    pub targeted_witness: f64,
    /// Smallest cross-partition eigenvalue distance.
    pub delta: f64,
    pub w_hat_delta: f64,
}

fn random_matrix<R: Rng>(rng: &mut R, n: usize) -> CMat {
    Mat::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

/// Dynamical gap check: the worst normalized |tr(P [L∘I[A] - A, B])| over
/// random pairs, and the targeted witness on the closest cross-gap pair.
pub fn gdg_check<R: Rng>(
    h: &CMat,
    sigma1: &[usize],
    wf: &WeightFunction,
    trials: usize,
    tol: f64,
    rng: &mut R,
) -> Result<GdgReport> {
    let spec = SpectralData::new(h)?;
    let n = spec.dim();
    let mut in1 = vec![false; n];
    for &i in sigma1 {
        if i >= n {
            return invalid(format!("eigen-index {i} out of range"));
        }
        in1[i] = true;
    }
    let c1 = in1.iter().filter(|&&b| b).count();
    if c1 == 0 || c1 == n {
        return invalid("degenerate partition: both spectral parts must be nonempty");
    }
    let e = &spec.eigenvalues;
    for a in 0..n {
        for b in 0..n {
            if in1[a] && !in1[b] && (e[a] - e[b]).abs() < 1e-10 {
                return invalid("partition splits a degenerate eigenvalue");
            }
        }
    }
    let idx: Vec<usize> = (0..n).filter(|&i| in1[i]).collect();
    let p = spec.projection(&idx);
    let ker = SpectralKernels::new(&spec, wf);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let a = random_matrix(rng, n);
        let b = random_matrix(rng, n);
        let ia = inverse_liouvillian_with(&spec, &ker, &a);
        let d = liouvillian_apply(h, &ia)? - &a;
        let w = linalg::trace_prod(&p, &linalg::comm(&d, &b)).norm() / (linalg::op_norm(&a) * linalg::op_norm(&b));
        worst = worst.max(w);
    }
    // closest cross-gap pair
    let (mut best, mut ns, mut ms) = (f64::INFINITY, 0, 0);
    for a in 0..n {
        for b in 0..n {
            if in1[a] && !in1[b] && (e[a] - e[b]).abs() < best {
                best = (e[a] - e[b]).abs();
                ns = a;
                ms = b;
            }
        }
    }
    let u = &spec.eigenvectors;
    let vn = linalg::col_vec(u, ns);
    let vm = linalg::col_vec(u, ms);
    let a = linalg::outer(&vn, &vm);
    let b = linalg::outer(&vm, &vn);
    let ia = inverse_liouvillian_with(&spec, &ker, &a);
    let d = liouvillian_apply(h, &ia)? - &a;
    let targeted = linalg::trace_prod(&p, &linalg::comm(&d, &b)).norm();
    Ok(GdgReport {
        holds: worst <= tol,
        worst_witness: worst,
        targeted_witness: targeted,
        delta: best,
        w_hat_delta: wf.w_hat(best),
    })
}
