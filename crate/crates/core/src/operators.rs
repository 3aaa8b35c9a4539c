//! Local operators on tensor-product spaces, states, Pauli matrices and the
//! conditional expectation (normalized partial trace).
//!
//! Kronecker layout: sites in ascending index order, the smallest index is the
//! slowest-varying factor. For qubits basis state 0 is spin up (σ³ = +1).

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};
use crate::lattice::{Lattice, SiteSet};
use crate::linalg::{self, CMat, ONE, ZERO};

pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LocalOperator {
    pub support: SiteSet,
    pub matrix: CMat,
    pub hermitian_hint: bool,
}

impl LocalOperator {
    pub fn new(lat: &Lattice, support: SiteSet, matrix: CMat) -> Result<Self> {
        if !lat.contains(&support) {
            return invalid(format!("support {support} outside lattice"));
        }
        let d = lat.dim_of(&support);
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::Dimension(format!(
                "operator on {support} needs {d}x{d}, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(LocalOperator { support, matrix, hermitian_hint: false })
    }

    pub fn hermitian(lat: &Lattice, support: SiteSet, matrix: CMat) -> Result<Self> {
        let mut op = Self::new(lat, support, matrix)?;
        if !linalg::is_hermitian(&op.matrix, HERMITIAN_TOL) {
            return invalid(format!("operator on {} is not Hermitian", op.support));
        }
        op.hermitian_hint = true;
        Ok(op)
    }

    pub fn identity(lat: &Lattice, support: SiteSet) -> Self {
        let d = lat.dim_of(&support);
        LocalOperator { support, matrix: linalg::identity(d), hermitian_hint: true }
    }

    pub fn zero(lat: &Lattice, support: SiteSet) -> Self {
        let d = lat.dim_of(&support);
        LocalOperator { support, matrix: linalg::zeros(d), hermitian_hint: true }
    }

    /// Tensor with the identity on `target \ support`.
    pub fn extend_to(&self, lat: &Lattice, target: &SiteSet) -> Result<LocalOperator> {
        if !self.support.is_subset(target) {
            return invalid(format!("cannot extend {} to {}", self.support, target));
        }
        if &self.support == target {
            return Ok(self.clone());
        }
        Ok(LocalOperator {
            support: target.clone(),
            matrix: extend_matrix(lat, &self.support, &self.matrix, target),
            hermitian_hint: self.hermitian_hint,
        })
    }

    pub fn scaled(&self, c: C64) -> LocalOperator {
        LocalOperator {
            support: self.support.clone(),
            matrix: linalg::scale(c, &self.matrix),
            hermitian_hint: self.hermitian_hint && c.im == 0.0,
        }
    }

    pub fn adjoint(&self) -> LocalOperator {
        LocalOperator {
            support: self.support.clone(),
            matrix: linalg::adjoint(&self.matrix),
            hermitian_hint: self.hermitian_hint,
        }
    }

    pub fn norm(&self) -> f64 {
        linalg::op_norm(&self.matrix)
    }

    /// Product on the union of supports.
    pub fn mul(&self, lat: &Lattice, o: &LocalOperator) -> Result<LocalOperator> {
        let u = self.support.union(&o.support);
        let a = self.extend_to(lat, &u)?;
        let b = o.extend_to(lat, &u)?;
        Ok(LocalOperator { support: u, matrix: &a.matrix * &b.matrix, hermitian_hint: false })
    }

    pub fn add(&self, lat: &Lattice, o: &LocalOperator) -> Result<LocalOperator> {
        let u = self.support.union(&o.support);
        let a = self.extend_to(lat, &u)?;
        let b = o.extend_to(lat, &u)?;
        Ok(LocalOperator {
            support: u,
            matrix: a.matrix + b.matrix,
            hermitian_hint: self.hermitian_hint && o.hermitian_hint,
        })
    }
}

/// Mixed-radix bookkeeping: for every basis index of `target`, the index of
/// its `sub` digits and of its complement digits.
fn split_indices(lat: &Lattice, sub: &SiteSet, target: &SiteSet) -> (Vec<usize>, Vec<usize>, usize) {
    let dims: Vec<usize> = target.iter().map(|&s| lat.site_dim(s)).collect();
    let in_sub: Vec<bool> = target.iter().map(|&s| sub.contains(s)).collect();
    let total: usize = dims.iter().product();
    let dc: usize = dims.iter().zip(&in_sub).filter(|(_, &b)| !b).map(|(d, _)| d).product();
    let mut si = vec![0; total];
    let mut ci = vec![0; total];
    let mut digits = vec![0usize; dims.len()];
    for t in 0..total {
        let (mut s, mut c) = (0, 0);
        for k in 0..dims.len() {
            if in_sub[k] {
                s = s * dims[k] + digits[k];
            } else {
                c = c * dims[k] + digits[k];
            }
        }
        si[t] = s;
        ci[t] = c;
        for k in (0..dims.len()).rev() {
            digits[k] += 1;
            if digits[k] < dims[k] {
                break;
            }
            digits[k] = 0;
        }
    }
    (si, ci, dc)
}

pub(crate) fn extend_matrix(lat: &Lattice, sub: &SiteSet, m: &CMat, target: &SiteSet) -> CMat {
    let (si, ci, dc) = split_indices(lat, sub, target);
    let total = si.len();
    let ds = m.nrows();
    // index of (s, c) in target ordering
    let mut inv = vec![0usize; total];
    for t in 0..total {
        inv[si[t] * dc + ci[t]] = t;
    }
    let mut out = Mat::zeros(total, total);
    for col in 0..total {
        let (sc, cc) = (si[col], ci[col]);
        for sr in 0..ds {
            let v = m[(sr, sc)];
            if v != ZERO {
                out[(inv[sr * dc + cc], col)] = v;
            }
        }
    }
    out
}

/// Unnormalized partial trace of `m` (on `support`) down to `keep`.
pub(crate) fn partial_trace(lat: &Lattice, support: &SiteSet, m: &CMat, keep: &SiteSet) -> CMat {
    let keep = keep.intersection(support);
    let (si, ci, _) = split_indices(lat, &keep, support);
    let dk = lat.dim_of(&keep);
    let total = si.len();
    let mut out = Mat::zeros(dk, dk);
    // group indices by complement value
    let mut by_c: Vec<Vec<usize>> = vec![Vec::new(); total / dk.max(1)];
    for t in 0..total {
        by_c[ci[t]].push(t);
    }
    for group in &by_c {
        for &r in group {
            for &c in group {
                out[(si[r], si[c])] += m[(r, c)];
            }
        }
    }
    out
}

pub fn pauli_matrix(axis: u8) -> Result<CMat> {
    let o = ZERO;
    let l = ONE;
    let i = linalg::I;
    Ok(match axis {
        0 => linalg::identity(2),
        1 => linalg::from_rows(&[&[o, l], &[l, o]]),
        2 => linalg::from_rows(&[&[o, -i], &[i, o]]),
        3 => linalg::from_rows(&[&[l, o], &[o, -l]]),
        _ => return invalid(format!("Pauli axis {axis} not in 1..=3")),
    })
}

pub fn pauli(site: usize, axis: u8, lat: &Lattice) -> Result<LocalOperator> {
    if site >= lat.n_sites() {
        return invalid(format!("site {site} outside lattice"));
    }
    if lat.site_dim(site) != 2 {
        return invalid(format!("site {site} is not a qubit"));
    }
    let mut op = LocalOperator::new(lat, SiteSet::single(site), pauli_matrix(axis)?)?;
    op.hermitian_hint = true;
    Ok(op)
}

/// Pauli string: `axes[k]` acts on `sites[k]` (sites need not be sorted).
pub fn pauli_string(lat: &Lattice, sites: &[usize], axes: &[u8]) -> Result<LocalOperator> {
    let mut op: Option<LocalOperator> = None;
    for (&s, &a) in sites.iter().zip(axes) {
        let p = pauli(s, a, lat)?;
        op = Some(match op {
            None => p,
            Some(o) => o.mul(lat, &p)?,
        });
    }
    let mut op = op.ok_or_else(|| Error::Invalid("empty Pauli string".into()))?;
    op.hermitian_hint = true;
    Ok(op)
}

pub fn embed(op: &LocalOperator, lat: &Lattice) -> Result<CMat> {
    Ok(op.extend_to(lat, &lat.all_sites())?.matrix)
}

/// `[A, B]` computed on the union of the supports.
pub fn commutator(lat: &Lattice, a: &LocalOperator, b: &LocalOperator) -> Result<LocalOperator> {
    let u = a.support.union(&b.support);
    if !a.support.intersects(&b.support) {
        return Ok(LocalOperator { support: u.clone(), matrix: linalg::zeros(lat.dim_of(&u)), hermitian_hint: true });
    }
    let ae = a.extend_to(lat, &u)?;
    let be = b.extend_to(lat, &u)?;
    Ok(LocalOperator { support: u, matrix: linalg::comm(&ae.matrix, &be.matrix), hermitian_hint: false })
}

/// Normalized partial trace over the complement of `x`; the result lives on
/// `support ∩ x`.
pub fn conditional_expectation(lat: &Lattice, a: &LocalOperator, x: &SiteSet) -> LocalOperator {
    let keep = a.support.intersection(x);
    let traced = a.support.difference(x);
    let norm = lat.dim_of(&traced) as f64;
    let m = partial_trace(lat, &a.support, &a.matrix, &keep);
    LocalOperator { support: keep, matrix: linalg::scale_re(1.0 / norm, &m), hermitian_hint: a.hermitian_hint }
}

/// Conditional expectation of a full-space matrix.
pub fn conditional_expectation_full(lat: &Lattice, a: &CMat, x: &SiteSet) -> LocalOperator {
    let op = LocalOperator { support: lat.all_sites(), matrix: a.clone(), hermitian_hint: false };
    conditional_expectation(lat, &op, x)
}

pub fn operator_norm(a: &CMat) -> f64 {
    linalg::op_norm(a)
}

pub fn trace_norm(a: &CMat) -> f64 {
    linalg::trace_norm(a)
}

/// Distance between two local operators, compared on the union of supports.
pub fn op_distance(lat: &Lattice, a: &LocalOperator, b: &LocalOperator) -> Result<f64> {
    let u = a.support.union(&b.support);
    let ae = a.extend_to(lat, &u)?;
    let be = b.extend_to(lat, &u)?;
    Ok(linalg::op_norm(&(ae.matrix - be.matrix)))
}

#[derive(Debug, Clone)]
pub struct GlobalState {
    pub rho: CMat,
}

impl GlobalState {
    pub fn new(rho: CMat) -> Result<Self> {
        let s = GlobalState { rho };
        s.validate(1e-10)?;
        Ok(s)
    }

    pub fn pure(psi: &[C64]) -> Self {
        let n = linalg::vnorm(psi);
        let v: Vec<C64> = psi.iter().map(|z| z / n).collect();
        GlobalState { rho: linalg::outer(&v, &v) }
    }

    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = vec![ZERO; dim];
        v[k] = ONE;
        Self::pure(&v)
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        if !linalg::is_hermitian(&self.rho, 1e-12) {
            return invalid("density matrix not Hermitian");
        }
        let tr = linalg::trace(&self.rho);
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return invalid(format!("trace {tr} differs from 1"));
        }
        let ev = linalg::eigvalsh(&self.rho)?;
        if ev.first().copied().unwrap_or(0.0) < -1e-12 {
            return invalid("density matrix has negative eigenvalue");
        }
        Ok(())
    }

    pub fn expect(&self, b: &CMat) -> C64 {
        linalg::trace_prod(&self.rho, b)
    }

    pub fn expect_local(&self, lat: &Lattice, b: &LocalOperator) -> Result<C64> {
        Ok(self.expect(&embed(b, lat)?))
    }

    /// Eigenvectors with non-negligible weight, as (weight, vector) pairs.
    pub fn purification(&self, cutoff: f64) -> Result<Vec<(f64, Vec<C64>)>> {
        let (vals, u) = linalg::eigh(&self.rho)?;
        Ok(vals
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > cutoff)
            .map(|(k, &p)| (p, linalg::col_vec(&u, k)))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius;

    #[test]
    fn pauli_algebra() {
        let z = pauli_matrix(3).unwrap();
        assert_eq!(z[(0, 0)], ONE);
        assert_eq!(z[(1, 1)], -ONE);
        let x = pauli_matrix(1).unwrap();
        let y = pauli_matrix(2).unwrap();
        assert!(frobenius(&(&x * &x - linalg::identity(2))) == 0.0);
        let c = linalg::comm(&x, &y);
        assert!(frobenius(&(c - linalg::scale(C64::new(0.0, 2.0), &z))) < 1e-15);
        let lat = Lattice::chain(2, 3).unwrap();
        assert!(pauli(0, 1, &lat).is_err());
    }

    #[test]
    fn embedding_orders_sites() {
        let lat = Lattice::chain(2, 2).unwrap();
        let z0 = embed(&pauli(0, 3, &lat).unwrap(), &lat).unwrap();
        let want = linalg::kron(&pauli_matrix(3).unwrap(), &linalg::identity(2));
        assert!(frobenius(&(z0 - want)) == 0.0);
        let z1 = embed(&pauli(1, 3, &lat).unwrap(), &lat).unwrap();
        let want = linalg::kron(&linalg::identity(2), &pauli_matrix(3).unwrap());
        assert!(frobenius(&(z1 - want)) == 0.0);
    }

    #[test]
    fn conditional_expectation_examples() {
        let lat = Lattice::chain(3, 2).unwrap();
        let xx = pauli_string(&lat, &[0, 2], &[1, 1]).unwrap();
        let e = conditional_expectation(&lat, &xx, &SiteSet::single(0));
        assert!(linalg::max_abs(&e.matrix) == 0.0);
        let z = pauli(1, 3, &lat).unwrap();
        let e = conditional_expectation(&lat, &z, &SiteSet::new(vec![1, 2]));
        assert!(op_distance(&lat, &e, &z).unwrap() < 1e-15);
        let e = conditional_expectation(&lat, &xx, &lat.all_sites());
        assert!(op_distance(&lat, &e, &xx).unwrap() < 1e-15);
    }

    #[test]
    fn local_commutator_is_zero_on_disjoint_supports() {
        let lat = Lattice::chain(3, 2).unwrap();
        let a = pauli(0, 1, &lat).unwrap();
        let b = pauli(2, 2, &lat).unwrap();
        let c = commutator(&lat, &a, &b).unwrap();
        assert_eq!(linalg::max_abs(&c.matrix), 0.0);
        let z = pauli(1, 3, &lat).unwrap();
        let x = pauli(1, 1, &lat).unwrap();
        let y = pauli(1, 2, &lat).unwrap();
        let c = commutator(&lat, &z, &x).unwrap();
        assert!(op_distance(&lat, &c, &y.scaled(C64::new(0.0, 2.0))).unwrap() < 1e-15);
    }

    #[test]
    fn states() {
        let s = GlobalState::basis(4, 3);
        s.validate(1e-12).unwrap();
        assert!((trace_norm(&s.rho) - 1.0).abs() < 1e-14);
        let z = diag_z();
        assert!((s.expect(&z).re + 1.0).abs() < 1e-15);
    }

    fn diag_z() -> CMat {
        linalg::diag_real(&[1.0, -1.0, 1.0, -1.0])
    }
}
