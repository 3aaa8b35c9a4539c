//! Heisenberg evolution, the adiabatic Schrödinger solver with switching,
//! and Lieb-Robinson commutator profiles.

use faer::Mat;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::interactions::{DecayProfile, Interaction};
use crate::lattice::{Dist, Lattice};
use crate::linalg::{self, CMat, ZERO};
use crate::liouvillian::SpectralData;
use crate::operators::{self, GlobalState, LocalOperator};
use crate::switching::{SwitchKind, SwitchingFunction};

/// e^{iHt} A e^{-iHt} through eigenbasis phases.
pub fn heisenberg_evolve(spec: &SpectralData, a: &CMat, t: f64) -> CMat {
    let at = spec.to_eigenbasis(a);
    let e = &spec.eigenvalues;
    let rot = Mat::from_fn(at.nrows(), at.ncols(), |n, m| at[(n, m)] * C64::from_polar(1.0, (e[n] - e[m]) * t));
    spec.from_eigenbasis(&rot)
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<GlobalState>,
    pub eps: f64,
    pub eta: f64,
    pub label: String,
    pub steps_taken: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub eps: f64,
    pub eta: f64,
    pub observable_id: String,
    pub value_re: f64,
    pub value_im: f64,
}

impl Trajectory {
    pub fn expectations(&self, id: &str, b: &CMat) -> Vec<TrajectoryRow> {
        self.times
            .iter()
            .zip(&self.states)
            .map(|(&t, s)| {
                let v = s.expect(b);
                TrajectoryRow { t, eps: self.eps, eta: self.eta, observable_id: id.to_string(), value_re: v.re, value_im: v.im }
            })
            .collect()
    }

    /// Largest deviation of the sorted spectrum of ρ(t) from that of ρ(t_0).
    pub fn spectrum_drift(&self) -> Result<f64> {
        let first = match self.states.first() {
            Some(s) => linalg::eigvalsh(&s.rho)?,
            None => return Ok(0.0),
        };
        let mut worst = 0.0f64;
        for s in &self.states[1..] {
            let ev = linalg::eigvalsh(&s.rho)?;
            for (a, b) in first.iter().zip(&ev) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Local error tolerance per unit time (step doubling).
    pub tol: f64,
    /// Upper bound on the step in units of η.
    pub max_step_over_eta: f64,
    pub max_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-9, max_step_over_eta: 1.0 / 20.0, max_steps: 5_000_000 }
    }
}

struct Propagator<'a> {
    h0: &'a CMat,
    v: &'a CMat,
    f: &'a SwitchingFunction,
    eps: f64,
    eta: f64,
    b0: f64,
    bv: f64,
}

impl Propagator<'_> {
    fn step(&self, t: f64, h: f64, vecs: &[Vec<C64>]) -> Vec<Vec<C64>> {
        let fm = self.f.value(t + 0.5 * h);
        let mut hm = self.h0.clone();
        if fm != 0.0 && self.eps != 0.0 {
            linalg::add_assign_scaled(&mut hm, C64::new(self.eps * fm, 0.0), self.v);
        }
        let bound = self.b0 + (self.eps * fm).abs() * self.bv;
        vecs.iter().map(|x| linalg::expm_vec(&hm, h / self.eta, x, bound)).collect()
    }
}

/// Solves iη dρ/dt = [H0 + ε f(t) V, ρ] from `t_start` with ρ = ρ0 and
/// records ρ at `out_times` (ascending, ≥ t_start). The eigenvectors of ρ0
/// with nonzero weight are propagated, so ρ(t) is an exact conjugation of ρ0.
#[allow(clippy::too_many_arguments)]
pub fn adiabatic_solve(
    h0: &CMat,
    v: &CMat,
    f: &SwitchingFunction,
    eps: f64,
    eta: f64,
    rho0: &GlobalState,
    t_start: f64,
    out_times: &[f64],
    opts: &SolverOptions,
) -> Result<Trajectory> {
    let n = h0.nrows();
    if v.nrows() != n || rho0.dim() != n {
        return Err(Error::Dimension("adiabatic_solve operands differ in size".into()));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return invalid(format!("eta must lie in (0, 1], got {eta}"));
    }
    if t_start > -1.0 {
        return invalid("t_start must be <= -1");
    }
    if out_times.windows(2).any(|w| w[1] < w[0]) || out_times.first().is_some_and(|&t| t < t_start) {
        return invalid("output times must be ascending and not before t_start");
    }
    let c = linalg::frobenius(&linalg::comm(h0, &rho0.rho));
    if c > 1e-8 {
        return invalid(format!("initial state does not commute with H0 (defect {c:.3e})"));
    }
    let comps = rho0.purification(1e-14)?;
    let prop = Propagator {
        h0,
        v,
        f,
        eps,
        eta,
        b0: linalg::row_sum_bound(h0),
        bv: linalg::row_sum_bound(v),
    };
    // before t = -1 the mollified switch is off and ρ0 is stationary
    let mut t = match f.kind {
        SwitchKind::MollifiedStep => t_start.max(-1.0),
        SwitchKind::AlwaysOn => t_start,
    };
    let mut vecs: Vec<Vec<C64>> = comps.iter().map(|(_, x)| x.clone()).collect();
    let weights: Vec<f64> = comps.iter().map(|(p, _)| *p).collect();
    let hmax = opts.max_step_over_eta * eta;
    let mut h = hmax;
    let mut states = Vec::with_capacity(out_times.len());
    let mut steps = 0usize;
    let build = |vecs: &[Vec<C64>]| -> GlobalState {
        let mut rho = linalg::zeros(n);
        for (p, x) in weights.iter().zip(vecs) {
            rho += linalg::scale_re(*p, &linalg::outer(x, x));
        }
        GlobalState { rho }
    };
    for &target in out_times {
        while t < target {
            if steps >= opts.max_steps {
                return Err(Error::Numerical("step budget exhausted".into()));
            }
            let hs = h.min(target - t);
            let eps_zero = eps == 0.0 || f.kind == SwitchKind::MollifiedStep && t + hs <= -1.0;
            if eps_zero {
                // H0 commutes with ρ0 and the perturbation is off
                t += hs;
                steps += 1;
                continue;
            }
            let full = prop.step(t, hs, &vecs);
            let half = prop.step(t, 0.5 * hs, &vecs);
            let half = prop.step(t + 0.5 * hs, 0.5 * hs, &half);
            let err = full
                .iter()
                .zip(&half)
                .zip(&weights)
                .map(|((a, b), p)| p * linalg::vnorm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>()))
                .fold(0.0, f64::max);
            let allowed = opts.tol * hs;
            steps += 1;
            if err <= allowed || hs < 1e-12 {
                vecs = half;
                t += hs;
                let fac = if err == 0.0 { 2.0 } else { (0.9 * (allowed / err).sqrt()).clamp(0.2, 2.0) };
                if hs >= h * 0.999 {
                    h = (h * fac).min(hmax);
                }
            } else {
                h = hs * (0.9 * (allowed / err).sqrt()).clamp(0.1, 0.5);
            }
        }
        states.push(build(&vecs));
    }
    Ok(Trajectory { times: out_times.to_vec(), states, eps, eta, label: String::new(), steps_taken: steps })
}

/// Exact propagation under a constant Hamiltonian: e^{-iHt/η} ρ e^{iHt/η}.
pub fn evolve_state(spec: &SpectralData, rho: &CMat, t: f64, eta: f64) -> CMat {
    heisenberg_evolve(spec, rho, -t / eta)
}

/// Largest |eigenvalue| of a Hermitian matrix; dense for small sizes,
/// Lanczos with full reorthogonalization otherwise.
pub fn hermitian_norm(m: &CMat) -> Result<f64> {
    let n = m.nrows();
    if n <= 256 {
        let ev = linalg::eigvalsh(m)?;
        return Ok(ev.iter().fold(0.0f64, |a, b| a.max(b.abs())));
    }
    let kmax = n.min(120);
    let mut q: Vec<Vec<C64>> = Vec::with_capacity(kmax);
    let mut start: Vec<C64> = (0..n).map(|i| C64::new(1.0 + (i as f64 * 0.618).sin(), (i as f64 * 0.377).cos())).collect();
    let s = linalg::vnorm(&start);
    start.iter_mut().for_each(|z| *z /= s);
    q.push(start);
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut last = f64::NAN;
    for k in 0..kmax {
        let mut w = linalg::matvec(m, &q[k]);
        let a = linalg::vdot(&q[k], &w).re;
        alpha.push(a);
        for _ in 0..2 {
            for qj in &q {
                let c = linalg::vdot(qj, &w);
                w.iter_mut().zip(qj).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = linalg::vnorm(&w);
        let kk = alpha.len();
        let t = Mat::from_fn(kk, kk, |i, j| {
            if i == j {
                C64::new(alpha[i], 0.0)
            } else if i + 1 == j {
                C64::new(beta[i], 0.0)
            } else if j + 1 == i {
                C64::new(beta[j], 0.0)
            } else {
                ZERO
            }
        });
        let ev = linalg::eigvalsh(&t)?;
        let cur = ev.iter().fold(0.0f64, |x, y| x.max(y.abs()));
        if b < 1e-13 * cur.max(1e-300) || (k > 10 && (cur - last).abs() <= 1e-13 * cur) {
            return Ok(cur);
        }
        last = cur;
        beta.push(b);
        q.push(w.into_iter().map(|z| z / b).collect());
    }
    Ok(last)
}

/// ‖[A, B]‖ for Hermitian A, B: the commutator times i is Hermitian.
pub fn commutator_norm(a: &CMat, b: &CMat) -> Result<f64> {
    let c = linalg::scale(linalg::I, &linalg::comm(a, b));
    hermitian_norm(&linalg::hermitian_part(&c))
}

/// Row pattern of a matrix with exactly one nonzero per row and column:
/// entry i is (column, value).
fn monomial_rows(p: &CMat) -> Option<Vec<(usize, C64)>> {
    let n = p.nrows();
    let mut rows = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for i in 0..n {
        let mut hit = None;
        for j in 0..n {
            if p[(i, j)] != ZERO {
                if hit.is_some() {
                    return None;
                }
                hit = Some((j, p[(i, j)]));
            }
        }
        let (j, v) = hit?;
        if seen[j] {
            return None;
        }
        seen[j] = true;
        rows.push((j, v));
    }
    Some(rows)
}

/// ‖[A, P]‖ = ‖A − P A P†‖ for a unitary monomial P, in O(n²).
fn monomial_commutator_norm(a: &CMat, p: &[(usize, C64)]) -> Result<f64> {
    let n = a.nrows();
    let d = Mat::from_fn(n, n, |i, j| {
        let (ci, vi) = p[i];
        let (cj, vj) = p[j];
        a[(i, j)] - vi * a[(ci, cj)] * vj.conj()
    });
    hermitian_norm(&linalg::hermitian_part(&d))
}

#[derive(Debug, Clone, Serialize)]
pub struct LrRow {
    pub t: f64,
    pub site: usize,
    pub axis: u8,
    pub dist: u32,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LrFit {
    pub c: f64,
    pub v: f64,
    pub b: f64,
    pub p: f64,
    pub dominates: bool,
    pub worst_ratio: f64,
}

impl LrFit {
    pub fn envelope(&self, t: f64, d: u32, norm_a: f64) -> f64 {
        let chi = (-self.b * (d as f64).powf(self.p)).exp();
        self.c * norm_a * ((self.b * self.v * t.abs()).exp() - 1.0) * chi
    }
}

/// ‖[τ_t(A), σ^a_y]‖ for every probe site y outside supp A, axis a and time t.
pub fn lr_profile(
    lat: &Lattice,
    phi: &Interaction,
    a: &LocalOperator,
    probes: &[usize],
    times: &[f64],
) -> Result<Vec<LrRow>> {
    let h = phi.assemble(lat)?;
    let spec = SpectralData::new(&h)?;
    let a_full = operators::embed(a, lat)?;
    let mut probe_ops = Vec::new();
    for &y in probes {
        if a.support.contains(y) {
            return invalid(format!("probe site {y} lies in the support of A"));
        }
        let d = match lat.site_set_distance(y, &a.support) {
            Dist::Finite(d) => d,
            Dist::Infinite => return invalid("probe unreachable from A"),
        };
        for axis in 1..=3u8 {
            let b = operators::embed(&operators::pauli(y, axis, lat)?, lat)?;
            let rows = monomial_rows(&b);
            probe_ops.push((y, axis, d, b, rows));
        }
    }
    let mut rows = Vec::new();
    for &t in times {
        let at = heisenberg_evolve(&spec, &a_full, t);
        let at = linalg::hermitian_part(&at);
        let vals: Vec<Result<LrRow>> = probe_ops
            .par_iter()
            .map(|(y, axis, d, b, rows)| {
                let value = if t == 0.0 {
                    linalg::frobenius(&linalg::comm(&at, b))
                } else {
                    match rows {
                        Some(p) => monomial_commutator_norm(&at, p)?,
                        None => commutator_norm(&at, b)?,
                    }
                };
                Ok(LrRow { t, site: *y, axis: *axis, dist: *d, value })
            })
            .collect();
        for r in vals {
            rows.push(r?);
        }
    }
    Ok(rows)
}

/// Fits C and v of C ‖A‖ (e^{bv|t|} - 1) χ_{b,p}(d) so that the envelope
/// dominates every row; v is chosen on a log grid to make the envelope
/// tightest in mean log-ratio.
pub fn fit_lr_envelope(rows: &[LrRow], prof: &DecayProfile, norm_a: f64, floor: f64) -> LrFit {
    let live: Vec<&LrRow> = rows.iter().filter(|r| r.value > floor).collect();
    if live.is_empty() {
        return LrFit { c: 0.0, v: 0.0, b: prof.b, p: prof.p, dominates: rows.iter().all(|r| r.value <= floor), worst_ratio: 0.0 };
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for k in 0..=400 {
        let v = 10f64.powf(-3.0 + 6.0 * k as f64 / 400.0);
        let base = |r: &LrRow| norm_a * ((prof.b * v * r.t.abs()).exp() - 1.0) * prof.chi_dist(Dist::Finite(r.dist));
        let c = live.iter().map(|r| r.value / base(r)).fold(0.0, f64::max);
        if !c.is_finite() {
            continue;
        }
        let score: f64 = live.iter().map(|r| (c * base(r) / r.value).ln()).sum::<f64>() / live.len() as f64;
        if best.map_or(true, |(_, _, s)| score < s) {
            best = Some((c, v, score));
        }
    }
    let (c, v, _) = best.unwrap_or((f64::INFINITY, 1.0, 0.0));
    let fit = LrFit { c, v, b: prof.b, p: prof.p, dominates: false, worst_ratio: 0.0 };
    let worst = rows
        .iter()
        .map(|r| {
            let e = fit.envelope(r.t, r.dist, norm_a);
            if r.value <= floor {
                0.0
            } else {
                r.value / e
            }
        })
        .fold(0.0, f64::max);
    LrFit { dominates: worst <= 1.0 + 1e-9, worst_ratio: worst, ..fit }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::pauli_matrix;

    #[test]
    fn heisenberg_basics() {
        let h = pauli_matrix(3).unwrap();
        let spec = SpectralData::new(&h).unwrap();
        let x = pauli_matrix(1).unwrap();
        assert!(linalg::frobenius(&(heisenberg_evolve(&spec, &x, 0.0) - &x)) < 1e-15);
        assert!(linalg::frobenius(&(heisenberg_evolve(&spec, &h, 2.3) - &h)) < 1e-14);
        let xt = heisenberg_evolve(&spec, &x, 0.7);
        assert!((linalg::op_norm(&xt) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_perturbation_is_stationary() {
        let h0 = pauli_matrix(3).unwrap();
        let v = pauli_matrix(1).unwrap();
        let rho0 = GlobalState::basis(2, 1);
        let f = SwitchingFunction::mollified();
        let tr = adiabatic_solve(&h0, &v, &f, 0.0, 0.5, &rho0, -2.0, &[-0.5, 0.0, 1.0], &SolverOptions::default()).unwrap();
        for s in &tr.states {
            assert!(linalg::frobenius(&(&s.rho - &rho0.rho)) < 1e-14);
        }
    }

    #[test]
    fn constant_hamiltonian_matches_exact_propagation() {
        let h0 = pauli_matrix(3).unwrap();
        let v = pauli_matrix(1).unwrap();
        let rho0 = GlobalState::basis(2, 1);
        let f = SwitchingFunction::always_on();
        let (eps, eta) = (0.3, 0.5);
        let tr = adiabatic_solve(&h0, &v, &f, eps, eta, &rho0, -1.0, &[0.0, 1.0], &SolverOptions::default()).unwrap();
        let h = &h0 + linalg::scale_re(eps, &v);
        let spec = SpectralData::new(&h).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let exact = evolve_state(&spec, &rho0.rho, t + 1.0, eta);
            assert!(linalg::frobenius(&(&s.rho - &exact)) < 1e-8, "t={t}");
        }
        assert!(tr.spectrum_drift().unwrap() < 1e-10);
    }

    #[test]
    fn lanczos_norm_matches_dense() {
        let n = 300;
        let m = Mat::from_fn(n, n, |i, j| {
            let x = ((i * 31 + j * 17) % 23) as f64 - 11.0;
            let y = ((i * 7 + j * 5) % 13) as f64 - 6.0;
            C64::new(x + y, 0.0)
        });
        let m = linalg::hermitian_part(&m);
        let ev = linalg::eigvalsh(&m).unwrap();
        let want = ev.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let got = hermitian_norm(&m).unwrap();
        assert!((want - got).abs() < 1e-9 * want, "{want} {got}");
    }

    #[test]
    fn monomial_commutator_matches_dense() {
        let lat = Lattice::chain(3, 2).unwrap();
        let a = Mat::from_fn(8, 8, |i, j| C64::new(((i * 5 + j * 3) % 7) as f64 - 3.0, ((i * 2 + j) % 5) as f64 - 2.0));
        let a = linalg::hermitian_part(&a);
        for y in 0..3 {
            for axis in 1..=3u8 {
                let p = operators::embed(&operators::pauli(y, axis, &lat).unwrap(), &lat).unwrap();
                let rows = monomial_rows(&p).unwrap();
                let fast = monomial_commutator_norm(&a, &rows).unwrap();
                let dense = commutator_norm(&a, &p).unwrap();
                assert!((fast - dense).abs() < 1e-12 * dense.max(1.0), "{y} {axis}: {fast} {dense}");
            }
        }
        assert!(monomial_rows(&linalg::hermitian_part(&a)).is_none());
    }
}
