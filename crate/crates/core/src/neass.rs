//! Non-equilibrium almost-stationary states: the order-by-order generator
//! recursion, Kubo's formula, response coefficients and the response and
//! stationarity sweeps.
//!
//! Sign convention: Π = e^{iS} ρ0 e^{-iS} with S = Σ ε^μ A_μ, so the
//! Hamiltonian seen in the rotated frame is e^{-iS} H e^{iS}, expanded with
//! ad_{-iS}. The ε^j coefficient that does not involve A_j is R̃_j and the
//! recursion picks A_j = I[R̃_j].

use std::path::Path;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{self, SolverOptions};
use crate::error::{invalid, Error, Result};
use crate::fit;
use crate::lattice::{Lattice, SiteSet};
use crate::liouvillian::{self, SpectralData, SpectralKernels};
use crate::linalg::{self, CMat};
use crate::operators::{self, GlobalState};
use crate::switching::SwitchingFunction;
use crate::weight::WeightFunction;

pub const MAX_ORDER: usize = 4;
pub const HERMITIAN_GEN_TOL: f64 = 1e-10;
pub const RICHARDSON_STEP: f64 = 1e-3;
pub const RICHARDSON_FLAG: f64 = 1e-6;

#[derive(Clone, Copy)]
enum SlotKind {
    /// Conjugated operator, weight 1/k!.
    Conjugated,
    /// Derivative term of the frame change, weight 1/(k+1)!.
    Derivative,
}

struct Slot<'a> {
    weight: usize,
    factor: f64,
    kind: SlotKind,
    op: &'a CMat,
}

fn compositions(m: usize, max_part: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in 1..=m.min(max_part) {
        for mut rest in compositions(m - first, max_part) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Σ_slots Σ_{μ_1+…+μ_k + w = j} c_k (-i)^k [A_{μ_1}, [A_{μ_2}, … [A_{μ_k}, X]]].
fn composition_sum(gens: &[CMat], max_mu: usize, slots: &[Slot], j: usize, dim: usize) -> CMat {
    let max_mu = max_mu.min(gens.len());
    let mut jobs: Vec<(usize, Vec<usize>)> = Vec::new();
    for (si, s) in slots.iter().enumerate() {
        if s.weight > j {
            continue;
        }
        let m = j - s.weight;
        if m > 0 && max_mu == 0 {
            continue;
        }
        for c in compositions(m, max_mu.max(1)) {
            jobs.push((si, c));
        }
    }
    let parts: Vec<CMat> = jobs
        .par_iter()
        .map(|(si, comp)| {
            let s = &slots[*si];
            let mut x = s.op.clone();
            for &mu in comp.iter().rev() {
                x = linalg::comm(&gens[mu - 1], &x);
            }
            let k = comp.len();
            let denom = match s.kind {
                SlotKind::Conjugated => factorial(k),
                SlotKind::Derivative => factorial(k + 1),
            };
            let phase = (-linalg::I).powu(k as u32);
            linalg::scale(phase * (s.factor / denom), &x)
        })
        .collect();
    let mut acc = linalg::zeros(dim);
    for p in parts {
        acc += p;
    }
    acc
}

/// ε^j coefficient R̃_j of e^{-iS}(H0 + εV)e^{iS} without the A_j term;
/// `gens` holds at least A_1..A_{j-1}.
pub fn eps_coefficient(gens: &[CMat], h0: &CMat, v: &CMat, j: usize) -> Result<CMat> {
    eps_coefficient_td(gens, &[], h0, v, 0.0, j)
}

/// As `eps_coefficient`, adding the frame-change terms
/// (η/ε) Σ 1/(k+1)! (ad_{-iS})^k [Ȧ_μ] at weight μ + 1.
pub fn eps_coefficient_td(
    gens: &[CMat],
    gens_dot: &[CMat],
    h0: &CMat,
    v: &CMat,
    ratio: f64,
    j: usize,
) -> Result<CMat> {
    if j == 0 {
        return invalid("coefficient index must be positive");
    }
    if gens.len() < j - 1 {
        return invalid(format!("order {j} needs {} generators, got {}", j - 1, gens.len()));
    }
    let mut slots = vec![
        Slot { weight: 0, factor: 1.0, kind: SlotKind::Conjugated, op: h0 },
        Slot { weight: 1, factor: 1.0, kind: SlotKind::Conjugated, op: v },
    ];
    if ratio != 0.0 {
        for (mu, d) in gens_dot.iter().enumerate().take(j - 1) {
            slots.push(Slot { weight: mu + 2, factor: ratio, kind: SlotKind::Derivative, op: d });
        }
    }
    Ok(composition_sum(gens, j - 1, &slots, j, h0.nrows()))
}

#[derive(Debug, Clone)]
pub struct NeassExpansion {
    pub order: usize,
    pub generators: Vec<CMat>,
    pub epsilon: f64,
    /// None for the static construction.
    pub eta: Option<f64>,
    pub s: CMat,
    pub gap: f64,
    /// Largest Richardson disagreement met while differentiating generators.
    pub derivative_disagreement: f64,
}

impl NeassExpansion {
    fn assemble(order: usize, generators: Vec<CMat>, epsilon: f64, eta: Option<f64>, gap: f64, dis: f64) -> Result<Self> {
        let dim = generators.first().map_or(0, |g| g.nrows());
        let mut s = linalg::zeros(dim);
        for (mu, a) in generators.iter().enumerate() {
            let d = linalg::hermiticity_defect(a);
            if d > HERMITIAN_GEN_TOL * linalg::max_abs(a).max(1.0) {
                return Err(Error::Numerical(format!("generator A_{} not Hermitian (defect {d:.3e})", mu + 1)));
            }
            linalg::add_assign_scaled(&mut s, C64::new(epsilon.powi(mu as i32 + 1), 0.0), a);
        }
        Ok(NeassExpansion { order, generators, epsilon, eta, s, gap, derivative_disagreement: dis })
    }

    pub fn derivative_flagged(&self) -> bool {
        self.derivative_disagreement > RICHARDSON_FLAG
    }

    /// e^{iS}.
    pub fn unitary(&self) -> Result<CMat> {
        linalg::expm_herm(&self.s, -1.0)
    }

    /// Same generators at a different ε.
    pub fn at_epsilon(&self, eps: f64) -> Result<Self> {
        Self::assemble(self.order, self.generators.clone(), eps, self.eta, self.gap, self.derivative_disagreement)
    }
}

/// Cached spectral data of H0 for repeated NEASS constructions.
pub struct NeassBuilder {
    pub h0: CMat,
    pub v: CMat,
    pub spec: SpectralData,
    pub kernels: SpectralKernels,
    pub gap: f64,
}

impl NeassBuilder {
    pub fn new(h0: &CMat, v: &CMat, wf: &WeightFunction) -> Result<Self> {
        if !linalg::is_hermitian(h0, 1e-12) || !linalg::is_hermitian(v, 1e-12) {
            return invalid("H0 and V must be Hermitian");
        }
        if h0.nrows() != v.nrows() {
            return Err(Error::Dimension("H0 and V differ in size".into()));
        }
        let spec = SpectralData::new(h0)?;
        let kernels = SpectralKernels::new(&spec, wf);
        Ok(NeassBuilder { h0: h0.clone(), v: v.clone(), spec, kernels, gap: wf.g })
    }

    pub fn inverse(&self, a: &CMat) -> CMat {
        linalg::hermitian_part(&liouvillian::inverse_liouvillian_with(&self.spec, &self.kernels, a))
    }

    pub fn static_generators(&self, n: usize) -> Result<Vec<CMat>> {
        check_order(n)?;
        let mut gens = Vec::with_capacity(n);
        for j in 1..=n {
            let r = eps_coefficient(&gens, &self.h0, &self.v, j)?;
            gens.push(self.inverse(&r));
        }
        Ok(gens)
    }

    pub fn build_static(&self, n: usize, eps: f64) -> Result<NeassExpansion> {
        let gens = self.static_generators(n)?;
        NeassExpansion::assemble(n, gens, eps, None, self.gap, 0.0)
    }

    /// Generators A_1(t)..A_n(t) for V(t) = f(t) V with frame-change terms.
    fn td_generators(&self, f: &SwitchingFunction, n: usize, ratio: f64, t: f64, dis: &mut f64) -> Result<Vec<CMat>> {
        let dim = self.h0.nrows();
        if f.value(t) == 0.0 && f.value(t + 2.0 * RICHARDSON_STEP) == 0.0 {
            return Ok(vec![linalg::zeros(dim); n]);
        }
        let vt = linalg::scale_re(f.value(t), &self.v);
        let mut gens: Vec<CMat> = Vec::with_capacity(n);
        let mut dots: Vec<CMat> = Vec::new();
        for j in 1..=n {
            if j >= 2 {
                let mu = j - 1;
                let d = self.richardson(|s, dd| Ok(self.td_generators(f, mu, ratio, s, dd)?.pop().expect("mu >= 1")), t, dis)?;
                dots.push(d);
            }
            let r = eps_coefficient_td(&gens, &dots, &self.h0, &vt, ratio, j)?;
            gens.push(self.inverse(&r));
        }
        Ok(gens)
    }

    fn richardson(
        &self,
        g: impl Fn(f64, &mut f64) -> Result<CMat>,
        t: f64,
        dis: &mut f64,
    ) -> Result<CMat> {
        let h = RICHARDSON_STEP;
        let d1 = linalg::scale_re(1.0 / (2.0 * h), &(g(t + h, dis)? - g(t - h, dis)?));
        let d2 = linalg::scale_re(1.0 / h, &(g(t + 0.5 * h, dis)? - g(t - 0.5 * h, dis)?));
        let r = linalg::scale_re(4.0 / 3.0, &d2) - linalg::scale_re(1.0 / 3.0, &d1);
        let gap = linalg::max_abs(&(&r - &d2)) / linalg::max_abs(&r).max(1.0);
        *dis = dis.max(gap);
        Ok(r)
    }

    pub fn build_time_dependent(&self, f: &SwitchingFunction, n: usize, eps: f64, eta: f64, t: f64) -> Result<NeassExpansion> {
        check_order(n)?;
        if !(eps > 0.0) || !(eta > 0.0 && eta <= 1.0) {
            return invalid("time-dependent NEASS needs eps > 0 and eta in (0, 1]");
        }
        let mut dis = 0.0;
        let gens = self.td_generators(f, n, eta / eps, t, &mut dis)?;
        NeassExpansion::assemble(n, gens, eps, Some(eta), self.gap, dis)
    }
}

fn check_order(n: usize) -> Result<()> {
    if n == 0 || n > MAX_ORDER {
        return invalid(format!("NEASS order must lie in 1..={MAX_ORDER}, got {n}"));
    }
    Ok(())
}

pub fn build_static_neass(h0: &CMat, v: &CMat, wf: &WeightFunction, n: usize, eps: f64) -> Result<NeassExpansion> {
    NeassBuilder::new(h0, v, wf)?.build_static(n, eps)
}

#[allow(clippy::too_many_arguments)]
pub fn build_time_dependent_neass(
    h0: &CMat,
    v: &CMat,
    f: &SwitchingFunction,
    wf: &WeightFunction,
    n: usize,
    eps: f64,
    eta: f64,
    t: f64,
) -> Result<NeassExpansion> {
    NeassBuilder::new(h0, v, wf)?.build_time_dependent(f, n, eps, eta, t)
}

/// Π = e^{iS} ρ0 e^{-iS}.
pub fn neass_state(exp: &NeassExpansion, rho0: &GlobalState) -> Result<GlobalState> {
    if exp.s.nrows() != rho0.dim() {
        return Err(Error::Dimension("NEASS and state differ in size".into()));
    }
    let u = exp.unitary()?;
    let rho = &u * &rho0.rho * u.adjoint();
    Ok(GlobalState { rho: linalg::hermitian_part(&rho) })
}

fn real_expectation(z: C64, scale: f64, what: &str) -> Result<f64> {
    if z.im.abs() > 1e-10 * scale.max(1.0) {
        return Err(Error::Numerical(format!("{what} has imaginary part {:.3e}", z.im)));
    }
    Ok(z.re)
}

/// σ_{B,1} = -i tr(ρ0 [I[V], B]).
pub fn kubo_sigma1(spec: &SpectralData, kernels: &SpectralKernels, v: &CMat, rho0: &GlobalState, b: &CMat) -> Result<f64> {
    let iv = liouvillian::inverse_liouvillian_with(spec, kernels, v);
    let z = -linalg::I * linalg::trace_prod(&rho0.rho, &linalg::comm(&iv, b));
    real_expectation(z, linalg::max_abs(v) * linalg::max_abs(b), "Kubo coefficient")
}

/// σ_{B,0..m}: ε^j coefficients of tr(Π B) = Σ_k 1/k! tr(ρ0 (ad_{-iS})^k [B]).
pub fn response_expansion(exp: &NeassExpansion, rho0: &GlobalState, b: &CMat, m: usize) -> Result<Vec<f64>> {
    if m > exp.order {
        return invalid(format!("requested order {m} above expansion order {}", exp.order));
    }
    let slot = [Slot { weight: 0, factor: 1.0, kind: SlotKind::Conjugated, op: b }];
    (0..=m)
        .map(|j| {
            let x = composition_sum(&exp.generators, exp.order, &slot, j, b.nrows());
            real_expectation(linalg::trace_prod(&rho0.rho, &x), linalg::max_abs(b), "response coefficient")
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EtaRule {
    /// η = ε^exponent.
    Power { exponent: f64 },
    Fixed { eta: f64 },
}

impl Default for EtaRule {
    fn default() -> Self {
        EtaRule::Power { exponent: 0.5 }
    }
}

impl EtaRule {
    pub fn eta(&self, eps: f64) -> Result<f64> {
        let e = match *self {
            EtaRule::Power { exponent } => eps.powf(exponent),
            EtaRule::Fixed { eta } => eta,
        };
        if !(e > 0.0 && e <= 1.0) {
            return invalid(format!("eta rule gives {e} outside (0, 1] at eps = {eps}"));
        }
        Ok(e)
    }
}

/// Model data for response experiments.
pub struct ResponseProblem<'a> {
    pub builder: &'a NeassBuilder,
    pub rho0: &'a GlobalState,
    pub b: &'a CMat,
    pub order: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResponseRow {
    pub eps: f64,
    pub eta: f64,
    pub t: f64,
    pub sigma_measured: f64,
    /// Σ_{j≤k} ε^j σ_{B,j} for k = 1..n.
    pub partial_sums: Vec<f64>,
    pub residual: f64,
    pub steps: usize,
}

impl ResponseRow {
    /// measured − Σ_{j≤k} ε^j σ_{B,j}; k = 0 gives the measured value.
    pub fn residual_after(&self, k: usize) -> f64 {
        if k == 0 {
            self.sigma_measured
        } else {
            self.sigma_measured - self.partial_sums[k - 1]
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResponseTable {
    pub order: usize,
    pub rows: Vec<ResponseRow>,
    /// log-log slope of |residual after order k| against ε, k = 0..n.
    pub slopes: Vec<Option<f64>>,
}

impl ResponseTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut head = vec!["eps".to_string(), "eta".into(), "t".into(), "sigma_measured".into()];
        head.extend((1..=self.order).map(|k| format!("partial_sum_order_{k}")));
        head.push(format!("residual_order_{}", self.order));
        w.write_record(&head)?;
        for r in &self.rows {
            let mut rec = vec![fmt(r.eps), fmt(r.eta), fmt(r.t), fmt(r.sigma_measured)];
            rec.extend(r.partial_sums.iter().map(|v| fmt(*v)));
            rec.push(fmt(r.residual));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn fmt(x: f64) -> String {
    format!("{x:.17e}")
}

fn partial_sums(sigma: &[f64], eps: f64) -> Vec<f64> {
    let mut acc = 0.0;
    sigma[1..]
        .iter()
        .enumerate()
        .map(|(j, s)| {
            acc += eps.powi(j as i32 + 1) * s;
            acc
        })
        .collect()
}

/// Runs the switched dynamics from t = -1 for each ε and compares
/// Σ_B(t_eval) = ⟨B⟩_{ρ(t_eval)} − ⟨B⟩_{ρ0} with the NEASS partial sums.
pub fn response_sweep(
    prob: &ResponseProblem,
    f: &SwitchingFunction,
    eps_grid: &[f64],
    eta_rule: &EtaRule,
    t_eval: f64,
    opts: &SolverOptions,
) -> Result<ResponseTable> {
    let n = prob.order;
    check_order(n)?;
    let base = real_expectation(prob.rho0.expect(prob.b), 1.0, "equilibrium expectation")?;
    let static_sigma = if t_eval >= 0.0 {
        let exp = prob.builder.build_static(n, 1.0)?;
        Some(response_expansion(&exp, prob.rho0, prob.b, n)?)
    } else {
        None
    };
    let rows: Vec<Result<ResponseRow>> = eps_grid
        .par_iter()
        .map(|&eps| {
            if !(0.0..1.0).contains(&eps) {
                return invalid(format!("eps must lie in [0, 1), got {eps}"));
            }
            let eta = eta_rule.eta(eps.max(f64::MIN_POSITIVE))?;
            let sigma = match &static_sigma {
                Some(s) => s.clone(),
                None if eps == 0.0 => vec![0.0; n + 1],
                None => {
                    let exp = prob.builder.build_time_dependent(f, n, eps, eta, t_eval)?;
                    response_expansion(&exp, prob.rho0, prob.b, n)?
                }
            };
            let (measured, steps) = if eps == 0.0 {
                (0.0, 0)
            } else {
                let tr = dynamics::adiabatic_solve(
                    &prob.builder.h0,
                    &prob.builder.v,
                    f,
                    eps,
                    eta,
                    prob.rho0,
                    -1.0,
                    &[t_eval],
                    opts,
                )?;
                let v = real_expectation(tr.states[0].expect(prob.b), 1.0, "measured expectation")?;
                (v - base, tr.steps_taken)
            };
            let ps = partial_sums(&sigma, eps);
            let residual = measured - ps[n - 1];
            Ok(ResponseRow { eps, eta, t: t_eval, sigma_measured: measured, partial_sums: ps, residual, steps })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let slopes = (0..=n)
        .map(|k| {
            let x: Vec<f64> = rows.iter().map(|r| r.eps).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.residual_after(k)).collect();
            fit::loglog_slope(&x, &y).ok().map(|f| f.slope())
        })
        .collect();
    Ok(ResponseTable { order: n, rows, slopes })
}

#[derive(Debug, Clone, Serialize)]
pub struct StationarityRow {
    pub eps: f64,
    pub t: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StationarityTable {
    pub order: usize,
    pub rows: Vec<StationarityRow>,
    /// log-log slope of max_t deviation against ε.
    pub slope: Option<f64>,
}

impl StationarityTable {
    pub fn max_deviation(&self, eps: f64) -> f64 {
        self.rows.iter().filter(|r| r.eps == eps).map(|r| r.deviation).fold(0.0, f64::max)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["eps", "t", "deviation"])?;
        for r in &self.rows {
            w.write_record([fmt(r.eps), fmt(r.t), fmt(r.deviation)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// |⟨B⟩_{ρ(t)} − ⟨B⟩_Π| with i dρ/dt = [H0 + εV, ρ], ρ(0) = Π.
pub fn neass_stationarity(
    h0: &CMat,
    v: &CMat,
    exp: &NeassExpansion,
    rho0: &GlobalState,
    b: &CMat,
    times: &[f64],
) -> Result<Vec<StationarityRow>> {
    let pi = neass_state(exp, rho0)?;
    let h = h0 + linalg::scale_re(exp.epsilon, v);
    let spec = SpectralData::new(&h)?;
    let b_pi = pi.expect(b);
    times
        .iter()
        .map(|&t| {
            let deviation = if t == 0.0 {
                0.0
            } else {
                let rho = dynamics::evolve_state(&spec, &pi.rho, t, 1.0);
                (linalg::trace_prod(&rho, b) - b_pi).norm()
            };
            Ok(StationarityRow { eps: exp.epsilon, t, deviation })
        })
        .collect()
}

pub fn stationarity_sweep(
    builder: &NeassBuilder,
    rho0: &GlobalState,
    b: &CMat,
    n: usize,
    eps_grid: &[f64],
    times: &[f64],
) -> Result<StationarityTable> {
    let gens = builder.build_static(n, 1.0)?;
    let rows: Vec<Result<Vec<StationarityRow>>> = eps_grid
        .par_iter()
        .map(|&eps| {
            let exp = gens.at_epsilon(eps)?;
            neass_stationarity(&builder.h0, &builder.v, &exp, rho0, b, times)
        })
        .collect();
    let mut all = Vec::new();
    for r in rows {
        all.extend(r?);
    }
    let tab = StationarityTable { order: n, rows: all, slope: None };
    let maxes: Vec<f64> = eps_grid.iter().map(|&e| tab.max_deviation(e)).collect();
    let slope = fit::loglog_slope(eps_grid, &maxes).ok().map(|f| f.slope());
    Ok(StationarityTable { slope, ..tab })
}

/// ‖A − E_{fatten(Ω, k)}(A)‖ for k = 0..=max_k.
pub fn generator_localization(lat: &Lattice, a: &CMat, omega: &SiteSet, max_k: u32) -> Result<Vec<(u32, f64)>> {
    (0..=max_k)
        .map(|k| {
            let region = lat.fatten(omega, k);
            let ce = operators::conditional_expectation_full(lat, a, &region);
            let ext = operators::embed(&ce, lat)?;
            Ok((k, linalg::op_norm(&(a - &ext))))
        })
        .collect()
}
