//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//! Criterion numbers given as arguments restrict the run to those.

use std::process::ExitCode;
use std::time::Instant;

use faer::Mat;
use gaplab::dynamics::{self, SolverOptions};
use gaplab::gaps::{self, GapContext};
use gaplab::interactions::{commutator_interaction, DecayProfile, Interaction};
use gaplab::lattice::{Lattice, SiteSet};
use gaplab::liouvillian::{self, SpectralData, IDENTITY_SIGN};
use gaplab::linalg::{self, CMat};
use gaplab::models::{self, BlockFields, LocalizationMode, PerturbationKind};
use gaplab::neass::{self, EtaRule, NeassBuilder, ResponseProblem, ResponseTable};
use gaplab::operators::{self, GlobalState, LocalOperator};
use gaplab::runner::{medians_decay, unique_ground_state};
use gaplab::switching::SwitchingFunction;
use gaplab::weight::WeightFunction;
use gaplab::Result;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS_GRID: [f64; 6] = [0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625, 0.001953125];

const KUBO_MIN_SLOPE: f64 = 1.85;
const SECOND_ORDER_MIN_SLOPE: f64 = 2.7;
const STATIONARITY_MIN_SLOPE: f64 = 1.85;
const SINGLE_SPIN_TOL: f64 = 1e-8;
const KUBO_BUDGET_S: f64 = 300.0;
const SECOND_ORDER_BUDGET_S: f64 = 900.0;

const GDG_TRIALS: usize = 200;
const GDG_TOL: f64 = 1e-5;
const GDG_TARGET_FRACTION: f64 = 1e-2;
const GDG_BUDGET_S: f64 = 60.0;

const MASS_TOL: f64 = 1e-6;
const W_HAT_TAIL: f64 = 1e-6;

const IDENTITY_TOL: f64 = 1e-8;
const EXACT_TOL: f64 = 1e-10;
const EQUIVALENCE_TOL: f64 = 1e-8;

const LDG_MIN_DROP: f64 = 10.0;
const LDG_BUDGET_S: f64 = 600.0;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { passed, detail: detail.into() })
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    Mat::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    let m = random_matrix(rng, n);
    linalg::eigh(&linalg::hermitian_part(&m)).expect("eigh").1
}

/// Hermitian matrix with the given spectrum in a random eigenbasis.
fn with_spectrum(rng: &mut ChaCha8Rng, e: &[f64]) -> CMat {
    let u = random_unitary(rng, e.len());
    let d: Vec<C64> = e.iter().map(|&x| C64::new(x, 0.0)).collect();
    linalg::hermitian_part(&linalg::reconstruct(&u, &d))
}

/// Levels 0 ≤ e_0 < ... < e_{k-1} ≤ spread, then the rest at least `gap`
/// above e_{k-1}; the upper levels are spaced freely.
fn gapped_levels(rng: &mut ChaCha8Rng, n: usize, k: usize, gap: f64, spread: f64) -> Vec<f64> {
    let mut low: Vec<f64> = (0..k).map(|i| if i == 0 { 0.0 } else { rng.gen_range(0.0..spread) }).collect();
    low.sort_by(f64::total_cmp);
    let top = *low.last().unwrap();
    let mut high: Vec<f64> = (k..n).map(|_| top + gap + rng.gen_range(0.0..3.0)).collect();
    high.sort_by(f64::total_cmp);
    low.extend(high);
    low
}

fn ising_response_setup() -> Result<(CMat, CMat, CMat, GlobalState)> {
    let lat = Lattice::chain(8, 2)?;
    let h0 = models::ising_model(&lat, &[-0.25], false)?.phi.assemble(&lat)?;
    let v = models::full(&lat, &operators::pauli(3, 1, &lat)?)?
        + models::full(&lat, &operators::pauli(4, 1, &lat)?)?
        + models::full(&lat, &operators::pauli_string(&lat, &[3, 4], &[1, 1])?)?;
    let b = models::full(&lat, &operators::pauli(4, 1, &lat)?)?;
    let rho0 = unique_ground_state(&h0)?;
    Ok((h0, v, b, rho0))
}

/// Order-2 sweep shared by the first two criteria.
fn response_table(wf: &WeightFunction) -> Result<(ResponseTable, f64)> {
    let t0 = Instant::now();
    let (h0, v, b, rho0) = ising_response_setup()?;
    let builder = NeassBuilder::new(&h0, &v, wf)?;
    let prob = ResponseProblem { builder: &builder, rho0: &rho0, b: &b, order: 2 };
    let tab = neass::response_sweep(
        &prob,
        &SwitchingFunction::mollified(),
        &EPS_GRID,
        &EtaRule::Power { exponent: 0.5 },
        0.0,
        &SolverOptions::default(),
    )?;
    Ok((tab, t0.elapsed().as_secs_f64()))
}

/// σ_{B,1} of H0 = σ³, V = σ¹, B = σ¹ against d⟨B⟩/dε of the exact 2×2
/// ground state.
fn single_spin(wf: &WeightFunction) -> Result<(f64, f64)> {
    let z = operators::pauli_matrix(3)?;
    let x = operators::pauli_matrix(1)?;
    let spec = SpectralData::new(&z)?;
    let ker = liouvillian::SpectralKernels::new(&spec, wf);
    let rho0 = unique_ground_state(&z)?;
    let kubo = neass::kubo_sigma1(&spec, &ker, &x, &rho0, &x)?;
    let h = 1e-5;
    let gs = |e: f64| -> Result<f64> {
        let st = unique_ground_state(&(&z + linalg::scale_re(e, &x)))?;
        Ok(st.expect(&x).re)
    };
    let oracle = (gs(h)? - gs(-h)?) / (2.0 * h);
    Ok((kubo, oracle))
}

fn criterion_1(tab: &ResponseTable, secs: f64, wf: &WeightFunction) -> Result<Outcome> {
    let t0 = Instant::now();
    let slope = tab.slopes[1].unwrap_or(f64::NAN);
    let (kubo, oracle) = single_spin(wf)?;
    let spin_ok = (kubo + 1.0).abs() <= SINGLE_SPIN_TOL && (kubo - oracle).abs() <= SINGLE_SPIN_TOL;
    let total = secs + t0.elapsed().as_secs_f64();
    outcome(
        slope >= KUBO_MIN_SLOPE && spin_ok && total < KUBO_BUDGET_S,
        format!(
            "first-order slope {slope:.3} (need >= {KUBO_MIN_SLOPE}); single spin sigma1 {kubo:.12} vs oracle {oracle:.12} (tol {SINGLE_SPIN_TOL:e}); {total:.1}s (< {KUBO_BUDGET_S}s)"
        ),
    )
}

fn criterion_2(tab: &ResponseTable, secs: f64) -> Result<Outcome> {
    let slope = tab.slopes[2].unwrap_or(f64::NAN);
    let res: Vec<String> = tab.rows.iter().map(|r| format!("{:.2e}", r.residual)).collect();
    outcome(
        slope >= SECOND_ORDER_MIN_SLOPE && secs < SECOND_ORDER_BUDGET_S,
        format!(
            "second-order slope {slope:.3} (need >= {SECOND_ORDER_MIN_SLOPE}); residuals [{}]; {secs:.1}s (< {SECOND_ORDER_BUDGET_S}s)",
            res.join(", ")
        ),
    )
}

fn criterion_3(wf: &WeightFunction) -> Result<Outcome> {
    let (h0, v, b, rho0) = ising_response_setup()?;
    let builder = NeassBuilder::new(&h0, &v, wf)?;
    let times: Vec<f64> = (0..=10).map(|k| 0.5 * k as f64).collect();
    let tab = neass::stationarity_sweep(&builder, &rho0, &b, 1, &EPS_GRID, &times)?;
    let slope = tab.slope.unwrap_or(f64::NAN);
    let maxes: Vec<String> = EPS_GRID.iter().map(|&e| format!("{:.2e}", tab.max_deviation(e))).collect();
    outcome(
        slope >= STATIONARITY_MIN_SLOPE,
        format!("max-deviation slope {slope:.3} over t in [0, 5] (need >= {STATIONARITY_MIN_SLOPE}); [{}]", maxes.join(", ")),
    )
}

fn criterion_4() -> Result<Outcome> {
    let t0 = Instant::now();
    let g = 1.0;
    let wf = WeightFunction::new(g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst, mut gapped_ok, mut violating_ok, mut min_ratio) = (0.0f64, true, true, f64::INFINITY);
    for &n in &[2usize, 3, 4, 8, 16] {
        let k = rng.gen_range(1..n);
        let e = gapped_levels(&mut rng, n, k, g + 0.05, 0.4);
        let h = with_spectrum(&mut rng, &e);
        let patch: Vec<usize> = (0..k).collect();
        let rep = liouvillian::gdg_check(&h, &patch, &wf, GDG_TRIALS, GDG_TOL, &mut rng)?;
        gapped_ok &= rep.delta >= g && rep.holds;
        worst = worst.max(rep.worst_witness);

        let delta = rng.gen_range(0.2..0.8) * g;
        let mut e = gapped_levels(&mut rng, n, k, g + 0.05, 0.4);
        let shift = e[k] - e[k - 1] - delta;
        for x in &mut e[k..] {
            *x -= shift;
        }
        let h = with_spectrum(&mut rng, &e);
        let rep = liouvillian::gdg_check(&h, &patch, &wf, 1, GDG_TOL, &mut rng)?;
        let ratio = rep.targeted_witness / rep.w_hat_delta;
        min_ratio = min_ratio.min(ratio);
        violating_ok &= rep.delta < g && rep.targeted_witness >= GDG_TARGET_FRACTION * rep.w_hat_delta;
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        gapped_ok && violating_ok && secs < GDG_BUDGET_S,
        format!(
            "gapped worst witness {worst:.2e} (<= {GDG_TOL:e}, {GDG_TRIALS} pairs each); violating min targeted/w_hat(delta) {min_ratio:.3} (>= {GDG_TARGET_FRACTION:e}); {secs:.1}s (< {GDG_BUDGET_S}s)"
        ),
    )
}

fn criterion_5() -> Result<Outcome> {
    let g = 1.0;
    let wf = WeightFunction::new(g)?;
    let sqrt_2pi = (2.0 * std::f64::consts::PI).sqrt();
    let mass_err = (wf.mass() - 1.0).abs();

    let tail = (0..=400)
        .map(|k| 1.05 * g + 3.0 * g * k as f64 / 400.0)
        .flat_map(|w| [w, -w])
        .map(|w| (wf.fourier_mass_quadrature(w) / sqrt_2pi).abs())
        .fold(0.0, f64::max);

    // Positivity: quadrature where ŵ is resolvable, the log-density path
    // where it sits below double precision.
    let mut positive = true;
    let mut min_log = f64::INFINITY;
    for k in 1..400 {
        let w = -0.95 * g + 1.9 * g * k as f64 / 400.0;
        let direct = wf.w_hat(w);
        let lw = wf.log_w_hat(w);
        min_log = min_log.min(lw);
        positive &= lw.is_finite() && (direct > 0.0 || direct.abs() < 1e-12);
    }

    let mut even_err = 0.0f64;
    for k in 0..=2000 {
        let t = wf.t_max * k as f64 / 2000.0;
        let (a, b) = (wf.w(t), wf.w(-t));
        even_err = even_err.max((a - b).abs() / a.abs().max(f64::MIN_POSITIVE));
    }

    // C is the sup of |w| e^{|t|^q} over the grid; the held-out ratio shows
    // how far the decay still is from its asymptotic regime.
    let (c, worst) = wf.envelope(wf.t_max, wf.t_max);
    let (_, held_out) = wf.envelope(0.5 * wf.t_max, wf.t_max);
    let ok = mass_err <= MASS_TOL && tail <= W_HAT_TAIL && positive && even_err <= 4.0 * f64::EPSILON && c.is_finite() && worst <= 1.0;
    outcome(
        ok,
        format!(
            "|mass-1| {mass_err:.1e}; max w_hat beyond 1.05g {tail:.1e} (<= {W_HAT_TAIL:e}); positive on (-0.95g, 0.95g) {positive} (min log w_hat {min_log:.1}); evenness {even_err:.1e}; q=0.9 envelope C {c:.3e} over [0, t_max], worst ratio {worst:.3} (fit on [0, t_max/2] only: {held_out:.1e})"
        ),
    )
}

fn calibrate_sign(wf: &WeightFunction) -> Result<f64> {
    let h = linalg::diag_real(&[0.0, 0.3 * wf.g]);
    let mut a = linalg::zeros(2);
    a[(0, 1)] = linalg::ONE;
    let spec = SpectralData::new(&h)?;
    let d = liouvillian::liouvillian_apply(&h, &liouvillian::inverse_liouvillian(&spec, wf, &a))? - &a;
    let j = liouvillian::j_map(&spec, wf, &a);
    Ok(linalg::trace_prod(&linalg::adjoint(&j), &d).re.signum())
}

fn criterion_6() -> Result<Outcome> {
    let g = 1.0;
    let wf = WeightFunction::new(g)?;
    let s = calibrate_sign(&wf)?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut j_size = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(2..=16);
        // ground gap ≥ g; the excited levels keep sub-g spacings so J is not trivial
        let e = gapped_levels(&mut rng, n, 1, g, 0.0);
        let h = with_spectrum(&mut rng, &e);
        let spec = SpectralData::new(&h)?;
        let a = random_matrix(&mut rng, n);
        let lhs = liouvillian::liouvillian_apply(&h, &liouvillian::inverse_liouvillian(&spec, &wf, &a))? - &a;
        let j = liouvillian::j_map(&spec, &wf, &a);
        worst = worst.max(linalg::max_abs(&(lhs - linalg::scale_re(s, &j))) / linalg::op_norm(&a));
        j_size = j_size.max(linalg::op_norm(&j));
    }
    outcome(
        s == IDENTITY_SIGN && worst <= IDENTITY_TOL,
        format!("calibrated s = {s} (built-in {IDENTITY_SIGN}); max error {worst:.1e} over 100 instances (<= {IDENTITY_TOL:e}); max |J[A]| {j_size:.2}"),
    )
}

fn random_local(rng: &mut ChaCha8Rng, lat: &Lattice, support: SiteSet) -> Result<LocalOperator> {
    let d = lat.dim_of(&support);
    let m = linalg::hermitian_part(&random_matrix(rng, d));
    let m = linalg::scale_re(rng.gen_range(0.1..2.0) / linalg::op_norm(&m), &m);
    LocalOperator::hermitian(lat, support, m)
}

fn random_subset(rng: &mut ChaCha8Rng, from: &[usize], max_len: usize) -> SiteSet {
    let len = rng.gen_range(1..=max_len.min(from.len()));
    let mut pool = from.to_vec();
    let mut out = Vec::new();
    for _ in 0..len {
        out.push(pool.swap_remove(rng.gen_range(0..pool.len())));
    }
    SiteSet::new(out)
}

fn criterion_7() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let lat = Lattice::chain(7, 2)?;
    let all: Vec<usize> = (0..7).collect();
    let (mut strict_ok, mut strong_ok) = (true, true);
    let (mut strict_margin, mut strong_margin) = (f64::INFINITY, f64::INFINITY);
    for i in 0..50 {
        let omega = random_subset(&mut rng, &all, 4);
        let prof = DecayProfile::new(rng.gen_range(0.2..2.0), rng.gen_range(0.3..=1.0))?;
        let mut phi = Interaction::new();
        let strict = i % 2 == 0;
        for _ in 0..rng.gen_range(1..8) {
            let z = if strict {
                random_subset(&mut rng, omega.sites(), 3)
            } else {
                // a site of Ω plus arbitrary sites of the lattice
                let anchor = omega.sites()[rng.gen_range(0..omega.len())];
                random_subset(&mut rng, &all, 3).union(&SiteSet::single(anchor))
            };
            phi.add_term(&lat, random_local(&mut rng, &lat, z)?)?;
        }
        let full = phi.interaction_norm(&lat, &prof);
        if strict {
            let loc = phi.localized_norm(&lat, &prof, &omega);
            strict_ok &= phi.is_strictly_localized(&omega) && loc <= full;
            strict_margin = strict_margin.min(full - loc);
        } else {
            let loc = phi.localized_norm(&lat, &prof.with_b(0.5 * prof.b), &omega);
            // the two half-rate factors round independently of the full-rate one
            strong_ok &= phi.is_strongly_localized(&omega) && loc <= full * (1.0 + 4.0 * f64::EPSILON);
            strong_margin = strong_margin.min(full - loc);
        }
    }

    let lat4 = Lattice::chain(4, 2)?;
    let all4: Vec<usize> = (0..4).collect();
    let mut comm_err = 0.0f64;
    for _ in 0..20 {
        let mut a = Interaction::new();
        let mut b = Interaction::new();
        for _ in 0..rng.gen_range(1..6) {
            let z = random_subset(&mut rng, &all4, 3);
            a.add_term(&lat4, random_local(&mut rng, &lat4, z)?)?;
            let z = random_subset(&mut rng, &all4, 3);
            b.add_term(&lat4, random_local(&mut rng, &lat4, z)?)?;
        }
        let c = commutator_interaction(&lat4, &a, &b)?.assemble(&lat4)?;
        let want = linalg::comm(&a.assemble(&lat4)?, &b.assemble(&lat4)?);
        comm_err = comm_err.max(linalg::max_abs(&(c - want)));
    }
    outcome(
        strict_ok && strong_ok && comm_err <= EXACT_TOL,
        format!(
            "strict (i) {strict_ok} (min slack {strict_margin:.2e}); strong (ii) {strong_ok} (min slack {strong_margin:.2e}); commutator assembly error {comm_err:.1e} (<= {EXACT_TOL:e})"
        ),
    )
}

/// Non-identity Pauli strings on `sites`.
fn pauli_strings(lat: &Lattice, sites: &[usize]) -> Result<Vec<CMat>> {
    let n = sites.len();
    let mut out = Vec::new();
    for code in 1..4usize.pow(n as u32) {
        let (mut s, mut ax) = (Vec::new(), Vec::new());
        let mut c = code;
        for &x in sites {
            if c % 4 != 0 {
                s.push(x);
                ax.push((c % 4) as u8);
            }
            c /= 4;
        }
        out.push(operators::embed(&operators::pauli_string(lat, &s, &ax)?, lat)?);
    }
    Ok(out)
}

fn criterion_8() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let lat = Lattice::chain(4, 2)?;
    let all: Vec<usize> = (0..4).collect();
    let dim = lat.hilbert_dim();
    let (mut ea, mut eb, mut ec, mut ed) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut e_ok, mut e_slack) = (true, f64::INFINITY);
    let ce = |m: &CMat, x: &SiteSet| -> Result<CMat> { operators::embed(&operators::conditional_expectation_full(&lat, m, x), &lat) };
    for _ in 0..100 {
        let x = random_subset(&mut rng, &all, 3);
        let y = random_subset(&mut rng, &all, 4);
        let outside: Vec<usize> = all.iter().copied().filter(|s| !x.contains(*s)).collect();
        let b = random_matrix(&mut rng, dim);

        // (a) range in A_X: commutes with everything off X
        let eb_x = ce(&b, &x)?;
        for p in pauli_strings(&lat, &outside)? {
            ea = ea.max(linalg::max_abs(&linalg::comm(&eb_x, &p)));
        }
        // (b) bimodule property
        let ax = operators::embed(&LocalOperator::new(&lat, x.clone(), random_matrix(&mut rng, lat.dim_of(&x)))?, &lat)?;
        let cx = operators::embed(&LocalOperator::new(&lat, x.clone(), random_matrix(&mut rng, lat.dim_of(&x)))?, &lat)?;
        let lhs = ce(&(&ax * &b * &cx), &x)?;
        eb = eb.max(linalg::max_abs(&(lhs - &ax * &eb_x * &cx)));
        eb = eb.max(linalg::max_abs(&(ce(&ax, &x)? - &ax)));
        // (c) unital, contractive, positive
        ec = ec.max(linalg::max_abs(&(ce(&linalg::identity(dim), &x)? - linalg::identity(dim))));
        ec = ec.max(linalg::op_norm(&eb_x) - linalg::op_norm(&b));
        let pos = linalg::eigvalsh(&ce(&(linalg::adjoint(&b) * &b), &x)?)?;
        ec = ec.max(-pos[0]);
        // (d) tower property
        let xy = ce(&ce(&b, &y)?, &x)?;
        ed = ed.max(linalg::max_abs(&(xy - ce(&b, &x.intersection(&y))?)));
        // (e) near-commuting observables are near A_X
        let delta = rng.gen_range(0.0..0.3);
        let a = &ax + linalg::scale_re(delta, &b);
        let na = linalg::op_norm(&a);
        let eta = pauli_strings(&lat, &outside)?.iter().map(|p| linalg::op_norm(&linalg::comm(&a, p)) / na).fold(0.0, f64::max);
        let lhs = linalg::op_norm(&(&a - ce(&a, &x)?));
        e_ok &= lhs <= eta * na * (1.0 + EXACT_TOL) + EXACT_TOL;
        e_slack = e_slack.min(eta * na - lhs);
    }
    let ok = ea <= EXACT_TOL && eb <= EXACT_TOL && ec <= EXACT_TOL && ed <= EXACT_TOL && e_ok;
    outcome(
        ok,
        format!("(a) {ea:.1e} (b) {eb:.1e} (c) {ec:.1e} (d) {ed:.1e} (<= {EXACT_TOL:e}); (e) holds {e_ok} (min slack {e_slack:.2e}) over 100 trials"),
    )
}

fn criterion_9() -> Result<Outcome> {
    let t0 = Instant::now();
    let lat = Lattice::chain(10, 2)?;
    let phi = models::ising_model(&lat, &[-0.05, -0.45], false)?.phi;
    let pert = models::block_perturbation(&lat, &SiteSet::new(vec![0, 1]), BlockFields { hz: -2.0, hx: 0.3, hxx: 0.15 })?;
    let h = phi.merged(&lat, &pert)?.assemble(&lat)?;
    let rho = unique_ground_state(&h)?;
    let wf = WeightFunction::new(3.0)?;
    let ctx = GapContext::new(&h, &rho, &wf)?;
    let fam = gaps::pauli_family(&lat, &lat.all_sites(), false)?;
    let res = gaps::ldg_scan(&ctx, &lat, &SiteSet::range(3, 10), &fam, 1.0)?;
    let med = res.medians();
    let secs = t0.elapsed().as_secs_f64();
    let shown: Vec<String> = med.iter().map(|(d, m)| format!("{d}:{m:.2e}")).collect();
    outcome(
        medians_decay(&med, LDG_MIN_DROP) && secs < LDG_BUDGET_S,
        format!("medians by distance [{}]; monotone with drop >= {LDG_MIN_DROP}x; {secs:.1}s (< {LDG_BUDGET_S}s)", shown.join(", ")),
    )
}

fn criterion_10() -> Result<Outcome> {
    let lat = Lattice::chain(10, 2)?;
    let field = models::localized_perturbation(&lat, &lat.all_sites(), PerturbationKind::TransverseField, 0.5, LocalizationMode::Strict, 0)?;
    let phi = models::ising_model(&lat, &[-0.25], false)?.phi.merged(&lat, &field)?;
    let a = operators::pauli(0, 3, &lat)?;
    let probes: Vec<usize> = (1..10).collect();
    let times: Vec<f64> = (0..=12).map(|k| 0.25 * k as f64).collect();
    let rows = dynamics::lr_profile(&lat, &phi, &a, &probes, &times)?;
    let prof = DecayProfile::new(1.0, 1.0)?;
    let fit = dynamics::fit_lr_envelope(&rows, &prof, 1.0, 1e-12);

    let mut free = Interaction::new();
    for x in 0..10 {
        let m = operators::pauli_matrix(3)? + linalg::scale_re(0.5, &operators::pauli_matrix(1)?);
        free.add_term(&lat, LocalOperator::hermitian(&lat, SiteSet::single(x), m)?)?;
    }
    let control = dynamics::lr_profile(&lat, &free, &a, &probes, &times)?;
    let leak = control.iter().map(|r| r.value).fold(0.0, f64::max);
    outcome(
        fit.dominates && leak <= 1e-12,
        format!(
            "envelope C {:.3} v {:.3} dominates {} ({} rows, worst ratio {:.3}); non-interacting control max {leak:.1e}",
            fit.c,
            fit.v,
            fit.dominates,
            rows.len(),
            fit.worst_ratio
        ),
    )
}

/// B with ‖B‖ = 1 maximizing |tr([M, B])|-type pairings: V U† from M = U Σ V†.
fn polar_maximizer(m: &CMat) -> CMat {
    let svd = m.svd().expect("svd");
    svd.V() * svd.U().adjoint()
}

fn criterion_11() -> Result<Outcome> {
    let g = 1.0;
    let wf = WeightFunction::new(g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut sym, mut equiv, mut fast) = (0.0f64, 0.0f64, 0.0f64);
    let mut above = false;
    for i in 0..50 {
        let n = rng.gen_range(3..=16);
        let e: Vec<f64> = {
            let mut e: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
            e.sort_by(f64::total_cmp);
            e
        };
        let h = with_spectrum(&mut rng, &e);
        let spec = SpectralData::new(&h)?;
        let rho = if i % 2 == 0 {
            GlobalState::pure(&linalg::col_vec(&spec.eigenvectors, 0))
        } else {
            let p: Vec<f64> = (0..n).map(|k| (-(e[k] - e[0])).exp()).collect();
            let z: f64 = p.iter().sum();
            let d: Vec<C64> = p.iter().map(|x| C64::new(x / z, 0.0)).collect();
            GlobalState::new(linalg::hermitian_part(&linalg::reconstruct(&spec.eigenvectors, &d)))?
        };
        let ctx = GapContext::new(&h, &rho, &wf)?;
        let a = random_matrix(&mut rng, n);
        let b = random_matrix(&mut rng, n);
        sym = sym.max((ctx.ldg_witness(&a, &b) - ctx.ldg_witness(&b, &a)).abs());

        let j = liouvillian::j_map(&spec, &wf, &a);
        let target = ctx.j_commutator_trace_norm(&a);
        let bstar = polar_maximizer(&linalg::comm(&rho.rho, &j));
        let attained = ctx.ldg_witness(&a, &bstar);
        let sup = ctx.ldg_sup(&a);
        equiv = equiv.max((attained - target).abs());
        fast = fast.max((sup - target).abs());
        for _ in 0..5 {
            let r = random_matrix(&mut rng, n);
            let r = linalg::scale_re(1.0 / linalg::op_norm(&r), &r);
            above |= ctx.ldg_witness(&a, &r) > target * (1.0 + EQUIVALENCE_TOL) + EQUIVALENCE_TOL;
        }
    }
    outcome(
        sym <= EXACT_TOL && equiv <= EQUIVALENCE_TOL && fast <= EQUIVALENCE_TOL && !above,
        format!(
            "symmetry error {sym:.1e} (<= {EXACT_TOL:e}); witness at the maximizing B vs ||[J[A], rho]||_tr {equiv:.1e}, library supremum vs the same {fast:.1e} (<= {EQUIVALENCE_TOL:e}); random B exceeded sup {above}"
        ),
    )
}

fn report(n: usize, name: &str, r: Result<Outcome>, secs: f64) -> bool {
    let (ok, detail) = match r {
        Ok(o) => (o.passed, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    println!("criterion {n:>2} [{}] {name}: {detail} ({secs:.1}s)", if ok { "PASS" } else { "FAIL" });
    ok
}

fn main() -> ExitCode {
    let mut all = true;
    let timed = |f: &dyn Fn() -> Result<Outcome>| {
        let t0 = Instant::now();
        let r = f();
        (r, t0.elapsed().as_secs_f64())
    };

    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| only.is_empty() || only.contains(&n);

    let wf = match WeightFunction::new(1.5) {
        Ok(w) => w,
        Err(e) => {
            println!("weight function failed: {e}");
            return ExitCode::FAILURE;
        }
    };
    if wanted(1) || wanted(2) {
        match response_table(&wf) {
            Ok((tab, secs)) => {
                let (r, s) = timed(&|| criterion_1(&tab, secs, &wf));
                all &= report(1, "Kubo first order", r, s + secs);
                all &= report(2, "second-order response", criterion_2(&tab, secs), secs);
            }
            Err(e) => {
                all &= report(1, "Kubo first order", Err(gaplab::Error::Numerical(e.to_string())), 0.0);
                all &= report(2, "second-order response", Err(e), 0.0);
            }
        }
    }
    if wanted(3) {
        let (r, s) = timed(&|| criterion_3(&wf));
        all &= report(3, "NEASS almost-stationarity", r, s);
    }

    let rest: [(usize, &str, fn() -> Result<Outcome>); 8] = [
        (4, "dynamical gap characterization", criterion_4),
        (5, "weight function", criterion_5),
        (6, "defining identity", criterion_6),
        (7, "interaction-norm localization", criterion_7),
        (8, "conditional expectation", criterion_8),
        (9, "local dynamical gap decay", criterion_9),
        (10, "Lieb-Robinson envelope", criterion_10),
        (11, "symmetry and trace-norm equivalence", criterion_11),
    ];
    for (n, name, f) in rest.into_iter().filter(|(n, _, _)| wanted(*n)) {
        let (r, s) = timed(&f);
        all &= report(n, name, r, s);
    }

    if all {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: some criteria fail");
        ExitCode::FAILURE
    }
}
