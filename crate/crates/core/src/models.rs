//! Model builders: the field-dominated classical Ising model, the XXZ chain,
//! frustration-free diagnostics and localized perturbations.

use faer::Mat;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::interactions::Interaction;
use crate::lattice::{Dist, Lattice, SiteSet};
use crate::linalg::{self, CMat};
use crate::operators::{self, pauli, pauli_string, LocalOperator};

#[derive(Debug, Clone)]
pub struct IsingModel {
    pub phi: Interaction,
    /// λ(1), λ(2), ... (λ(-d) = λ(d)).
    pub coupling: Vec<f64>,
    /// ⊗|↓⟩.
    pub ground_state: Vec<C64>,
    /// 2 − 2 Σ_{x≠0} max(λ(x), 0): cost of the cheapest spin flip out of ⊗|↓⟩.
    pub flip_gap: f64,
    pub notices: Vec<String>,
}

impl IsingModel {
    /// ‖λ‖₁ = Σ_{x≠0} |λ(x)|.
    pub fn coupling_l1(&self) -> f64 {
        2.0 * self.coupling.iter().map(|v| v.abs()).sum::<f64>()
    }
}

fn all_down(lat: &Lattice) -> Vec<C64> {
    let d = lat.hilbert_dim();
    let mut v = vec![C64::new(0.0, 0.0); d];
    v[d - 1] = C64::new(1.0, 0.0);
    v
}

/// Σ_x σ³_x + ½ Σ_{x≠y} λ(d(x,y)) σ³_x σ³_y, one term per unordered pair.
pub fn ising_model(lat: &Lattice, coupling: &[f64], allow_strong: bool) -> Result<IsingModel> {
    if lat.site_dims().iter().any(|&d| d != 2) {
        return invalid("the Ising model needs qubit sites");
    }
    let mut notices = Vec::new();
    let mut lam = coupling.to_vec();
    let diam = lat.diameter() as usize;
    if lam.len() > diam {
        notices.push(format!("coupling range {} truncated to lattice diameter {diam}", lam.len()));
        lam.truncate(diam);
    }
    let l1 = 2.0 * lam.iter().map(|v| v.abs()).sum::<f64>();
    if l1 >= 2.0 {
        if !allow_strong {
            return invalid(format!("coupling norm {l1} must stay below 2"));
        }
        notices.push(format!("coupling norm {l1} >= 2 accepted by override"));
    }
    let mut phi = Interaction::new();
    for x in 0..lat.n_sites() {
        phi.add_term(lat, pauli(x, 3, lat)?)?;
    }
    for x in 0..lat.n_sites() {
        for y in x + 1..lat.n_sites() {
            if let Dist::Finite(d) = lat.dist(x, y) {
                let d = d as usize;
                if d >= 1 && d <= lam.len() && lam[d - 1] != 0.0 {
                    let zz = pauli_string(lat, &[x, y], &[3, 3])?;
                    phi.add_term(lat, zz.scaled(C64::new(lam[d - 1], 0.0)))?;
                }
            }
        }
    }
    let flip_gap = 2.0 - 4.0 * lam.iter().map(|v| v.max(0.0)).sum::<f64>();
    if flip_gap <= 0.0 {
        notices.push("antiferromagnetic couplings may destabilize the all-down ground state".into());
    }
    Ok(IsingModel { phi, coupling: lam, ground_state: all_down(lat), flip_gap, notices })
}

/// Σ σ³_x + Σ_edges (λ1 σ¹σ¹ + λ1 σ²σ² + λ3 σ³σ³).
pub fn xxz_model(lat: &Lattice, l1: f64, l3: f64) -> Result<Interaction> {
    let mut phi = Interaction::new();
    for x in 0..lat.n_sites() {
        phi.add_term(lat, pauli(x, 3, lat)?)?;
    }
    for &(x, y) in lat.edges() {
        let (a, b) = (x.min(y), x.max(y));
        for (axis, c) in [(1u8, l1), (2, l1), (3, l3)] {
            if c != 0.0 {
                let t = pauli_string(lat, &[a, b], &[axis, axis])?;
                phi.add_term(lat, t.scaled(C64::new(c, 0.0)))?;
            }
        }
    }
    Ok(phi)
}

/// Each term shifted by its lowest eigenvalue so that Φ(Z) ⪰ 0 with a kernel.
pub fn shift_to_nonnegative(lat: &Lattice, phi: &Interaction) -> Result<(Interaction, f64)> {
    let mut out = Interaction::new();
    let mut total = 0.0;
    for (z, t) in phi.terms() {
        let lo = linalg::eigvalsh(&t.matrix)?[0];
        total += lo;
        let d = t.matrix.nrows();
        let m = &t.matrix - linalg::scale_re(lo, &linalg::identity(d));
        out.add_term(lat, LocalOperator::new(lat, z.clone(), m)?)?;
    }
    Ok((out, total))
}

#[derive(Debug, Clone, Serialize)]
pub struct BallGap {
    pub center: usize,
    pub radius: u32,
    pub inverse_gap: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrustrationFreeReport {
    pub nonneg: bool,
    pub min_term_eigenvalue: f64,
    /// Per-site factors of a common kernel product vector, if found.
    pub shared_kernel_vector: Option<Vec<Vec<C64>>>,
    pub kernel_residual: f64,
    pub restriction_products: Vec<BallGap>,
    pub gap_condition_holds: bool,
}

fn product_vector(lat: &Lattice, factors: &[Vec<C64>], sites: &[usize]) -> Vec<C64> {
    let mut v = vec![C64::new(1.0, 0.0)];
    for &s in sites {
        let f = &factors[s];
        let mut nv = Vec::with_capacity(v.len() * f.len());
        for a in &v {
            for b in f {
                nv.push(a * b);
            }
        }
        v = nv;
    }
    debug_assert_eq!(v.len(), lat.dim_of(&SiteSet::new(sites.to_vec())));
    v
}

fn expectation_on(lat: &Lattice, t: &LocalOperator, factors: &[Vec<C64>]) -> f64 {
    let v = product_vector(lat, factors, t.support.sites());
    linalg::vdot(&v, &linalg::matvec(&t.matrix, &v)).re
}

/// Effective single-site matrix Σ_{Z∋x} ⟨ψ_{Z∖x}| Φ(Z) |ψ_{Z∖x}⟩.
fn effective_site(lat: &Lattice, phi: &Interaction, factors: &[Vec<C64>], x: usize) -> CMat {
    let dx = lat.site_dim(x);
    let mut m = linalg::zeros(dx);
    for (z, t) in phi.terms() {
        if !z.contains(x) {
            continue;
        }
        let sites = z.sites();
        let pos = sites.iter().position(|&s| s == x).expect("site in support");
        let dims: Vec<usize> = sites.iter().map(|&s| lat.site_dim(s)).collect();
        let dz = t.matrix.nrows();
        let index = |a: usize| -> (usize, usize) {
            // (digit at x, index among the other sites)
            let mut rem = a;
            let mut digits = vec![0; sites.len()];
            for k in (0..sites.len()).rev() {
                digits[k] = rem % dims[k];
                rem /= dims[k];
            }
            let mut rest = 0;
            for (k, &dg) in digits.iter().enumerate() {
                if k != pos {
                    rest = rest * dims[k] + dg;
                }
            }
            (digits[pos], rest)
        };
        let others: Vec<usize> = sites.iter().copied().filter(|&s| s != x).collect();
        let env = product_vector(lat, factors, &others);
        for a in 0..dz {
            let (ia, ra) = index(a);
            for b in 0..dz {
                let (ib, rb) = index(b);
                m[(ia, ib)] += env[ra].conj() * t.matrix[(a, b)] * env[rb];
            }
        }
    }
    m
}

/// Nonnegativity of every term, a common product kernel vector (found by
/// at most three sweeps of single-site minimization) and the polynomial
/// bound 1/γ(B_r(x)) ≤ c_gamma r^d_gamma for r ≥ 1.
pub fn frustration_free_checks(lat: &Lattice, phi: &Interaction, c_gamma: f64, d_gamma: f64) -> Result<FrustrationFreeReport> {
    let mut min_ev = f64::INFINITY;
    for (_, t) in phi.terms() {
        min_ev = min_ev.min(linalg::eigvalsh(&t.matrix)?[0]);
    }
    let nonneg = min_ev >= -1e-12;
    let n = lat.n_sites();
    let mut factors: Vec<Vec<C64>> = (0..n)
        .map(|x| {
            let d = lat.site_dim(x);
            let own = phi.term(&SiteSet::single(x));
            match own {
                Some(t) => {
                    let (_, u) = linalg::eigh(&t.matrix).expect("finite site term");
                    linalg::col_vec(&u, 0)
                }
                None => {
                    let mut v = vec![C64::new(0.0, 0.0); d];
                    v[0] = C64::new(1.0, 0.0);
                    v
                }
            }
        })
        .collect();
    let residual = |f: &[Vec<C64>]| phi.terms().map(|(_, t)| expectation_on(lat, t, f).abs()).sum::<f64>();
    let mut res = residual(&factors);
    for _ in 0..3 {
        if res <= 1e-12 {
            break;
        }
        for x in 0..n {
            let m = effective_site(lat, phi, &factors, x);
            let (_, u) = linalg::eigh(&linalg::hermitian_part(&m))?;
            factors[x] = linalg::col_vec(&u, 0);
        }
        res = residual(&factors);
    }
    let shared = if nonneg && res <= 1e-10 { Some(factors) } else { None };
    let mut balls = Vec::new();
    let mut holds = nonneg && shared.is_some();
    for x in 0..n {
        for r in 1..=lat.diameter() {
            let b = lat.ball(x, r);
            if b.len() > 12 {
                break;
            }
            let sub = restrict(lat, phi, &b)?;
            let ev = linalg::eigvalsh(&sub)?;
            let gap = ev.iter().map(|e| e - ev[0]).find(|&g| g > 1e-9).unwrap_or(f64::INFINITY);
            let ground_zero = ev[0].abs() <= 1e-9;
            let inverse_gap = 1.0 / gap;
            let bound = c_gamma * (r as f64).powf(d_gamma);
            holds &= ground_zero && inverse_gap <= bound;
            balls.push(BallGap { center: x, radius: r, inverse_gap, bound });
            if b.len() == n {
                break;
            }
        }
    }
    Ok(FrustrationFreeReport {
        nonneg,
        min_term_eigenvalue: min_ev,
        shared_kernel_vector: shared,
        kernel_residual: res,
        restriction_products: balls,
        gap_condition_holds: holds,
    })
}

/// Σ_{Z ⊆ Ω} Φ(Z) on the Hilbert space of Ω.
pub fn restrict(lat: &Lattice, phi: &Interaction, omega: &SiteSet) -> Result<CMat> {
    let d = lat.dim_of(omega);
    let mut h = linalg::zeros(d);
    for (z, t) in phi.terms() {
        if z.is_subset(omega) {
            h += t.extend_to(lat, omega)?.matrix;
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalizationMode {
    Strict,
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    /// Seeded random Hermitian terms on sites and edges.
    Random,
    /// σ¹ on every site of Ω.
    TransverseField,
    /// σ¹σ¹ + σ²σ² hopping on edges.
    Hopping,
}

/// Terms on single sites of Ω and on edges that lie in Ω (strict) or meet
/// it (strong). Each term has operator norm `strength`.
pub fn localized_perturbation(
    lat: &Lattice,
    omega: &SiteSet,
    kind: PerturbationKind,
    strength: f64,
    mode: LocalizationMode,
    seed: u64,
) -> Result<Interaction> {
    if omega.is_empty() {
        return invalid("perturbation region must be nonempty");
    }
    if !lat.contains(omega) {
        return invalid("perturbation region outside the lattice");
    }
    let mut phi = Interaction::new();
    if strength == 0.0 {
        return Ok(phi);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<SiteSet> = lat
        .edges()
        .iter()
        .map(|&(x, y)| SiteSet::new(vec![x, y]))
        .filter(|e| match mode {
            LocalizationMode::Strict => e.is_subset(omega),
            LocalizationMode::Strong => e.intersects(omega),
        })
        .collect();
    let singles: Vec<SiteSet> = omega.iter().map(|&x| SiteSet::single(x)).collect();
    let normalized = |m: CMat| -> CMat {
        let nrm = linalg::op_norm(&m);
        if nrm == 0.0 {
            m
        } else {
            linalg::scale_re(strength / nrm, &m)
        }
    };
    match kind {
        PerturbationKind::Random => {
            for z in singles.iter().chain(&edges) {
                let d = lat.dim_of(z);
                let m = Mat::from_fn(d, d, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
                phi.add_hermitian(lat, z.clone(), normalized(linalg::hermitian_part(&m)))?;
            }
        }
        PerturbationKind::TransverseField => {
            for z in &singles {
                let x = z.sites()[0];
                phi.add_term(lat, pauli(x, 1, lat)?.scaled(C64::new(strength, 0.0)))?;
            }
        }
        PerturbationKind::Hopping => {
            for e in &edges {
                let s = e.sites();
                let m = pauli_string(lat, s, &[1, 1])?.matrix + pauli_string(lat, s, &[2, 2])?.matrix;
                phi.add_hermitian(lat, e.clone(), normalized(m))?;
            }
        }
    }
    Ok(phi)
}

/// Named field perturbation on a region: hz σ³ + hx σ¹ on every site and
/// hxx σ¹σ¹ on every edge inside the region. Strictly localized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockFields {
    pub hz: f64,
    pub hx: f64,
    #[serde(default)]
    pub hxx: f64,
}

pub fn block_perturbation(lat: &Lattice, omega: &SiteSet, f: BlockFields) -> Result<Interaction> {
    if omega.is_empty() || !lat.contains(omega) {
        return invalid("block perturbation needs a nonempty region inside the lattice");
    }
    let mut phi = Interaction::new();
    for &x in omega.iter() {
        let m = linalg::scale_re(f.hz, &operators::pauli_matrix(3)?) + linalg::scale_re(f.hx, &operators::pauli_matrix(1)?);
        if linalg::max_abs(&m) > 0.0 {
            phi.add_term(lat, LocalOperator::hermitian(lat, SiteSet::single(x), m)?)?;
        }
    }
    if f.hxx != 0.0 {
        for &(x, y) in lat.edges() {
            if omega.contains(x) && omega.contains(y) {
                let op = pauli_string(lat, &[x.min(y), x.max(y)], &[1, 1])?;
                phi.add_term(lat, op.scaled(C64::new(f.hxx, 0.0)))?;
            }
        }
    }
    Ok(phi)
}

/// Overlap |⟨ψ|φ_0⟩|² of a vector with the exact ground vector.
pub fn ground_overlap(h: &CMat, psi: &[C64]) -> Result<f64> {
    let (_, u) = linalg::eigh(h)?;
    Ok(linalg::vdot(&linalg::col_vec(&u, 0), psi).norm_sqr())
}

/// Convenience: embeds a local operator as a full matrix.
pub fn full(lat: &Lattice, op: &LocalOperator) -> Result<CMat> {
    operators::embed(op, lat)
}
