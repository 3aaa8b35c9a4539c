//! Interactions (finite maps from site sets to local terms), the decay
//! function χ_{b,p}, interaction norms and localization predicates.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::{Dist, Lattice, SiteSet};
use crate::linalg::{self, CMat};
use crate::operators::{self, LocalOperator};

/// Terms of derived interactions below this operator norm are dropped.
pub const DROP_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayProfile {
    pub b: f64,
    pub p: f64,
}

impl DecayProfile {
    pub fn new(b: f64, p: f64) -> Result<Self> {
        if !(b > 0.0) || !(p > 0.0 && p <= 1.0) {
            return invalid(format!("decay profile needs b > 0 and p in (0,1], got b={b}, p={p}"));
        }
        Ok(DecayProfile { b, p })
    }

    pub fn chi(&self, x: f64) -> Result<f64> {
        if x < 0.0 || x.is_nan() {
            return invalid(format!("chi needs x >= 0, got {x}"));
        }
        if x.is_infinite() {
            return Ok(0.0);
        }
        Ok((-self.b * x.powf(self.p)).exp())
    }

    pub fn chi_dist(&self, d: Dist) -> f64 {
        match d {
            Dist::Finite(v) => (-self.b * (v as f64).powf(self.p)).exp(),
            Dist::Infinite => 0.0,
        }
    }

    pub fn with_b(&self, b: f64) -> DecayProfile {
        DecayProfile { b, p: self.p }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Interaction {
    terms: BTreeMap<SiteSet, LocalOperator>,
}

impl Interaction {
    pub fn new() -> Self {
        Interaction { terms: BTreeMap::new() }
    }

    /// Adds `op` to the term on its support.
    pub fn add_term(&mut self, lat: &Lattice, op: LocalOperator) -> Result<()> {
        if op.support.is_empty() {
            return invalid("interaction terms need a nonempty support");
        }
        if let Some(old) = self.terms.get_mut(&op.support) {
            let sum = old.add(lat, &op)?;
            *old = sum;
        } else {
            self.terms.insert(op.support.clone(), op);
        }
        Ok(())
    }

    pub fn add_hermitian(&mut self, lat: &Lattice, support: SiteSet, m: CMat) -> Result<()> {
        let op = LocalOperator::hermitian(lat, support, m)?;
        self.add_term(lat, op)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&SiteSet, &LocalOperator)> {
        self.terms.iter()
    }

    pub fn term(&self, z: &SiteSet) -> Option<&LocalOperator> {
        self.terms.get(z)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Interaction {
        Interaction {
            terms: self.terms.iter().map(|(k, v)| (k.clone(), v.scaled(C64::new(c, 0.0)))).collect(),
        }
    }

    pub fn merged(&self, lat: &Lattice, other: &Interaction) -> Result<Interaction> {
        let mut out = self.clone();
        for (_, t) in other.terms() {
            out.add_term(lat, t.clone())?;
        }
        Ok(out)
    }

    pub fn all_hermitian(&self) -> bool {
        self.terms.values().all(|t| linalg::is_hermitian(&t.matrix, operators::HERMITIAN_TOL))
    }

    /// Σ_Z Φ(Z) embedded in the full space.
    pub fn assemble(&self, lat: &Lattice) -> Result<CMat> {
        let d = lat.hilbert_dim();
        let all = lat.all_sites();
        let parts: Vec<CMat> = self
            .terms
            .values()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|t| Ok(t.extend_to(lat, &all)?.matrix))
            .collect::<Result<Vec<_>>>()?;
        let mut h = linalg::zeros(d);
        for p in parts {
            h += p;
        }
        Ok(h)
    }

    fn site_sums(&self, lat: &Lattice, weight: impl Fn(usize, &SiteSet) -> f64 + Sync) -> f64 {
        let norms: Vec<(SiteSet, f64)> = self
            .terms
            .iter()
            .map(|(k, v)| (k.clone(), v.norm()))
            .collect();
        (0..lat.n_sites())
            .into_par_iter()
            .map(|z| {
                norms
                    .iter()
                    .filter(|(k, _)| k.contains(z))
                    .map(|(k, n)| if *n == 0.0 { 0.0 } else { n / weight(z, k) })
                    .sum::<f64>()
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// sup_z Σ_{Z∋z} ‖Φ(Z)‖ / χ(diam Z).
    pub fn interaction_norm(&self, lat: &Lattice, prof: &DecayProfile) -> f64 {
        self.site_sums(lat, |_, k| prof.chi_dist(Dist::Finite(lat.set_diameter(k))))
    }

    /// sup_z Σ_{Z∋z} ‖Φ(Z)‖ / (χ(diam Z) χ(dist(z, Ω))).
    pub fn localized_norm(&self, lat: &Lattice, prof: &DecayProfile, omega: &SiteSet) -> f64 {
        self.site_sums(lat, |z, k| {
            prof.chi_dist(Dist::Finite(lat.set_diameter(k))) * prof.chi_dist(lat.site_set_distance(z, omega))
        })
    }

    pub fn is_strictly_localized(&self, omega: &SiteSet) -> bool {
        self.terms.keys().all(|k| k.is_subset(omega))
    }

    pub fn is_strongly_localized(&self, omega: &SiteSet) -> bool {
        self.terms.keys().all(|k| k.intersects(omega))
    }

    pub fn max_support_diameter(&self, lat: &Lattice) -> u32 {
        self.terms.keys().map(|k| lat.set_diameter(k)).max().unwrap_or(0)
    }
}

/// Φ_{[A,B]}(Z) = Σ_{X∪Y=Z, X∩Y≠∅} [Φ_A(X), Φ_B(Y)]. The terms are
/// anti-Hermitian when both inputs are Hermitian.
pub fn commutator_interaction(lat: &Lattice, a: &Interaction, b: &Interaction) -> Result<Interaction> {
    let mut out: BTreeMap<SiteSet, LocalOperator> = BTreeMap::new();
    for (x, ta) in a.terms() {
        for (y, tb) in b.terms() {
            if !x.intersects(y) {
                continue;
            }
            let c = operators::commutator(lat, ta, tb)?;
            match out.get_mut(&c.support) {
                Some(old) => old.matrix += &c.matrix,
                None => {
                    out.insert(c.support.clone(), c);
                }
            }
        }
    }
    out.retain(|_, v| v.norm() >= DROP_TOL);
    Ok(Interaction { terms: out })
}
