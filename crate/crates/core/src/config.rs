//! Experiment configuration: a TOML document with nested tables. Unknown
//! keys are rejected and every validation error names the offending field.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, SiteSet};
use crate::models::{BlockFields, LocalizationMode, PerturbationKind};
use crate::neass::EtaRule;
use crate::weight::WeightParams;

/// Largest Hilbert dimension accepted without `lattice.allow_large`.
pub const MAX_DIM: usize = 1 << 14;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub lattice: LatticeConfig,
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationConfig>,
    pub gap: GapConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<PauliSpec>,
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum LatticeKind {
    Chain,
    Grid,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub kind: LatticeKind,
    #[serde(default)]
    pub length: usize,
    #[serde(default)]
    pub width: usize,
    #[serde(default)]
    pub height: usize,
    #[serde(default = "two")]
    pub site_dim: usize,
    /// Lifts the 2^14 dimension cap.
    #[serde(default)]
    pub allow_large: bool,
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// Σ σ³ + Σ_pairs λ(d) σ³σ³ with `coupling` = [λ(1), λ(2), ...].
    Ising {
        #[serde(default)]
        coupling: Vec<f64>,
        #[serde(default)]
        allow_strong: bool,
    },
    Xxz {
        l1: f64,
        l3: f64,
        /// Shift every term to a non-negative spectrum.
        #[serde(default)]
        shift: bool,
    },
}

/// A sum of Pauli strings, e.g. `{ sites = [3, 4], axes = "xx", coef = 1.0 }`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PauliTerm {
    pub sites: Vec<usize>,
    pub axes: String,
    #[serde(default = "one")]
    pub coef: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PauliSpec {
    pub terms: Vec<PauliTerm>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationConfig {
    Pauli {
        region: Vec<usize>,
        terms: Vec<PauliTerm>,
    },
    Block {
        region: Vec<usize>,
        #[serde(flatten)]
        fields: BlockFields,
    },
    Named {
        region: Vec<usize>,
        family: PerturbationKind,
        strength: f64,
        mode: LocalizationMode,
    },
}

impl PerturbationConfig {
    pub fn region(&self) -> &[usize] {
        match self {
            PerturbationConfig::Pauli { region, .. } | PerturbationConfig::Block { region, .. } | PerturbationConfig::Named { region, .. } => region,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GapConfig {
    /// Λ^gap; all sites when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Vec<usize>>,
    pub g: f64,
    #[serde(default)]
    pub weight: WeightParams,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Kubo,
    ResponseSweep,
    NeassCheck,
    LdgScan,
    GdgTest,
    GapImplications,
    LrProfile,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Kubo => "kubo",
            Task::ResponseSweep => "response_sweep",
            Task::NeassCheck => "neass_check",
            Task::LdgScan => "ldg_scan",
            Task::GdgTest => "gdg_test",
            Task::GapImplications => "gap_implications",
            Task::LrProfile => "lr_profile",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub tasks: Vec<Task>,
    #[serde(default = "one_usize")]
    pub order: usize,
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub eta: EtaRule,
    #[serde(default)]
    pub t_eval: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
    /// Lower bound asserted on the slope of the order-n response residual.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_slope: Option<f64>,
    #[serde(default)]
    pub stationarity: StationarityConfig,
    #[serde(default)]
    pub gdg: GdgConfig,
    #[serde(default)]
    pub ldg: LdgConfig,
    #[serde(default)]
    pub implications: ImplicationsConfig,
    #[serde(default)]
    pub lr: LrConfig,
}

fn one_usize() -> usize {
    1
}

fn default_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct StationarityConfig {
    pub times: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_slope: Option<f64>,
}

impl Default for StationarityConfig {
    fn default() -> Self {
        StationarityConfig { times: (0..=20).map(|k| k as f64 * 0.25).collect(), min_slope: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GdgConfig {
    pub trials: usize,
    /// Number of lowest eigenvalues forming the spectral patch.
    pub patch_size: usize,
    pub tol: f64,
}

impl Default for GdgConfig {
    fn default() -> Self {
        GdgConfig { trials: 200, patch_size: 1, tol: 1e-5 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FamilyRegion {
    Gap,
    All,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LdgConfig {
    pub family: FamilyRegion,
    pub two_site: bool,
    /// Exponent p used in the fixed-p fit.
    pub p_model: f64,
    /// Assert non-increasing medians and the drop factor below.
    pub assert_monotone: bool,
    pub min_drop: f64,
}

impl Default for LdgConfig {
    fn default() -> Self {
        LdgConfig { family: FamilyRegion::Gap, two_site: true, p_model: 1.0, assert_monotone: false, min_drop: 10.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ImplicationsConfig {
    pub beta: f64,
}

impl Default for ImplicationsConfig {
    fn default() -> Self {
        ImplicationsConfig { beta: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LrConfig {
    pub site: usize,
    pub axis: u8,
    pub times: Vec<f64>,
    pub b: f64,
    pub p: f64,
}

impl Default for LrConfig {
    fn default() -> Self {
        LrConfig { site: 0, axis: 1, times: (0..=12).map(|k| k as f64 * 0.25).collect(), b: 1.0, p: 1.0 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

fn cfg_err(path: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Config { path: path.into(), msg: msg.into() }
}

impl ExperimentConfig {
    /// Parses TOML; errors carry the dotted path of the offending key.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let de = toml::Deserializer::new(s);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            cfg_err(path, inner.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config, or the `config` block of a JSON run manifest.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value = serde_json::from_str(&text)?;
            let c = v.get("config").cloned().ok_or_else(|| cfg_err("config", "manifest has no config block"))?;
            let cfg: ExperimentConfig = serde_path_to_error::deserialize(c).map_err(|e| cfg_err(e.path().to_string(), e.inner().to_string()))?;
            cfg.validate()?;
            return Ok(cfg);
        }
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| cfg_err("", e.to_string()))
    }

    pub fn build_lattice(&self) -> Result<Lattice> {
        let l = &self.lattice;
        match l.kind {
            LatticeKind::Chain => {
                if l.length == 0 {
                    return Err(cfg_err("lattice.length", "chain needs length ≥ 1"));
                }
                Lattice::chain(l.length, l.site_dim)
            }
            LatticeKind::Grid => {
                if l.width == 0 || l.height == 0 {
                    return Err(cfg_err("lattice.width", "grid needs width and height ≥ 1"));
                }
                Lattice::grid(l.width, l.height, l.site_dim)
            }
        }
    }

    pub fn gap_region(&self, lat: &Lattice) -> SiteSet {
        match &self.gap.region {
            Some(r) => SiteSet::new(r.clone()),
            None => lat.all_sites(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lat = self.build_lattice().map_err(|e| match e {
            Error::Config { .. } => e,
            other => cfg_err("lattice", other.to_string()),
        })?;
        if lat.site_dim(0) < 2 {
            return Err(cfg_err("lattice.site_dim", "site dimension must be at least 2"));
        }
        let n = lat.n_sites();
        let log_dim = lat.site_dims().iter().map(|&d| (d as f64).log2()).sum::<f64>();
        if log_dim > (MAX_DIM as f64).log2() + 1e-9 && !self.lattice.allow_large {
            return Err(cfg_err("lattice", format!("Hilbert dimension 2^{log_dim:.1} exceeds 2^14; set allow_large = true to override")));
        }
        let check_sites = |path: &str, sites: &[usize]| -> Result<()> {
            for (i, &s) in sites.iter().enumerate() {
                if s >= n {
                    return Err(cfg_err(format!("{path}[{i}]"), format!("site {s} outside lattice of {n} sites")));
                }
            }
            Ok(())
        };
        let check_terms = |path: &str, terms: &[PauliTerm], region: Option<&[usize]>| -> Result<()> {
            for (i, t) in terms.iter().enumerate() {
                let p = format!("{path}[{i}]");
                check_sites(&format!("{p}.sites"), &t.sites)?;
                if t.sites.is_empty() || t.sites.len() != t.axes.chars().count() {
                    return Err(cfg_err(format!("{p}.axes"), "need one axis letter per site"));
                }
                if let Some(c) = t.axes.chars().find(|c| parse_axis(*c).is_none()) {
                    return Err(cfg_err(format!("{p}.axes"), format!("unknown axis `{c}` (use x, y or z)")));
                }
                if let Some(r) = region {
                    if let Some(s) = t.sites.iter().find(|s| !r.contains(s)) {
                        return Err(cfg_err(format!("{p}.sites"), format!("site {s} outside the perturbation region")));
                    }
                }
            }
            Ok(())
        };
        if let Some(p) = &self.perturbation {
            check_sites("perturbation.region", p.region())?;
            if p.region().is_empty() {
                return Err(cfg_err("perturbation.region", "region must be nonempty"));
            }
            if let PerturbationConfig::Pauli { terms, region } = p {
                check_terms("perturbation.terms", terms, Some(region))?;
            }
        }
        if let Some(o) = &self.observable {
            check_terms("observable.terms", &o.terms, None)?;
        }
        if let Some(r) = &self.gap.region {
            check_sites("gap.region", r)?;
        }
        if !(self.gap.g > 0.0) {
            return Err(cfg_err("gap.g", "g must be positive"));
        }
        let run = &self.run;
        if run.tasks.is_empty() {
            return Err(cfg_err("run.tasks", "no tasks requested"));
        }
        for (i, &e) in run.eps.iter().enumerate() {
            if !(e > 0.0 && e < 1.0) {
                return Err(cfg_err(format!("run.eps[{i}]"), format!("ε = {e} outside (0, 1)")));
            }
            run.eta.eta(e).map_err(|err| cfg_err("run.eta", err.to_string()))?;
        }
        if !(run.tol > 0.0) {
            return Err(cfg_err("run.tol", "tolerance must be positive"));
        }
        if run.order == 0 || run.order > crate::neass::MAX_ORDER {
            return Err(cfg_err("run.order", format!("order must be in 1..={}", crate::neass::MAX_ORDER)));
        }
        let needs = |t: Task| run.tasks.contains(&t);
        let needs_eps = needs(Task::ResponseSweep) || needs(Task::NeassCheck);
        if needs_eps && run.eps.len() < 2 {
            return Err(cfg_err("run.eps", "response and stationarity sweeps need at least two ε values"));
        }
        let needs_v = needs_eps || needs(Task::Kubo) || needs(Task::GapImplications);
        if needs_v && self.perturbation.is_none() {
            return Err(cfg_err("perturbation", "requested tasks need a perturbation block"));
        }
        if (needs_eps || needs(Task::Kubo)) && self.observable.is_none() {
            return Err(cfg_err("observable", "requested tasks need an observable block"));
        }
        if needs(Task::LrProfile) {
            check_sites("run.lr.site", &[run.lr.site])?;
            if !(1..=3).contains(&run.lr.axis) {
                return Err(cfg_err("run.lr.axis", "axis must be 1, 2 or 3"));
            }
        }
        if needs(Task::GdgTest) && (run.gdg.patch_size == 0 || run.gdg.patch_size >= lat.hilbert_dim()) {
            return Err(cfg_err("run.gdg.patch_size", "patch must be a proper nonempty part of the spectrum"));
        }
        Ok(())
    }
}

pub fn parse_axis(c: char) -> Option<u8> {
    match c {
        'x' | 'X' | '1' => Some(1),
        'y' | 'Y' | '2' => Some(2),
        'z' | 'Z' | '3' => Some(3),
        _ => None,
    }
}
