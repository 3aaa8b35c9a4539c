//! Experiment runner: builds the model from a config, dispatches the
//! requested tasks and persists CSV tables plus a JSON manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{parse_axis, ExperimentConfig, FamilyRegion, ModelConfig, PauliTerm, PerturbationConfig, Task};
use crate::dynamics::{self, SolverOptions};
use crate::error::{invalid, Error, Result};
use crate::gaps::{self, ExampleSystem, GapContext};
use crate::interactions::{DecayProfile, Interaction};
use crate::lattice::{Lattice, SiteSet};
use crate::liouvillian::{self, SpectralData, SpectralKernels};
use crate::linalg::{self, CMat};
use crate::models;
use crate::neass::{self, fmt, NeassBuilder, ResponseProblem};
use crate::operators::{self, GlobalState, LocalOperator};
use crate::switching::SwitchingFunction;
use crate::weight::WeightFunction;

/// Everything a task needs, built once from the config.
pub struct ExperimentSetup {
    pub config: ExperimentConfig,
    pub lat: Lattice,
    pub phi0: Interaction,
    pub h0: CMat,
    pub pert: Option<Interaction>,
    pub v: Option<CMat>,
    pub b: Option<CMat>,
    pub rho0: GlobalState,
    pub wf: WeightFunction,
}

fn pauli_sum(lat: &Lattice, terms: &[PauliTerm]) -> Result<Interaction> {
    let mut phi = Interaction::new();
    for t in terms {
        let axes: Vec<u8> = t.axes.chars().map(|c| parse_axis(c).ok_or_else(|| Error::Invalid(format!("bad axis {c}")))).collect::<Result<_>>()?;
        let mut idx: Vec<usize> = (0..t.sites.len()).collect();
        idx.sort_by_key(|&i| t.sites[i]);
        let sites: Vec<usize> = idx.iter().map(|&i| t.sites[i]).collect();
        let axes: Vec<u8> = idx.iter().map(|&i| axes[i]).collect();
        let op = operators::pauli_string(lat, &sites, &axes)?;
        phi.add_term(lat, op.scaled(C64::new(t.coef, 0.0)))?;
    }
    Ok(phi)
}

/// Unique ground state of `h` as a pure state.
pub fn unique_ground_state(h: &CMat) -> Result<GlobalState> {
    let (ev, u) = linalg::eigh(h)?;
    if ev.len() > 1 && ev[1] - ev[0] < 1e-9 {
        return invalid(format!("ground state is degenerate (splitting {:.3e})", ev[1] - ev[0]));
    }
    Ok(GlobalState::pure(&linalg::col_vec(&u, 0)))
}

impl ExperimentSetup {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let lat = config.build_lattice()?;
        let phi0 = match &config.model {
            ModelConfig::Ising { coupling, allow_strong } => models::ising_model(&lat, coupling, *allow_strong)?.phi,
            ModelConfig::Xxz { l1, l3, shift } => {
                let phi = models::xxz_model(&lat, *l1, *l3)?;
                if *shift {
                    models::shift_to_nonnegative(&lat, &phi)?.0
                } else {
                    phi
                }
            }
        };
        let h0 = phi0.assemble(&lat)?;
        let pert = match &config.perturbation {
            None => None,
            Some(PerturbationConfig::Pauli { terms, .. }) => Some(pauli_sum(&lat, terms)?),
            Some(PerturbationConfig::Block { region, fields }) => Some(models::block_perturbation(&lat, &SiteSet::new(region.clone()), *fields)?),
            Some(PerturbationConfig::Named { region, family, strength, mode }) => Some(models::localized_perturbation(
                &lat,
                &SiteSet::new(region.clone()),
                *family,
                *strength,
                *mode,
                config.run.seed,
            )?),
        };
        let v = match &pert {
            Some(p) => Some(p.assemble(&lat)?),
            None => None,
        };
        let b = match &config.observable {
            Some(o) => Some(pauli_sum(&lat, &o.terms)?.assemble(&lat)?),
            None => None,
        };
        let rho0 = unique_ground_state(&h0)?;
        let wf = WeightFunction::build(config.gap.g, config.gap.weight)?;
        Ok(ExperimentSetup { config: config.clone(), lat, phi0, h0, pert, v, b, rho0, wf })
    }

    fn v(&self) -> Result<&CMat> {
        self.v.as_ref().ok_or_else(|| Error::Invalid("task needs a perturbation".into()))
    }

    fn b(&self) -> Result<&CMat> {
        self.b.as_ref().ok_or_else(|| Error::Invalid("task needs an observable".into()))
    }

    /// H0 + V when a perturbation is configured.
    fn perturbed(&self) -> CMat {
        match &self.v {
            Some(v) => &self.h0 + v,
            None => self.h0.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskOutcome {
    pub task: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub files: Vec<String>,
    pub summary: Value,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub threads: usize,
    pub tasks: Vec<TaskOutcome>,
    pub all_passed: bool,
}

struct TaskResult {
    passed: bool,
    files: Vec<String>,
    summary: Value,
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn task_kubo(s: &ExperimentSetup, out: &Path) -> Result<TaskResult> {
    let spec = SpectralData::new(&s.h0)?;
    let ker = SpectralKernels::new(&spec, &s.wf);
    let v = s.v()?;
    let b = s.b()?;
    let kubo = neass::kubo_sigma1(&spec, &ker, v, &s.rho0, b)?;
    let builder = NeassBuilder::new(&s.h0, v, &s.wf)?;
    let exp = builder.build_static(1, 1.0)?;
    let via_neass = neass::response_expansion(&exp, &s.rho0, b, 1)?[1];
    let path = out.join("kubo.csv");
    write_rows(&path, &["sigma1_kubo", "sigma1_neass"], [vec![fmt(kubo), fmt(via_neass)]])?;
    let diff = (kubo - via_neass).abs();
    Ok(TaskResult {
        passed: diff <= 1e-8 * (1.0 + kubo.abs()),
        files: vec![file_name(&path)],
        summary: json!({ "sigma1": kubo, "sigma1_neass": via_neass, "difference": diff }),
    })
}

fn task_response(s: &ExperimentSetup, out: &Path) -> Result<TaskResult> {
    let run = &s.config.run;
    let builder = NeassBuilder::new(&s.h0, s.v()?, &s.wf)?;
    let prob = ResponseProblem { builder: &builder, rho0: &s.rho0, b: s.b()?, order: run.order };
    let opts = SolverOptions { tol: run.tol, ..Default::default() };
    let tab = neass::response_sweep(&prob, &SwitchingFunction::mollified(), &run.eps, &run.eta, run.t_eval, &opts)?;
    let path = out.join("response.csv");
    tab.write_csv(&path)?;
    let top = tab.slopes[run.order];
    let passed = match run.min_slope {
        Some(m) => top.is_some_and(|x| x >= m),
        None => tab.rows.iter().all(|r| r.residual.is_finite()),
    };
    Ok(TaskResult {
        passed,
        files: vec![file_name(&path)],
        summary: json!({ "slopes": tab.slopes, "min_slope": run.min_slope, "steps": tab.rows.iter().map(|r| r.steps).collect::<Vec<_>>() }),
    })
}

fn task_stationarity(s: &ExperimentSetup, out: &Path) -> Result<TaskResult> {
    let run = &s.config.run;
    let builder = NeassBuilder::new(&s.h0, s.v()?, &s.wf)?;
    let tab = neass::stationarity_sweep(&builder, &s.rho0, s.b()?, run.order, &run.eps, &run.stationarity.times)?;
    let path = out.join("stationarity.csv");
    tab.write_csv(&path)?;
    let passed = match run.stationarity.min_slope {
        Some(m) => tab.slope.is_some_and(|x| x >= m),
        None => tab.rows.iter().all(|r| r.deviation.is_finite()),
    };
    let maxes: Vec<f64> = run.eps.iter().map(|&e| tab.max_deviation(e)).collect();
    Ok(TaskResult { passed, files: vec![file_name(&path)], summary: json!({ "slope": tab.slope, "max_deviation": maxes }) })
}

/// Non-increasing medians, with the first positive-distance median at least
/// `min_drop` times the last.
pub fn medians_decay(medians: &[(u32, f64)], min_drop: f64) -> bool {
    let mono = medians.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12));
    let first = medians.iter().find(|(d, _)| *d >= 1).map(|x| x.1);
    let last = medians.last().map(|x| x.1);
    match (first, last) {
        (Some(f), Some(l)) => mono && f > 0.0 && f >= min_drop * l,
        _ => false,
    }
}

fn task_ldg(s: &ExperimentSetup, out: &Path) -> Result<TaskResult> {
    let cfg = &s.config.run.ldg;
    let h = s.perturbed();
    let rho = unique_ground_state(&h)?;
    let ctx = GapContext::new(&h, &rho, &s.wf)?;
    let gap_region = s.config.gap_region(&s.lat);
    let fam_region = match cfg.family {
        FamilyRegion::Gap => gap_region.clone(),
        FamilyRegion::All => s.lat.all_sites(),
    };
    let fam = gaps::pauli_family(&s.lat, &fam_region, cfg.two_site)?;
    let res = gaps::ldg_scan(&ctx, &s.lat, &gap_region, &fam, cfg.p_model)?;
    let path = out.join("ldg_scan.csv");
    res.write_csv(&path)?;
    let med = res.medians();
    let passed = !cfg.assert_monotone || medians_decay(&med, cfg.min_drop);
    Ok(TaskResult {
        passed,
        files: vec![file_name(&path)],
        summary: json!({
            "medians": med,
            "fit_fixed_p": res.fit_fixed_p,
            "fit_free_p": res.fit_free_p,
            "fit_note": res.fit_note,
            "degenerate": res.degenerate,
        }),
    })
}

fn task_gdg(s: &ExperimentSetup, out: &Path) -> Result<TaskResult> {
    let cfg = &s.config.run.gdg;
    let mut rng = ChaCha8Rng::seed_from_u64(s.config.run.seed);
    let patch: Vec<usize> = (0..cfg.patch_size).collect();
    let rep = liouvillian::gdg_check(&s.h0, &patch, &s.wf, cfg.trials, cfg.tol, &mut rng)?;
    let gapped = rep.delta >= s.wf.g;
    let passed = if gapped { rep.holds } else { rep.targeted_witness >= 1e-2 * rep.w_hat_delta };
    let path = out.join("gdg.csv");
    write_rows(
        &path,
        &["delta", "gapped", "worst_witness", "targeted_witness", "w_hat_delta"],
        [vec![fmt(rep.delta), gapped.to_string(), fmt(rep.worst_witness), fmt(rep.targeted_witness), fmt(rep.w_hat_delta)]],
    )?;
    Ok(TaskResult {
        passed,
        files: vec![file_name(&path)],
        summary: json!({ "delta": rep.delta, "gapped": gapped, "worst_witness": rep.worst_witness, "targeted_witness": rep.targeted_witness }),
    })
}

fn task_implications(s: &ExperimentSetup, out: &Path) -> Result<TaskResult> {
    let pert = s.pert.as_ref().ok_or_else(|| Error::Invalid("task needs a perturbation".into()))?;
    let sys = ExampleSystem::new(
        match s.config.model {
            ModelConfig::Ising { .. } => "ising",
            ModelConfig::Xxz { .. } => "xxz",
        },
        s.lat.clone(),
        &s.phi0,
        pert,
        s.config.gap_region(&s.lat),
        s.wf.g,
    )?;
    let rep = gaps::implication_suite(&sys, &s.wf, s.config.run.implications.beta)?;
    let path = out.join("implications.csv");
    let rows = rep.checks.iter().flat_map(|c| {
        c.samples.iter().map(move |x| {
            vec![c.label.clone(), format!("{:?}", c.kind).to_lowercase(), x.obs_id.clone(), x.dist.to_string(), fmt(x.premise), fmt(x.conclusion)]
        })
    });
    write_rows(&path, &["implication", "kind", "obs_id", "dist", "premise", "conclusion"], rows)?;
    let checks: Vec<Value> = rep
        .checks
        .iter()
        .map(|c| json!({ "label": c.label, "holds": c.holds, "envelope_k": c.envelope_k, "envelope_shift": c.envelope_shift }))
        .collect();
    Ok(TaskResult {
        passed: rep.all_hold(),
        files: vec![file_name(&path)],
        summary: json!({ "checks": checks, "automorphism_region": rep.automorphism_region, "beta": rep.beta }),
    })
}

fn task_lr(s: &ExperimentSetup, out: &Path) -> Result<TaskResult> {
    let cfg = &s.config.run.lr;
    let phi = match &s.pert {
        Some(p) => s.phi0.merged(&s.lat, p)?,
        None => s.phi0.clone(),
    };
    let a: LocalOperator = operators::pauli(cfg.site, cfg.axis, &s.lat)?;
    let probes: Vec<usize> = (0..s.lat.n_sites()).filter(|&y| y != cfg.site).collect();
    let rows = dynamics::lr_profile(&s.lat, &phi, &a, &probes, &cfg.times)?;
    let prof = DecayProfile::new(cfg.b, cfg.p)?;
    let fit = dynamics::fit_lr_envelope(&rows, &prof, 1.0, 1e-12);
    let path = out.join("lr_profile.csv");
    write_rows(
        &path,
        &["t", "site", "axis", "dist", "value", "envelope"],
        rows.iter().map(|r| vec![fmt(r.t), r.site.to_string(), r.axis.to_string(), r.dist.to_string(), fmt(r.value), fmt(fit.envelope(r.t, r.dist, 1.0))]),
    )?;
    Ok(TaskResult { passed: fit.dominates, files: vec![file_name(&path)], summary: serde_json::to_value(&fit)? })
}

fn run_task(setup: &ExperimentSetup, task: Task, out: &Path) -> TaskOutcome {
    let t0 = Instant::now();
    let res = match task {
        Task::Kubo => task_kubo(setup, out),
        Task::ResponseSweep => task_response(setup, out),
        Task::NeassCheck => task_stationarity(setup, out),
        Task::LdgScan => task_ldg(setup, out),
        Task::GdgTest => task_gdg(setup, out),
        Task::GapImplications => task_implications(setup, out),
        Task::LrProfile => task_lr(setup, out),
    };
    let wall_seconds = t0.elapsed().as_secs_f64();
    match res {
        Ok(r) => TaskOutcome { task: task.name().into(), passed: r.passed, error: None, files: r.files, summary: r.summary, wall_seconds },
        Err(e) => TaskOutcome { task: task.name().into(), passed: false, error: Some(e.to_string()), files: vec![], summary: Value::Null, wall_seconds },
    }
}

/// Runs every requested task; a failing task is recorded and the others
/// still run. Writes `manifest.json` into `out`.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    std::fs::create_dir_all(out)?;
    let setup = ExperimentSetup::build(config)?;
    let mut tasks = config.run.tasks.clone();
    tasks.sort();
    tasks.dedup();
    let outcomes: Vec<TaskOutcome> = tasks.par_iter().map(|&t| run_task(&setup, t, out)).collect();
    let manifest = RunManifest {
        tool: "gaplab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        threads: rayon::current_num_threads(),
        all_passed: outcomes.iter().all(|o| o.passed),
        tasks: outcomes,
    };
    let path: PathBuf = out.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians_rule() {
        assert!(medians_decay(&[(0, 1.0), (1, 0.1), (2, 0.0)], 10.0));
        assert!(!medians_decay(&[(0, 1.0), (1, 0.1), (2, 0.2)], 10.0));
        assert!(!medians_decay(&[(0, 1.0), (1, 0.1), (2, 0.05)], 10.0));
        assert!(!medians_decay(&[(0, 1.0)], 10.0));
    }

    #[test]
    fn pauli_sum_orders_sites() {
        let lat = Lattice::chain(3, 2).unwrap();
        let t = |s: Vec<usize>, a: &str| PauliTerm { sites: s, axes: a.into(), coef: 0.5 };
        let a = pauli_sum(&lat, &[t(vec![2, 0], "zx")]).unwrap().assemble(&lat).unwrap();
        let b = pauli_sum(&lat, &[t(vec![0, 2], "xz")]).unwrap().assemble(&lat).unwrap();
        assert!(linalg::frobenius(&(&a - &b)) < 1e-15);
    }
}
