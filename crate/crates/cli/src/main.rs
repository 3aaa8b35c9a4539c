use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gaplab::config::{ExperimentConfig, Task};
use gaplab::runner::run_experiment;

/// Thread count when --threads is not given; defaults to available parallelism.
const THREADS_ENV: &str = "GAPLAB_THREADS";

#[derive(Parser)]
#[command(name = "gaplab", version, about = "Response theory and local gap diagnostics for small spin lattices")]
struct Cli {
    /// Worker threads (overrides GAPLAB_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; falls back to output.dir in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Every task listed in run.tasks.
    Run(Common),
    /// Kubo coefficient against the first-order NEASS.
    Kubo(Common),
    /// Switched dynamics against NEASS partial sums over the ε grid.
    ResponseSweep(Common),
    /// Almost-stationarity of the NEASS under the perturbed dynamics.
    NeassCheck(Common),
    /// Local dynamical gap witnesses against distance to the ungapped region.
    LdgScan(Common),
    /// Dynamical characterization of the spectral gap on random observables.
    GdgTest(Common),
    /// Relations among the local gap conditions on the configured example.
    GapImplications(Common),
    /// Commutator growth and fitted Lieb-Robinson envelope.
    LrProfile(Common),
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, String> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| format!("{THREADS_ENV}={s} is not a thread count")),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match threads(cli.threads) {
        Ok(Some(n)) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("error: thread pool: {e}");
                return ExitCode::from(2);
            }
        }
        Ok(_) => {}
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let (common, task) = match cli.cmd {
        Cmd::Run(c) => (c, None),
        Cmd::Kubo(c) => (c, Some(Task::Kubo)),
        Cmd::ResponseSweep(c) => (c, Some(Task::ResponseSweep)),
        Cmd::NeassCheck(c) => (c, Some(Task::NeassCheck)),
        Cmd::LdgScan(c) => (c, Some(Task::LdgScan)),
        Cmd::GdgTest(c) => (c, Some(Task::GdgTest)),
        Cmd::GapImplications(c) => (c, Some(Task::GapImplications)),
        Cmd::LrProfile(c) => (c, Some(Task::LrProfile)),
    };
    let mut cfg = match ExperimentConfig::from_path(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", common.config.display());
            return ExitCode::from(2);
        }
    };
    if let Some(t) = task {
        cfg.run.tasks = vec![t];
        if let Err(e) = cfg.validate() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let out = match common.out.or_else(|| cfg.output.dir.as_ref().map(PathBuf::from)) {
        Some(o) => o,
        None => {
            eprintln!("error: no output directory (pass --out or set output.dir)");
            return ExitCode::from(2);
        }
    };
    let manifest = match run_experiment(&cfg, &out) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for t in &manifest.tasks {
        let status = if t.passed { "PASS" } else { "FAIL" };
        match &t.error {
            Some(e) => println!("{status} {} ({:.2}s): {e}", t.task, t.wall_seconds),
            None => println!("{status} {} ({:.2}s) {}", t.task, t.wall_seconds, t.files.join(", ")),
        }
    }
    println!("manifest: {}", out.join("manifest.json").display());
    if manifest.all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
