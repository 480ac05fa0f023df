//! Subcommand bodies. Each returns the text for stdout and an exit code;
//! files are written only after all simulation work has finished.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::engine::{simulate_path, SimError, LOG_GUARD};
use crate::ensemble::{run_ensemble, workers_from_env, EnsembleError};
use crate::model::{check_assumptions, Component};
use crate::output;
use crate::threshold::threshold_report;
use crate::verify::{run_verification, VerifyError, VerifyPlan};

/// Highest exit code used for verification failures.
pub const MAX_EXIT_CODE: i32 = 125;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("hard assumption failure: {0}")]
    Assumption(String),

    #[error("{0}")]
    Invalid(String),

    #[error("{0}")]
    Divergence(String),

    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_)
            | CliError::Assumption(_)
            | CliError::Invalid(_)
            | CliError::Io { .. } => 1,
            CliError::Divergence(_) => 2,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Divergence { .. } => CliError::Divergence(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::Sim(s) => s.into(),
            EnsembleError::TooManyDiverged { .. } => CliError::Divergence(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Config(c) => c.into(),
            VerifyError::HardAssumption(msg) => CliError::Assumption(msg),
            VerifyError::Sim(s) => s.into(),
            VerifyError::TooManyDiverged { .. } => CliError::Divergence(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub svg: bool,
}

/// Loads a config, applies overrides and the `LEVYSIR_WORKERS` variable.
pub fn load_config(
    path: &Path,
    variant: Option<&str>,
    o: &Overrides,
) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::from_file(path, variant)?;
    if let (Some(seed), Some(scheme)) = (o.seed, cfg.scheme.as_mut()) {
        scheme.seed = seed;
    }
    if let Some(e) = cfg.ensemble.as_mut() {
        e.workers = workers_from_env(e.workers);
    }
    if let Some(out) = &o.out {
        cfg.output.dir = out.clone();
    }
    cfg.output.svg |= o.svg;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutput {
    pub stdout: String,
    pub exit_code: i32,
}

impl CommandOutput {
    fn ok(stdout: String) -> Self {
        Self {
            stdout,
            exit_code: 0,
        }
    }
}

fn write_file<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
{
    let io_err = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    f(&mut w)
        .and_then(|_| io::Write::flush(&mut w))
        .map_err(io_err)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_file(path, |w| io::Write::write_all(w, text.as_bytes()))
}

fn moment_exponent(cfg: &RunConfig) -> f64 {
    cfg.ensemble.as_ref().map_or(1.0, |e| e.p)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"))
}

/// Prints thresholds and assumption constants; writes `threshold.csv`.
pub fn cmd_threshold(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let params = cfg.require_model()?;
    let noise = cfg.require_noise()?;
    let p = moment_exponent(cfg);
    let assumptions =
        check_assumptions(params, noise, p).map_err(|e| CliError::Invalid(e.to_string()))?;
    if let Some(msg) = assumptions.hard_failure() {
        return Err(CliError::Assumption(msg));
    }
    let report = threshold_report(params, noise, cfg.verify.margin)
        .map_err(|e| CliError::Invalid(e.to_string()))?;

    let mut s = String::new();
    let _ = writeln!(s, "r0 = {:.6}", report.r0);
    let _ = writeln!(s, "t0s = {:.6}", report.t0s);
    let _ = writeln!(s, "extinction_exponent = {:.7}", report.extinction_exponent);
    let _ = writeln!(s, "alternate_exponent = {:.7}", report.alternate_exponent);
    let _ = writeln!(s, "regime = {}", report.regime);
    let _ = writeln!(s, "a1 = {}", assumptions.a1);
    let _ = writeln!(s, "a2 = satisfied");
    if let Some(c) = assumptions.compensators {
        for (k, v) in c.iter().enumerate() {
            let _ = writeln!(s, "compensator{} = {v:.8}", k + 1);
        }
    }
    if let Some(m) = assumptions.moments {
        let _ = writeln!(s, "p = {}", m.p);
        let _ = writeln!(s, "ell = {:.6}", m.ell);
        let _ = writeln!(s, "chi2 = {:.6}", m.chi2);
        let _ = writeln!(s, "chi1 = {}", fmt_opt(m.chi1));
        let _ = writeln!(s, "moment_bound_limit = {}", fmt_opt(m.asymptotic_bound()));
        let _ = writeln!(s, "kappa = {:.8}", m.kappa);
        let _ = writeln!(
            s,
            "a4 = {}",
            if m.a4_satisfied() {
                "satisfied"
            } else {
                "violated"
            }
        );
    }

    let path = cfg.output.dir.join("threshold.csv");
    write_file(&path, |w| output::write_threshold_csv(&report, w))?;
    Ok(CommandOutput::ok(s))
}

/// Simulates one path; writes `trajectory.csv` (and `trajectory.svg`).
/// On divergence the partial record is still written.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let sim = cfg.sim_config()?;
    let dir = &cfg.output.dir;
    let csv = dir.join("trajectory.csv");
    let (rec, failure) = match simulate_path(&sim) {
        Ok(rec) => (rec, None),
        Err(SimError::Divergence {
            step,
            component,
            partial,
        }) => {
            let msg = format!("divergence at step {step}: |ln {component}| exceeded {LOG_GUARD}");
            (*partial, Some(msg))
        }
        Err(e) => return Err(e.into()),
    };
    write_file(&csv, |w| output::write_trajectory_csv(&rec, w))?;
    if cfg.output.svg {
        write_text(&dir.join("trajectory.svg"), &output::trajectory_svg(&rec))?;
    }
    if let Some(msg) = failure {
        return Err(CliError::Divergence(format!(
            "{msg}; partial trajectory written to {}",
            csv.display()
        )));
    }
    Ok(CommandOutput::ok(format!(
        "wrote {} ({} rows, seed {})\n",
        csv.display(),
        rec.len(),
        sim.seed
    )))
}

/// Runs the ensemble; writes `summary.csv`, `moments.csv` and one terminal
/// histogram per compartment.
pub fn cmd_ensemble(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let sim = cfg.sim_config()?;
    let spec = cfg.ensemble_spec()?;
    let summary = run_ensemble(&sim, &spec)?;
    let constants = check_assumptions(&sim.params, &sim.noise, spec.p)
        .ok()
        .and_then(|a| a.moments);

    let dir = &cfg.output.dir;
    write_file(&dir.join("summary.csv"), |w| {
        output::write_summary_csv(&summary, w)
    })?;
    write_file(&dir.join("moments.csv"), |w| {
        output::write_moments_csv(&summary.moments, constants.as_ref(), &sim.initial, w)
    })?;
    let mut s = String::new();
    for c in Component::ALL {
        let h = summary.histogram(c);
        write_file(&dir.join(format!("histogram_{}.csv", c.name())), |w| {
            output::write_histogram_csv(h, w)
        })?;
        if cfg.output.svg {
            let title = format!(
                "{} at t = {}",
                c.name(),
                summary.checkpoints.last().unwrap_or(&0.0)
            );
            write_text(
                &dir.join(format!("histogram_{}.svg", c.name())),
                &output::histogram_svg(h, &title),
            )?;
        }
        let _ = writeln!(
            s,
            "{}: mode bin {} of {} ({})",
            c.name(),
            h.mode_bin(),
            h.counts.len(),
            if h.has_interior_mode() {
                "interior"
            } else {
                "edge"
            }
        );
    }
    let _ = writeln!(
        s,
        "paths = {}, diverged = {}, all_positive = {}",
        summary.n_paths, summary.n_diverged, summary.all_positive
    );
    let _ = writeln!(s, "wrote {}", dir.display());
    Ok(CommandOutput::ok(s))
}

/// Runs the verification suite; writes `verdicts.csv`. The exit code is
/// `2 + failures` (capped) when any check fails.
pub fn cmd_verify(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let plan = VerifyPlan::from_config(cfg)?;
    let run = run_verification(&plan)?;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "t0s = {:.6}, regime = {}, paths = {}, diverged = {}",
        run.threshold.t0s,
        run.threshold.regime,
        run.paths.len(),
        run.n_diverged
    );
    for c in &run.report.checks {
        let _ = writeln!(s, "{c}");
    }
    let failures = run.report.failures();
    let _ = writeln!(s, "{failures} failed");
    write_file(&cfg.output.dir.join("verdicts.csv"), |w| {
        output::write_verdicts_csv(&run.report, w)
    })?;
    let exit_code = if failures == 0 {
        0
    } else {
        (2 + failures as i32).min(MAX_EXIT_CODE)
    };
    Ok(CommandOutput {
        stdout: s,
        exit_code,
    })
}
