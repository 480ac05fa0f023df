//! The verification suite: one coupled ensemble pass reduced to per-path
//! statistics, then checked against the closed-form predictions.
//!
//! Which long-run checks run depends on the regime. Ergodic configurations
//! get window stability, time-vs-ensemble agreement and persistence;
//! extinct ones get the ln I slope and the extinct fraction. The other
//! family is reported as skipped.

use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::diagnostics::{
    comparison_violation_rate, ergodicity_check, lyapunov_slope, mean_and_sd, median,
    moment_bound_check, time_average, time_average_with_error, window_samples, Check,
    DiagnosticsError, ErgodicityInput, MomentCheckpoint, Series, SlopeEstimate, TimeAverage,
    VerdictReport, ERGODIC_ANCHOR,
};
use crate::engine::{simulate_path_indexed, SimConfig, SimError};
use crate::ensemble::{checkpoint_index, run_paths, MAX_DIVERGED_FRACTION};
use crate::levy::LevyError;
use crate::model::{check_assumptions, AssumptionReport, ModelError, StateTriple};
use crate::threshold::{threshold_report, Regime, ThresholdReport};

/// Level below which the infected class counts as extinct.
pub const EXTINCTION_LEVEL: f64 = 1e-3;
/// Relative band around `A/μ₁` for the ψ time average.
pub const AUX_BAND: f64 = 0.03;
/// Required share of paths inside the band.
pub const AUX_PASS_FRACTION: f64 = 0.95;
/// Largest tolerated per-path rate of `S > ψ (1 + 10⁻⁶)`.
pub const MAX_COMPARISON_RATE: f64 = 1e-3;
/// Required share of persisting paths in the ergodic regime.
pub const PERSISTENCE_FRACTION: f64 = 0.95;
/// Required share of extinct paths in the extinct regime.
pub const EXTINCT_FRACTION: f64 = 0.90;
/// Half-width around zero for the median ln I slope in the ergodic regime.
pub const ERGODIC_SLOPE_BAND: f64 = 0.002;

const AUX_ANCHOR: &str = "time average of the auxiliary process";
const THRESHOLD_ANCHOR: &str = "stochastic threshold";
const COMPARISON_ANCHOR: &str = "pathwise comparison S <= psi";
const POSITIVITY_ANCHOR: &str = "positive global solution";
const EXTINCTION_ANCHOR: &str = "exponential extinction of I";

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("hard assumption failure: {0}")]
    HardAssumption(String),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Levy(#[from] LevyError),

    #[error(transparent)]
    Sim(#[from] SimError),

    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),

    #[error("{diverged} of {total} paths diverged (limit 1%)")]
    TooManyDiverged { diverged: u64, total: u64 },
}

/// Everything the suite needs, resolved from a [`RunConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyPlan {
    /// Per-path settings; always coupled to ψ.
    pub sim: SimConfig,
    pub n_paths: u64,
    pub workers: usize,
    pub p: f64,
    pub checkpoints: Vec<f64>,
    pub burn_in: f64,
    pub tail_fraction: f64,
    pub margin: f64,
    pub slope_tolerance: f64,
    pub thin_every: f64,
    pub batches: usize,
}

impl VerifyPlan {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, ConfigError> {
        let mut sim = cfg.sim_config()?;
        sim.couple_aux = true;
        let spec = cfg.ensemble_spec()?;
        let v = &cfg.verify;
        Ok(Self {
            n_paths: spec.n_paths,
            workers: spec.workers,
            p: spec.p,
            checkpoints: spec.checkpoints,
            burn_in: v.burn_in.unwrap_or(0.1 * sim.t_end),
            tail_fraction: v.tail_fraction,
            margin: v.margin,
            slope_tolerance: v.slope_tolerance,
            thin_every: v.thin_every,
            batches: v.batches,
            sim,
        })
    }
}

/// Per-path reductions, in path-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStats {
    pub path_index: u64,
    pub aux_average: f64,
    pub infected_average: TimeAverage,
    pub violation_rate: f64,
    pub slope: Option<SlopeEstimate>,
    pub initial_log_i: f64,
    pub final_log_i: f64,
    pub terminal: StateTriple,
    pub positive: bool,
    /// `(S+I)^{2p}` at each checkpoint.
    pub moments: Vec<f64>,
    /// Thinned I samples in `[T/2, 3T/4)`; only kept in the ergodic regime.
    pub early_window: Vec<f64>,
    /// Thinned I samples in `[3T/4, T]`.
    pub late_window: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct VerifyRun {
    pub threshold: ThresholdReport,
    pub assumptions: AssumptionReport,
    pub checkpoints: Vec<f64>,
    pub paths: Vec<PathStats>,
    pub n_diverged: u64,
    pub report: VerdictReport,
}

impl VerifyRun {
    pub fn moment_checkpoints(&self) -> Vec<MomentCheckpoint> {
        (0..self.checkpoints.len())
            .map(|k| {
                let v: Vec<f64> = self.paths.iter().map(|p| p.moments[k]).collect();
                let (mean, sd) = mean_and_sd(&v);
                MomentCheckpoint {
                    t: self.checkpoints[k],
                    mean,
                    std_error: sd / (v.len() as f64).sqrt(),
                }
            })
            .collect()
    }

    /// Share of paths satisfying `pred`.
    pub fn fraction(&self, pred: impl Fn(&PathStats) -> bool) -> f64 {
        self.paths.iter().filter(|p| pred(p)).count() as f64 / self.paths.len().max(1) as f64
    }

    /// Median ln I slope over paths with a usable regression window.
    pub fn median_slope(&self) -> Option<f64> {
        let slopes: Vec<f64> = self
            .paths
            .iter()
            .filter_map(|p| p.slope.map(|s| s.slope))
            .collect();
        (!slopes.is_empty()).then(|| median(&slopes))
    }
}

fn reduce_path(
    plan: &VerifyPlan,
    path_index: u64,
    keep_windows: bool,
) -> Result<Option<PathStats>, VerifyError> {
    let rec = match simulate_path_indexed(&plan.sim, path_index) {
        Ok(rec) => rec,
        Err(SimError::Divergence { .. }) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let (early_window, late_window) = if keep_windows {
        window_samples(&rec, Series::I, plan.thin_every)?
    } else {
        (Vec::new(), Vec::new())
    };
    let terminal = *rec.last_state().ok_or(DiagnosticsError::EmptySample)?;
    let moments = plan
        .checkpoints
        .iter()
        .map(|&t| {
            let x = rec.states[checkpoint_index(&rec.times, t).unwrap_or(rec.len() - 1)];
            (x.s + x.i).powf(2.0 * plan.p)
        })
        .collect();
    Ok(Some(PathStats {
        path_index,
        aux_average: time_average(&rec, Series::Psi, plan.burn_in)?,
        infected_average: time_average_with_error(&rec, Series::I, plan.burn_in, plan.batches)?,
        violation_rate: comparison_violation_rate(&rec)?,
        slope: lyapunov_slope(&rec, plan.tail_fraction).ok(),
        initial_log_i: rec.log_infected[0],
        final_log_i: *rec.log_infected.last().expect("non-empty record"),
        terminal,
        positive: rec.all_positive(),
        moments,
        early_window,
        late_window,
    }))
}

/// Threshold and assumption analysis; fails before any simulation on a
/// hard assumption violation.
pub fn preflight(plan: &VerifyPlan) -> Result<(ThresholdReport, AssumptionReport), VerifyError> {
    let assumptions = check_assumptions(&plan.sim.params, &plan.sim.noise, plan.p)?;
    if let Some(msg) = assumptions.hard_failure() {
        return Err(VerifyError::HardAssumption(msg));
    }
    let threshold = threshold_report(&plan.sim.params, &plan.sim.noise, plan.margin)?;
    Ok((threshold, assumptions))
}

pub fn run_verification(plan: &VerifyPlan) -> Result<VerifyRun, VerifyError> {
    let (threshold, assumptions) = preflight(plan)?;
    plan.sim.validate()?;
    let t_end = plan.sim.n_steps() as f64 * plan.sim.dt;
    let checkpoints: Vec<f64> = plan
        .checkpoints
        .iter()
        .copied()
        .filter(|&t| (0.0..=t_end + 1e-9).contains(&t))
        .collect();
    let plan = VerifyPlan {
        checkpoints,
        ..plan.clone()
    };
    let keep_windows = threshold.regime == Regime::Ergodic;

    let results = run_paths(plan.n_paths, plan.workers, |k| {
        reduce_path(&plan, k, keep_windows)
    });
    let mut paths = Vec::with_capacity(results.len());
    let mut n_diverged = 0;
    for r in results {
        match r? {
            Some(p) => paths.push(p),
            None => n_diverged += 1,
        }
    }
    if paths.is_empty() || n_diverged as f64 > MAX_DIVERGED_FRACTION * plan.n_paths as f64 {
        return Err(VerifyError::TooManyDiverged {
            diverged: n_diverged,
            total: plan.n_paths,
        });
    }

    let mut run = VerifyRun {
        threshold,
        assumptions,
        checkpoints: plan.checkpoints.clone(),
        paths,
        n_diverged,
        report: VerdictReport::default(),
    };
    run.report = build_report(&plan, &run)?;
    Ok(run)
}

fn build_report(plan: &VerifyPlan, run: &VerifyRun) -> Result<VerdictReport, VerifyError> {
    let mut report = VerdictReport::default();
    let th = &run.threshold;
    let params = &plan.sim.params;

    report.push(Check::at_most(
        "t0s_at_most_r0",
        th.t0s,
        th.r0,
        0.0,
        THRESHOLD_ANCHOR,
    ));

    let target = params.a / params.mu1;
    let inside = run.fraction(|p| (p.aux_average - target).abs() <= AUX_BAND * target);
    let (aux_mean, _) = mean_and_sd(&run.paths.iter().map(|p| p.aux_average).collect::<Vec<_>>());
    report.push(
        Check::at_least(
            "aux_time_average",
            inside,
            AUX_PASS_FRACTION,
            0.0,
            AUX_ANCHOR,
        )
        .with_note(format!(
            "mean psi average {aux_mean:.6} vs A/mu1 = {target:.6}"
        )),
    );

    let moments = run.moment_checkpoints();
    match &run.assumptions.moments {
        Some(constants) => report.push(moment_bound_check(&moments, constants, &plan.sim.initial)),
        None => report.push(Check::skipped(
            "moment_bound",
            crate::diagnostics::MOMENT_ANCHOR,
            "moment constants unavailable",
        )),
    }

    let worst = run
        .paths
        .iter()
        .map(|p| p.violation_rate)
        .fold(0.0, f64::max);
    report.push(Check::at_most(
        "comparison_rate",
        worst,
        MAX_COMPARISON_RATE,
        0.0,
        COMPARISON_ANCHOR,
    ));

    let positive = run.fraction(|p| p.positive);
    report.push(Check::at_least(
        "positivity",
        positive,
        1.0,
        0.0,
        POSITIVITY_ANCHOR,
    ));

    let median_slope = run.median_slope();
    let persisting = run.fraction(|p| p.terminal.i > EXTINCTION_LEVEL);
    match th.regime {
        Regime::Ergodic => {
            let early: Vec<f64> = run
                .paths
                .iter()
                .flat_map(|p| p.early_window.iter().copied())
                .collect();
            let late: Vec<f64> = run
                .paths
                .iter()
                .flat_map(|p| p.late_window.iter().copied())
                .collect();
            let terminal: Vec<f64> = run.paths.iter().map(|p| p.terminal.i).collect();
            let input = ErgodicityInput {
                early_window: &early,
                late_window: &late,
                path_average: run.paths[0].infected_average,
                terminal: &terminal,
            };
            for c in ergodicity_check(th.regime, &input)? {
                report.push(c);
            }
            report.push(Check::at_least(
                "persistence_fraction",
                persisting,
                PERSISTENCE_FRACTION,
                0.0,
                ERGODIC_ANCHOR,
            ));
            report.push(slope_check(
                "ergodic_slope",
                median_slope,
                0.0,
                ERGODIC_SLOPE_BAND,
                ERGODIC_ANCHOR,
            ));
            push_skipped(
                &mut report,
                &["extinction_slope", "extinct_fraction"],
                EXTINCTION_ANCHOR,
                "regime is ergodic",
            );
        }
        Regime::Extinct => {
            report.push(slope_check(
                "extinction_slope",
                median_slope,
                th.extinction_exponent,
                plan.slope_tolerance,
                EXTINCTION_ANCHOR,
            ));
            report.push(Check::at_least(
                "extinct_fraction",
                1.0 - persisting,
                EXTINCT_FRACTION,
                0.0,
                EXTINCTION_ANCHOR,
            ));
            let why = DiagnosticsError::WrongRegime(th.regime).to_string();
            push_skipped(
                &mut report,
                &[
                    "ks_window_stability",
                    "time_vs_ensemble_mean",
                    "persistence_fraction",
                    "ergodic_slope",
                ],
                ERGODIC_ANCHOR,
                &why,
            );
        }
        Regime::Critical => {
            let why = "regime is critical; no long-run claim applies";
            push_skipped(
                &mut report,
                &[
                    "ks_window_stability",
                    "time_vs_ensemble_mean",
                    "persistence_fraction",
                    "ergodic_slope",
                ],
                ERGODIC_ANCHOR,
                why,
            );
            push_skipped(
                &mut report,
                &["extinction_slope", "extinct_fraction"],
                EXTINCTION_ANCHOR,
                why,
            );
        }
    }
    Ok(report)
}

fn slope_check(
    name: &str,
    median: Option<f64>,
    target: f64,
    tol: f64,
    anchor: &'static str,
) -> Check {
    match median {
        Some(m) => Check::two_sided(name, m, target, tol, anchor),
        None => Check::two_sided(name, f64::NAN, target, tol, anchor)
            .with_note("no path had a long enough regression window"),
    }
}

fn push_skipped(report: &mut VerdictReport, names: &[&str], anchor: &'static str, why: &str) {
    for name in names {
        report.push(Check::skipped(name, anchor, why));
    }
}
