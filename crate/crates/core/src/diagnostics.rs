//! Empirical statistics over trajectories and ensembles, and the verdict
//! records built from them.

use std::fmt;

use thiserror::Error;

use crate::engine::TrajectoryRecord;
use crate::model::{MomentConstants, StateTriple};
use crate::threshold::Regime;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("empty window: no recorded points in [{from}, {to}]")]
    EmptyWindow { from: f64, to: f64 },

    #[error("empty sample")]
    EmptySample,

    #[error("degenerate regression window ({0} points, need at least {MIN_TAIL_POINTS})")]
    DegenerateWindow(usize),

    #[error("trajectory has no auxiliary channel (simulate with couple_aux)")]
    MissingAux,

    #[error("ergodicity check refused: regime is {0}")]
    WrongRegime(Regime),
}

/// Minimum number of recorded points in the slope regression window.
pub const MIN_TAIL_POINTS: usize = 100;

/// Relative slack in the pathwise comparison `S ≤ ψ`.
pub const COMPARISON_SLACK: f64 = 1e-6;

/// Recorded channel of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    S,
    I,
    R,
    Psi,
}

impl Series {
    fn values(self, traj: &TrajectoryRecord) -> Result<Vec<f64>, DiagnosticsError> {
        let pick = |f: fn(&StateTriple) -> f64| traj.states.iter().map(f).collect();
        Ok(match self {
            Series::S => pick(|x| x.s),
            Series::I => pick(|x| x.i),
            Series::R => pick(|x| x.r),
            Series::Psi => traj.aux.clone().ok_or(DiagnosticsError::MissingAux)?,
        })
    }
}

/// Index range of recorded points with `t ≥ from`.
fn window_start(times: &[f64], from: f64) -> usize {
    times.partition_point(|&t| t < from)
}

fn trapezoid_mean(times: &[f64], values: &[f64]) -> f64 {
    if times.len() == 1 {
        return values[0];
    }
    let mut area = 0.0;
    for k in 1..times.len() {
        area += 0.5 * (values[k] + values[k - 1]) * (times[k] - times[k - 1]);
    }
    area / (times[times.len() - 1] - times[0])
}

/// Trapezoidal time average of a channel over `[burn_in, t_end]`.
pub fn time_average(
    traj: &TrajectoryRecord,
    series: Series,
    burn_in: f64,
) -> Result<f64, DiagnosticsError> {
    let values = series.values(traj)?;
    let start = window_start(&traj.times, burn_in);
    if traj.times.len().saturating_sub(start) < 2 {
        return Err(DiagnosticsError::EmptyWindow {
            from: burn_in,
            to: traj.times.last().copied().unwrap_or(f64::NAN),
        });
    }
    Ok(trapezoid_mean(&traj.times[start..], &values[start..]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeAverage {
    pub mean: f64,
    /// Batch-means standard error.
    pub std_error: f64,
}

/// Time average plus a batch-means standard error from `n_batches`
/// contiguous sub-windows.
pub fn time_average_with_error(
    traj: &TrajectoryRecord,
    series: Series,
    burn_in: f64,
    n_batches: usize,
) -> Result<TimeAverage, DiagnosticsError> {
    let mean = time_average(traj, series, burn_in)?;
    let values = series.values(traj)?;
    let start = window_start(&traj.times, burn_in);
    let n = traj.times.len() - start;
    let n_batches = n_batches.clamp(2, (n - 1).max(2));
    if n < n_batches + 1 {
        return Err(DiagnosticsError::DegenerateWindow(n));
    }
    let segments = n - 1;
    let batch_means: Vec<f64> = (0..n_batches)
        .map(|b| {
            let lo = start + b * segments / n_batches;
            let hi = start + (b + 1) * segments / n_batches;
            trapezoid_mean(&traj.times[lo..=hi], &values[lo..=hi])
        })
        .collect();
    let (_, sd) = mean_and_sd(&batch_means);
    Ok(TimeAverage {
        mean,
        std_error: sd / (n_batches as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeEstimate {
    pub slope: f64,
    /// Three regression standard errors.
    pub half_width: f64,
}

/// Ordinary least squares slope of `values` against `times`.
pub fn regression_slope(times: &[f64], values: &[f64]) -> Result<SlopeEstimate, DiagnosticsError> {
    let n = times.len();
    if n < 3 || n != values.len() {
        return Err(DiagnosticsError::DegenerateWindow(n));
    }
    let nf = n as f64;
    let t_mean = times.iter().sum::<f64>() / nf;
    let y_mean = values.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&t, &y) in times.iter().zip(values) {
        sxx += (t - t_mean) * (t - t_mean);
        sxy += (t - t_mean) * (y - y_mean);
    }
    if sxx <= 0.0 {
        return Err(DiagnosticsError::DegenerateWindow(n));
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * t_mean;
    let rss: f64 = times
        .iter()
        .zip(values)
        .map(|(&t, &y)| (y - intercept - slope * t).powi(2))
        .sum();
    let se = (rss / (nf - 2.0) / sxx).sqrt();
    Ok(SlopeEstimate {
        slope,
        half_width: 3.0 * se,
    })
}

/// Slope of `ln I(t)` over the final `tail_fraction` of the record.
pub fn lyapunov_slope(
    traj: &TrajectoryRecord,
    tail_fraction: f64,
) -> Result<SlopeEstimate, DiagnosticsError> {
    let t0 = traj.times.first().copied().unwrap_or(0.0);
    let t1 = traj.times.last().copied().unwrap_or(0.0);
    let from = t1 - tail_fraction.clamp(0.0, 1.0) * (t1 - t0);
    let start = window_start(&traj.times, from);
    let n = traj.times.len() - start;
    if n < MIN_TAIL_POINTS {
        return Err(DiagnosticsError::DegenerateWindow(n));
    }
    regression_slope(&traj.times[start..], &traj.log_infected[start..])
}

/// Fraction of recorded points where `S > ψ (1 + 10⁻⁶)`.
pub fn comparison_violation_rate(traj: &TrajectoryRecord) -> Result<f64, DiagnosticsError> {
    let aux = traj.aux.as_ref().ok_or(DiagnosticsError::MissingAux)?;
    if aux.is_empty() {
        return Err(DiagnosticsError::EmptySample);
    }
    let violations = traj
        .states
        .iter()
        .zip(aux)
        .filter(|(x, &psi)| x.s > psi * (1.0 + COMPARISON_SLACK))
        .count();
    Ok(violations as f64 / aux.len() as f64)
}

/// Samples of a channel in `[T/2, 3T/4)` and `[3T/4, T]`, thinned to one
/// point per `thin_every` time units.
pub fn window_samples(
    traj: &TrajectoryRecord,
    series: Series,
    thin_every: f64,
) -> Result<(Vec<f64>, Vec<f64>), DiagnosticsError> {
    let values = series.values(traj)?;
    let t_end = *traj.times.last().ok_or(DiagnosticsError::EmptySample)?;
    let (mid, late) = (0.5 * t_end, 0.75 * t_end);
    let mut early = Vec::new();
    let mut tail = Vec::new();
    let mut next = mid;
    for (&t, &v) in traj.times.iter().zip(&values) {
        if t + 1e-9 < next {
            continue;
        }
        if t < late {
            early.push(v);
        } else {
            tail.push(v);
        }
        next = t + thin_every;
    }
    Ok((early, tail))
}

pub fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Linear-interpolation quantile of a sorted sample.
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * level.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, 0.5)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `n_bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Index of the fullest bin (first one on ties).
    pub fn mode_bin(&self) -> usize {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        self.counts.iter().position(|&c| c == max).unwrap_or(0)
    }

    pub fn has_interior_mode(&self) -> bool {
        let m = self.mode_bin();
        m > 0 && m + 1 < self.counts.len()
    }
}

/// Equal-width histogram over `[min, max]`; the last bin is closed.
pub fn empirical_distribution(
    values: &[f64],
    n_bins: usize,
) -> Result<Histogram, DiagnosticsError> {
    if values.is_empty() || n_bins == 0 {
        return Err(DiagnosticsError::EmptySample);
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / n_bins as f64;
    let edges = (0..=n_bins)
        .map(|k| {
            if k == n_bins {
                hi
            } else {
                lo + k as f64 * width
            }
        })
        .collect();
    let mut counts = vec![0u64; n_bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64, DiagnosticsError> {
    if a.is_empty() || b.is_empty() {
        return Err(DiagnosticsError::EmptySample);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        // step both CDFs past the next pooled value, ties together
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "fail",
            Outcome::Skipped => "skipped",
        })
    }
}

/// One named verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub target: f64,
    pub tolerance: f64,
    pub outcome: Outcome,
    /// Which property of the model this check tests.
    pub anchor: &'static str,
    pub note: String,
}

impl Check {
    /// Pass iff `|measured − target| ≤ tolerance`.
    pub fn two_sided(
        name: &str,
        measured: f64,
        target: f64,
        tolerance: f64,
        anchor: &'static str,
    ) -> Self {
        let ok = (measured - target).abs() <= tolerance;
        Self::with(name, measured, target, tolerance, ok, anchor)
    }

    /// Pass iff `measured ≤ target + tolerance`.
    pub fn at_most(
        name: &str,
        measured: f64,
        target: f64,
        tolerance: f64,
        anchor: &'static str,
    ) -> Self {
        let ok = measured <= target + tolerance;
        Self::with(name, measured, target, tolerance, ok, anchor)
    }

    /// Pass iff `measured ≥ target − tolerance`.
    pub fn at_least(
        name: &str,
        measured: f64,
        target: f64,
        tolerance: f64,
        anchor: &'static str,
    ) -> Self {
        let ok = measured >= target - tolerance;
        Self::with(name, measured, target, tolerance, ok, anchor)
    }

    pub fn skipped(name: &str, anchor: &'static str, note: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            measured: f64::NAN,
            target: f64::NAN,
            tolerance: f64::NAN,
            outcome: Outcome::Skipped,
            anchor,
            note: note.into(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    fn with(
        name: &str,
        measured: f64,
        target: f64,
        tolerance: f64,
        ok: bool,
        anchor: &'static str,
    ) -> Self {
        // NaN measurements never pass
        let ok = ok && !measured.is_nan();
        Self {
            name: name.to_string(),
            measured,
            target,
            tolerance,
            outcome: if ok { Outcome::Pass } else { Outcome::Fail },
            anchor,
            note: String::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Pass
    }
}

/// One verdict line: `PASS name measured=... target=... tol=... (note)`.
impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.outcome {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
            Outcome::Skipped => "SKIP",
        };
        write!(f, "{tag} {}", self.name)?;
        if self.outcome != Outcome::Skipped {
            write!(
                f,
                " measured={:.6e} target={:.6e} tol={:.3e}",
                self.measured, self.target, self.tolerance
            )?;
        }
        if !self.note.is_empty() {
            write!(f, " ({})", self.note)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerdictReport {
    pub checks: Vec<Check>,
}

impl VerdictReport {
    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn failures(&self) -> usize {
        self.checks
            .iter()
            .filter(|c| c.outcome == Outcome::Fail)
            .count()
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Cross-sectional mean and standard error of `(S+I)^{2p}` at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentCheckpoint {
    pub t: f64,
    pub mean: f64,
    pub std_error: f64,
}

pub const MOMENT_ANCHOR: &str = "moment bound on (S+I)^{2p}";

/// Compares each checkpoint mean plus three standard errors with the
/// moment bound; passes when it holds at ≥ 99% of checkpoints.
pub fn moment_bound_check(
    checkpoints: &[MomentCheckpoint],
    constants: &MomentConstants,
    initial: &StateTriple,
) -> Check {
    const NAME: &str = "moment_bound";
    if !constants.a4_satisfied() || constants.chi1.is_none() {
        return Check::skipped(NAME, MOMENT_ANCHOR, "A4 violated for this p");
    }
    if checkpoints.is_empty() {
        return Check::skipped(NAME, MOMENT_ANCHOR, "no checkpoints");
    }
    let held = checkpoints
        .iter()
        .filter(|c| {
            let bound = constants.moment_bound(initial, c.t).expect("bound defined");
            c.mean + 3.0 * c.std_error <= bound
        })
        .count();
    let fraction = held as f64 / checkpoints.len() as f64;
    Check::at_least(NAME, fraction, 0.99, 0.0, MOMENT_ANCHOR).with_note(format!(
        "{held}/{} checkpoints below bound; long-run level {:.6}",
        checkpoints.len(),
        constants.asymptotic_bound().unwrap_or(f64::NAN)
    ))
}

pub const ERGODIC_ANCHOR: &str = "ergodic stationary distribution";

/// Inputs to [`ergodicity_check`], gathered from an ensemble.
#[derive(Debug, Clone, Copy)]
pub struct ErgodicityInput<'a> {
    /// Thinned samples of the channel in `[T/2, 3T/4)`, pooled over paths.
    pub early_window: &'a [f64],
    /// Thinned samples in `[3T/4, T]`.
    pub late_window: &'a [f64],
    /// Long-run time average along one path.
    pub path_average: TimeAverage,
    /// Channel values of every path at the terminal time.
    pub terminal: &'a [f64],
}

/// KS window-stability gate.
pub const KS_GATE: f64 = 0.05;

/// Window stability and time-vs-ensemble agreement.
pub fn ergodicity_check(
    regime: Regime,
    input: &ErgodicityInput<'_>,
) -> Result<Vec<Check>, DiagnosticsError> {
    if regime != Regime::Ergodic {
        return Err(DiagnosticsError::WrongRegime(regime));
    }
    let ks = ks_distance(input.early_window, input.late_window)?;
    let stability = Check::at_most("ks_window_stability", ks, KS_GATE, 0.0, ERGODIC_ANCHOR)
        .with_note(format!(
            "{} vs {} thinned samples",
            input.early_window.len(),
            input.late_window.len()
        ));

    if input.terminal.is_empty() {
        return Err(DiagnosticsError::EmptySample);
    }
    let (ens_mean, ens_sd) = mean_and_sd(input.terminal);
    let ens_se = ens_sd / (input.terminal.len() as f64).sqrt();
    let combined = (ens_se.powi(2) + input.path_average.std_error.powi(2)).sqrt();
    let agreement = Check::two_sided(
        "time_vs_ensemble_mean",
        input.path_average.mean,
        ens_mean,
        3.0 * combined,
        ERGODIC_ANCHOR,
    );
    Ok(vec![stability, agreement])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::path_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn record(times: Vec<f64>, s: &[f64], i: &[f64], aux: Option<Vec<f64>>) -> TrajectoryRecord {
        TrajectoryRecord {
            states: s
                .iter()
                .zip(i)
                .map(|(&s, &i)| StateTriple::new(s, i, 1.0))
                .collect(),
            log_infected: i.iter().map(|v| v.ln()).collect(),
            times,
            aux,
            seed: 0,
            path_index: 0,
            config_hash: 0,
        }
    }

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|k| k as f64 * dt).collect()
    }

    #[test]
    fn constant_series_average() {
        let t = grid(101, 0.5);
        let c = vec![2.5; 101];
        let rec = record(t, &c, &c, Some(c.clone()));
        for burn in [0.0, 10.0, 49.0] {
            assert!((time_average(&rec, Series::I, burn).unwrap() - 2.5).abs() < 1e-14);
            assert!((time_average(&rec, Series::Psi, burn).unwrap() - 2.5).abs() < 1e-14);
        }
        assert!(matches!(
            time_average(&rec, Series::S, 50.0),
            Err(DiagnosticsError::EmptyWindow { .. })
        ));
    }

    #[test]
    fn trapezoid_is_exact_for_linear() {
        let t = grid(11, 1.0);
        let v: Vec<f64> = t.iter().map(|x| 1.0 + 2.0 * x).collect();
        let rec = record(t, &v, &v, None);
        assert!((time_average(&rec, Series::S, 2.0).unwrap() - 13.0).abs() < 1e-12);
        assert_eq!(
            time_average(&rec, Series::Psi, 0.0),
            Err(DiagnosticsError::MissingAux)
        );
    }

    #[test]
    fn exact_exponential_slope() {
        let t = grid(1001, 1.0);
        let i: Vec<f64> = t.iter().map(|x| (-0.01 * x).exp()).collect();
        let rec = record(t, &i, &i, None);
        let est = lyapunov_slope(&rec, 0.5).unwrap();
        assert!((est.slope + 0.01).abs() < 1e-12);
        assert!(est.half_width < 1e-9);
    }

    #[test]
    fn short_tail_is_degenerate() {
        let t = grid(150, 1.0);
        let i = vec![1.0; 150];
        let rec = record(t, &i, &i, None);
        assert!(matches!(
            lyapunov_slope(&rec, 0.5),
            Err(DiagnosticsError::DegenerateWindow(_))
        ));
    }

    #[test]
    fn slope_recovered_within_half_width() {
        // multiplicative bounded noise in [0.5, 1.5]; 3-SE half-width should
        // cover the true rate in nearly every case
        let mut covered = 0;
        let cases = 60;
        for case in 0..cases {
            let mut rng = path_rng(99, case);
            let c = rng.random_range(-0.05..0.05);
            let t = grid(400, 0.5);
            let i: Vec<f64> = t
                .iter()
                .map(|x| (c * x).exp() * rng.random_range(0.5..1.5))
                .collect();
            let rec = record(t, &i, &i, None);
            let est = lyapunov_slope(&rec, 0.5).unwrap();
            if (est.slope - c).abs() <= est.half_width {
                covered += 1;
            }
        }
        assert!(covered >= cases - 2, "{covered}/{cases}");
    }

    #[test]
    fn ks_examples() {
        let x = [3.0, 1.0, 2.0, 2.0, 7.5];
        assert_eq!(ks_distance(&x, &x).unwrap(), 0.0);
        assert_eq!(ks_distance(&[1.0, 2.0], &[5.0, 6.0, 7.0]).unwrap(), 1.0);
        let d = ks_distance(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 5.0]).unwrap();
        assert!((d - 0.25).abs() < 1e-15);
        assert_eq!(ks_distance(&[], &x), Err(DiagnosticsError::EmptySample));
    }

    /// Brute-force oracle: evaluate both CDFs at every pooled point.
    fn ks_brute(a: &[f64], b: &[f64]) -> f64 {
        let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        a.iter()
            .chain(b)
            .map(|&x| (cdf(a, x) - cdf(b, x)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn histogram_counts_and_mode() {
        let v = [0.0, 0.1, 0.5, 0.5, 0.55, 0.9, 1.0];
        let h = empirical_distribution(&v, 4).unwrap();
        assert_eq!(h.total(), v.len() as u64);
        assert_eq!(h.edges.len(), 5);
        assert_eq!(h.counts, vec![2, 0, 3, 2]);
        assert_eq!(h.mode_bin(), 2);
        assert!(h.has_interior_mode());
        assert!(empirical_distribution(&[], 4).is_err());
        let flat = empirical_distribution(&[2.0, 2.0], 3).unwrap();
        assert_eq!(flat.counts, vec![2, 0, 0]);
    }

    #[test]
    fn comparison_rate_counts_violations() {
        let t = grid(4, 1.0);
        let s = [1.0, 1.0, 2.0, 1.0];
        let rec = record(t.clone(), &s, &s, Some(vec![1.0, 1.0 + 1e-7, 1.0, 1.0]));
        assert_eq!(comparison_violation_rate(&rec).unwrap(), 0.25);
        let no_aux = record(t, &s, &s, None);
        assert_eq!(
            comparison_violation_rate(&no_aux),
            Err(DiagnosticsError::MissingAux)
        );
    }

    #[test]
    fn window_sampling_thins() {
        let t = grid(10_001, 0.01);
        let v: Vec<f64> = t.clone();
        let rec = record(t, &v, &v, None);
        let (early, late) = window_samples(&rec, Series::I, 1.0).unwrap();
        assert!((early[0] - 50.0).abs() < 1e-9);
        assert_eq!(early.len(), 25);
        assert_eq!(late.len(), 26);
        assert!((early[1] - early[0] - 1.0).abs() < 1e-9);
        assert!((late[0] - 75.0).abs() < 1e-9);
    }

    #[test]
    fn ergodicity_harness_on_white_noise() {
        let mut rng = path_rng(5, 0);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| 3.0 + 0.2 * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let early = draw(4000);
        let late = draw(4000);
        let terminal = draw(1000);
        let t = grid(5001, 1.0);
        let i = draw(5001);
        let rec = record(t, &i, &i, None);
        let avg = time_average_with_error(&rec, Series::I, 500.0, 20).unwrap();
        let checks = ergodicity_check(
            Regime::Ergodic,
            &ErgodicityInput {
                early_window: &early,
                late_window: &late,
                path_average: avg,
                terminal: &terminal,
            },
        )
        .unwrap();
        assert!(checks.iter().all(Check::passed), "{checks:?}");
    }

    #[test]
    fn ergodicity_refused_outside_regime() {
        let x = [1.0];
        let input = ErgodicityInput {
            early_window: &x,
            late_window: &x,
            path_average: TimeAverage {
                mean: 1.0,
                std_error: 0.0,
            },
            terminal: &x,
        };
        let err = ergodicity_check(Regime::Extinct, &input).unwrap_err();
        assert_eq!(
            err.to_string(),
            "ergodicity check refused: regime is extinct"
        );
    }

    fn constants(chi1: f64) -> MomentConstants {
        MomentConstants {
            p: 1.0,
            ell: 0.0825,
            chi2: 0.00555,
            chi1: Some(chi1),
            kappa: 0.0,
        }
    }

    #[test]
    fn moment_check_reference_levels() {
        let c = constants(0.0081 / 0.0111);
        let x0 = StateTriple::new(0.4, 0.3, 0.1);
        let at0 = c.moment_bound(&x0, 0.0).unwrap();
        assert!((at0 - (0.49 + 0.0081 / (0.00555 * 0.00555))).abs() < 1e-9);
        assert!((at0 - 263.456).abs() < 1e-2);
        let cps = [
            MomentCheckpoint {
                t: 0.0,
                mean: 0.49,
                std_error: 0.0,
            },
            MomentCheckpoint {
                t: 500.0,
                mean: 3.5,
                std_error: 0.05,
            },
        ];
        assert!(moment_bound_check(&cps, &c, &x0).passed());
        let skipped = moment_bound_check(
            &cps,
            &MomentConstants {
                chi2: -0.1,
                chi1: None,
                ..c
            },
            &x0,
        );
        assert_eq!(skipped.outcome, Outcome::Skipped);
    }

    #[test]
    fn batch_means_error_shrinks_for_white_noise() {
        let mut rng = path_rng(1, 1);
        let t = grid(20_001, 1.0);
        let i: Vec<f64> = (0..t.len())
            .map(|_| 1.0 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let rec = record(t, &i, &i, None);
        let avg = time_average_with_error(&rec, Series::I, 0.0, 20).unwrap();
        // iid unit variance over ~2e4 points: SE about 0.007
        assert!((0.003..0.015).contains(&avg.std_error), "{avg:?}");
        assert!((avg.mean - 1.0).abs() < 4.0 * avg.std_error);
    }

    proptest::proptest! {
        #[test]
        fn ks_matches_brute_force_and_is_symmetric(
            a in proptest::collection::vec(0u8..20, 1..40),
            b in proptest::collection::vec(0u8..20, 1..40),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let d = ks_distance(&a, &b).unwrap();
            proptest::prop_assert!((0.0..=1.0).contains(&d));
            proptest::prop_assert!((d - ks_brute(&a, &b)).abs() < 1e-12);
            proptest::prop_assert_eq!(d, ks_distance(&b, &a).unwrap());
            let mut sa = a.clone();
            let mut sb = b.clone();
            sa.sort_by(f64::total_cmp);
            sa.dedup();
            sb.sort_by(f64::total_cmp);
            sb.dedup();
            // zero iff the empirical CDFs coincide on the pooled support
            proptest::prop_assert_eq!(d == 0.0, ks_brute(&a, &b) == 0.0);
        }

        #[test]
        fn histogram_conserves_count(v in proptest::collection::vec(-1e3f64..1e3, 1..300), bins in 1usize..60) {
            let h = empirical_distribution(&v, bins).unwrap();
            proptest::prop_assert_eq!(h.total(), v.len() as u64);
            proptest::prop_assert!(h.edges.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn quantiles_are_monotone(v in proptest::collection::vec(-1e3f64..1e3, 1..200), q1 in 0.0f64..1.0, q2 in 0.0f64..1.0) {
            let mut s = v.clone();
            s.sort_by(f64::total_cmp);
            let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
            proptest::prop_assert!(quantile_sorted(&s, lo) <= quantile_sorted(&s, hi));
        }

        #[test]
        fn moment_verdict_monotone_in_bound(
            means in proptest::collection::vec(0.0f64..400.0, 1..30),
            scale in 1.0f64..3.0,
        ) {
            let x0 = StateTriple::new(0.4, 0.3, 0.1);
            let cps: Vec<_> = means.iter().enumerate()
                .map(|(k, &m)| MomentCheckpoint { t: 50.0 * k as f64, mean: m, std_error: 1.0 })
                .collect();
            let base = constants(0.7297);
            let wide = constants(0.7297 * scale);
            let a = moment_bound_check(&cps, &base, &x0);
            let b = moment_bound_check(&cps, &wide, &x0);
            proptest::prop_assert!(!(a.passed() && !b.passed()));
            proptest::prop_assert!(b.measured >= a.measured);
        }
    }
}
