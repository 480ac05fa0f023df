//! Parallel path ensembles with results independent of worker count.
//!
//! Each path draws from its own stream keyed by `(seed, path_index)` and
//! results are merged in path-index order, so summaries are identical for
//! any number of workers.

use rayon::prelude::*;

use crate::diagnostics::{
    empirical_distribution, mean_and_sd, quantile_sorted, DiagnosticsError, Histogram,
    MomentCheckpoint,
};
use crate::engine::{simulate_path_indexed, SimConfig, SimError, TrajectoryRecord};
use crate::model::{Component, StateTriple};

/// Largest tolerated fraction of diverged paths.
pub const MAX_DIVERGED_FRACTION: f64 = 0.01;

/// Maps `f` over path indices `0..n_paths` on `workers` threads, preserving
/// index order.
pub fn run_paths<T, F>(n_paths: u64, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| (0..n_paths).into_par_iter().map(&f).collect())
}

/// Worker count from `LEVYSIR_WORKERS` when set, else `fallback`.
pub fn workers_from_env(fallback: usize) -> usize {
    std::env::var("LEVYSIR_WORKERS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or(fallback)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub n_paths: u64,
    pub workers: usize,
    pub checkpoints: Vec<f64>,
    pub bins: usize,
    /// Moment exponent for the `(S+I)^{2p}` trajectory.
    pub p: f64,
}

/// Index of the first recorded point at or after `t` (within rounding).
pub fn checkpoint_index(times: &[f64], t: f64) -> Option<usize> {
    let k = times.partition_point(|&x| x < t - 1e-9);
    (k < times.len()).then_some(k)
}

/// Cross-sectional statistics of one component at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossSection {
    pub mean: f64,
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
}

impl CrossSection {
    pub fn from_values(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (mean, _) = mean_and_sd(values);
        Self {
            mean,
            q05: quantile_sorted(&sorted, 0.05),
            q25: quantile_sorted(&sorted, 0.25),
            q50: quantile_sorted(&sorted, 0.5),
            q75: quantile_sorted(&sorted, 0.75),
            q95: quantile_sorted(&sorted, 0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub n_paths: u64,
    pub n_diverged: u64,
    pub checkpoints: Vec<f64>,
    /// `cross[c][k]`: component `c` (S, I, R) at checkpoint `k`.
    pub cross: [Vec<CrossSection>; 3],
    /// Terminal histograms of S, I, R.
    pub histograms: [Histogram; 3],
    /// Terminal values of S, I, R per surviving path, in path order.
    pub terminal: [Vec<f64>; 3],
    pub moments: Vec<MomentCheckpoint>,
    pub all_positive: bool,
}

impl EnsembleSummary {
    pub fn diverged_fraction(&self) -> f64 {
        self.n_diverged as f64 / self.n_paths.max(1) as f64
    }

    pub fn histogram(&self, c: Component) -> &Histogram {
        &self.histograms[c as usize]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EnsembleError {
    #[error(transparent)]
    Sim(#[from] SimError),

    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),

    #[error("ensemble needs at least one path")]
    NoPaths,

    #[error("{diverged} of {total} paths diverged (limit 1%)")]
    TooManyDiverged { diverged: u64, total: u64 },
}

struct PathValues {
    at_checkpoints: Vec<StateTriple>,
    positive: bool,
}

fn reduce_path(rec: &TrajectoryRecord, checkpoints: &[f64]) -> PathValues {
    let at_checkpoints = checkpoints
        .iter()
        .map(|&t| {
            let k = checkpoint_index(&rec.times, t).unwrap_or(rec.len() - 1);
            rec.states[k]
        })
        .collect();
    PathValues {
        at_checkpoints,
        positive: rec.all_positive(),
    }
}

/// Runs the ensemble and reduces it to cross-sectional summaries.
///
/// Diverged paths are excluded and counted; more than 1% divergence fails.
pub fn run_ensemble(
    config: &SimConfig,
    spec: &EnsembleSpec,
) -> Result<EnsembleSummary, EnsembleError> {
    if spec.n_paths == 0 {
        return Err(EnsembleError::NoPaths);
    }
    config.validate()?;
    let t_end = config.n_steps() as f64 * config.dt;
    let mut checkpoints: Vec<f64> = spec
        .checkpoints
        .iter()
        .copied()
        .filter(|&t| t >= 0.0 && t <= t_end + 1e-9)
        .collect();
    if checkpoints.last().is_none_or(|&t| (t - t_end).abs() > 1e-9) {
        checkpoints.push(t_end);
    }

    let results = run_paths(
        spec.n_paths,
        spec.workers,
        |k| match simulate_path_indexed(config, k) {
            Ok(rec) => Ok(Some(reduce_path(&rec, &checkpoints))),
            Err(SimError::Divergence { .. }) => Ok(None),
            Err(e) => Err(e),
        },
    );

    let mut paths = Vec::with_capacity(results.len());
    let mut n_diverged = 0;
    for r in results {
        match r? {
            Some(p) => paths.push(p),
            None => n_diverged += 1,
        }
    }
    if n_diverged as f64 > MAX_DIVERGED_FRACTION * spec.n_paths as f64 || paths.is_empty() {
        return Err(EnsembleError::TooManyDiverged {
            diverged: n_diverged,
            total: spec.n_paths,
        });
    }

    let column = |k: usize, c: Component| -> Vec<f64> {
        paths
            .iter()
            .map(|p| p.at_checkpoints[k].component(c))
            .collect()
    };
    let cross = Component::ALL.map(|c| {
        (0..checkpoints.len())
            .map(|k| CrossSection::from_values(&column(k, c)))
            .collect()
    });
    let last = checkpoints.len() - 1;
    let terminal = Component::ALL.map(|c| column(last, c));
    let histograms = [0, 1, 2].map(|c| empirical_distribution(&terminal[c], spec.bins));
    let [hs, hi, hr] = histograms;
    let moments = (0..checkpoints.len())
        .map(|k| {
            let v: Vec<f64> = paths
                .iter()
                .map(|p| {
                    let x = p.at_checkpoints[k];
                    (x.s + x.i).powf(2.0 * spec.p)
                })
                .collect();
            let (mean, sd) = mean_and_sd(&v);
            MomentCheckpoint {
                t: checkpoints[k],
                mean,
                std_error: sd / (v.len() as f64).sqrt(),
            }
        })
        .collect();

    Ok(EnsembleSummary {
        n_paths: spec.n_paths,
        n_diverged,
        all_positive: paths.iter().all(|p| p.positive),
        checkpoints,
        cross,
        histograms: [hs?, hi?, hr?],
        terminal,
        moments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n_paths: u64, workers: usize) -> EnsembleSpec {
        EnsembleSpec {
            n_paths,
            workers,
            checkpoints: vec![0.0, 10.0, 20.0],
            bins: 10,
            p: 1.0,
        }
    }

    #[test]
    fn order_preserved_across_workers() {
        let a = run_paths(50, 1, |k| k * k);
        let b = run_paths(50, 4, |k| k * k);
        assert_eq!(a, b);
        assert_eq!(a[7], 49);
    }

    #[test]
    fn summary_independent_of_workers() {
        let cfg = SimConfig::reference(30.0);
        let one = run_ensemble(&cfg, &spec(24, 1)).unwrap();
        let many = run_ensemble(&cfg, &spec(24, 8)).unwrap();
        assert_eq!(one, many);
        assert_eq!(one.checkpoints, vec![0.0, 10.0, 20.0, 30.0]);
        assert!(one.all_positive);
        for c in Component::ALL {
            assert_eq!(one.histogram(c).total(), 24);
        }
    }

    #[test]
    fn single_path_summary_matches_trajectory() {
        let cfg = SimConfig::reference(30.0);
        let summary = run_ensemble(&cfg, &spec(1, 1)).unwrap();
        let rec = simulate_path_indexed(&cfg, 0).unwrap();
        let last = rec.last_state().unwrap();
        let cs = summary.cross[1].last().unwrap();
        assert_eq!(cs.mean, last.i);
        assert_eq!(cs.q05, last.i);
        assert_eq!(summary.terminal[0], vec![last.s]);
        let m = summary.moments.last().unwrap();
        assert_eq!(m.mean, (last.s + last.i).powi(2));
        assert_eq!(m.std_error, 0.0);
    }

    #[test]
    fn zero_paths_rejected() {
        let cfg = SimConfig::reference(1.0);
        assert!(matches!(
            run_ensemble(&cfg, &spec(0, 1)),
            Err(EnsembleError::NoPaths)
        ));
    }

    #[test]
    fn checkpoint_lookup() {
        let t = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(checkpoint_index(&t, 2.0), Some(2));
        assert_eq!(checkpoint_index(&t, 2.0 + 1e-12), Some(2));
        assert_eq!(checkpoint_index(&t, 1.5), Some(2));
        assert_eq!(checkpoint_index(&t, 3.5), None);
    }
}
