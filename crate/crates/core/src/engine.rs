//! Positivity-preserving log-space Euler–Maruyama integrator for the
//! jump-diffusion SIR system and its auxiliary susceptible-only process.
//!
//! Each compartment `X` evolves as
//!
//! ```text
//! ln X ← ln X + μ_X dt + σ_X ΔW_X + Σ_k ln(1+η_X(u_k)) (N_k − w_k dt)
//! ```
//!
//! where `μ_X` is the Itô drift of `ln X` written against the compensated
//! measure (it already contains `−∫(η − ln(1+η))dν`) and `N_k` is the Poisson
//! count of atom `k` over the step. Jumps therefore multiply `X` by exactly
//! `1 + η_X(u_k)` and positivity holds by construction.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::levy::{JumpBatch, JumpSampler, LevyError};
use crate::model::{validate_params, ModelError, ModelParams, NoiseSpec, StateTriple};

/// `|ln X|` above this is treated as divergence (double-precision exp range).
pub const LOG_GUARD: f64 = 700.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Levy(#[from] LevyError),

    #[error("state must be strictly positive")]
    NonPositiveState,

    #[error("divergence at step {step}: |ln {component}| exceeded {LOG_GUARD}")]
    Divergence {
        step: u64,
        component: &'static str,
        partial: Box<TrajectoryRecord>,
    },
}

fn out_of_range(ln_value: f64) -> bool {
    // NaN counts as out of range.
    !ln_value.is_finite() || ln_value.abs() > LOG_GUARD
}

/// Independent random stream for one path, keyed by `(seed, path_index)`.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub params: ModelParams,
    pub noise: NoiseSpec,
    pub initial: StateTriple,
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    pub record_stride: usize,
    /// Co-simulate the auxiliary process with the same drivers as `S`.
    pub couple_aux: bool,
}

impl SimConfig {
    /// Reference example setup: initial value `(0.4, 0.3, 0.1)`, `dt = 0.01`.
    pub fn reference(t_end: f64) -> Self {
        Self {
            params: ModelParams::reference(),
            noise: NoiseSpec::reference(),
            initial: StateTriple::new(0.4, 0.3, 0.1),
            t_end,
            dt: 0.01,
            seed: 42,
            record_stride: 100,
            couple_aux: false,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        validate_params(&self.params)?;
        self.noise.measure.check_admissible()?;
        if !(self.dt > 0.0 && self.dt.is_finite() && self.t_end.is_finite()) {
            return Err(SimError::InvalidConfig(format!(
                "dt must be > 0 and finite (got {})",
                self.dt
            )));
        }
        if self.dt > self.t_end {
            return Err(SimError::InvalidConfig(format!(
                "dt ({}) must not exceed t_end ({})",
                self.dt, self.t_end
            )));
        }
        if self.record_stride == 0 {
            return Err(SimError::InvalidConfig("record_stride must be >= 1".into()));
        }
        if !self.initial.is_positive() {
            return Err(SimError::InvalidConfig(
                "initial state must be strictly positive".into(),
            ));
        }
        Ok(())
    }

    /// Number of steps; the last grid point is `n_steps · dt ≈ t_end`.
    pub fn n_steps(&self) -> u64 {
        ((self.t_end / self.dt).round() as u64).max(1)
    }

    /// FNV-1a over the debug rendering of the config.
    pub fn config_hash(&self) -> u64 {
        let text = format!("{self:?}");
        text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<StateTriple>,
    pub aux: Option<Vec<f64>>,
    pub log_infected: Vec<f64>,
    pub seed: u64,
    pub path_index: u64,
    pub config_hash: u64,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&StateTriple> {
        self.states.last()
    }

    pub fn all_positive(&self) -> bool {
        self.states.iter().all(StateTriple::is_positive)
            && self.aux.as_ref().is_none_or(|a| a.iter().all(|&v| v > 0.0))
    }
}

/// State-independent parts of the log drifts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftTerms {
    params: ModelParams,
    /// `σ_X²/2 + ∫(η_X − ln(1+η_X))dν` per compartment.
    penalty: [f64; 3],
}

impl DriftTerms {
    pub fn new(params: &ModelParams, noise: &NoiseSpec) -> Result<Self, LevyError> {
        let mut penalty = [0.0; 3];
        for (x, p) in penalty.iter_mut().enumerate() {
            *p = noise.sigma[x].powi(2) / 2.0 + noise.measure.compensator(x)?;
        }
        Ok(Self {
            params: *params,
            penalty,
        })
    }

    #[inline]
    pub fn log_drifts(&self, s: f64, i: f64, r: f64) -> [f64; 3] {
        let p = &self.params;
        [
            p.a / s - p.mu1 - p.beta * i - self.penalty[0],
            p.beta * s - (p.mu2() + p.gamma) - self.penalty[1],
            p.gamma * i / r - p.mu1 - self.penalty[2],
        ]
    }

    /// Drift of `ln ψ`: the susceptible drift without the infection term.
    #[inline]
    pub fn aux_log_drift(&self, psi: f64) -> f64 {
        self.params.a / psi - self.params.mu1 - self.penalty[0]
    }
}

/// Itô drifts of `(ln S, ln I, ln R)` per unit time.
pub fn log_drifts(
    state: &StateTriple,
    params: &ModelParams,
    noise: &NoiseSpec,
) -> Result<[f64; 3], SimError> {
    if !state.is_positive() {
        return Err(SimError::NonPositiveState);
    }
    Ok(DriftTerms::new(params, noise)?.log_drifts(state.s, state.i, state.r))
}

/// Random drivers consumed by one step, shared with the auxiliary process.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepDrivers {
    pub dw: [f64; 3],
    /// Compensated log-jump `Σ_k ln(1+η_X(u_k)) (N_k − w_k dt)` per compartment.
    pub log_jump: [f64; 3],
}

/// Single-path integrator with precomputed constants for a fixed `dt`.
#[derive(Debug, Clone)]
pub struct Stepper {
    drift: DriftTerms,
    sigma: [f64; 3],
    dt: f64,
    sqrt_dt: f64,
    /// `ln(1+η_X(u_k))` per atom.
    log_amp: Vec<[f64; 3]>,
    /// `dt ∫ ln(1+η_X)dν`, the jump compensator over one step.
    log_jump_compensator: [f64; 3],
    sampler: JumpSampler,
    batch: JumpBatch,
}

impl Stepper {
    pub fn new(params: &ModelParams, noise: &NoiseSpec, dt: f64) -> Result<Self, SimError> {
        noise.measure.check_admissible()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SimError::InvalidConfig(format!(
                "dt must be > 0 (got {dt})"
            )));
        }
        let mut log_jump_compensator = [0.0; 3];
        for (x, c) in log_jump_compensator.iter_mut().enumerate() {
            *c = dt * noise.measure.mean_log_jump(x)?;
        }
        Ok(Self {
            drift: DriftTerms::new(params, noise)?,
            sigma: noise.sigma,
            dt,
            sqrt_dt: dt.sqrt(),
            log_amp: noise
                .measure
                .atoms()
                .iter()
                .map(|a| a.eta.map(f64::ln_1p))
                .collect(),
            log_jump_compensator,
            sampler: JumpSampler::new(&noise.measure, dt),
            batch: JumpBatch::default(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn drift_terms(&self) -> &DriftTerms {
        &self.drift
    }

    /// Draws `ΔW₁, ΔW₂, ΔW₃` then one jump batch, in that order.
    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> StepDrivers {
        let mut dw = [0.0; 3];
        for w in dw.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *w = self.sqrt_dt * z;
        }
        self.sampler.sample_into(rng, &mut self.batch);
        let mut log_jump = self.log_jump_compensator.map(|c| -c);
        for &(k, count) in &self.batch.events {
            let n = count as f64;
            for (x, lj) in log_jump.iter_mut().enumerate() {
                *lj += self.log_amp[k][x] * n;
            }
        }
        StepDrivers { dw, log_jump }
    }

    /// Last jump batch drawn by [`Stepper::draw`].
    pub fn last_batch(&self) -> &JumpBatch {
        &self.batch
    }

    /// Log increments of `(S, I, R)` given the drivers.
    #[inline]
    pub fn increments(&self, s: f64, i: f64, r: f64, drivers: &StepDrivers) -> [f64; 3] {
        let mu = self.drift.log_drifts(s, i, r);
        [0, 1, 2].map(|x| mu[x] * self.dt + self.sigma[x] * drivers.dw[x] + drivers.log_jump[x])
    }

    /// Log increment of the auxiliary process; shares `ΔW₁` and the jumps of `S`.
    #[inline]
    pub fn aux_increment(&self, psi: f64, drivers: &StepDrivers) -> f64 {
        self.drift.aux_log_drift(psi) * self.dt
            + self.sigma[0] * drivers.dw[0]
            + drivers.log_jump[0]
    }

    /// One step from `state`.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        state: &StateTriple,
        rng: &mut R,
    ) -> Result<StateTriple, SimError> {
        if !state.is_positive() {
            return Err(SimError::NonPositiveState);
        }
        let drivers = self.draw(rng);
        let inc = self.increments(state.s, state.i, state.r, &drivers);
        let ln = [
            state.s.ln() + inc[0],
            state.i.ln() + inc[1],
            state.r.ln() + inc[2],
        ];
        if let Some(x) = ln.iter().position(|&v| out_of_range(v)) {
            return Err(SimError::Divergence {
                step: 0,
                component: ["S", "I", "R"][x],
                partial: Box::new(TrajectoryRecord {
                    times: vec![],
                    states: vec![*state],
                    aux: None,
                    log_infected: vec![state.i.ln()],
                    seed: 0,
                    path_index: 0,
                    config_hash: 0,
                }),
            });
        }
        Ok(StateTriple::new(ln[0].exp(), ln[1].exp(), ln[2].exp()))
    }
}

/// Simulates path 0 of `config`.
pub fn simulate_path(config: &SimConfig) -> Result<TrajectoryRecord, SimError> {
    simulate_path_indexed(config, 0)
}

/// Simulates one path on the independent stream `(config.seed, path_index)`.
pub fn simulate_path_indexed(
    config: &SimConfig,
    path_index: u64,
) -> Result<TrajectoryRecord, SimError> {
    config.validate()?;
    let mut rng = path_rng(config.seed, path_index);
    let mut stepper = Stepper::new(&config.params, &config.noise, config.dt)?;
    let n_steps = config.n_steps();
    let stride = config.record_stride as u64;
    let capacity = (n_steps / stride + 2) as usize;

    let mut record = TrajectoryRecord {
        times: Vec::with_capacity(capacity),
        states: Vec::with_capacity(capacity),
        aux: config.couple_aux.then(|| Vec::with_capacity(capacity)),
        log_infected: Vec::with_capacity(capacity),
        seed: config.seed,
        path_index,
        config_hash: config.config_hash(),
    };

    let init = config.initial;
    let mut ln = [init.s.ln(), init.i.ln(), init.r.ln()];
    let mut val = [init.s, init.i, init.r];
    let mut ln_psi = ln[0];
    let mut psi = val[0];

    let push = |record: &mut TrajectoryRecord, t: f64, val: &[f64; 3], ln_i: f64, psi: f64| {
        record.times.push(t);
        record.states.push(StateTriple::new(val[0], val[1], val[2]));
        record.log_infected.push(ln_i);
        if let Some(aux) = record.aux.as_mut() {
            aux.push(psi);
        }
    };
    push(&mut record, 0.0, &val, ln[1], psi);

    for k in 1..=n_steps {
        let drivers = stepper.draw(&mut rng);
        let inc = stepper.increments(val[0], val[1], val[2], &drivers);
        for x in 0..3 {
            ln[x] += inc[x];
        }
        if config.couple_aux {
            ln_psi += stepper.aux_increment(psi, &drivers);
        }
        let bad = ln
            .iter()
            .position(|&v| out_of_range(v))
            .map(|x| ["S", "I", "R"][x])
            .or_else(|| out_of_range(ln_psi).then_some("psi"));
        if let Some(component) = bad {
            return Err(SimError::Divergence {
                step: k,
                component,
                partial: Box::new(record),
            });
        }
        for x in 0..3 {
            val[x] = ln[x].exp();
        }
        psi = ln_psi.exp();
        if k % stride == 0 || k == n_steps {
            push(&mut record, k as f64 * config.dt, &val, ln[1], psi);
        }
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::FiniteLevyMeasure;

    fn deterministic_config(t_end: f64, dt: f64) -> SimConfig {
        SimConfig {
            noise: NoiseSpec::none(),
            dt,
            record_stride: 1,
            ..SimConfig::reference(t_end)
        }
    }

    #[test]
    fn reference_drift_of_ln_i() {
        let d = log_drifts(
            &StateTriple::new(0.4, 0.3, 0.1),
            &ModelParams::reference(),
            &NoiseSpec::reference(),
        )
        .unwrap();
        let expected = 0.06 * 0.4 - 0.1 - 0.0032 - (0.02 - 1.02f64.ln());
        assert!((d[1] - expected).abs() < 1e-15);
        assert!((d[1] + 0.0794).abs() < 1e-4);
    }

    #[test]
    fn drift_root_in_s() {
        let p = ModelParams::reference();
        let noise = NoiseSpec::reference();
        let j2 = noise.measure.compensator(1).unwrap();
        let s = (p.mu2() + p.gamma + 0.08f64.powi(2) / 2.0 + j2) / p.beta;
        let d = log_drifts(&StateTriple::new(s, 0.3, 0.1), &p, &noise).unwrap();
        assert!(d[1].abs() < 1e-15, "{}", d[1]);
    }

    #[test]
    fn noise_free_drifts_are_deterministic_log_derivatives() {
        let p = ModelParams::reference();
        let (s, i, r) = (0.4, 0.3, 0.1);
        let d = log_drifts(&StateTriple::new(s, i, r), &p, &NoiseSpec::none()).unwrap();
        let ds = p.a - p.mu1 * s - p.beta * s * i;
        let di = p.beta * s * i - (p.mu2() + p.gamma) * i;
        let dr = p.gamma * i - p.mu1 * r;
        assert!((d[0] - ds / s).abs() < 1e-15);
        assert!((d[1] - di / i).abs() < 1e-15);
        assert!((d[2] - dr / r).abs() < 1e-15);
    }

    #[test]
    fn log_drifts_reject_non_positive_state() {
        let r = log_drifts(
            &StateTriple::new(0.0, 0.3, 0.1),
            &ModelParams::reference(),
            &NoiseSpec::reference(),
        );
        assert!(matches!(r, Err(SimError::NonPositiveState)));
    }

    #[test]
    fn degenerate_noise_step_is_log_euler() {
        let p = ModelParams::reference();
        let mut stepper = Stepper::new(&p, &NoiseSpec::none(), 0.01).unwrap();
        let x = StateTriple::new(0.4, 0.3, 0.1);
        let next = stepper.step(&x, &mut path_rng(1, 0)).unwrap();
        let d = log_drifts(&x, &p, &NoiseSpec::none()).unwrap();
        assert_eq!(next.s, (x.s.ln() + d[0] * 0.01).exp());
        assert_eq!(next.i, (x.i.ln() + d[1] * 0.01).exp());
        assert_eq!(next.r, (x.r.ln() + d[2] * 0.01).exp());
    }

    #[test]
    fn single_jump_multiplies_infected_exactly() {
        let p = ModelParams::reference();
        // rate so large relative to dt that a jump is almost certain
        let noise = NoiseSpec::new(
            [0.0; 3],
            FiniteLevyMeasure::single(1.0, [0.0, 0.02, 0.0]).unwrap(),
        )
        .unwrap();
        let mut stepper = Stepper::new(&p, &noise, 0.5).unwrap();
        let mut rng = path_rng(3, 0);
        let (s, i, r) = (0.4, 0.3, 0.1);
        let mut seen = false;
        for _ in 0..200 {
            let drivers = stepper.draw(&mut rng);
            let count = stepper.last_batch().total_count();
            if count != 1 {
                continue;
            }
            seen = true;
            let inc = stepper.increments(s, i, r, &drivers);
            let no_jump = StepDrivers {
                log_jump: [0.0, -0.5 * 1.02f64.ln(), 0.0],
                ..drivers
            };
            let base = stepper.increments(s, i, r, &no_jump);
            let ratio = (inc[1] - base[1]).exp();
            assert!((ratio - 1.02).abs() < 1e-15, "{ratio}");
        }
        assert!(seen);
    }

    #[test]
    fn step_is_bit_deterministic() {
        let p = ModelParams::reference();
        let run = || {
            let mut stepper = Stepper::new(&p, &NoiseSpec::reference(), 0.01).unwrap();
            let mut rng = path_rng(11, 4);
            let mut x = StateTriple::new(0.4, 0.3, 0.1);
            for _ in 0..1000 {
                x = stepper.step(&x, &mut rng).unwrap();
            }
            x
        };
        let (a, b) = (run(), run());
        assert_eq!(a.s.to_bits(), b.s.to_bits());
        assert_eq!(a.i.to_bits(), b.i.to_bits());
        assert_eq!(a.r.to_bits(), b.r.to_bits());
    }

    #[test]
    fn step_reports_divergence() {
        let p = ModelParams::reference();
        let mut stepper = Stepper::new(&p, &NoiseSpec::none(), 0.01).unwrap();
        let x = StateTriple::new(1.0, (-699.9999f64).exp(), 1.0);
        // ln I drifts down by ~4e-4 per step and crosses the guard
        let r = stepper.step(&x, &mut path_rng(0, 0));
        assert!(
            matches!(r, Err(SimError::Divergence { component: "I", .. })),
            "{r:?}"
        );
    }

    #[test]
    fn one_step_horizon_records_two_points() {
        let cfg = SimConfig {
            t_end: 0.01,
            record_stride: 1,
            ..SimConfig::reference(0.01)
        };
        let rec = simulate_path(&cfg).unwrap();
        assert_eq!(rec.times, vec![0.0, 0.01]);
        assert!(rec.aux.is_none());
    }

    #[test]
    fn stride_grid_arithmetic() {
        let cfg = SimConfig::reference(700.0);
        assert_eq!(cfg.n_steps(), 70_000);
        let rec = simulate_path(&cfg).unwrap();
        assert_eq!(rec.len(), 701);
        assert_eq!(*rec.times.last().unwrap(), 700.0);
        assert!(rec.times.windows(2).all(|w| w[0] < w[1]));
        assert!(rec.all_positive());
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = SimConfig::reference(10.0);
        for bad in [
            SimConfig {
                dt: 0.0,
                ..base.clone()
            },
            SimConfig {
                dt: 20.0,
                ..base.clone()
            },
            SimConfig {
                record_stride: 0,
                ..base.clone()
            },
            SimConfig {
                initial: StateTriple::new(0.4, 0.0, 0.1),
                ..base.clone()
            },
        ] {
            assert!(matches!(
                simulate_path(&bad),
                Err(SimError::InvalidConfig(_))
            ));
        }
        let inadmissible = SimConfig {
            noise: NoiseSpec::new(
                [0.0; 3],
                FiniteLevyMeasure::single(1.0, [0.0, -1.0, 0.0]).unwrap(),
            )
            .unwrap(),
            ..base
        };
        assert!(matches!(
            simulate_path(&inadmissible),
            Err(SimError::Levy(_))
        ));
    }

    #[test]
    fn aux_drift_gap_is_infection_term() {
        let p = ModelParams::reference();
        let terms = DriftTerms::new(&p, &NoiseSpec::reference()).unwrap();
        let mut rng = path_rng(8, 8);
        for _ in 0..1000 {
            let s: f64 = rng.random_range(1e-3..10.0);
            let i: f64 = rng.random_range(1e-3..10.0);
            let r: f64 = rng.random_range(1e-3..10.0);
            let gap = terms.log_drifts(s, i, r)[0] - terms.aux_log_drift(s);
            assert!(
                (gap + p.beta * i).abs() <= 1e-14 * (1.0 + s.recip()),
                "{gap}"
            );
        }
    }

    #[test]
    fn coupled_deterministic_aux_dominates() {
        let cfg = SimConfig {
            couple_aux: true,
            ..deterministic_config(200.0, 0.01)
        };
        let rec = simulate_path(&cfg).unwrap();
        let aux = rec.aux.as_ref().unwrap();
        for (x, &psi) in rec.states.iter().zip(aux) {
            assert!(psi >= x.s * (1.0 - 1e-9));
        }
    }

    /// Classical RK4 on the deterministic SIR system, used as reference.
    fn rk4(p: &ModelParams, x0: [f64; 3], t_end: f64, h: f64) -> [f64; 3] {
        let f = |x: [f64; 3]| {
            [
                p.a - p.mu1 * x[0] - p.beta * x[0] * x[1],
                p.beta * x[0] * x[1] - (p.mu2() + p.gamma) * x[1],
                p.gamma * x[1] - p.mu1 * x[2],
            ]
        };
        let add = |x: [f64; 3], k: [f64; 3], c: f64| [0, 1, 2].map(|j| x[j] + c * k[j]);
        let n = (t_end / h).round() as usize;
        let mut x = x0;
        for _ in 0..n {
            let k1 = f(x);
            let k2 = f(add(x, k1, h / 2.0));
            let k3 = f(add(x, k2, h / 2.0));
            let k4 = f(add(x, k3, h));
            x = [0, 1, 2].map(|j| x[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]));
        }
        x
    }

    #[test]
    fn first_order_convergence_without_noise() {
        let p = ModelParams::reference();
        let t_end = 50.0;
        let reference = rk4(&p, [0.4, 0.3, 0.1], t_end, 1e-3);
        let err = |dt: f64| {
            let rec = simulate_path(&deterministic_config(t_end, dt)).unwrap();
            let x = rec.last_state().unwrap();
            let e = [x.s - reference[0], x.i - reference[1], x.r - reference[2]];
            e.iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        let (e1, e2, e3) = (err(0.2), err(0.1), err(0.05));
        let r1 = e1 / e2;
        let r2 = e2 / e3;
        assert!((1.6..2.4).contains(&r1), "{e1} {e2} {r1}");
        assert!((1.6..2.4).contains(&r2), "{e2} {e3} {r2}");
    }

    #[test]
    fn distinct_path_indices_give_distinct_streams() {
        let cfg = SimConfig::reference(5.0);
        let a = simulate_path_indexed(&cfg, 0).unwrap();
        let b = simulate_path_indexed(&cfg, 1).unwrap();
        assert_ne!(a.states, b.states);
        assert_eq!(a, simulate_path_indexed(&cfg, 0).unwrap());
    }
}
