//! Finite Lévy measures represented as weighted atoms.
//!
//! A measure with finite total mass `λ = ν(Z)` drives a compound Poisson
//! process, so every jump integral of the form `∫ f(η(u)) ν(du)` reduces to a
//! finite weighted sum over atoms and the random measure `N(dt, du)` over a
//! step of length `dt` is an independent Poisson count per atom.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

/// Number of jump amplitude kernels (one per compartment S, I, R).
pub const KERNELS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LevyError {
    #[error("atom {atom}: weight must be > 0 and finite (got {weight})")]
    InvalidWeight { atom: usize, weight: f64 },

    #[error("atom {atom}: eta{kernel} must be finite (got {value})")]
    NonFiniteAmplitude {
        atom: usize,
        kernel: usize,
        value: f64,
    },

    #[error("1+eta{kernel} <= 0 at atom {atom}")]
    Inadmissible { atom: usize, kernel: usize },

    #[error("integrand is not finite at atom {atom} (got {value})")]
    NonFiniteIntegrand { atom: usize, value: f64 },
}

/// One atom of the measure: an opaque mark label, its intensity weight and
/// the three jump amplitudes `η₁(u), η₂(u), η₃(u)` evaluated at the mark.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub label: String,
    pub weight: f64,
    pub eta: [f64; KERNELS],
}

impl Atom {
    pub fn new(weight: f64, eta: [f64; KERNELS]) -> Self {
        Self {
            label: String::new(),
            weight,
            eta,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

/// Lévy measure with finitely many atoms.
///
/// Construction checks weights and amplitude finiteness only. The
/// admissibility condition `1 + ηᵢ(u) > 0` is checked separately by
/// [`FiniteLevyMeasure::check_admissible`] so that inadmissible inputs can be
/// reported atom by atom instead of failing at parse time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FiniteLevyMeasure {
    atoms: Vec<Atom>,
}

impl FiniteLevyMeasure {
    pub fn new(atoms: Vec<Atom>) -> Result<Self, LevyError> {
        for (k, atom) in atoms.iter().enumerate() {
            if !(atom.weight.is_finite() && atom.weight > 0.0) {
                return Err(LevyError::InvalidWeight {
                    atom: k,
                    weight: atom.weight,
                });
            }
            for (i, &value) in atom.eta.iter().enumerate() {
                if !value.is_finite() {
                    return Err(LevyError::NonFiniteAmplitude {
                        atom: k,
                        kernel: i + 1,
                        value,
                    });
                }
            }
        }
        Ok(Self { atoms })
    }

    /// Measure with no atoms: the pure diffusion model.
    pub fn empty() -> Self {
        Self { atoms: Vec::new() }
    }

    /// Single atom carrying the whole mass, the usual constant-amplitude setup.
    pub fn single(weight: f64, eta: [f64; KERNELS]) -> Result<Self, LevyError> {
        Self::new(vec![Atom::new(weight, eta)])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Total intensity `λ = Σ w_k`.
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// Every `(atom, kernel)` pair with `1 + η ≤ 0`, kernels numbered from 1.
    pub fn inadmissible(&self) -> Vec<(usize, usize)> {
        let mut bad = Vec::new();
        for (k, atom) in self.atoms.iter().enumerate() {
            for (i, &eta) in atom.eta.iter().enumerate() {
                if 1.0 + eta <= 0.0 {
                    bad.push((k, i + 1));
                }
            }
        }
        bad
    }

    pub fn check_admissible(&self) -> Result<(), LevyError> {
        match self.inadmissible().first() {
            Some(&(atom, kernel)) => Err(LevyError::Inadmissible { atom, kernel }),
            None => Ok(()),
        }
    }

    /// Exact integral `Σ w_k f(atom_k)`.
    pub fn integrate<F>(&self, f: F) -> Result<f64, LevyError>
    where
        F: Fn(&Atom) -> f64,
    {
        let mut total = 0.0;
        for (k, atom) in self.atoms.iter().enumerate() {
            let value = f(atom);
            if !value.is_finite() {
                return Err(LevyError::NonFiniteIntegrand { atom: k, value });
            }
            total += atom.weight * value;
        }
        Ok(total)
    }

    /// Compensator integral `∫ (ηᵢ − ln(1+ηᵢ)) dν` for kernel index `i` (0-based).
    pub fn compensator(&self, kernel: usize) -> Result<f64, LevyError> {
        self.integrate(|a| a.eta[kernel] - a.eta[kernel].ln_1p())
    }

    /// `∫ ln(1+ηᵢ) dν`, the mean log-jump per unit time.
    pub fn mean_log_jump(&self, kernel: usize) -> Result<f64, LevyError> {
        self.integrate(|a| a.eta[kernel].ln_1p())
    }

    /// `∫ (ln(1+ηᵢ))² dν`.
    pub fn log_jump_second_moment(&self, kernel: usize) -> Result<f64, LevyError> {
        self.integrate(|a| a.eta[kernel].ln_1p().powi(2))
    }

    /// Draws the jump events over one step of length `dt`.
    pub fn sample_jump_batch<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> JumpBatch {
        let mut batch = JumpBatch::default();
        if dt > 0.0 {
            let sampler = JumpSampler::new(self, dt);
            sampler.sample_into(rng, &mut batch);
        }
        batch
    }
}

/// Jump events realized over one step: `(atom index, count)` for every atom
/// that fired at least once.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JumpBatch {
    pub events: Vec<(usize, u64)>,
}

impl JumpBatch {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn clear(&mut self) {
        self.events.clear();
    }

    pub fn total_count(&self) -> u64 {
        self.events.iter().map(|&(_, n)| n).sum()
    }
}

/// Per-atom Poisson samplers for a fixed step size.
///
/// Every atom consumes its draw in atom order whether or not it fires, so
/// the random stream position after a step does not depend on the outcome.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    samplers: Vec<Poisson<f64>>,
}

impl JumpSampler {
    /// `dt` must be positive.
    pub fn new(measure: &FiniteLevyMeasure, dt: f64) -> Self {
        let samplers = measure
            .atoms()
            .iter()
            .map(|a| Poisson::new(a.weight * dt).expect("positive finite Poisson rate"))
            .collect();
        Self { samplers }
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, batch: &mut JumpBatch) {
        batch.clear();
        for (k, sampler) in self.samplers.iter().enumerate() {
            let count = sampler.sample(rng) as u64;
            if count > 0 {
                batch.events.push((k, count));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn paper_measure() -> FiniteLevyMeasure {
        FiniteLevyMeasure::single(1.0, [0.05, 0.02, 0.01]).unwrap()
    }

    #[test]
    fn total_mass_cases() {
        assert_eq!(paper_measure().total_mass(), 1.0);
        assert_eq!(FiniteLevyMeasure::empty().total_mass(), 0.0);
        let two = FiniteLevyMeasure::new(vec![Atom::new(0.3, [0.0; 3]), Atom::new(0.7, [0.0; 3])])
            .unwrap();
        assert!((two.total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn integrate_known_values() {
        let m = paper_measure();
        let j2 = m.compensator(1).unwrap();
        // 0.02 - ln(1.02)
        assert!((j2 - 1.973_7e-4).abs() < 1e-8, "{j2}");
        assert_eq!(m.integrate(|_| 0.0).unwrap(), 0.0);
        let k1 = m.log_jump_second_moment(0).unwrap();
        assert!((k1 - 1.05f64.ln().powi(2)).abs() < 1e-16);
        assert!((k1 - 2.380_50e-3).abs() < 1e-7, "{k1}");
    }

    #[test]
    fn integrate_reports_non_finite_atom() {
        let m = FiniteLevyMeasure::new(vec![
            Atom::new(1.0, [0.0; 3]),
            Atom::new(1.0, [0.0, -1.0, 0.0]),
        ])
        .unwrap();
        let err = m.compensator(1).unwrap_err();
        assert!(matches!(err, LevyError::NonFiniteIntegrand { atom: 1, .. }));
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(FiniteLevyMeasure::single(0.0, [0.0; 3]).is_err());
        assert!(FiniteLevyMeasure::single(-1.0, [0.0; 3]).is_err());
        assert!(FiniteLevyMeasure::single(f64::INFINITY, [0.0; 3]).is_err());
        assert!(FiniteLevyMeasure::single(1.0, [f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn admissibility_names_atom_and_kernel() {
        let m = FiniteLevyMeasure::single(1.0, [0.0, -1.0, 0.0]).unwrap();
        let err = m.check_admissible().unwrap_err();
        assert_eq!(err.to_string(), "1+eta2 <= 0 at atom 0");
        assert!(FiniteLevyMeasure::single(1.0, [0.0, -0.5, 0.0])
            .unwrap()
            .check_admissible()
            .is_ok());
    }

    #[test]
    fn zero_dt_gives_empty_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(paper_measure().sample_jump_batch(0.0, &mut rng).is_empty());
    }

    #[test]
    fn batches_are_reproducible() {
        let m = paper_measure();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..1000)
                .map(|_| m.sample_jump_batch(0.5, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn single_atom_mean_count() {
        let m = paper_measure();
        let sampler = JumpSampler::new(&m, 0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut batch = JumpBatch::default();
        let n = 1_000_000;
        let mut total = 0u64;
        for _ in 0..n {
            sampler.sample_into(&mut rng, &mut batch);
            total += batch.total_count();
        }
        let mean = total as f64 / n as f64;
        assert!((0.0097..=0.0103).contains(&mean), "{mean}");
    }

    #[test]
    fn two_atom_mean_counts() {
        let m = FiniteLevyMeasure::new(vec![Atom::new(0.3, [0.0; 3]), Atom::new(0.7, [0.0; 3])])
            .unwrap();
        let sampler = JumpSampler::new(&m, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut batch = JumpBatch::default();
        let n = 1_000_000;
        let mut totals = [0u64; 2];
        for _ in 0..n {
            sampler.sample_into(&mut rng, &mut batch);
            for &(k, c) in &batch.events {
                totals[k] += c;
            }
        }
        let means = totals.map(|t| t as f64 / n as f64);
        assert!((means[0] / 0.3 - 1.0).abs() < 0.01, "{means:?}");
        assert!((means[1] / 0.7 - 1.0).abs() < 0.01, "{means:?}");
    }

    #[test]
    fn total_count_concentrates_around_mass() {
        let m = FiniteLevyMeasure::new(vec![Atom::new(0.4, [0.0; 3]), Atom::new(1.1, [0.0; 3])])
            .unwrap();
        let lambda = m.total_mass();
        let dt = 0.05;
        let steps = 200_000;
        let sampler = JumpSampler::new(&m, dt);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut batch = JumpBatch::default();
        let mut total = 0u64;
        for _ in 0..steps {
            sampler.sample_into(&mut rng, &mut batch);
            total += batch.total_count();
        }
        let horizon = steps as f64 * dt;
        let rate = total as f64 / horizon;
        assert!((rate - lambda).abs() <= 4.0 * (lambda / horizon).sqrt());
    }

    proptest::proptest! {
        #[test]
        fn integrate_is_linear(
            w in proptest::collection::vec(0.01f64..5.0, 1..6),
            e in proptest::collection::vec(-0.9f64..2.0, 6),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let atoms = w.iter().enumerate()
                .map(|(k, &w)| Atom::new(w, [e[k], e[(k + 1) % 6], e[(k + 2) % 6]]))
                .collect();
            let m = FiniteLevyMeasure::new(atoms).unwrap();
            let f = |x: &Atom| x.eta[0] - x.eta[0].ln_1p();
            let g = |x: &Atom| x.eta[1].ln_1p().powi(2);
            let lhs = m.integrate(|x| a * f(x) + b * g(x)).unwrap();
            let rhs = a * m.integrate(f).unwrap() + b * m.integrate(g).unwrap();
            proptest::prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }
}
