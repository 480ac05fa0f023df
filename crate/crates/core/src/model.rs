//! Model parameters, noise specification and the standing-assumption
//! constants (jump moment integral, drift gap, supremum constant).

use thiserror::Error;

use crate::levy::{FiniteLevyMeasure, LevyError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),

    #[error("invalid noise: {0}")]
    InvalidNoise(String),

    #[error("moment exponent p must be >= 1/2 (got {0})")]
    ExponentTooSmall(f64),

    #[error(transparent)]
    Levy(#[from] LevyError),
}

/// Epidemiological rate constants. `mu2` is derived as `mu1 + alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Recruitment rate.
    pub a: f64,
    /// Natural mortality rate.
    pub mu1: f64,
    /// Disease-related death rate.
    pub alpha: f64,
    /// Transmission rate.
    pub beta: f64,
    /// Recovery rate.
    pub gamma: f64,
}

impl ModelParams {
    /// Validated constructor.
    pub fn new(a: f64, mu1: f64, alpha: f64, beta: f64, gamma: f64) -> Result<Self, ModelError> {
        let params = Self {
            a,
            mu1,
            alpha,
            beta,
            gamma,
        };
        validate_params(&params)?;
        Ok(params)
    }

    /// Values used in the reference example (`A = 0.09`).
    pub fn reference() -> Self {
        Self {
            a: 0.09,
            mu1: 0.05,
            alpha: 0.04,
            beta: 0.06,
            gamma: 0.01,
        }
    }

    /// General mortality rate of infected individuals.
    pub fn mu2(&self) -> f64 {
        self.mu1 + self.alpha
    }

    fn named_fields(&self) -> [(&'static str, f64); 5] {
        [
            ("A", self.a),
            ("mu1", self.mu1),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ]
    }
}

/// Accepts iff every rate is strictly positive and finite; otherwise lists
/// every violated constraint.
pub fn validate_params(params: &ModelParams) -> Result<(), ModelError> {
    let violations: Vec<String> = params
        .named_fields()
        .iter()
        .filter_map(|&(name, value)| {
            if !value.is_finite() {
                Some(format!("{name} must be finite"))
            } else if value <= 0.0 {
                Some(format!("{name} must be > 0"))
            } else {
                None
            }
        })
        .collect();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(ModelError::InvalidParams(violations))
    }
}

/// One point of the positive orthant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateTriple {
    pub s: f64,
    pub i: f64,
    pub r: f64,
}

impl StateTriple {
    pub const fn new(s: f64, i: f64, r: f64) -> Self {
        Self { s, i, r }
    }

    pub fn is_positive(&self) -> bool {
        self.s > 0.0 && self.i > 0.0 && self.r > 0.0
    }

    pub fn component(&self, c: Component) -> f64 {
        match c {
            Component::S => self.s,
            Component::I => self.i,
            Component::R => self.r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    S,
    I,
    R,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::S, Component::I, Component::R];

    pub fn name(self) -> &'static str {
        match self {
            Component::S => "S",
            Component::I => "I",
            Component::R => "R",
        }
    }
}

/// Diffusion intensities plus the jump measure carrying `η₁, η₂, η₃`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub sigma: [f64; 3],
    pub measure: FiniteLevyMeasure,
}

impl NoiseSpec {
    /// Checks sigmas only; jump admissibility is reported by
    /// [`check_assumptions`] and enforced before simulation.
    pub fn new(sigma: [f64; 3], measure: FiniteLevyMeasure) -> Result<Self, ModelError> {
        for (i, &s) in sigma.iter().enumerate() {
            if !(s.is_finite() && s >= 0.0) {
                return Err(ModelError::InvalidNoise(format!(
                    "sigma{} must be >= 0 and finite (got {s})",
                    i + 1
                )));
            }
        }
        Ok(Self { sigma, measure })
    }

    pub fn none() -> Self {
        Self {
            sigma: [0.0; 3],
            measure: FiniteLevyMeasure::empty(),
        }
    }

    /// `σ = (0.02, 0.08, 0.01)`, one atom of mass 1 with `η = (0.05, 0.02, 0.01)`.
    pub fn reference() -> Self {
        Self {
            sigma: [0.02, 0.08, 0.01],
            measure: FiniteLevyMeasure::single(1.0, [0.05, 0.02, 0.01])
                .expect("reference measure is valid"),
        }
    }
}

/// Constants of the moment bound for a chosen exponent `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentConstants {
    pub p: f64,
    /// `∫ ((1 + η₁∨η₂)^{2p} − 1 − η₁∧η₂) dν`
    pub ell: f64,
    /// Drift gap; the bound only exists when positive.
    pub chi2: f64,
    /// `sup_{x>0} A x^{2p−1} − (χ₂/2) x^{2p}`; `None` when the supremum is infinite.
    pub chi1: Option<f64>,
    /// `maxᵢ ∫ (ln(1+ηᵢ))² dν`
    pub kappa: f64,
}

impl MomentConstants {
    pub fn a4_satisfied(&self) -> bool {
        self.chi2 > 0.0
    }

    /// Long-run level `2χ₁/χ₂` of the bound.
    pub fn asymptotic_bound(&self) -> Option<f64> {
        self.chi1
            .filter(|_| self.a4_satisfied())
            .map(|c1| 2.0 * c1 / self.chi2)
    }

    /// `(S(0)+I(0))^{2p} e^{−pχ₂t} + 2χ₁/χ₂`.
    pub fn moment_bound(&self, initial: &StateTriple, t: f64) -> Option<f64> {
        self.asymptotic_bound().map(|level| {
            (initial.s + initial.i).powf(2.0 * self.p) * (-self.p * self.chi2 * t).exp() + level
        })
    }
}

pub fn compute_moment_constants(
    params: &ModelParams,
    noise: &NoiseSpec,
    p: f64,
) -> Result<MomentConstants, ModelError> {
    if p.is_nan() || p < 0.5 {
        return Err(ModelError::ExponentTooSmall(p));
    }
    let measure = &noise.measure;
    measure.check_admissible()?;

    let ell = measure.integrate(|a| {
        let hi = a.eta[0].max(a.eta[1]);
        let lo = a.eta[0].min(a.eta[1]);
        (1.0 + hi).powf(2.0 * p) - 1.0 - lo
    })?;
    let sigma_max_sq = noise.sigma[0].powi(2).max(noise.sigma[1].powi(2));
    let chi2 = params.mu1 - (2.0 * p - 1.0) / 2.0 * sigma_max_sq - ell / (2.0 * p);

    let mut kappa: f64 = 0.0;
    for kernel in 0..3 {
        kappa = kappa.max(measure.log_jump_second_moment(kernel)?);
    }

    let chi1 = if p == 0.5 {
        // x^0 term is constant and the penalty vanishes as x -> 0.
        Some(params.a)
    } else if chi2 > 0.0 {
        let x = params.a * (2.0 * p - 1.0) / (chi2 * p);
        Some(params.a * x.powf(2.0 * p - 1.0) - chi2 / 2.0 * x.powf(2.0 * p))
    } else {
        None
    };

    Ok(MomentConstants {
        p,
        ell,
        chi2,
        chi1,
        kappa,
    })
}

/// Outcome of checking the standing assumptions.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    /// Linear jump coefficients are locally Lipschitz; nothing to compute.
    pub a1: &'static str,
    /// Hard failures: every `(atom, kernel)` with `1 + η ≤ 0`.
    pub a2_violations: Vec<(usize, usize)>,
    /// `∫ (ηᵢ − ln(1+ηᵢ)) dν` per kernel, when admissible.
    pub compensators: Option<[f64; 3]>,
    pub moments: Option<MomentConstants>,
}

impl AssumptionReport {
    pub fn hard_failure(&self) -> Option<String> {
        self.a2_violations
            .first()
            .map(|&(atom, kernel)| format!("1+eta{kernel} <= 0 at atom {atom}"))
    }

    pub fn passes(&self) -> bool {
        self.a2_violations.is_empty()
            && self.compensators.is_some()
            && self
                .moments
                .is_some_and(|m| m.kappa.is_finite() && m.ell.is_finite())
    }

    /// Soft condition: disables only the moment diagnostic when false.
    pub fn a4_satisfied(&self) -> bool {
        self.moments.is_some_and(|m| m.a4_satisfied())
    }
}

pub fn check_assumptions(
    params: &ModelParams,
    noise: &NoiseSpec,
    p: f64,
) -> Result<AssumptionReport, ModelError> {
    validate_params(params)?;
    let a2_violations = noise.measure.inadmissible();
    let (compensators, moments) = if a2_violations.is_empty() {
        let m = &noise.measure;
        let comp = [m.compensator(0)?, m.compensator(1)?, m.compensator(2)?];
        (
            Some(comp),
            Some(compute_moment_constants(params, noise, p)?),
        )
    } else {
        (None, None)
    };
    Ok(AssumptionReport {
        a1: "satisfied structurally (linear jump coefficients)",
        a2_violations,
        compensators,
        moments,
    })
}
