//! Closed-form thresholds: deterministic `R₀`, stochastic `T₀ˢ`, the
//! predicted extinction exponent and regime classification.

use std::fmt;

use crate::levy::LevyError;
use crate::model::{ModelParams, NoiseSpec};

/// Default half-width of the band around 1 reported as critical.
pub const DEFAULT_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `T₀ˢ > 1`: unique ergodic stationary distribution.
    Ergodic,
    /// `T₀ˢ < 1`: exponential extinction of the infected class.
    Extinct,
    /// Too close to 1 to call; no asymptotic claim applies.
    Critical,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Ergodic => "ergodic",
            Regime::Extinct => "extinct",
            Regime::Critical => "critical",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdReport {
    pub r0: f64,
    pub t0s: f64,
    pub extinction_exponent: f64,
    /// Same expression with `(μ₂ − γ)` as prefactor, kept for comparison.
    pub alternate_exponent: f64,
    pub regime: Regime,
}

/// `βA / (μ₁(μ₂+γ))`.
pub fn compute_r0(params: &ModelParams) -> f64 {
    params.beta * params.a / (params.mu1 * (params.mu2() + params.gamma))
}

/// `(μ₂+γ)⁻¹ (βA/μ₁ − σ₂²/2 − ∫(η₂ − ln(1+η₂))dν)`.
///
/// Only `σ₂` and `η₂` enter.
pub fn compute_t0s(params: &ModelParams, noise: &NoiseSpec) -> Result<f64, LevyError> {
    let jump_penalty = noise.measure.compensator(1)?;
    Ok(t0s_from_penalty(params, noise.sigma[1], jump_penalty))
}

fn t0s_from_penalty(params: &ModelParams, sigma2: f64, jump_penalty: f64) -> f64 {
    (params.beta * params.a / params.mu1 - sigma2 * sigma2 / 2.0 - jump_penalty)
        / (params.mu2() + params.gamma)
}

/// Predicted almost-sure slope of `ln I(t) / t`: `(μ₂+γ)(T₀ˢ − 1)`.
pub fn extinction_exponent(params: &ModelParams, t0s: f64) -> f64 {
    (params.mu2() + params.gamma) * (t0s - 1.0)
}

pub fn classify(t0s: f64, margin: f64) -> Regime {
    debug_assert!(margin >= 0.0);
    if t0s > 1.0 + margin {
        Regime::Ergodic
    } else if t0s < 1.0 - margin {
        Regime::Extinct
    } else {
        Regime::Critical
    }
}

pub fn threshold_report(
    params: &ModelParams,
    noise: &NoiseSpec,
    margin: f64,
) -> Result<ThresholdReport, LevyError> {
    let t0s = compute_t0s(params, noise)?;
    Ok(ThresholdReport {
        r0: compute_r0(params),
        t0s,
        extinction_exponent: extinction_exponent(params, t0s),
        alternate_exponent: (params.mu2() - params.gamma) * (t0s - 1.0),
        regime: classify(t0s, margin),
    })
}
