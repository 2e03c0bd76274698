//! Closed-form decay laws and regime boundaries.
//!
//! * perturbative: `M(t) = exp(-V̄² t² / ħ²)`
//! * golden rule: `M(t) = exp(-Γ t / ħ)` with `Γ = 2K/ħ`
//! * Lyapunov: `M(t) = (1 + e^{2λt} D / 2λσ²)^{-1/2} ≈ (2λσ²/D)^{1/2} e^{-λt}`

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bessel::bessel_j2;
use crate::error::{Error, Result};
use crate::model::StateSpec;

/// Inputs of the analytic decay laws for one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeParams {
    /// Variance of the perturbation's diagonal matrix elements (action² per step²).
    pub v2_bar: f64,
    /// Golden-rule width `Γ = 2K/ħ`.
    pub gamma: f64,
    /// Lyapunov exponent per step.
    pub lambda: f64,
    /// Gradient diffusion constant.
    pub d: f64,
    /// Packet width; `None` for a position eigenstate.
    pub sigma: Option<f64>,
    pub hbar: f64,
    /// Heisenberg time in steps.
    pub t_h: f64,
}

impl RegimeParams {
    /// Mean level spacing in quasi-energy units, from `t_H = h / Δ`.
    pub fn level_spacing(&self) -> f64 {
        2.0 * PI * self.hbar / self.t_h
    }

    pub fn m_pt(&self, t: f64) -> f64 {
        m_pt(t, self.v2_bar, self.hbar)
    }

    pub fn m_fgr(&self, t: f64) -> f64 {
        m_fgr(t, self.gamma, self.hbar)
    }

    pub fn m_lyapunov(&self, t: f64) -> f64 {
        m_lyapunov(t, self.lambda, self.d, self.sigma)
    }
}

/// Perturbative Gaussian decay.
pub fn m_pt(t: f64, v2_bar: f64, hbar: f64) -> f64 {
    (-v2_bar * t * t / (hbar * hbar)).exp()
}

/// Golden-rule exponential decay with width `gamma`.
pub fn m_fgr(t: f64, gamma: f64, hbar: f64) -> f64 {
    (-gamma * t / hbar).exp()
}

/// `Γ = 2K/ħ`.
pub fn golden_rule_width(diffusion_k: f64, hbar: f64) -> f64 {
    2.0 * diffusion_k / hbar
}

/// Lyapunov decay. With a packet width the full form
/// `(1 + e^{2λt} D/(2λσ²))^{-1/2}` is returned; without one, the unit-prefactor
/// asymptote `e^{-λt}`.
pub fn m_lyapunov(t: f64, lambda: f64, d: f64, sigma: Option<f64>) -> f64 {
    match sigma {
        Some(s) if s > 0.0 => {
            let log_ratio = 2.0 * lambda * t + (d / (2.0 * lambda * s * s)).ln();
            if log_ratio > 700.0 {
                (-0.5 * log_ratio).exp()
            } else {
                (1.0 + log_ratio.exp()).powf(-0.5)
            }
        }
        _ => (-lambda * t).exp(),
    }
}

/// Long-time asymptote `(2λσ²/D)^{1/2} e^{-λt}`.
pub fn m_lyapunov_asymptote(t: f64, lambda: f64, d: f64, sigma: f64) -> f64 {
    (2.0 * lambda * sigma * sigma / d).sqrt() * (-lambda * t).exp()
}

/// Microcanonical mean square of the per-step perturbation, `ε²/(32π⁴)`.
pub fn mean_square_perturbation(epsilon: f64) -> f64 {
    epsilon * epsilon / (32.0 * PI.powi(4))
}

/// Symmetries that set the variance of diagonal matrix elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectralSymmetry {
    /// Antiunitary symmetry present (orthogonal ensemble): diagonal
    /// fluctuations are twice the unitary value.
    pub time_reversal: bool,
    /// The initial state lies in one parity sector, which halves the
    /// effective Hilbert space and the Heisenberg time.
    pub parity_sector: bool,
}

impl SpectralSymmetry {
    /// The zero-Bloch-phase torus map with the even kick is time-reversal
    /// invariant; states centred on `q0 ∈ {0, 1/2}` with zero mean momentum
    /// are parity eigenstates.
    pub fn for_state(state: &StateSpec) -> Self {
        let centred = |q: f64| {
            let r = (2.0 * q).rem_euclid(1.0);
            !(1e-12..=1.0 - 1e-12).contains(&r)
        };
        let parity_sector = match *state {
            StateSpec::Position { q0 } => centred(q0),
            StateSpec::Gaussian { q0, p0, .. } => centred(q0) && centred(p0),
        };
        Self {
            time_reversal: true,
            parity_sector,
        }
    }

    fn factor(&self) -> f64 {
        let tr = if self.time_reversal { 2.0 } else { 1.0 };
        let parity = if self.parity_sector { 2.0 } else { 1.0 };
        tr * parity
    }
}

/// Diagonal-element variance `V̄² = g · 2K / t_H` used by [`m_pt`].
///
/// The classical correlation sum `2K` spread over the Heisenberg time gives
/// the spectral weight at zero frequency; `g` carries the ensemble and
/// parity factors of [`SpectralSymmetry`].
pub fn perturbative_variance(diffusion_k: f64, heisenberg_time: f64, symmetry: SpectralSymmetry) -> f64 {
    symmetry.factor() * 2.0 * diffusion_k / heisenberg_time
}

/// Strengths at which the decay crosses from perturbative to golden rule and
/// from golden rule to Lyapunov.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossovers {
    pub pt_fgr: f64,
    pub fgr_lyapunov: f64,
}

/// `ε²_{PT→FGR} ≈ 32π² n⁻³ / (1 + 2J₂(k))`, `ε²_{FGR→L} ≈ 8π² λ n⁻² / (1 + 2J₂(k))`.
pub fn crossover_strengths(k: f64, n: usize, lambda: f64) -> Result<Crossovers> {
    if n < 2 {
        return Err(Error::invalid("n", format!("need n >= 2, got {n}")));
    }
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda", format!("need lambda > 0, got {lambda}")));
    }
    crossovers_with_correction(1.0 + 2.0 * bessel_j2(k), n, lambda)
}

/// Crossover strengths for a given correlation factor `1 + 2J₂(k)`.
pub fn crossovers_with_correction(corr: f64, n: usize, lambda: f64) -> Result<Crossovers> {
    if !(corr > 0.0) {
        return Err(Error::OutsideValidity(format!(
            "correlation factor 1 + 2 J2(k) = {corr} is not positive"
        )));
    }
    let nf = n as f64;
    Ok(Crossovers {
        pt_fgr: (32.0 * PI * PI / (nf * nf * nf) / corr).sqrt(),
        fgr_lyapunov: (8.0 * PI * PI * lambda / (nf * nf) / corr).sqrt(),
    })
}

/// Which decay regime a perturbation strength falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Perturbative,
    GoldenRule,
    Lyapunov,
}

impl Crossovers {
    pub fn classify(&self, epsilon: f64) -> Regime {
        if epsilon < self.pt_fgr {
            Regime::Perturbative
        } else if epsilon < self.fgr_lyapunov {
            Regime::GoldenRule
        } else {
            Regime::Lyapunov
        }
    }
}

/// Saturation level `1/n` of the fidelity in an `n`-dimensional space.
pub fn ergodic_floor(n: usize) -> f64 {
    1.0 / n as f64
}
