//! Shared experiment types: map parameters, initial-state descriptions and
//! fidelity curves.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical identity of an experiment: the perturbed standard map quantized
/// on an `n`-dimensional torus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapParams {
    /// Stochasticity parameter.
    pub k: f64,
    /// Perturbation: the perturbed map uses `k + epsilon`.
    pub epsilon: f64,
    /// Hilbert-space dimension.
    pub n: usize,
}

impl MapParams {
    pub fn new(k: f64, epsilon: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("n", format!("Hilbert dimension must be >= 2, got {n}")));
        }
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::invalid("epsilon", format!("must be finite and >= 0, got {epsilon}")));
        }
        if !(k >= 0.0) || !k.is_finite() {
            return Err(Error::invalid("k", format!("must be finite and >= 0, got {k}")));
        }
        Ok(Self { k, epsilon, n })
    }

    /// Effective Planck constant `1 / (2π n)`.
    pub fn hbar(&self) -> f64 {
        1.0 / (TAU * self.n as f64)
    }

    /// `1/ħ = 2π n`, used to turn actions into phases.
    pub fn inverse_hbar(&self) -> f64 {
        TAU * self.n as f64
    }

    /// Heisenberg time in steps; equals `n` for the quantized map.
    pub fn heisenberg_time(&self) -> f64 {
        self.n as f64
    }

    pub fn with_epsilon(self, epsilon: f64) -> Self {
        Self { epsilon, ..self }
    }
}

/// Initial state of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StateSpec {
    /// Position eigenstate at `q0` (snapped to the grid).
    Position { q0: f64 },
    /// Periodized Gaussian packet centred at `(q0, p0)` with width `sigma`.
    Gaussian { q0: f64, p0: f64, sigma: f64 },
}

impl StateSpec {
    pub fn q0(&self) -> f64 {
        match *self {
            StateSpec::Position { q0 } | StateSpec::Gaussian { q0, .. } => q0,
        }
    }

    /// Packet width, `None` for a position eigenstate.
    pub fn sigma(&self) -> Option<f64> {
        match *self {
            StateSpec::Position { .. } => None,
            StateSpec::Gaussian { sigma, .. } => Some(sigma),
        }
    }
}

/// Which computation produced a fidelity curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathLabel {
    Exact,
    Ivr,
    Pt,
    Fgr,
    Lyap,
}

impl PathLabel {
    pub const ALL: [PathLabel; 5] = [
        PathLabel::Exact,
        PathLabel::Ivr,
        PathLabel::Pt,
        PathLabel::Fgr,
        PathLabel::Lyap,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PathLabel::Exact => "exact",
            PathLabel::Ivr => "ivr",
            PathLabel::Pt => "pt",
            PathLabel::Fgr => "fgr",
            PathLabel::Lyap => "lyap",
        }
    }

    /// CSV column carrying this path.
    pub fn column(&self) -> &'static str {
        match self {
            PathLabel::Exact => "M_exact",
            PathLabel::Ivr => "M_ivr",
            PathLabel::Pt => "M_pt",
            PathLabel::Fgr => "M_fgr",
            PathLabel::Lyap => "M_lyap",
        }
    }
}

impl fmt::Display for PathLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PathLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PathLabel::ALL
            .into_iter()
            .find(|p| p.as_str() == s.trim())
            .ok_or_else(|| Error::config("paths", format!("unknown path `{s}`")))
    }
}

/// `t ↦ M(t)` for `t = 0..len`, one per computation path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityCurve {
    pub label: PathLabel,
    pub values: Vec<f64>,
    /// Monte Carlo standard error, when the curve is a stochastic estimate.
    pub stderr: Option<Vec<f64>>,
}

impl FidelityCurve {
    pub fn new(label: PathLabel, values: Vec<f64>) -> Self {
        Self {
            label,
            values,
            stderr: None,
        }
    }

    /// Evaluates `f(t)` for `t = 0..=t_max`.
    pub fn from_fn(label: PathLabel, t_max: usize, f: impl Fn(f64) -> f64) -> Self {
        Self::new(label, (0..=t_max).map(|t| f(t as f64)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn t_max(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn get(&self, t: usize) -> Option<f64> {
        self.values.get(t).copied()
    }
}
