//! Experiment configuration: flat `key = value` text with `#` comments, and
//! the four figure presets.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MapParams, PathLabel, StateSpec};
use crate::semiclassical::{WeightSpec, MIN_MONTE_CARLO_SAMPLES};

/// Largest `n` for which the full momentum grid is propagated.
pub const MAX_FULL_GRID_N: usize = 10_000_000;

/// Reference Lyapunov exponents quoted with the figures.
pub const LAMBDA_K18: f64 = 2.21;
pub const LAMBDA_K7: f64 = 1.28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::Fig1, Preset::Fig2, Preset::Fig3, Preset::Fig4, Preset::Custom];

    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::Fig1 => "fig1",
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::Custom => "custom",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str() == s.trim())
            .ok_or_else(|| Error::config("preset", format!("unknown preset `{s}` (fig1|fig2|fig3|fig4|custom)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Position,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SamplingMode {
    FullGrid,
    MonteCarlo { samples: usize },
}

/// Parameters of the statistical diagnostics; `None` where a kind needs the
/// value and no preset provides it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticParams {
    /// Time of the action histogram.
    pub hist_t: Option<usize>,
    pub bins: usize,
    /// Time of the pair variance against separation.
    pub pair_t: Option<usize>,
    /// Separation of the pair variance against time.
    pub delta_p: Option<f64>,
    /// Pairs per ensemble.
    pub ensemble: usize,
    /// Momentum probes of the branch count.
    pub probes: usize,
    /// Final time of the branch count.
    pub branch_t: Option<usize>,
}

impl Default for DiagnosticParams {
    fn default() -> Self {
        Self {
            hist_t: None,
            bins: 50,
            pair_t: None,
            delta_p: None,
            ensemble: 100_000,
            probes: 100_000,
            branch_t: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub k: f64,
    pub epsilon: f64,
    pub n: usize,
    pub q0: f64,
    pub state: StateKind,
    pub p0: Option<f64>,
    pub sigma: Option<f64>,
    pub t_max: usize,
    pub sampling: SamplingMode,
    pub seed: Option<u64>,
    pub paths: Vec<PathLabel>,
    /// Reference Lyapunov exponent; estimated numerically when absent.
    pub lambda: Option<f64>,
    pub out: Option<PathBuf>,
    pub diagnostics: DiagnosticParams,
}

const KEYS: &[&str] = &[
    "preset", "k", "epsilon", "n", "q0", "state", "p0", "sigma", "t_max", "sampling", "samples",
    "seed", "paths", "lambda", "out", "hist_t", "bins", "pair_t", "delta_p", "ensemble", "probes",
    "branch_t",
];

/// Fields a custom configuration must set.
const CUSTOM_REQUIRED: &[&str] = &["k", "epsilon", "n", "q0", "t_max"];

impl ExperimentConfig {
    /// The figure parameter sets. `Custom` returns an unusable template whose
    /// physics fields must all be overwritten.
    pub fn preset(preset: Preset) -> Self {
        use PathLabel::*;
        let base = ExperimentConfig {
            preset,
            k: f64::NAN,
            epsilon: f64::NAN,
            n: 0,
            q0: f64::NAN,
            state: StateKind::Position,
            p0: None,
            sigma: None,
            t_max: 0,
            sampling: SamplingMode::FullGrid,
            seed: None,
            paths: vec![Exact, Ivr],
            lambda: None,
            out: None,
            diagnostics: DiagnosticParams::default(),
        };
        let figure = |k, epsilon, n, t_max, paths: Vec<PathLabel>, lambda| ExperimentConfig {
            k,
            epsilon,
            n,
            q0: 0.5,
            t_max,
            paths,
            lambda: Some(lambda),
            seed: Some(1),
            ..base.clone()
        };
        match preset {
            Preset::Fig1 => {
                let mut c = figure(18.0, 1e-4, 350, 3000, vec![Exact, Ivr, Pt], LAMBDA_K18);
                c.diagnostics.branch_t = Some(120);
                c
            }
            Preset::Fig2 => {
                let mut c = figure(18.0, 5e-4, 3500, 300, vec![Exact, Ivr, Pt, Fgr], LAMBDA_K18);
                c.diagnostics.hist_t = Some(20);
                c.diagnostics.branch_t = Some(120);
                c
            }
            Preset::Fig3 => {
                let mut c = figure(7.0, 5e-4, 100_000, 25, vec![Exact, Ivr, Pt, Fgr, Lyap], LAMBDA_K7);
                c.diagnostics.pair_t = Some(7);
                c
            }
            Preset::Fig4 => {
                let mut c = figure(7.0, 5e-4, 100_000, 100, vec![Exact, Ivr, Lyap], LAMBDA_K7);
                c.diagnostics.pair_t = Some(7);
                c.diagnostics.delta_p = Some(1e-11);
                c
            }
            Preset::Custom => base,
        }
    }

    /// Parses configuration text; a `preset` key seeds the values that the
    /// remaining keys override.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_over(text, None)
    }

    /// Like [`parse`](Self::parse), with `base` as the preset when the text
    /// names none. Naming a different one is an error.
    pub fn parse_over(text: &str, base: Option<Preset>) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let preset = match (pairs.get("preset"), base) {
            (Some(v), None) => v.parse()?,
            (Some(v), Some(b)) => {
                let p: Preset = v.parse()?;
                if p != b {
                    return Err(Error::config("preset", format!("`{b}` requested but the configuration names `{p}`")));
                }
                p
            }
            (None, Some(b)) => b,
            (None, None) => Preset::Custom,
        };
        let mut cfg = Self::preset(preset);
        if preset == Preset::Custom {
            for key in CUSTOM_REQUIRED {
                if !pairs.contains_key(*key) {
                    return Err(Error::config(*key, "required when no figure preset is given"));
                }
            }
        }
        for (key, value) in &pairs {
            if key != "preset" {
                cfg.set(key, value)?;
            }
        }
        Ok(cfg)
    }

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "preset" => {
                return Err(Error::config("preset", "the preset can only be chosen before other fields"))
            }
            "k" => self.k = num(key, v)?,
            "epsilon" => self.epsilon = num(key, v)?,
            "n" => self.n = num(key, v)?,
            "q0" => self.q0 = num(key, v)?,
            "state" => {
                self.state = match v {
                    "position" => StateKind::Position,
                    "gaussian" => StateKind::Gaussian,
                    _ => return Err(Error::config(key, format!("expected position|gaussian, got `{v}`"))),
                }
            }
            "p0" => self.p0 = Some(num(key, v)?),
            "sigma" => self.sigma = Some(num(key, v)?),
            "t_max" => self.t_max = num(key, v)?,
            "sampling" => {
                self.sampling = match (v, self.sampling) {
                    ("full-grid", _) => SamplingMode::FullGrid,
                    ("monte-carlo", SamplingMode::MonteCarlo { samples }) => SamplingMode::MonteCarlo { samples },
                    ("monte-carlo", SamplingMode::FullGrid) => SamplingMode::MonteCarlo { samples: 0 },
                    _ => return Err(Error::config(key, format!("expected full-grid|monte-carlo, got `{v}`"))),
                }
            }
            "samples" => {
                self.sampling = SamplingMode::MonteCarlo { samples: num(key, v)? };
            }
            "seed" => self.seed = Some(num(key, v)?),
            "paths" => {
                let paths = v
                    .split(',')
                    .map(|s| s.trim())
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<PathLabel>())
                    .collect::<Result<Vec<_>>>()?;
                self.paths = PathLabel::ALL.into_iter().filter(|p| paths.contains(p)).collect();
            }
            "lambda" => self.lambda = Some(num(key, v)?),
            "out" => self.out = Some(PathBuf::from(v)),
            "hist_t" => self.diagnostics.hist_t = Some(num(key, v)?),
            "bins" => self.diagnostics.bins = num(key, v)?,
            "pair_t" => self.diagnostics.pair_t = Some(num(key, v)?),
            "delta_p" => self.diagnostics.delta_p = Some(num(key, v)?),
            "ensemble" => self.diagnostics.ensemble = num(key, v)?,
            "probes" => self.diagnostics.probes = num(key, v)?,
            "branch_t" => self.diagnostics.branch_t = Some(num(key, v)?),
            _ => return Err(Error::config(key, "unknown field")),
        }
        Ok(())
    }

    /// Checks the invariants that do not depend on the requested operation.
    pub fn validate(&self) -> Result<()> {
        self.map_params()?;
        if !(0.0..1.0).contains(&self.q0) {
            return Err(Error::config("q0", format!("must lie in [0, 1), got {}", self.q0)));
        }
        if self.t_max < 1 {
            return Err(Error::config("t_max", "must be at least 1"));
        }
        if self.paths.is_empty() {
            return Err(Error::config("paths", "no computation paths selected"));
        }
        self.state_spec()?;
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::config("lambda", format!("must be positive, got {l}")));
            }
        }
        match self.sampling {
            SamplingMode::MonteCarlo { samples } => {
                if self.seed.is_none() {
                    return Err(Error::config("seed", "required with monte-carlo sampling"));
                }
                if samples < MIN_MONTE_CARLO_SAMPLES {
                    return Err(Error::config(
                        "samples",
                        format!("need at least {MIN_MONTE_CARLO_SAMPLES}, got {samples}"),
                    ));
                }
            }
            SamplingMode::FullGrid => {
                if self.n > MAX_FULL_GRID_N && self.paths.contains(&PathLabel::Ivr) {
                    return Err(Error::config(
                        "sampling",
                        format!(
                            "full-grid IVR with n = {} exceeds {MAX_FULL_GRID_N}; use sampling = monte-carlo with samples = N",
                            self.n
                        ),
                    ));
                }
            }
        }
        if self.diagnostics.bins == 0 {
            return Err(Error::config("bins", "must be at least 1"));
        }
        Ok(())
    }

    pub fn map_params(&self) -> Result<MapParams> {
        let field = |e: Error| match e {
            Error::InvalidParameter { name, reason } => Error::config(name, reason),
            other => other,
        };
        if !self.k.is_finite() {
            return Err(Error::config("k", "not set"));
        }
        if !self.epsilon.is_finite() {
            return Err(Error::config("epsilon", "not set"));
        }
        MapParams::new(self.k, self.epsilon, self.n).map_err(field)
    }

    pub fn state_spec(&self) -> Result<StateSpec> {
        match self.state {
            StateKind::Position => Ok(StateSpec::Position { q0: self.q0 }),
            StateKind::Gaussian => {
                let p0 = self.p0.ok_or_else(|| Error::config("p0", "required for a gaussian state"))?;
                let sigma = self
                    .sigma
                    .ok_or_else(|| Error::config("sigma", "required for a gaussian state"))?;
                if !(sigma > 0.0) {
                    return Err(Error::config("sigma", format!("must be positive, got {sigma}")));
                }
                Ok(StateSpec::Gaussian { q0: self.q0, p0, sigma })
            }
        }
    }

    pub fn weights(&self) -> Result<WeightSpec> {
        Ok(WeightSpec::from(&self.state_spec()?))
    }

    /// Seed for ensemble diagnostics.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::config("seed", "required for randomized ensembles"))
    }

    /// Renders the configuration back to `key = value` text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        line("preset", self.preset.to_string());
        line("k", self.k.to_string());
        line("epsilon", self.epsilon.to_string());
        line("n", self.n.to_string());
        line("q0", self.q0.to_string());
        line(
            "state",
            match self.state {
                StateKind::Position => "position".into(),
                StateKind::Gaussian => "gaussian".into(),
            },
        );
        if let Some(p0) = self.p0 {
            line("p0", p0.to_string());
        }
        if let Some(s) = self.sigma {
            line("sigma", s.to_string());
        }
        line("t_max", self.t_max.to_string());
        match self.sampling {
            SamplingMode::FullGrid => line("sampling", "full-grid".into()),
            SamplingMode::MonteCarlo { samples } => {
                line("sampling", "monte-carlo".into());
                line("samples", samples.to_string());
            }
        }
        if let Some(s) = self.seed {
            line("seed", s.to_string());
        }
        line(
            "paths",
            self.paths.iter().map(|p| p.as_str()).collect::<Vec<_>>().join(","),
        );
        if let Some(l) = self.lambda {
            line("lambda", l.to_string());
        }
        if let Some(o) = &self.out {
            line("out", o.display().to_string());
        }
        let d = &self.diagnostics;
        if let Some(t) = d.hist_t {
            line("hist_t", t.to_string());
        }
        line("bins", d.bins.to_string());
        if let Some(t) = d.pair_t {
            line("pair_t", t.to_string());
        }
        if let Some(dp) = d.delta_p {
            line("delta_p", dp.to_string());
        }
        line("ensemble", d.ensemble.to_string());
        line("probes", d.probes.to_string());
        if let Some(t) = d.branch_t {
            line("branch_t", t.to_string());
        }
        out
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.parse()
        .map_err(|e| Error::config(key, format!("cannot parse `{v}`: {e}")))
}

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut pairs = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}", i + 1), format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::config(key, "unknown field"));
        }
        if pairs.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::config(key, "set more than once"));
        }
    }
    Ok(pairs)
}
