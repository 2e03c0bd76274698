//! Experiment orchestration: computes the requested fidelity paths or
//! diagnostics for one configuration and writes CSV data plus a JSON
//! manifest describing everything that was produced.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::analytics::{
    crossover_strengths, ergodic_floor, golden_rule_width, m_fgr, m_lyapunov, m_pt, perturbative_variance,
    Crossovers, Regime, SpectralSymmetry,
};
use crate::classical::{diffusion_constants, lyapunov_exponent};
use crate::config::{ExperimentConfig, SamplingMode};
use crate::diagnostics::{
    action_histogram, branch_count_log10, pair_variance_vs_separation, pair_variance_vs_time, separation_grid,
};
use crate::error::{Error, Result};
use crate::model::{FidelityCurve, PathLabel};
use crate::parallel;
use crate::quantum::fidelity_exact;
use crate::semiclassical::{delta_action_table, fidelity_ivr_grid, monte_carlo_fidelity, Sampling};

/// Header of the fidelity CSV.
pub const FIDELITY_HEADER: &str = "t,M_exact,M_ivr,M_pt,M_fgr,M_lyap,stderr_ivr";

const DIFFUSION_ENSEMBLE: usize = 100_000;
const DIFFUSION_MAX_LAG: usize = 40;
const LYAPUNOV_ENSEMBLE: usize = 2_000;
const LYAPUNOV_STEPS: usize = 200;

/// Seed of the classical ensembles behind the derived constants when the
/// configuration has none.
const DERIVED_SEED: u64 = 0x5eed;

/// Twelve significant digits in scientific notation.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.11e}")
}

/// Quantities derived from the configuration before anything is propagated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub hbar: f64,
    pub heisenberg_time: f64,
    pub diffusion_k: f64,
    pub diffusion_d: f64,
    /// Exponent used by the Lyapunov law: the configured reference value, or
    /// the numeric estimate when none is configured.
    pub lambda: f64,
    pub lambda_numeric: f64,
    pub lambda_stderr: f64,
    pub crossovers: Option<Crossovers>,
    pub regime: Option<Regime>,
    pub ergodic_floor: f64,
    /// `V̄²` of the perturbative law.
    pub perturbative_variance: f64,
    /// `Γ/ħ = 2K/ħ²` per step.
    pub golden_rule_rate: f64,
}

impl Derived {
    pub fn compute(cfg: &ExperimentConfig) -> Result<Self> {
        let params = cfg.map_params()?;
        let seed = cfg.seed.unwrap_or(DERIVED_SEED);
        let diff = diffusion_constants(params.k, params.epsilon, DIFFUSION_ENSEMBLE, DIFFUSION_MAX_LAG, seed)?;
        let lyap = lyapunov_exponent(params.k, LYAPUNOV_ENSEMBLE, LYAPUNOV_STEPS, seed)?;
        let lambda = cfg.lambda.unwrap_or(lyap.lambda);
        let hbar = params.hbar();
        let t_h = params.heisenberg_time();
        let crossovers = match crossover_strengths(params.k, params.n, lambda) {
            Ok(c) => Some(c),
            Err(e) => {
                log::warn!("crossovers unavailable: {e}");
                None
            }
        };
        let symmetry = SpectralSymmetry::for_state(&cfg.state_spec()?);
        Ok(Derived {
            hbar,
            heisenberg_time: t_h,
            diffusion_k: diff.k,
            diffusion_d: diff.d,
            lambda,
            lambda_numeric: lyap.lambda,
            lambda_stderr: lyap.stderr,
            crossovers,
            regime: crossovers.map(|c| c.classify(params.epsilon)),
            ergodic_floor: ergodic_floor(params.n),
            perturbative_variance: perturbative_variance(diff.k, t_h, symmetry),
            golden_rule_rate: golden_rule_width(diff.k, hbar) / hbar,
        })
    }
}

/// Everything a run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub operation: String,
    pub config: ExperimentConfig,
    pub derived: Derived,
    /// Fitted parameters and scalar results.
    pub results: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub workers: usize,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    /// Names of all files written, relative to the output directory,
    /// including the manifest itself.
    pub files: Vec<String>,
}

impl RunManifest {
    fn new(operation: String, cfg: &ExperimentConfig, derived: Derived) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            operation,
            config: cfg.clone(),
            derived,
            results: BTreeMap::new(),
            warnings: Vec::new(),
            workers: parallel::worker_count(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            wall_clock_seconds: 0.0,
            files: Vec::new(),
        }
    }

    /// Writes `data` under `name` and records it.
    fn write(&mut self, dir: &Path, name: String, data: &str) -> Result<()> {
        fs::write(dir.join(&name), data)?;
        self.files.push(name);
        Ok(())
    }

    /// Records the manifest's own name, then writes it.
    fn finish(mut self, dir: &Path, name: String, started: Instant) -> Result<Self> {
        self.files.push(name.clone());
        self.wall_clock_seconds = started.elapsed().as_secs_f64();
        fs::write(dir.join(name), serde_json::to_string_pretty(&self)? + "\n")?;
        Ok(self)
    }
}

/// The analytic law for `label`, or `None` for a numerical path.
pub fn analytic_curve(label: PathLabel, cfg: &ExperimentConfig, d: &Derived) -> Result<Option<FidelityCurve>> {
    let t_max = cfg.t_max;
    let eps = cfg.epsilon;
    let curve = match label {
        PathLabel::Exact | PathLabel::Ivr => return Ok(None),
        PathLabel::Pt => FidelityCurve::from_fn(label, t_max, |t| m_pt(t, d.perturbative_variance, d.hbar)),
        PathLabel::Fgr => {
            let gamma = golden_rule_width(d.diffusion_k, d.hbar);
            FidelityCurve::from_fn(label, t_max, |t| m_fgr(t, gamma, d.hbar))
        }
        PathLabel::Lyap => {
            let sigma = cfg.state_spec()?.sigma();
            // Without a perturbation nothing decays; the law is for ε above the crossover.
            FidelityCurve::from_fn(label, t_max, |t| {
                if eps == 0.0 {
                    1.0
                } else {
                    m_lyapunov(t, d.lambda, d.diffusion_d, sigma)
                }
            })
        }
    };
    Ok(Some(curve))
}

/// Computes every configured path.
pub fn compute_curves(cfg: &ExperimentConfig, derived: &Derived) -> Result<Vec<FidelityCurve>> {
    let params = cfg.map_params()?;
    let state = cfg.state_spec()?;
    let mut curves = Vec::with_capacity(cfg.paths.len());
    for &label in &cfg.paths {
        log::info!("computing {label} path");
        let curve = match label {
            PathLabel::Exact => fidelity_exact(&params, &state, cfg.t_max)?,
            PathLabel::Ivr => match cfg.sampling {
                SamplingMode::FullGrid => fidelity_ivr_grid(&params, &state, cfg.t_max)?,
                SamplingMode::MonteCarlo { samples } => {
                    monte_carlo_fidelity(&params, cfg.q0, &cfg.weights()?, samples, cfg.t_max, cfg.require_seed()?)?
                }
            },
            _ => analytic_curve(label, cfg, derived)?.expect("analytic path"),
        };
        curves.push(curve);
    }
    Ok(curves)
}

/// Fidelity CSV with every column present and absent paths left empty.
pub fn fidelity_csv(curves: &[FidelityCurve], t_max: usize) -> String {
    let by_label: BTreeMap<&str, &FidelityCurve> = curves.iter().map(|c| (c.label.as_str(), c)).collect();
    let stderr = curves
        .iter()
        .find(|c| c.label == PathLabel::Ivr)
        .and_then(|c| c.stderr.as_ref());
    let mut out = String::with_capacity((t_max + 1) * 120);
    out.push_str(FIDELITY_HEADER);
    out.push('\n');
    for t in 0..=t_max {
        out.push_str(&t.to_string());
        for label in PathLabel::ALL {
            out.push(',');
            if let Some(v) = by_label.get(label.as_str()).and_then(|c| c.get(t)) {
                out.push_str(&fmt_num(v));
            }
        }
        out.push(',');
        if let Some(s) = stderr.and_then(|s| s.get(t)) {
            out.push_str(&fmt_num(*s));
        }
        out.push('\n');
    }
    out
}

fn prepare(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Derived> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    Derived::compute(cfg)
}

/// Computes the configured fidelity paths and writes
/// `<preset>_fidelity.csv` and `<preset>_manifest.json` into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    let derived = prepare(cfg, out_dir)?;
    let curves = compute_curves(cfg, &derived)?;
    let mut manifest = RunManifest::new("run".into(), cfg, derived);
    for c in &curves {
        let last = c.values.last().copied().unwrap_or(f64::NAN);
        manifest.results.insert(format!("{}_final", c.label), last);
    }
    let stem = cfg.preset.as_str();
    manifest.write(out_dir, format!("{stem}_fidelity.csv"), &fidelity_csv(&curves, cfg.t_max))?;
    manifest.finish(out_dir, format!("{stem}_manifest.json"), started)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    Histogram,
    PairSep,
    PairTime,
    BranchCount,
}

impl DiagnosticKind {
    pub const ALL: [DiagnosticKind; 4] = [
        DiagnosticKind::Histogram,
        DiagnosticKind::PairSep,
        DiagnosticKind::PairTime,
        DiagnosticKind::BranchCount,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DiagnosticKind::Histogram => "histogram",
            DiagnosticKind::PairSep => "pair-sep",
            DiagnosticKind::PairTime => "pair-time",
            DiagnosticKind::BranchCount => "branch-count",
        }
    }
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DiagnosticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DiagnosticKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::config("kind", format!("unknown diagnostic `{s}` (histogram|pair-sep|pair-time|branch-count)"))
            })
    }
}

fn required<T>(value: Option<T>, field: &str, kind: DiagnosticKind) -> Result<T> {
    value.ok_or_else(|| Error::config(field, format!("required for the {kind} diagnostic")))
}

/// Runs one diagnostic and writes `<preset>_<kind>.csv` plus its manifest.
pub fn run_diagnostic(kind: DiagnosticKind, cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    let d = &cfg.diagnostics;
    // Kind-specific fields are checked before the expensive derived constants.
    match kind {
        DiagnosticKind::Histogram => {
            required(d.hist_t, "hist_t", kind)?;
        }
        DiagnosticKind::PairSep => {
            required(d.pair_t, "pair_t", kind)?;
            cfg.require_seed()?;
        }
        DiagnosticKind::PairTime => {
            required(d.delta_p, "delta_p", kind)?;
            cfg.require_seed()?;
        }
        DiagnosticKind::BranchCount => {
            required(d.branch_t, "branch_t", kind)?;
        }
    }
    let derived = prepare(cfg, out_dir)?;
    let params = cfg.map_params()?;
    let mut manifest = RunManifest::new(format!("diagnose {kind}"), cfg, derived.clone());
    let k_diff = derived.diffusion_k;
    let mut csv = String::new();
    match kind {
        DiagnosticKind::Histogram => {
            let t = d.hist_t.unwrap_or_default();
            let sampling = match cfg.sampling {
                SamplingMode::FullGrid => Sampling::FullGrid,
                SamplingMode::MonteCarlo { samples } => Sampling::MonteCarlo {
                    samples,
                    seed: cfg.require_seed()?,
                    weights: cfg.weights()?,
                },
            };
            let table = delta_action_table(&params, cfg.q0, t.max(1), &sampling)?;
            let h = action_histogram(&table, t, d.bins)?;
            csv.push_str("bin_lo,bin_hi,count,density,gaussian\n");
            for (i, &count) in h.counts.iter().enumerate() {
                let (lo, hi) = (h.edges[i], h.edges[i + 1]);
                let width = hi - lo;
                let (density, gauss) = if width > 0.0 {
                    (
                        fmt_num(count as f64 / (h.samples as f64 * width)),
                        fmt_num(h.density(0.5 * (lo + hi))),
                    )
                } else {
                    (String::new(), String::new())
                };
                csv.push_str(&format!("{},{},{count},{density},{gauss}\n", fmt_num(lo), fmt_num(hi)));
            }
            let r = &mut manifest.results;
            r.insert("t".into(), t as f64);
            r.insert("mean".into(), h.mean);
            r.insert("variance".into(), h.variance);
            r.insert("ks_distance".into(), h.ks_distance);
            r.insert("two_k_t".into(), 2.0 * k_diff * t as f64);
            r.insert("samples".into(), h.samples as f64);
        }
        DiagnosticKind::PairSep => {
            let t = d.pair_t.unwrap_or_default();
            let grid = separation_grid(1e-10, 4, 16);
            let c = pair_variance_vs_separation(params.k, params.epsilon, cfg.q0, t, &grid, d.ensemble, cfg.require_seed()?)?;
            csv.push_str("delta_p,variance,stderr\n");
            for i in 0..c.abscissa.len() {
                csv.push_str(&format!("{},{},{}\n", fmt_num(c.abscissa[i]), fmt_num(c.variance[i]), fmt_num(c.stderr[i])));
            }
            let r = &mut manifest.results;
            r.insert("t".into(), t as f64);
            r.insert("four_k_t".into(), 4.0 * k_diff * t as f64);
            if let Some(f) = c.small_separation_fit {
                r.insert("small_separation_exponent".into(), f.slope);
            }
            if let Some(p) = c.plateau {
                r.insert("plateau".into(), p);
            }
            manifest.warnings.extend(c.warnings);
        }
        DiagnosticKind::PairTime => {
            let dp = d.delta_p.unwrap_or_default();
            let c = pair_variance_vs_time(params.k, params.epsilon, cfg.q0, dp, cfg.t_max, d.ensemble, cfg.require_seed()?)?;
            let frac = c.decorrelated_fraction.clone().unwrap_or_default();
            csv.push_str("t,variance,stderr,decorrelated_fraction\n");
            for t in 0..c.abscissa.len() {
                csv.push_str(&format!(
                    "{t},{},{},{}\n",
                    fmt_num(c.variance[t]),
                    fmt_num(c.stderr[t]),
                    frac.get(t).map(|f| fmt_num(*f)).unwrap_or_default()
                ));
            }
            let r = &mut manifest.results;
            r.insert("delta_p".into(), dp);
            r.insert("two_lambda".into(), 2.0 * derived.lambda);
            r.insert("four_k".into(), 4.0 * k_diff);
            if let Some(rate) = c.short_time_rate() {
                r.insert("short_time_rate".into(), rate);
            }
            if let Some(rate) = c.typical_rate {
                r.insert("typical_rate".into(), rate);
            }
            if let Some(slope) = c.long_time_slope() {
                r.insert("long_time_slope".into(), slope);
            }
            manifest.warnings.extend(c.warnings);
        }
        DiagnosticKind::BranchCount => {
            let t_end = d.branch_t.unwrap_or_default();
            csv.push_str("t,log10_branches\n");
            let mut last = 0.0;
            for t in 0..=t_end {
                last = branch_count_log10(params.k, cfg.q0, t, d.probes)?;
                csv.push_str(&format!("{t},{}\n", fmt_num(last)));
            }
            manifest.results.insert("t".into(), t_end as f64);
            manifest.results.insert("log10_branches".into(), last);
        }
    }
    let stem = format!("{}_{}", cfg.preset, kind);
    manifest.write(out_dir, format!("{stem}.csv"), &csv)?;
    manifest.finish(out_dir, format!("{stem}_manifest.json"), started)
}

/// Output directory: explicit value, then configuration, then `fallback`.
pub fn resolve_out_dir(explicit: Option<PathBuf>, cfg: &ExperimentConfig, fallback: PathBuf) -> PathBuf {
    explicit.or_else(|| cfg.out.clone()).unwrap_or(fallback)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;

    fn small() -> ExperimentConfig {
        ExperimentConfig::parse("k = 18\nepsilon = 5e-4\nn = 64\nq0 = 0.5\nt_max = 12\npaths = exact,ivr,pt,fgr,lyap\nlambda = 2.21\n")
            .unwrap()
    }

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(1.0), "1.00000000000e0");
        assert_eq!(fmt_num(2.9e-4), "2.90000000000e-4");
    }

    #[test]
    fn csv_shape_and_empty_fields() {
        let c = FidelityCurve::new(PathLabel::Exact, vec![1.0, 0.5]);
        let csv = fidelity_csv(&[c], 1);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], FIDELITY_HEADER);
        assert_eq!(lines[2], "1,5.00000000000e-1,,,,,");
    }

    #[test]
    fn zero_perturbation_run_is_flat() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small();
        cfg.epsilon = 0.0;
        let m = run_experiment(&cfg, dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join("custom_fidelity.csv")).unwrap();
        for line in csv.lines().skip(1) {
            for field in line.split(',').skip(1).take(5) {
                let v: f64 = field.parse().unwrap();
                assert!((v - 1.0).abs() < 1e-12, "{line}");
            }
        }
        assert_eq!(m.files, vec!["custom_fidelity.csv", "custom_manifest.json"]);
    }

    #[test]
    fn manifest_lists_every_file() {
        let dir = tempfile::tempdir().unwrap();
        let m = run_experiment(&small(), dir.path()).unwrap();
        let mut on_disk: Vec<String> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        on_disk.sort();
        let mut listed = m.files.clone();
        listed.sort();
        assert_eq!(on_disk, listed);
        let back: RunManifest =
            serde_json::from_str(&fs::read_to_string(dir.path().join("custom_manifest.json")).unwrap()).unwrap();
        assert_eq!(back.files, m.files);
    }

    #[test]
    fn diagnostics_need_their_fields() {
        let dir = tempfile::tempdir().unwrap();
        let err = run_diagnostic(DiagnosticKind::Histogram, &small(), dir.path()).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "hist_t"));
        let err = run_diagnostic(DiagnosticKind::PairTime, &small(), dir.path()).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "delta_p"));
        assert!("spectrum".parse::<DiagnosticKind>().is_err());
    }

    #[test]
    fn histogram_at_time_zero_is_single_bin() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::preset(Preset::Fig2);
        cfg.diagnostics.hist_t = Some(0);
        let m = run_diagnostic(DiagnosticKind::Histogram, &cfg, dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join("fig2_histogram.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(m.results["variance"], 0.0);
    }
}
