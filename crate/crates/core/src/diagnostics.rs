//! Statistics of action differences: Gaussianity of `ΔS`, the pair variance
//! `⟨[ΔS(p') - ΔS(p'')]²⟩` against separation and against time, and the size
//! of the Van Vleck branch sum that the momentum representation avoids.

use std::f64::consts::{LN_10, TAU};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::classical::{action_scale, map_step, torus_delta, wrap_unit, PhasePoint};
use crate::error::{Error, Result};
use crate::fit::{fit_line, LineFit};
use crate::parallel;
use crate::semiclassical::DeltaActionTable;
use crate::summation::pairwise_sum;

/// Fewest table rows accepted by [`action_histogram`].
pub const MIN_HISTOGRAM_SAMPLES: usize = 1000;

/// Fewest probes accepted by [`branch_count_log10`].
pub const MIN_BRANCH_PROBES: usize = 10_000;

/// Small-separation window: variance below this fraction of the plateau.
pub const SMALL_WINDOW_FRACTION: f64 = 1e-2;

/// Separations at or above this value count toward the plateau. Partners
/// launched from the same `q0` stay weakly correlated at any single `Δp`, so
/// the plateau is averaged over a uniform tail of separations.
pub const PLATEAU_MIN_SEPARATION: f64 = 0.1;

/// Torus distance at which a pair counts as decorrelated.
pub const SATURATION_SEPARATION: f64 = 0.1;

/// Exponential-growth fits ignore `t` at or below this.
pub const EXP_FIT_MIN_T: usize = 2;

/// Histogram of `ΔS(·, t)` with a moment-matched Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramFit {
    pub t: usize,
    /// `counts.len() + 1` bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub variance: f64,
    /// Kolmogorov–Smirnov distance to `N(mean, variance)`.
    pub ks_distance: f64,
    pub samples: usize,
}

impl HistogramFit {
    /// Gaussian density of the fit at `x`.
    pub fn density(&self, x: f64) -> f64 {
        if self.variance <= 0.0 {
            return 0.0;
        }
        let z = x - self.mean;
        (-z * z / (2.0 * self.variance)).exp() / (TAU * self.variance).sqrt()
    }
}

fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2))
}

/// Histogram and Gaussian fit of the action differences at time `t`.
pub fn action_histogram(table: &DeltaActionTable, t: usize, bins: usize) -> Result<HistogramFit> {
    if table.rows() < MIN_HISTOGRAM_SAMPLES {
        return Err(Error::TooFewSamples {
            what: "action histogram",
            needed: MIN_HISTOGRAM_SAMPLES,
            got: table.rows(),
        });
    }
    if t > table.t_max {
        return Err(Error::invalid("t", format!("t = {t} exceeds table t_max = {}", table.t_max)));
    }
    if bins == 0 {
        return Err(Error::invalid("bins", "need at least one bin"));
    }
    let mut values = table.column(t);
    let n = values.len();
    let mean = pairwise_sum(&values) / n as f64;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let variance = pairwise_sum(&dev) / n as f64;

    values.sort_by(|a, b| a.total_cmp(b));
    let (lo, hi) = (values[0], values[n - 1]);
    if hi <= lo {
        return Ok(HistogramFit {
            t,
            edges: vec![lo, hi],
            counts: vec![n],
            mean,
            variance: 0.0,
            ks_distance: 0.0,
            samples: n,
        });
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    for v in &values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let sd = variance.sqrt();
    let nf = n as f64;
    let ks_distance = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = normal_cdf(v, mean, sd);
            (f - i as f64 / nf).abs().max(((i + 1) as f64 / nf - f).abs())
        })
        .fold(0.0, f64::max);
    Ok(HistogramFit {
        t,
        edges,
        counts,
        mean,
        variance,
        ks_distance,
        samples: n,
    })
}

/// Pair variance against separation or against time, with regime fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVarianceCurve {
    /// `Δp` values or times.
    pub abscissa: Vec<f64>,
    /// `⟨[ΔS(p') - ΔS(p'')]²⟩`.
    pub variance: Vec<f64>,
    /// Standard error of each variance point.
    pub stderr: Vec<f64>,
    /// Log-log fit over small separations (separation curves only).
    pub small_separation_fit: Option<LineFit>,
    /// Mean variance over large separations (separation curves only).
    pub plateau: Option<f64>,
    /// Fit of `ln variance` against `t` while pairs are still close (time curves only).
    pub short_time_fit: Option<LineFit>,
    /// Growth rate of `⟨ln [ΔS' - ΔS'']²⟩` over the same window (time curves only).
    pub typical_rate: Option<f64>,
    /// Linear fit of the variance after decorrelation (time curves only).
    pub long_time_fit: Option<LineFit>,
    /// Fraction of pairs farther apart than [`SATURATION_SEPARATION`] (time curves only).
    pub decorrelated_fraction: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl PairVarianceCurve {
    /// Slope of the small-separation log-log fit.
    pub fn small_separation_exponent(&self) -> Option<f64> {
        self.small_separation_fit.map(|f| f.slope)
    }

    /// Exponential growth rate of the variance at short times.
    pub fn short_time_rate(&self) -> Option<f64> {
        self.short_time_fit.map(|f| f.slope)
    }

    /// Slope of the linear growth at long times.
    pub fn long_time_slope(&self) -> Option<f64> {
        self.long_time_fit.map(|f| f.slope)
    }
}

/// Sum of `cos(2π q_j)` for `j = 1..=t` from `x0`.
fn kick_sum(x0: PhasePoint, k: f64, t: usize) -> f64 {
    let mut x = x0;
    let mut s = 0.0;
    for _ in 0..t {
        x = map_step(x, k);
        s += (TAU * x.q).cos();
    }
    s
}

/// Pair variance against momentum separation at fixed `t`.
///
/// Base points `(q0, p')` have uniformly random `p'`; each is paired with
/// `(q0, p' + Δp)` for every `Δp` in the grid. The same base points are used
/// for every separation.
#[allow(clippy::too_many_arguments)]
pub fn pair_variance_vs_separation(
    k: f64,
    epsilon: f64,
    q0: f64,
    t: usize,
    separations: &[f64],
    ensemble_size: usize,
    seed: u64,
) -> Result<PairVarianceCurve> {
    if ensemble_size < 2 {
        return Err(Error::TooFewSamples {
            what: "pair ensemble",
            needed: 2,
            got: ensemble_size,
        });
    }
    if separations.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::invalid("separations", "must be finite and non-negative"));
    }
    let scale = action_scale(epsilon);
    let g = separations.len();
    // Per chunk: sums of d² and d⁴ per separation.
    let partials = parallel::map_chunks(ensemble_size, 256, |ci, range| {
        let mut rng = parallel::chunk_rng(seed, ci);
        let mut s2 = vec![0.0; g];
        let mut s4 = vec![0.0; g];
        for _ in range {
            let p: f64 = rand::Rng::random(&mut rng);
            let base = kick_sum(PhasePoint::new(q0, p), k, t);
            for (i, &dp) in separations.iter().enumerate() {
                let d = if dp == 0.0 {
                    0.0
                } else {
                    scale * (base - kick_sum(PhasePoint::new(q0, wrap_unit(p + dp)), k, t))
                };
                let d2 = d * d;
                s2[i] += d2;
                s4[i] += d2 * d2;
            }
        }
        (s2, s4)
    });
    let nf = ensemble_size as f64;
    let mut variance = vec![0.0; g];
    let mut stderr = vec![0.0; g];
    for i in 0..g {
        let s2: f64 = partials.iter().map(|p| p.0[i]).sum();
        let s4: f64 = partials.iter().map(|p| p.1[i]).sum();
        let m = s2 / nf;
        variance[i] = m;
        stderr[i] = ((s4 / nf - m * m).max(0.0) / (nf - 1.0)).sqrt();
    }

    let mut warnings = Vec::new();
    let large: Vec<f64> = separations
        .iter()
        .zip(&variance)
        .filter(|(d, _)| **d >= PLATEAU_MIN_SEPARATION)
        .map(|(_, v)| *v)
        .collect();
    let plateau = if large.is_empty() {
        warnings.push(format!("no separation >= {PLATEAU_MIN_SEPARATION}; plateau not measured"));
        None
    } else {
        Some(large.iter().sum::<f64>() / large.len() as f64)
    };

    let small_separation_fit = plateau.and_then(|level| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = separations
            .iter()
            .zip(&variance)
            .filter(|(d, v)| **d > 0.0 && **v > 0.0 && **v < SMALL_WINDOW_FRACTION * level)
            .map(|(d, v)| (d.ln(), v.ln()))
            .unzip();
        if xs.len() < 3 {
            warnings.push("fewer than three separations in the small-separation window".into());
        }
        let fit = fit_line(&xs, &ys)?;
        // Local slope between the two largest small-window points.
        if xs.len() >= 2 {
            let j = xs.len() - 1;
            let local = (ys[j] - ys[j - 1]) / (xs[j] - xs[j - 1]);
            if (local - fit.slope).abs() > 0.1 * fit.slope.abs() {
                warnings.push(format!(
                    "quadratic law bends inside the fit window (local slope {local:.3}); regimes overlap"
                ));
            }
        }
        Some(fit)
    });
    for w in &warnings {
        log::warn!("pair variance vs separation: {w}");
    }
    Ok(PairVarianceCurve {
        abscissa: separations.to_vec(),
        variance,
        stderr,
        small_separation_fit,
        plateau,
        short_time_fit: None,
        typical_rate: None,
        long_time_fit: None,
        decorrelated_fraction: None,
        warnings,
    })
}

/// Zero, then `per_decade` log-spaced separations from `from` up to
/// [`PLATEAU_MIN_SEPARATION`], then `tail` evenly spaced ones up to 1/2.
pub fn separation_grid(from: f64, per_decade: usize, tail: usize) -> Vec<f64> {
    let (a, b) = (from.log10(), PLATEAU_MIN_SEPARATION.log10());
    let steps = ((b - a) * per_decade as f64).round().max(1.0) as usize;
    let step = (0.5 - PLATEAU_MIN_SEPARATION) / tail.max(1) as f64;
    std::iter::once(0.0)
        .chain((0..steps).map(|i| 10f64.powf(a + (b - a) * i as f64 / steps as f64)))
        .chain((0..=tail).map(|i| PLATEAU_MIN_SEPARATION + step * i as f64))
        .collect()
}

/// Pair variance against time at fixed separation `Δp`.
///
/// The exponential fit runs over `EXP_FIT_MIN_T < t < t_sat`, where `t_sat`
/// is the first time half the pairs are [`SATURATION_SEPARATION`] apart, further restricted to variances below 1% of the
/// long-time line. The linear fit runs from `2 t_sat` (at least `t_sat + 10`)
/// to `t_max`.
pub fn pair_variance_vs_time(
    k: f64,
    epsilon: f64,
    q0: f64,
    separation: f64,
    t_max: usize,
    ensemble_size: usize,
    seed: u64,
) -> Result<PairVarianceCurve> {
    if ensemble_size < 2 {
        return Err(Error::TooFewSamples {
            what: "pair ensemble",
            needed: 2,
            got: ensemble_size,
        });
    }
    if !(separation > 0.0 && separation < 0.5) {
        return Err(Error::invalid("separation", format!("need 0 < Δp < 1/2, got {separation}")));
    }
    let scale = action_scale(epsilon);
    let width = t_max + 1;

    struct Partial {
        s2: Vec<f64>,
        s4: Vec<f64>,
        slog: Vec<f64>,
        nlog: Vec<usize>,
        apart: Vec<usize>,
    }

    let partials = parallel::map_chunks(ensemble_size, 256, |ci, range| {
        let mut rng = parallel::chunk_rng(seed, ci);
        let mut out = Partial {
            s2: vec![0.0; width],
            s4: vec![0.0; width],
            slog: vec![0.0; width],
            nlog: vec![0; width],
            apart: vec![0; width],
        };
        for _ in range {
            let p: f64 = rand::Rng::random(&mut rng);
            let mut a = PhasePoint::new(q0, p);
            let mut b = PhasePoint::new(q0, wrap_unit(p + separation));
            let (mut sa, mut sb) = (0.0, 0.0);
            for t in 1..width {
                a = map_step(a, k);
                b = map_step(b, k);
                sa += (TAU * a.q).cos();
                sb += (TAU * b.q).cos();
                let d = scale * (sa - sb);
                let d2 = d * d;
                out.s2[t] += d2;
                out.s4[t] += d2 * d2;
                if d2 > 0.0 {
                    out.slog[t] += d2.ln();
                    out.nlog[t] += 1;
                }
                let sep = torus_delta(a.q, b.q).abs().max(torus_delta(a.p, b.p).abs());
                out.apart[t] += usize::from(sep >= SATURATION_SEPARATION);
            }
        }
        out
    });

    let nf = ensemble_size as f64;
    let mut variance = vec![0.0; width];
    let mut stderr = vec![0.0; width];
    let mut log_mean = vec![f64::NAN; width];
    let mut decorrelated_fraction = vec![0.0; width];
    for t in 0..width {
        let s2: f64 = partials.iter().map(|p| p.s2[t]).sum();
        let s4: f64 = partials.iter().map(|p| p.s4[t]).sum();
        let m = s2 / nf;
        variance[t] = m;
        stderr[t] = ((s4 / nf - m * m).max(0.0) / (nf - 1.0)).sqrt();
        let nl: usize = partials.iter().map(|p| p.nlog[t]).sum();
        if nl > 0 {
            log_mean[t] = partials.iter().map(|p| p.slog[t]).sum::<f64>() / nl as f64;
        }
        decorrelated_fraction[t] = partials.iter().map(|p| p.apart[t]).sum::<usize>() as f64 / nf;
    }

    let mut warnings = Vec::new();
    let t_sat = (0..width).find(|&t| decorrelated_fraction[t] >= 0.5);
    let times: Vec<f64> = (0..width).map(|t| t as f64).collect();

    let long_time_fit = t_sat.and_then(|ts| {
        let start = (2 * ts).max(ts + 10);
        if start + 2 > width {
            warnings.push(format!("t_max = {t_max} too short for a long-time fit (need > {start})"));
            return None;
        }
        fit_line(&times[start..], &variance[start..])
    });
    if t_sat.is_none() {
        warnings.push("pairs never decorrelated; no long-time regime".into());
    }

    let exp_end = t_sat.unwrap_or(width);
    let window: Vec<usize> = (EXP_FIT_MIN_T + 1..exp_end)
        .filter(|&t| {
            // Uncorrelated level at time t is the long-time slope times t.
            variance[t] > 0.0
                && long_time_fit
                    .filter(|f| f.slope > 0.0)
                    .is_none_or(|f| variance[t] < SMALL_WINDOW_FRACTION * f.slope * t as f64)
        })
        .collect();
    let short_time_fit = {
        let xs: Vec<f64> = window.iter().map(|&t| t as f64).collect();
        let ys: Vec<f64> = window.iter().map(|&t| variance[t].ln()).collect();
        fit_line(&xs, &ys)
    };
    let typical_rate = {
        let xs: Vec<f64> = window.iter().map(|&t| t as f64).collect();
        let ys: Vec<f64> = window.iter().map(|&t| log_mean[t]).collect();
        fit_line(&xs, &ys).map(|f| f.slope)
    };
    if window.len() < 3 {
        warnings.push("fewer than three points in the short-time window".into());
    }
    for w in &warnings {
        log::warn!("pair variance vs time: {w}");
    }
    Ok(PairVarianceCurve {
        abscissa: times,
        variance,
        stderr,
        small_separation_fit: None,
        plateau: None,
        short_time_fit,
        typical_rate,
        long_time_fit,
        decorrelated_fraction: Some(decorrelated_fraction),
        warnings,
    })
}

/// `log₁₀` of the number of Van Vleck branches reaching a final position.
///
/// The initial momentum line `{(q0, p')}` is stretched by the flow; each
/// time its projection sweeps the position circle once, every final
/// position acquires one more branch. The count is estimated as the
/// projected length `Σ_i |∂q_t/∂p'|(p_i) Δp'`, never below one branch, and
/// accumulated in log space.
pub fn branch_count_log10(k: f64, q0: f64, t: usize, probes: usize) -> Result<f64> {
    if probes < MIN_BRANCH_PROBES {
        return Err(Error::TooFewSamples {
            what: "branch-count probes",
            needed: MIN_BRANCH_PROBES,
            got: probes,
        });
    }
    if t == 0 {
        return Ok(0.0);
    }
    let dp = 1.0 / probes as f64;
    let logs = parallel::map_chunks(probes, 1024, |_, range| {
        range
            .map(|i| log_position_stretch(PhasePoint::new(q0, (i as f64 + 0.5) * dp), k, t))
            .collect::<Vec<_>>()
    })
    .concat();
    let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let rel: Vec<f64> = logs.iter().map(|l| (l - peak).exp()).collect();
    let ln_total = peak + pairwise_sum(&rel).ln() + dp.ln();
    Ok((ln_total / LN_10).max(0.0))
}

/// `ln |∂q_t / ∂p'|` along the orbit from `x0`, renormalizing every step.
fn log_position_stretch(x0: PhasePoint, k: f64, t: usize) -> f64 {
    let mut x = x0;
    let (mut vq, mut vp) = (0.0_f64, 1.0_f64);
    let mut log_scale = 0.0;
    for _ in 0..t {
        x = map_step(x, k);
        let c = k * (TAU * x.q).cos();
        let nq = vq + vp;
        let np = -c * vq + (1.0 - c) * vp;
        let norm = nq.hypot(np);
        log_scale += norm.ln();
        vq = nq / norm;
        vp = np / norm;
    }
    if vq == 0.0 {
        f64::NEG_INFINITY
    } else {
        log_scale + vq.abs().ln()
    }
}
