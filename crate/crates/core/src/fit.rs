//! Least-squares helpers for decay rates and power laws.

use serde::{Deserialize, Serialize};

/// Straight-line fit `y ≈ intercept + slope · x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Ordinary least squares; `None` with fewer than two distinct abscissae.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = xs[..n].iter().sum::<f64>() / nf;
    let my = ys[..n].iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        points: n,
    })
}

/// Exponential fit `y ≈ A e^{-rate·t}` over the given times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub prefactor: f64,
    pub t_start: usize,
    pub t_end: usize,
    pub points: usize,
}

/// Fits `ln y` linearly in `t` over `t ∈ [t_start, t_end]`, skipping
/// non-positive values.
pub fn fit_decay(values: &[f64], t_start: usize, t_end: usize) -> Option<DecayFit> {
    let (ts, ls): (Vec<f64>, Vec<f64>) = (t_start..=t_end.min(values.len().saturating_sub(1)))
        .filter(|&t| values[t] > 0.0)
        .map(|t| (t as f64, values[t].ln()))
        .unzip();
    let line = fit_line(&ts, &ls)?;
    Some(DecayFit {
        rate: -line.slope,
        prefactor: line.intercept.exp(),
        t_start,
        t_end,
        points: line.points,
    })
}

/// Contiguous window starting at the first `t ≥ t_min` with `value < upper`
/// and ending just before the first later `value ≤ lower`.
pub fn decay_window(values: &[f64], upper: f64, lower: f64, t_min: usize) -> Option<(usize, usize)> {
    let start = (t_min..values.len()).find(|&t| values[t] < upper)?;
    if values[start] <= lower {
        return None;
    }
    let end = (start..values.len())
        .find(|&t| values[t] <= lower)
        .map_or(values.len() - 1, |t| t - 1);
    Some((start, end))
}
