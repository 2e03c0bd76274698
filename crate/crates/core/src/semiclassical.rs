//! Uniform semiclassical fidelity in the initial-momentum representation.
//!
//! Every initial momentum `p'` launches exactly one classical orbit from
//! `(q0, p')`; the perturbation only shifts its action by `ΔS(p', t)`. The
//! fidelity amplitude is then a weighted average of dephasing factors,
//!
//! ```text
//! M(t) = | Σ_m w_m exp(i ΔS(p_m, t) / ħ) |²,   Σ_m w_m = 1,
//! ```
//!
//! with no branch sum, no caustics and no root search. A position eigenstate
//! weights all `n` grid momenta equally; a Gaussian packet of width `σ`
//! weights them by `exp[-(p_m - p0)² σ² / ħ²]`.

use std::f64::consts::TAU;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::classical::{action_scale, kick_sums_into, torus_delta, PhasePoint};
use crate::error::{Error, Result};
use crate::model::{FidelityCurve, MapParams, PathLabel, StateSpec};
use crate::parallel;
use crate::summation::pairwise_sum_complex;

/// Fewest Monte Carlo samples accepted.
pub const MIN_MONTE_CARLO_SAMPLES: usize = 100;

/// Rows per parallel work item.
const ROW_CHUNK: usize = 2048;

/// Momentum weight of the IVR average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightSpec {
    /// Equal weight on every grid momentum (position eigenstate).
    Uniform,
    /// Gaussian packet centred at `p0` with position width `sigma`.
    Gaussian { p0: f64, sigma: f64 },
}

impl From<&StateSpec> for WeightSpec {
    fn from(s: &StateSpec) -> Self {
        match *s {
            StateSpec::Position { .. } => WeightSpec::Uniform,
            StateSpec::Gaussian { p0, sigma, .. } => WeightSpec::Gaussian { p0, sigma },
        }
    }
}

/// How the initial momenta of the table are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Sampling {
    /// All `n` grid momenta `p_m = m/n`.
    FullGrid,
    /// `samples` grid momenta drawn from `weights`.
    MonteCarlo {
        samples: usize,
        seed: u64,
        weights: WeightSpec,
    },
}

/// `ΔS(p_m, t)` for a set of initial momenta and all `t = 0..=t_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaActionTable {
    pub params: MapParams,
    pub q0: f64,
    pub t_max: usize,
    pub momenta: Vec<f64>,
    /// Row-major: row `m` holds `ΔS(p_m, 0..=t_max)`.
    pub ds: Vec<f64>,
}

impl DeltaActionTable {
    pub fn rows(&self) -> usize {
        self.momenta.len()
    }

    pub fn row(&self, m: usize) -> &[f64] {
        let w = self.t_max + 1;
        &self.ds[m * w..(m + 1) * w]
    }

    pub fn get(&self, m: usize, t: usize) -> f64 {
        self.ds[m * (self.t_max + 1) + t]
    }

    /// All `ΔS(·, t)` at one time.
    pub fn column(&self, t: usize) -> Vec<f64> {
        (0..self.rows()).map(|m| self.get(m, t)).collect()
    }
}

/// Builds the action-difference table by propagating one orbit per momentum.
pub fn delta_action_table(
    params: &MapParams,
    q0: f64,
    t_max: usize,
    sampling: &Sampling,
) -> Result<DeltaActionTable> {
    if t_max < 1 {
        return Err(Error::invalid("t_max", "need t_max >= 1"));
    }
    let momenta = match *sampling {
        Sampling::FullGrid => (0..params.n).map(|m| m as f64 / params.n as f64).collect(),
        Sampling::MonteCarlo {
            samples,
            seed,
            weights,
        } => sample_momenta(params, &weights, samples, seed)?,
    };
    Ok(table_for_momenta(params, q0, t_max, momenta))
}

/// Table for an explicit list of initial momenta.
pub fn table_for_momenta(
    params: &MapParams,
    q0: f64,
    t_max: usize,
    momenta: Vec<f64>,
) -> DeltaActionTable {
    let width = t_max + 1;
    let scale = action_scale(params.epsilon);
    let k = params.k;
    let chunks = parallel::map_chunks(momenta.len(), ROW_CHUNK, |_, range| {
        let mut block = vec![0.0; range.len() * width];
        for (row, m) in block.chunks_exact_mut(width).zip(range) {
            kick_sums_into(PhasePoint::new(q0, momenta[m]), k, row);
            row.iter_mut().for_each(|x| *x *= scale);
        }
        block
    });
    DeltaActionTable {
        params: *params,
        q0,
        t_max,
        momenta,
        ds: chunks.concat(),
    }
}

/// Draws `samples` grid momenta from the weight distribution.
pub fn sample_momenta(
    params: &MapParams,
    weights: &WeightSpec,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if samples < MIN_MONTE_CARLO_SAMPLES {
        return Err(Error::TooFewSamples {
            what: "monte-carlo momenta",
            needed: MIN_MONTE_CARLO_SAMPLES,
            got: samples,
        });
    }
    let n = params.n;
    let table = match weights {
        WeightSpec::Uniform => None,
        WeightSpec::Gaussian { .. } => Some(
            WeightedIndex::new(grid_weights(params, weights)?)
                .map_err(|e| Error::invalid("weights", e.to_string()))?,
        ),
    };
    let chunks = parallel::map_chunks(samples, parallel::DEFAULT_CHUNK, |ci, range| {
        let mut rng = parallel::chunk_rng(seed, ci);
        range
            .map(|_| {
                let m = match &table {
                    None => rng.random_range(0..n),
                    Some(t) => t.sample(&mut rng),
                };
                m as f64 / n as f64
            })
            .collect::<Vec<_>>()
    });
    Ok(chunks.concat())
}

/// Normalized weights over the full momentum grid.
pub fn grid_weights(params: &MapParams, spec: &WeightSpec) -> Result<Vec<f64>> {
    let n = params.n;
    match *spec {
        WeightSpec::Uniform => Ok(vec![1.0 / n as f64; n]),
        WeightSpec::Gaussian { p0, sigma } => {
            if !(sigma > 0.0) {
                return Err(Error::invalid("sigma", "packet width must be positive"));
            }
            let a = sigma * params.inverse_hbar();
            let raw: Vec<f64> = (0..n)
                .map(|m| {
                    let dp = torus_delta(m as f64 / n as f64, p0);
                    (-(dp * a).powi(2)).exp()
                })
                .collect();
            let total: f64 = crate::summation::pairwise_sum(&raw);
            Ok(raw.into_iter().map(|w| w / total).collect())
        }
    }
}

/// Unit phasors `exp(i ΔS / ħ)` with a sign-symmetric phase reduction, so
/// that negating `ΔS` conjugates the phasor bit for bit.
#[inline]
fn dephasing_factor(ds: f64, inv_hbar: f64) -> Complex64 {
    let x = ds * inv_hbar;
    let r = x - TAU * (x / TAU).round();
    let (s, c) = r.sin_cos();
    Complex64::new(c, s)
}

/// Weighted phasor average `Σ_m w_m exp(i ΔS(m, t)/ħ)` for every `t`.
fn phasor_averages(table: &DeltaActionTable, weights: &[f64]) -> Vec<Complex64> {
    let width = table.t_max + 1;
    let inv_hbar = table.params.inverse_hbar();
    let partials = parallel::map_chunks(table.rows(), ROW_CHUNK, |_, range| {
        let mut buf = Vec::with_capacity(range.len());
        (0..width)
            .map(|t| {
                buf.clear();
                buf.extend(
                    range
                        .clone()
                        .map(|m| weights[m] * dephasing_factor(table.get(m, t), inv_hbar)),
                );
                pairwise_sum_complex(&buf)
            })
            .collect::<Vec<_>>()
    });
    (0..width)
        .map(|t| {
            let col: Vec<Complex64> = partials.iter().map(|p| p[t]).collect();
            pairwise_sum_complex(&col)
        })
        .collect()
}

/// Uniform semiclassical fidelity from a table and normalized momentum weights.
pub fn fidelity_uniform(table: &DeltaActionTable, weights: &[f64]) -> Result<FidelityCurve> {
    if weights.len() != table.rows() {
        return Err(Error::LengthMismatch {
            what: "momentum weights",
            got: weights.len(),
            expected: table.rows(),
        });
    }
    let total: f64 = crate::summation::pairwise_sum(weights);
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("weights", format!("must sum to 1, sum is {total}")));
    }
    let mut values: Vec<f64> = phasor_averages(table, weights)
        .into_iter()
        .map(|z| z.norm_sqr())
        .collect();
    values[0] = 1.0;
    Ok(FidelityCurve::new(PathLabel::Ivr, values))
}

/// Full-grid IVR fidelity for an initial state.
pub fn fidelity_ivr_grid(
    params: &MapParams,
    state: &StateSpec,
    t_max: usize,
) -> Result<FidelityCurve> {
    let table = delta_action_table(params, state.q0(), t_max, &Sampling::FullGrid)?;
    let weights = grid_weights(params, &WeightSpec::from(state))?;
    fidelity_uniform(&table, &weights)
}

/// Importance-sampled IVR fidelity with a Monte Carlo standard error.
///
/// With `z̄` the sample mean of the phasors and `Σ` the covariance of its
/// real and imaginary parts, `Var |z̄|² ≈ 4 z̄ᵀ Σ z̄ + 2 tr Σ²`; the second
/// term keeps the error honest once the signal has dephased to the floor.
pub fn monte_carlo_fidelity(
    params: &MapParams,
    q0: f64,
    weights: &WeightSpec,
    samples: usize,
    t_max: usize,
    seed: u64,
) -> Result<FidelityCurve> {
    let sampling = Sampling::MonteCarlo {
        samples,
        seed,
        weights: *weights,
    };
    let table = delta_action_table(params, q0, t_max, &sampling)?;
    Ok(monte_carlo_from_table(&table))
}

/// Monte Carlo estimator over an importance-sampled table (equal row weights).
pub fn monte_carlo_from_table(table: &DeltaActionTable) -> FidelityCurve {
    let rows = table.rows();
    let nf = rows as f64;
    let w = vec![1.0 / nf; rows];
    let means = phasor_averages(table, &w);
    let inv_hbar = table.params.inverse_hbar();

    // Second moments, chunked and reduced in fixed order like the means.
    let width = table.t_max + 1;
    let partials = parallel::map_chunks(rows, ROW_CHUNK, |_, range| {
        let mut acc = vec![[0.0f64; 3]; width];
        for m in range {
            for (t, a) in acc.iter_mut().enumerate() {
                let d = dephasing_factor(table.get(m, t), inv_hbar) - means[t];
                a[0] += d.re * d.re;
                a[1] += d.im * d.im;
                a[2] += d.re * d.im;
            }
        }
        acc
    });
    let mut values = Vec::with_capacity(width);
    let mut stderr = Vec::with_capacity(width);
    for (t, z) in means.iter().enumerate() {
        let mut s = [0.0; 3];
        for p in &partials {
            for i in 0..3 {
                s[i] += p[t][i];
            }
        }
        // Covariance of the mean.
        let denom = (nf - 1.0) * nf;
        let (sxx, syy, sxy) = (s[0] / denom, s[1] / denom, s[2] / denom);
        let quad = z.re * z.re * sxx + z.im * z.im * syy + 2.0 * z.re * z.im * sxy;
        let trace_sq = sxx * sxx + syy * syy + 2.0 * sxy * sxy;
        let var = (4.0 * quad + 2.0 * trace_sq).max(0.0);
        values.push(z.norm_sqr());
        stderr.push(var.sqrt());
    }
    values[0] = 1.0;
    stderr[0] = 0.0;
    FidelityCurve {
        label: PathLabel::Ivr,
        values,
        stderr: Some(stderr),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn params(eps: f64, n: usize) -> MapParams {
        MapParams::new(18.0, eps, n).unwrap()
    }

    #[test]
    fn zero_perturbation_table_and_curve() {
        let p = params(0.0, 64);
        let t = delta_action_table(&p, 0.5, 10, &Sampling::FullGrid).unwrap();
        assert!(t.ds.iter().all(|&x| x == 0.0));
        let c = fidelity_uniform(&t, &grid_weights(&p, &WeightSpec::Uniform).unwrap()).unwrap();
        assert!(c.values.iter().all(|&m| (m - 1.0).abs() < 1e-12));
    }

    #[test]
    fn fixed_point_row() {
        let eps = 1e-3;
        let p = params(eps, 64);
        // Unstable fixed point: roundoff grows ~20x per step, keep t short.
        let t = delta_action_table(&p, 0.5, 6, &Sampling::FullGrid).unwrap();
        assert_eq!(t.momenta[0], 0.0);
        for s in 0..=6 {
            let want = -(s as f64) * eps / (4.0 * PI * PI);
            assert!((t.get(0, s) - want).abs() <= 1e-12 * want.abs());
        }
    }

    #[test]
    fn table_linear_in_epsilon() {
        let a = delta_action_table(&params(1e-3, 50), 0.5, 30, &Sampling::FullGrid).unwrap();
        let b = delta_action_table(&params(2e-3, 50), 0.5, 30, &Sampling::FullGrid).unwrap();
        for (x, y) in a.ds.iter().zip(&b.ds) {
            assert_eq!(*y, 2.0 * x);
        }
    }

    #[test]
    fn single_momentum_is_pure_phase() {
        let p = params(5e-3, 100);
        let t = table_for_momenta(&p, 0.5, 40, vec![0.137]);
        let c = fidelity_uniform(&t, &[1.0]).unwrap();
        assert!(c.values.iter().all(|&m| (m - 1.0).abs() < 1e-12));
    }

    #[test]
    fn weight_length_and_normalization_checked() {
        let p = params(1e-3, 10);
        let t = delta_action_table(&p, 0.5, 3, &Sampling::FullGrid).unwrap();
        assert!(matches!(
            fidelity_uniform(&t, &[0.5, 0.5]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(fidelity_uniform(&t, &[0.2; 10]).is_err());
    }

    #[test]
    fn too_few_samples_rejected() {
        let p = params(1e-3, 10);
        let s = Sampling::MonteCarlo {
            samples: 99,
            seed: 1,
            weights: WeightSpec::Uniform,
        };
        assert!(matches!(
            delta_action_table(&p, 0.5, 3, &s),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn monte_carlo_zero_perturbation() {
        let c = monte_carlo_fidelity(&params(0.0, 1000), 0.5, &WeightSpec::Uniform, 500, 20, 3)
            .unwrap();
        assert!(c.values.iter().all(|&m| (m - 1.0).abs() < 1e-12));
        assert!(c.stderr.unwrap().iter().all(|&s| s.abs() < 1e-7));
    }

    #[test]
    fn monte_carlo_is_deterministic_across_execution_modes() {
        let p = params(5e-4, 3500);
        let run = || monte_carlo_fidelity(&p, 0.5, &WeightSpec::Uniform, 5000, 30, 42).unwrap();
        let a = run();
        let b = parallel::sequential(run);
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_weights_peak_at_p0() {
        let p = params(1e-3, 400);
        let w = grid_weights(&p, &WeightSpec::Gaussian { p0: 0.25, sigma: 0.05 }).unwrap();
        let (imax, _) = w
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert_eq!(imax, 100);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_sampling_follows_weights() {
        let p = params(1e-3, 400);
        let spec = WeightSpec::Gaussian { p0: 0.25, sigma: 0.02 };
        let m = sample_momenta(&p, &spec, 20_000, 9).unwrap();
        let mean: f64 = m.iter().sum::<f64>() / m.len() as f64;
        assert_abs_diff_eq!(mean, 0.25, epsilon = 2e-3);
    }
}
