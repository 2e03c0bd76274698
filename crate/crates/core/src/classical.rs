//! Classical standard map on the unit torus.
//!
//! The map drifts first and kicks with the updated position:
//!
//! ```text
//! q' = q + p                        (mod 1)
//! p' = p - (k / 2π) sin(2π q')      (mod 1)
//! ```
//!
//! which is generated by the kick potential `V(q) = -(k / 4π²) cos(2π q)`.
//! Replacing `k` by `k + ε` adds `δV(q) = -(ε / 4π²) cos(2π q)`; under the
//! classical perturbation approximation the orbit is unchanged and only the
//! action shifts, by `ΔS_t = -Σ_j δV(q_{j+1})`.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel;
use crate::summation::pairwise_sum;

/// Reduces `x` into `[0, 1)`.
#[inline]
pub fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    // x - floor(x) rounds up to 1.0 for tiny negative x.
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Signed distance between two torus coordinates, in `[-1/2, 1/2)`.
#[inline]
pub fn torus_delta(a: f64, b: f64) -> f64 {
    wrap_unit(a - b + 0.5) - 0.5
}

/// A point on the unit torus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub q: f64,
    pub p: f64,
}

impl PhasePoint {
    /// Builds a point, reducing both coordinates into `[0, 1)`.
    pub fn new(q: f64, p: f64) -> Self {
        Self {
            q: wrap_unit(q),
            p: wrap_unit(p),
        }
    }

    /// Uniformly distributed point on the torus.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::new(rng.random::<f64>(), rng.random::<f64>())
    }
}

/// Tangent-map product `[[m11, m12], [m21, m22]]` acting on `(δq, δp)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monodromy {
    pub m11: f64,
    pub m12: f64,
    pub m21: f64,
    pub m22: f64,
}

impl Monodromy {
    pub const IDENTITY: Monodromy = Monodromy {
        m11: 1.0,
        m12: 0.0,
        m21: 0.0,
        m22: 1.0,
    };

    /// Determinant, evaluated with a fused multiply-add correction so that
    /// only the rounding of the stored entries contributes error.
    pub fn det(&self) -> f64 {
        let w = self.m12 * self.m21;
        let e = (-self.m12).mul_add(self.m21, w);
        self.m11.mul_add(self.m22, -w) + e
    }

    /// Squared Frobenius norm; the natural scale of rounding in [`det`](Self::det).
    pub fn norm_sqr(&self) -> f64 {
        self.m11 * self.m11 + self.m12 * self.m12 + self.m21 * self.m21 + self.m22 * self.m22
    }

    pub fn trace(&self) -> f64 {
        self.m11 + self.m22
    }

    /// Applies the matrix to a tangent vector.
    pub fn apply(&self, v: (f64, f64)) -> (f64, f64) {
        (
            self.m11 * v.0 + self.m12 * v.1,
            self.m21 * v.0 + self.m22 * v.1,
        )
    }
}

impl Default for Monodromy {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// A propagated orbit with the kick samples that feed the action difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub initial: PhasePoint,
    /// `points[0] == initial`, length `t + 1`.
    pub points: Vec<PhasePoint>,
    /// `kick_samples[j] == cos(2π points[j + 1].q)`, length `t`.
    pub kick_samples: Vec<f64>,
    /// Accumulated tangent map at the final time.
    pub monodromy: Monodromy,
}

impl TrajectoryRecord {
    pub fn steps(&self) -> usize {
        self.kick_samples.len()
    }
}

/// Ensemble estimates of the action diffusion constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConstants {
    /// Action diffusion constant, action² per step.
    pub k: f64,
    /// Diffusion constant of the perturbation gradient, action² / momentum² per step.
    pub d: f64,
    pub ensemble_size: usize,
    pub max_lag: usize,
    /// Autocorrelation of `δV` at lags `0..=max_lag`.
    pub potential_autocorrelation: Vec<f64>,
    /// Autocorrelation of `δV'` at lags `0..=max_lag`.
    pub gradient_autocorrelation: Vec<f64>,
    /// False when either autocorrelation is still above 1% of its zero-lag
    /// value at `max_lag`.
    pub decayed: bool,
}

/// Finite-time Lyapunov exponent estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    /// Mean over the ensemble of `(1/t) ln |M(t) v0|`, per step.
    pub lambda: f64,
    /// Standard error of that mean.
    pub stderr: f64,
    pub ensemble_size: usize,
    pub steps: usize,
}

/// Averaging convention recorded alongside Lyapunov estimates.
pub const LYAPUNOV_AVERAGING: &str =
    "arithmetic mean over a uniform torus ensemble of finite-time exponents (1/t) ln|M(t) v0|, v0 = (0, 1), renormalized every step";

/// One iteration of the standard map.
#[inline]
pub fn map_step(x: PhasePoint, k: f64) -> PhasePoint {
    let q = wrap_unit(x.q + x.p);
    let p = wrap_unit(x.p - k / TAU * (TAU * q).sin());
    PhasePoint { q, p }
}

/// Exact inverse of [`map_step`]: undo the kick, then the drift.
#[inline]
pub fn map_step_inverse(x: PhasePoint, k: f64) -> PhasePoint {
    let p = wrap_unit(x.p + k / TAU * (TAU * x.q).sin());
    let q = wrap_unit(x.q - p);
    PhasePoint { q, p }
}

/// Single-step Jacobian at the updated position `q_next`.
#[inline]
fn step_jacobian(q_next: f64, k: f64) -> (f64, f64, f64, f64) {
    let c = k * (TAU * q_next).cos();
    (1.0, 1.0, -c, 1.0 - c)
}

/// Left-multiplies `m` by the Jacobian of the step that produced `x_next`.
#[inline]
pub fn tangent_step(x_next: PhasePoint, m: Monodromy, k: f64) -> Monodromy {
    let (a, b, c, d) = step_jacobian(x_next.q, k);
    Monodromy {
        m11: a * m.m11 + b * m.m21,
        m12: a * m.m12 + b * m.m22,
        m21: c * m.m11 + d * m.m21,
        m22: c * m.m12 + d * m.m22,
    }
}

/// Propagates `x0` for `t` steps, recording the orbit, the kick samples and
/// the monodromy.
pub fn evolve(x0: PhasePoint, k: f64, t: usize) -> TrajectoryRecord {
    let mut points = Vec::with_capacity(t + 1);
    let mut kick_samples = Vec::with_capacity(t);
    let mut m = Monodromy::IDENTITY;
    let mut x = x0;
    points.push(x);
    for _ in 0..t {
        x = map_step(x, k);
        m = tangent_step(x, m, k);
        kick_samples.push((TAU * x.q).cos());
        points.push(x);
    }
    TrajectoryRecord {
        initial: x0,
        points,
        kick_samples,
        monodromy: m,
    }
}

/// Prefactor turning a sum of `cos(2π q)` samples into an action difference.
#[inline]
pub fn action_scale(epsilon: f64) -> f64 {
    epsilon / (4.0 * PI * PI)
}

/// Cumulative action difference `ΔS_t` for `t = 0..=T` along `traj`.
pub fn delta_action(traj: &TrajectoryRecord, epsilon: f64) -> Vec<f64> {
    let scale = action_scale(epsilon);
    let mut out = Vec::with_capacity(traj.kick_samples.len() + 1);
    let mut sum = 0.0;
    out.push(0.0);
    for &c in &traj.kick_samples {
        sum += c;
        out.push(scale * sum);
    }
    out
}

/// Running sums of `cos(2π q_j)` from `(q0, p0)` for `t` steps, written into
/// `out[1..=t]` with `out[0] = 0`. Allocation-free core of [`delta_action`].
#[inline]
pub(crate) fn kick_sums_into(x0: PhasePoint, k: f64, out: &mut [f64]) {
    let mut x = x0;
    let mut sum = 0.0;
    out[0] = 0.0;
    for slot in out.iter_mut().skip(1) {
        x = map_step(x, k);
        sum += (TAU * x.q).cos();
        *slot = sum;
    }
}

/// Finite-time Lyapunov exponent of the standard map.
///
/// Degenerate (regular) parameters are not an error: the estimate simply
/// comes back small with whatever spread the ensemble shows.
pub fn lyapunov_exponent(
    k: f64,
    ensemble_size: usize,
    t: usize,
    seed: u64,
) -> Result<LyapunovEstimate> {
    if t < 20 {
        return Err(Error::invalid("t", format!("need t >= 20, got {t}")));
    }
    if ensemble_size < 100 {
        return Err(Error::invalid(
            "ensemble_size",
            format!("need ensemble_size >= 100, got {ensemble_size}"),
        ));
    }
    let per_chunk = parallel::map_chunks(ensemble_size, parallel::DEFAULT_CHUNK, |ci, range| {
        let mut rng = parallel::chunk_rng(seed, ci);
        range
            .map(|_| finite_time_exponent(PhasePoint::random(&mut rng), k, t))
            .collect::<Vec<_>>()
    });
    let samples: Vec<f64> = per_chunk.into_iter().flatten().collect();
    let n = samples.len() as f64;
    let mean = pairwise_sum(&samples) / n;
    let dev: Vec<f64> = samples.iter().map(|x| (x - mean).powi(2)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    if mean < 0.05 {
        log::warn!("k = {k}: Lyapunov estimate {mean:.3} suggests regular dynamics");
    }
    Ok(LyapunovEstimate {
        lambda: mean,
        stderr: (var / n).sqrt(),
        ensemble_size,
        steps: t,
    })
}

/// `(1/t) ln |M(t) (0, 1)|` with renormalization after every step.
pub fn finite_time_exponent(x0: PhasePoint, k: f64, t: usize) -> f64 {
    let mut x = x0;
    let (mut vq, mut vp) = (0.0, 1.0);
    let mut log_growth = 0.0;
    for _ in 0..t {
        x = map_step(x, k);
        let (a, b, c, d) = step_jacobian(x.q, k);
        let nq = a * vq + b * vp;
        let np = c * vq + d * vp;
        let norm = nq.hypot(np);
        log_growth += norm.ln();
        vq = nq / norm;
        vp = np / norm;
    }
    log_growth / t as f64
}

/// Ensemble estimate of the diffusion constants `K` and `D`.
///
/// Orbits start uniformly on the torus (the invariant measure), so no
/// burn-in is needed. Each orbit contributes `window` time origins, and
/// `c(j)` is the mean of `(X_i - <X>)(X_{i+j} - <X>)` over all of them.
/// The lag sums use the trapezoid for `K` (half weight at lag zero) and the
/// symmetric sum `c(0) + 2 Σ c(j)` for `D`.
pub fn diffusion_constants(
    k: f64,
    epsilon: f64,
    ensemble_size: usize,
    max_lag: usize,
    seed: u64,
) -> Result<DiffusionConstants> {
    if ensemble_size < 10_000 {
        return Err(Error::invalid(
            "ensemble_size",
            format!("need ensemble_size >= 10^4, got {ensemble_size}"),
        ));
    }
    if max_lag < 10 {
        return Err(Error::invalid("max_lag", format!("need max_lag >= 10, got {max_lag}")));
    }
    let window = DIFFUSION_WINDOW;
    let len = window + max_lag;

    struct Partial {
        sum_c: f64,
        sum_s: f64,
        lag_cc: Vec<f64>,
        lag_ss: Vec<f64>,
    }

    let partials = parallel::map_chunks(ensemble_size, 256, |ci, range| {
        let mut rng = parallel::chunk_rng(seed, ci);
        let mut cos_buf = vec![0.0; len];
        let mut sin_buf = vec![0.0; len];
        let mut p = Partial {
            sum_c: 0.0,
            sum_s: 0.0,
            lag_cc: vec![0.0; max_lag + 1],
            lag_ss: vec![0.0; max_lag + 1],
        };
        for _ in range {
            let mut x = PhasePoint::random(&mut rng);
            for i in 0..len {
                x = map_step(x, k);
                let (s, c) = (TAU * x.q).sin_cos();
                cos_buf[i] = c;
                sin_buf[i] = s;
            }
            p.sum_c += cos_buf[..window].iter().sum::<f64>();
            p.sum_s += sin_buf[..window].iter().sum::<f64>();
            for lag in 0..=max_lag {
                let mut acc_c = 0.0;
                let mut acc_s = 0.0;
                for i in 0..window {
                    acc_c += cos_buf[i] * cos_buf[i + lag];
                    acc_s += sin_buf[i] * sin_buf[i + lag];
                }
                p.lag_cc[lag] += acc_c;
                p.lag_ss[lag] += acc_s;
            }
        }
        p
    });

    let samples = (ensemble_size * window) as f64;
    let mut sum_c = 0.0;
    let mut sum_s = 0.0;
    let mut cc = vec![0.0; max_lag + 1];
    let mut ss = vec![0.0; max_lag + 1];
    for p in &partials {
        sum_c += p.sum_c;
        sum_s += p.sum_s;
        for lag in 0..=max_lag {
            cc[lag] += p.lag_cc[lag];
            ss[lag] += p.lag_ss[lag];
        }
    }
    let mean_c = sum_c / samples;
    let mean_s = sum_s / samples;

    // Unit-ε correlations of cos and sin; the physical prefactors enter once,
    // at the end, so that K and D scale exactly as ε².
    let unit_cos: Vec<f64> = cc.iter().map(|x| x / samples - mean_c * mean_c).collect();
    let unit_sin: Vec<f64> = ss.iter().map(|x| x / samples - mean_s * mean_s).collect();

    let v_scale = (epsilon / (4.0 * PI * PI)).powi(2);
    let g_scale = (epsilon / TAU).powi(2);
    let potential_autocorrelation: Vec<f64> = unit_cos.iter().map(|c| v_scale * c).collect();
    let gradient_autocorrelation: Vec<f64> = unit_sin.iter().map(|c| g_scale * c).collect();

    let k_unit = 0.5 * unit_cos[0] + unit_cos[1..].iter().sum::<f64>();
    let d_unit = unit_sin[0] + 2.0 * unit_sin[1..].iter().sum::<f64>();

    let decayed = unit_cos[max_lag].abs() < 0.01 * unit_cos[0]
        && unit_sin[max_lag].abs() < 0.01 * unit_sin[0];
    if !decayed {
        log::warn!(
            "k = {k}: autocorrelation at lag {max_lag} is still above 1% of its zero-lag value"
        );
    }

    Ok(DiffusionConstants {
        k: v_scale * k_unit,
        d: g_scale * d_unit,
        ensemble_size,
        max_lag,
        potential_autocorrelation,
        gradient_autocorrelation,
        decayed,
    })
}

/// Time origins per orbit in [`diffusion_constants`].
pub const DIFFUSION_WINDOW: usize = 64;
