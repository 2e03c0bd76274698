//! Exact quantum benchmark: the standard map quantized on an `n`-dimensional
//! torus Hilbert space with `ħ = 1/(2π n)`.
//!
//! States live on the position grid `q_j = j/n`. One period drifts in the
//! momentum representation and then kicks in the position representation,
//! matching the classical map's drift-then-kick order:
//!
//! ```text
//! ψ ← diag(kick) · IFFT · diag(kinetic) · FFT · ψ
//! kick_j    = exp[ i (n k / 2π) cos(2π j / n) ]
//! kinetic_m = exp[ -i π m² / n ],  m ∈ {-⌊n/2⌋, …, ⌈n/2⌉ - 1}
//! ```
//!
//! Both Bloch angles are zero.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::model::{FidelityCurve, MapParams, PathLabel, StateSpec};
use crate::parallel;
use crate::summation::{pairwise_sum, pairwise_sum_complex};

/// Tolerance on `‖ψ‖ - 1` accepted by the propagator.
pub const NORM_TOLERANCE: f64 = 1e-10;

/// Amplitudes on the position grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    pub amplitudes: Vec<Complex64>,
}

impl QuantumState {
    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        let sq: Vec<f64> = self.amplitudes.iter().map(|a| a.norm_sqr()).collect();
        pairwise_sum(&sq).sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &QuantumState) -> Complex64 {
        let prods: Vec<Complex64> = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .collect();
        pairwise_sum_complex(&prods)
    }

    fn normalize(&mut self) {
        let norm = self.norm();
        self.amplitudes.iter_mut().for_each(|a| *a /= norm);
    }

    /// Momentum-basis amplitudes `φ_m = n^{-1/2} Σ_j e^{-2πi jm/n} ψ_j`, in
    /// FFT bin order.
    pub fn momentum_amplitudes(&self) -> Vec<Complex64> {
        let n = self.dim();
        let mut buf = self.amplitudes.clone();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let s = 1.0 / (n as f64).sqrt();
        buf.iter_mut().for_each(|a| *a *= s);
        buf
    }
}

/// Signed integer momentum of FFT bin `i`: `i` below `⌈n/2⌉`, `i - n` above.
#[inline]
pub fn signed_momentum(i: usize, n: usize) -> i64 {
    if i < n.div_ceil(2) {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Grid index nearest to `q0` and whether `q0` had to be snapped.
pub fn grid_index(n: usize, q0: f64) -> (usize, bool) {
    let x = q0.rem_euclid(1.0) * n as f64;
    let j = x.round();
    let snapped = (x - j).abs() > 1e-9;
    ((j as usize) % n, snapped)
}

/// Position eigenstate at the grid point nearest `q0`.
pub fn make_position_state(n: usize, q0: f64) -> Result<QuantumState> {
    if n == 0 {
        return Err(Error::invalid("n", "Hilbert dimension must be positive"));
    }
    let (j, snapped) = grid_index(n, q0);
    if snapped {
        log::warn!("q0 = {q0} is off the {n}-point grid; snapped to {}", j as f64 / n as f64);
    }
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); n];
    amplitudes[j] = Complex64::new(1.0, 0.0);
    Ok(QuantumState { amplitudes })
}

/// Periodized Gaussian packet centred at `(q0, p0)` with position width `sigma`.
pub fn make_gaussian_state(n: usize, q0: f64, p0: f64, sigma: f64) -> Result<QuantumState> {
    if n == 0 {
        return Err(Error::invalid("n", "Hilbert dimension must be positive"));
    }
    let dq = 1.0 / n as f64;
    if !(sigma > 2.0 * dq) {
        return Err(Error::invalid(
            "sigma",
            format!("need sigma > 2/n = {:.3e} to resolve the packet, got {sigma}", 2.0 * dq),
        ));
    }
    if !(sigma < MAX_GAUSSIAN_WIDTH) {
        return Err(Error::invalid(
            "sigma",
            format!("need sigma < {MAX_GAUSSIAN_WIDTH} to keep the packet localized, got {sigma}"),
        ));
    }
    let inv_hbar = TAU * n as f64;
    // exp(-x²/2σ²) < 1e-14 once x > σ √(2 ln 1e14).
    let reach = sigma * (2.0 * 14.0 * std::f64::consts::LN_10).sqrt();
    let images = reach.ceil() as i64 + 1;
    let mut amplitudes: Vec<Complex64> = (0..n)
        .map(|j| {
            let base = j as f64 * dq - q0;
            (-images..=images)
                .map(|w| {
                    let x = base + w as f64;
                    let phase = (p0 * x * inv_hbar).rem_euclid(TAU);
                    Complex64::from_polar((-x * x / (2.0 * sigma * sigma)).exp(), phase)
                })
                .sum()
        })
        .collect();
    let mut state = QuantumState {
        amplitudes: std::mem::take(&mut amplitudes),
    };
    state.normalize();
    Ok(state)
}

/// Widest packet accepted by [`make_gaussian_state`].
pub const MAX_GAUSSIAN_WIDTH: f64 = 0.2;

/// Builds the initial state described by `spec`.
pub fn make_state(n: usize, spec: &StateSpec) -> Result<QuantumState> {
    match *spec {
        StateSpec::Position { q0 } => make_position_state(n, q0),
        StateSpec::Gaussian { q0, p0, sigma } => make_gaussian_state(n, q0, p0, sigma),
    }
}

/// One period of the quantized standard map, with precomputed phases and FFT plans.
#[derive(Clone)]
pub struct QuantizedMap {
    pub n: usize,
    pub k: f64,
    pub hbar: f64,
    pub kick_phases: Vec<Complex64>,
    pub kinetic_phases: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for QuantizedMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QuantizedMap")
            .field("n", &self.n)
            .field("k", &self.k)
            .field("hbar", &self.hbar)
            .finish_non_exhaustive()
    }
}

impl QuantizedMap {
    pub fn new(n: usize, k: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("n", format!("Hilbert dimension must be >= 2, got {n}")));
        }
        let strength = n as f64 * k / TAU;
        let kick_phases = (0..n)
            .map(|j| {
                let phase = (strength * (TAU * j as f64 / n as f64).cos()).rem_euclid(TAU);
                Complex64::from_polar(1.0, phase)
            })
            .collect();
        // π m²/n = 2π (m² mod 2n) / 2n, exact in integers.
        let two_n = 2 * n as i64;
        let kinetic_phases = (0..n)
            .map(|i| {
                let m = signed_momentum(i, n);
                let r = (m * m).rem_euclid(two_n);
                Complex64::from_polar(1.0, -PI * r as f64 / n as f64)
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            k,
            hbar: 1.0 / (TAU * n as f64),
            kick_phases,
            kinetic_phases,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    /// Advances `psi` by one period in place.
    pub fn step(&self, psi: &mut QuantumState, scratch: &mut Vec<Complex64>) {
        debug_assert_eq!(psi.dim(), self.n);
        let amps = &mut psi.amplitudes;
        let len = self.forward.get_inplace_scratch_len();
        if scratch.len() < len {
            scratch.resize(len, Complex64::new(0.0, 0.0));
        }
        self.forward.process_with_scratch(amps, &mut scratch[..len]);
        let kin = &self.kinetic_phases;
        parallel::for_each_mut(amps, |i, a| *a *= kin[i]);
        self.inverse.process_with_scratch(amps, &mut scratch[..len]);
        let kick = &self.kick_phases;
        let s = 1.0 / self.n as f64;
        parallel::for_each_mut(amps, |i, a| *a *= kick[i] * s);
    }
}

/// Returns `psi` advanced by one period.
pub fn floquet_step(psi: &QuantumState, map: &QuantizedMap) -> QuantumState {
    let mut out = psi.clone();
    let mut scratch = Vec::new();
    map.step(&mut out, &mut scratch);
    out
}

/// Exact fidelity `M(t) = |⟨ψ_V(t)|ψ_0(t)⟩|²` for `t = 0..=t_max`.
///
/// The initial state is propagated under `k` and, independently, under
/// `k + ε`.
pub fn fidelity_exact(params: &MapParams, state: &StateSpec, t_max: usize) -> Result<FidelityCurve> {
    let psi0 = make_state(params.n, state)?;
    fidelity_exact_from(params, &psi0, t_max)
}

/// As [`fidelity_exact`], starting from an explicit state.
pub fn fidelity_exact_from(
    params: &MapParams,
    psi0: &QuantumState,
    t_max: usize,
) -> Result<FidelityCurve> {
    if t_max < 1 {
        return Err(Error::invalid("t_max", "need t_max >= 1"));
    }
    if psi0.dim() != params.n {
        return Err(Error::LengthMismatch {
            what: "initial state",
            got: psi0.dim(),
            expected: params.n,
        });
    }
    let norm = psi0.norm();
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::NotNormalized {
            norm,
            tolerance: NORM_TOLERANCE,
        });
    }
    let unperturbed = QuantizedMap::new(params.n, params.k)?;
    let perturbed = QuantizedMap::new(params.n, params.k + params.epsilon)?;
    let mut a = psi0.clone();
    let mut b = psi0.clone();
    let mut scratch_a = Vec::new();
    let mut scratch_b = Vec::new();
    let concurrent = params.n >= 1 << 14;
    let mut values = Vec::with_capacity(t_max + 1);
    values.push(1.0);
    for _ in 0..t_max {
        if concurrent {
            parallel::join(
                || unperturbed.step(&mut a, &mut scratch_a),
                || perturbed.step(&mut b, &mut scratch_b),
            );
        } else {
            unperturbed.step(&mut a, &mut scratch_a);
            perturbed.step(&mut b, &mut scratch_b);
        }
        values.push(b.inner(&a).norm_sqr());
    }
    Ok(FidelityCurve::new(PathLabel::Exact, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn position_state_layout() {
        let s = make_position_state(4, 0.5).unwrap();
        let expect = [0.0, 0.0, 1.0, 0.0];
        for (a, e) in s.amplitudes.iter().zip(expect) {
            assert_eq!(*a, Complex64::new(e, 0.0));
        }
        let s = make_position_state(350, 0.5).unwrap();
        assert_eq!(s.amplitudes[175], Complex64::new(1.0, 0.0));
        assert_eq!(s.norm(), 1.0);
        assert!(make_position_state(0, 0.5).is_err());
    }

    #[test]
    fn off_grid_position_snaps() {
        let (j, snapped) = grid_index(10, 0.33);
        assert_eq!(j, 3);
        assert!(snapped);
        assert_eq!(grid_index(10, 0.3), (3, false));
        assert_eq!(grid_index(10, 0.99).0, 0);
    }

    #[test]
    fn gaussian_norm_and_symmetry() {
        let n = 512;
        let s = make_gaussian_state(n, 0.5, 0.0, 0.05).unwrap();
        assert_abs_diff_eq!(s.norm(), 1.0, epsilon = 1e-12);
        let c = n / 2;
        for d in 1..c {
            let l = s.amplitudes[c - d];
            let r = s.amplitudes[c + d];
            assert_abs_diff_eq!((l - r).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn gaussian_rejects_bad_width() {
        let e = make_gaussian_state(100, 0.5, 0.0, 0.01).unwrap_err();
        assert!(e.to_string().contains("2/n"));
        let e = make_gaussian_state(100, 0.5, 0.0, 0.5).unwrap_err();
        assert!(e.to_string().contains("localized"));
    }

    #[test]
    fn gaussian_mean_momentum() {
        let n = 3500;
        let s = make_gaussian_state(n, 0.5, 0.3, 0.05).unwrap();
        // Brute-force momentum-basis expectation, one DFT coefficient at a time.
        let mut mean = 0.0;
        for m in -(n as i64 / 2)..(n as i64 / 2) {
            let coeff: Complex64 = s
                .amplitudes
                .iter()
                .enumerate()
                .map(|(j, a)| {
                    let ang = -TAU * ((j as i64 * m).rem_euclid(n as i64)) as f64 / n as f64;
                    a * Complex64::from_polar(1.0, ang)
                })
                .sum();
            mean += m as f64 / n as f64 * coeff.norm_sqr() / n as f64;
        }
        assert_abs_diff_eq!(mean, 0.3, epsilon = 1e-3);
    }

    #[test]
    fn phases_are_unimodular() {
        let map = QuantizedMap::new(1001, 18.0).unwrap();
        for z in map.kick_phases.iter().chain(&map.kinetic_phases) {
            assert_abs_diff_eq!(z.norm(), 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(map.hbar * TAU * 1001.0, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn free_evolution_keeps_momentum_eigenstates() {
        let n = 64;
        let map = QuantizedMap::new(n, 0.0).unwrap();
        let m = 5.0;
        let psi = QuantumState {
            amplitudes: (0..n)
                .map(|j| Complex64::from_polar(1.0 / (n as f64).sqrt(), TAU * m * j as f64 / n as f64))
                .collect(),
        };
        let out = floquet_step(&psi, &map);
        assert_abs_diff_eq!(psi.inner(&out).norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn step_is_unitary() {
        let map = QuantizedMap::new(350, 18.0).unwrap();
        let mut psi = make_gaussian_state(350, 0.3, 0.1, 0.05).unwrap();
        let mut scratch = Vec::new();
        for _ in 0..50 {
            map.step(&mut psi, &mut scratch);
        }
        assert_abs_diff_eq!(psi.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn exact_fidelity_trivial_cases() {
        let p = MapParams::new(18.0, 0.0, 128).unwrap();
        let c = fidelity_exact(&p, &StateSpec::Position { q0: 0.5 }, 20).unwrap();
        assert_eq!(c.values[0], 1.0);
        assert!(c.values.iter().all(|m| (m - 1.0).abs() < 1e-10));
        assert!(fidelity_exact(&p, &StateSpec::Position { q0: 0.5 }, 0).is_err());
    }

    #[test]
    fn exact_fidelity_first_step_is_bessel_average() {
        // After one step a position state is spread uniformly in q, so the
        // overlap is the grid average of exp(i n ε cos(2πq) / 2π).
        let n = 200;
        let eps = 2e-2;
        let p = MapParams::new(18.0, eps, n).unwrap();
        let c = fidelity_exact(&p, &StateSpec::Position { q0: 0.5 }, 1).unwrap();
        let a = n as f64 * eps / TAU;
        let avg: Complex64 = (0..n)
            .map(|j| Complex64::from_polar(1.0, a * (TAU * j as f64 / n as f64).cos()))
            .sum::<Complex64>()
            / n as f64;
        assert_abs_diff_eq!(c.values[1], avg.norm_sqr(), epsilon = 1e-12);
    }

    #[test]
    fn rejects_unnormalized_state() {
        let p = MapParams::new(18.0, 1e-3, 8).unwrap();
        let psi = QuantumState {
            amplitudes: vec![Complex64::new(1.0, 0.0); 8],
        };
        assert!(matches!(
            fidelity_exact_from(&p, &psi, 3),
            Err(Error::NotNormalized { .. })
        ));
    }
}
