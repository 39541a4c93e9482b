//! Two-level time-optimal control.
//!
//! A square pulse `(Ω, δ, η = φ̇, φ₀, τ)` drives
//! `H(t) = ½[[δ, Ω e^{-iφ(t)}], [Ω e^{iφ(t)}, -δ]]` with `φ(t) = φ₀ + ηt`.
//! With constant `Ω`, `δ` and `η` the dressed-state angle
//! `χ = arccot((η - δ)/Ω)` is constant, `ξ(t) = φ(t) - π`, and the
//! propagator has the closed form
//!
//! ```text
//! U(τ) = diag(e^{-iφ⁻}, e^{iφ⁻}) · [cos γ′ + i sin γ′ [[cos χ, -sin χ e^{-iφ₀}],
//!                                                      [-sin χ e^{iφ₀}, -cos χ]]]
//! ```
//!
//! with `γ′ = Ωτ / (2 sin χ)` and `φ⁻ = ητ/2`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{
    canonical_angle, commutator, max_abs, rk4_step, CMatrix, NumericsError, TimeGrid, C64,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TocError {
    #[error("invalid pulse: {0}")]
    InvalidPulse(String),
    #[error("invalid gate target: {0}")]
    InvalidTarget(String),
    #[error(
        "no pulse reaches the target at detuning {requested:.9} rad/ns; nearest admissible detunings (rad/ns): {admissible:?}"
    )]
    NoSolution { requested: f64, admissible: Vec<f64> },
    #[error("infeasible gate time: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Drive parameters of one square time-optimal segment. Frequencies in rad/ns,
/// angles in rad, time in ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    omega: f64,
    delta: f64,
    eta: f64,
    phi0: f64,
    tau: f64,
}

impl PulseSpec {
    pub fn new(omega: f64, delta: f64, eta: f64, phi0: f64, tau: f64) -> Result<Self, TocError> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(TocError::InvalidPulse(format!(
                "drive amplitude must be positive, got {omega}"
            )));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(TocError::InvalidPulse(format!("duration must be positive, got {tau}")));
        }
        if !delta.is_finite() || !eta.is_finite() || !phi0.is_finite() {
            return Err(TocError::InvalidPulse("non-finite detuning, slope or phase".into()));
        }
        Ok(Self { omega, delta, eta, phi0, tau })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn phi0(&self) -> f64 {
        self.phi0
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Copy with a different phase slope; `χ` follows.
    pub fn with_eta(&self, eta: f64) -> Self {
        Self { eta, ..*self }
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self, TocError> {
        Self::new(self.omega, self.delta, self.eta, self.phi0, tau)
    }

    /// Dressed-state polar angle, in `(0, π)`.
    pub fn chi(&self) -> f64 {
        self.omega.atan2(self.eta - self.delta)
    }

    /// The Lagrange constant `c = cot χ`.
    pub fn lagrange_constant(&self) -> f64 {
        (self.eta - self.delta) / self.omega
    }

    pub fn phase_at(&self, t: f64) -> f64 {
        self.phi0 + self.eta * t
    }

    pub fn gamma_prime(&self) -> f64 {
        self.omega * self.tau / (2.0 * self.chi().sin())
    }

    pub fn phi_minus(&self) -> f64 {
        0.5 * self.eta * self.tau
    }

    pub fn phi_plus(&self) -> f64 {
        self.phi0 + 0.5 * self.eta * self.tau
    }
}

/// Target parameters `(γ′, χ, φ⁻, φ₀)` of the single-step gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateTarget {
    gamma_prime: f64,
    chi: f64,
    phi_minus: f64,
    phi0: f64,
}

impl GateTarget {
    /// `γ′` is kept as given (it sets the duration); `φ⁻` and `φ₀` are wrapped
    /// into `(-π, π]`.
    pub fn new(gamma_prime: f64, chi: f64, phi_minus: f64, phi0: f64) -> Result<Self, TocError> {
        if !(gamma_prime > 0.0) || !gamma_prime.is_finite() {
            return Err(TocError::InvalidTarget(format!(
                "rotation angle must be positive, got {gamma_prime}"
            )));
        }
        if !(chi > 0.0 && chi < PI) {
            return Err(TocError::InvalidTarget(format!("chi must lie in (0, pi), got {chi}")));
        }
        if !phi_minus.is_finite() || !phi0.is_finite() {
            return Err(TocError::InvalidTarget("non-finite phase".into()));
        }
        Ok(Self {
            gamma_prime,
            chi,
            phi_minus: canonical_angle(phi_minus),
            phi0: canonical_angle(phi0),
        })
    }

    pub fn hadamard() -> Self {
        Self { gamma_prime: 0.5 * PI, chi: 0.25 * PI, phi_minus: PI, phi0: PI }
    }

    pub fn s_gate() -> Self {
        Self { gamma_prime: PI, chi: 0.5 * PI, phi_minus: -0.75 * PI, phi0: 0.0 }
    }

    pub fn t_gate() -> Self {
        Self { gamma_prime: PI, chi: 0.5 * PI, phi_minus: -0.875 * PI, phi0: 0.0 }
    }

    /// Full loop: `U = I` up to phase for any detuning.
    pub fn identity() -> Self {
        Self { gamma_prime: 2.0 * PI, chi: 0.5 * PI, phi_minus: 0.0, phi0: 0.0 }
    }

    /// Full Rabi loop through the auxiliary level that leaves the driven
    /// state with phase `e^{iγ}`: `γ′ = π`, `φ⁻ = γ - π`.
    pub fn controlled_phase(gamma: f64) -> Result<Self, TocError> {
        Self::new(PI, 0.5 * PI, gamma - PI, PI)
    }

    pub fn gamma_prime(&self) -> f64 {
        self.gamma_prime
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }

    pub fn phi_minus(&self) -> f64 {
        self.phi_minus
    }

    pub fn phi0(&self) -> f64 {
        self.phi0
    }

    /// For `γ′ ∈ πℤ` the gate does not depend on `χ`, leaving the detuning
    /// free to shorten the pulse.
    pub fn chi_is_free(&self) -> bool {
        self.gamma_prime.sin().abs() < 1e-12
    }

    pub fn unitary(&self) -> CMatrix {
        evolution_from_parameters(self.gamma_prime, self.chi, self.phi_minus, self.phi0)
    }
}

/// `diag(e^{-iφ⁻}, e^{iφ⁻}) · U_g(γ′, χ, φ₀)`.
pub fn evolution_from_parameters(gamma_prime: f64, chi: f64, phi_minus: f64, phi0: f64) -> CMatrix {
    let (s, c) = gamma_prime.sin_cos();
    let i_sin = C64::new(0.0, s);
    let ug00 = C64::new(c, 0.0) + i_sin * chi.cos();
    let ug11 = C64::new(c, 0.0) - i_sin * chi.cos();
    let ug01 = -i_sin * chi.sin() * C64::from_polar(1.0, -phi0);
    let ug10 = -i_sin * chi.sin() * C64::from_polar(1.0, phi0);
    let left = C64::from_polar(1.0, -phi_minus);
    let right = C64::from_polar(1.0, phi_minus);
    CMatrix::from_row_slice(2, 2, &[left * ug00, left * ug01, right * ug10, right * ug11])
}

pub fn two_level_hamiltonian(p: &PulseSpec, t: f64) -> CMatrix {
    let phi = p.phase_at(t);
    let off = C64::from_polar(0.5 * p.omega, -phi);
    CMatrix::from_row_slice(
        2,
        2,
        &[C64::new(0.5 * p.delta, 0.0), off, off.conj(), C64::new(-0.5 * p.delta, 0.0)],
    )
}

/// Closed-form propagator `U(τ)`.
pub fn ideal_evolution(p: &PulseSpec) -> CMatrix {
    ideal_evolution_at(p, p.tau)
}

/// Closed-form propagator from 0 to any `t`.
pub fn ideal_evolution_at(p: &PulseSpec, t: f64) -> CMatrix {
    let chi = p.chi();
    let gamma_prime = p.omega * t / (2.0 * chi.sin());
    evolution_from_parameters(gamma_prime, chi, 0.5 * p.eta * t, p.phi0)
}

/// `|Tr(U†V)| / d`; 1 means equal up to global phase.
pub fn phase_invariant_overlap(u: &CMatrix, v: &CMatrix) -> f64 {
    (u.adjoint() * v).trace().norm() / u.nrows() as f64
}

/// Max-norm distance after removing the best global phase.
pub fn phase_aligned_distance(u: &CMatrix, v: &CMatrix) -> f64 {
    let tr = (u.adjoint() * v).trace();
    let phase = if tr.norm() > 0.0 { tr / tr.norm() } else { C64::new(1.0, 0.0) };
    max_abs(&(u * phase - v))
}

/// `(χ, ξ, γ)` sampled on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryTrajectory {
    pub times: Vec<f64>,
    pub chi: Vec<f64>,
    pub xi: Vec<f64>,
    pub gamma: Vec<f64>,
}

fn auxiliary_rates(p: &PulseSpec, t: f64, state: &[f64; 2]) -> [f64; 2] {
    let [chi, xi] = *state;
    let rel = p.phase_at(t) - xi;
    [p.omega * rel.sin(), p.delta - p.omega * rel.cos() / chi.tan()]
}

fn phase_integrand(p: &PulseSpec, chi: f64, xi_rate: f64) -> f64 {
    let cos_chi = chi.cos();
    if cos_chi.abs() < 1e-6 {
        // Resonant limit; same value with the 0/0 removed.
        0.5 * (p.omega / chi.sin() - xi_rate)
    } else {
        (2.0 * xi_rate * (0.5 * chi).sin().powi(2) - p.delta) / (2.0 * cos_chi)
    }
}

/// Integrates the dressed-state equations from `χ(0) = χ`, `ξ(0) = φ₀ - π`
/// and accumulates the overall phase by trapezoidal quadrature.
pub fn auxiliary_trajectory(p: &PulseSpec, grid: &TimeGrid) -> AuxiliaryTrajectory {
    let n = grid.n_steps();
    let mut out = AuxiliaryTrajectory {
        times: Vec::with_capacity(n + 1),
        chi: Vec::with_capacity(n + 1),
        xi: Vec::with_capacity(n + 1),
        gamma: Vec::with_capacity(n + 1),
    };
    let mut state = [p.chi(), p.phi0 - PI];
    let mut gamma = 0.0;
    let rates = |t: f64, s: &[f64; 2]| auxiliary_rates(p, t, s);
    let mut t = grid.time(0);
    let mut integrand = phase_integrand(p, state[0], rates(t, &state)[1]);
    for k in 0..=n {
        out.times.push(t);
        out.chi.push(state[0]);
        out.xi.push(state[1]);
        out.gamma.push(gamma);
        if k == n {
            break;
        }
        state = rk4_step(rates, &state, t, grid.dt());
        t = grid.time(k + 1);
        let next = phase_integrand(p, state[0], rates(t, &state)[1]);
        gamma += 0.5 * grid.dt() * (integrand + next);
        integrand = next;
    }
    out
}

/// Overall phase `γ(τ)`; equals `γ′ - φ⁻` for time-optimal pulses.
pub fn overall_phase(p: &PulseSpec) -> f64 {
    let grid = TimeGrid::with_steps(0.0, p.tau, 2000).expect("pulse duration is positive");
    *auxiliary_trajectory(p, &grid).gamma.last().expect("grid is non-empty")
}

/// Lewis–Riesenfeld invariant with `μ = 1`.
pub fn invariant_operator(chi: f64, xi: f64) -> CMatrix {
    let off = C64::from_polar(0.5 * chi.sin(), -xi);
    let d = 0.5 * chi.cos();
    CMatrix::from_row_slice(2, 2, &[C64::new(d, 0.0), off, off.conj(), C64::new(-d, 0.0)])
}

/// `max_t ‖i İ - [H, I]‖_max` for the invariant of `p` under its own drive.
pub fn invariant_residual(p: &PulseSpec, grid: &TimeGrid) -> f64 {
    invariant_residual_against(p, p, grid)
}

/// Residual of the invariant built from `ansatz` (constant `χ`,
/// `ξ(t) = φ(t) - π`) under the Hamiltonian of `drive`.
pub fn invariant_residual_against(ansatz: &PulseSpec, drive: &PulseSpec, grid: &TimeGrid) -> f64 {
    let chi = ansatz.chi();
    let xi_rate = ansatz.eta;
    grid.times()
        .map(|t| {
            let xi = ansatz.phase_at(t) - PI;
            let inv = invariant_operator(chi, xi);
            // dI/dt: only ξ moves.
            let d_off = C64::from_polar(0.5 * chi.sin(), -xi) * C64::new(0.0, -xi_rate);
            let d_inv = CMatrix::from_row_slice(
                2,
                2,
                &[C64::new(0.0, 0.0), d_off, d_off.conj(), C64::new(0.0, 0.0)],
            );
            let h = two_level_hamiltonian(drive, t);
            max_abs(&(d_inv * C64::new(0.0, 1.0) - commutator(&h, &inv)))
        })
        .fold(0.0, f64::max)
}

fn free_chi_durations(gamma_prime: f64, phi_minus: f64, omega: f64, delta: f64) -> Vec<(f64, f64)> {
    // (Ωτ)² + (A - δτ)² = 4γ′² with A = ητ = 2φ⁻ + 2πk.
    let norm = omega * omega + delta * delta;
    let bound = 2.0 * gamma_prime * (norm.sqrt() / omega);
    let k_max = (bound / (2.0 * PI)).ceil() as i64 + 1;
    let mut out = Vec::new();
    for k in -k_max..=k_max {
        let a = 2.0 * phi_minus + 2.0 * PI * k as f64;
        let radicand = 4.0 * gamma_prime * gamma_prime * norm - a * a * omega * omega;
        if radicand < 0.0 {
            continue;
        }
        let root = radicand.sqrt();
        for tau in [(a * delta + root) / norm, (a * delta - root) / norm] {
            if tau > 1e-12 {
                out.push((tau, a));
            }
        }
    }
    out
}

/// Finds the square time-optimal pulse realising `target`.
///
/// When the target fixes `χ` (`sin γ′ ≠ 0`) the duration is `2γ′ sin χ / Ω`
/// and the detuning is forced up to the winding of `ητ`; `None` selects
/// `ητ = 2φ⁻`. When `χ` is free the given detuning (default 0) is kept and
/// the shortest duration over all windings is returned.
pub fn synthesize(target: &GateTarget, omega: f64, delta: Option<f64>) -> Result<PulseSpec, TocError> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(TocError::InvalidPulse(format!("drive amplitude must be positive, got {omega}")));
    }
    let phi_minus = target.phi_minus;
    if target.chi_is_free() {
        let delta = delta.unwrap_or(0.0);
        let (tau, a) = free_chi_durations(target.gamma_prime, phi_minus, omega, delta)
            .into_iter()
            .min_by(|x, y| x.0.total_cmp(&y.0))
            .ok_or(TocError::NoSolution { requested: delta, admissible: Vec::new() })?;
        return PulseSpec::new(omega, delta, a / tau, target.phi0, tau);
    }

    let chi = target.chi;
    let tau = 2.0 * target.gamma_prime * chi.sin() / omega;
    let cot = chi.cos() / chi.sin();
    let detuning_for = |k: i64| (2.0 * phi_minus + 2.0 * PI * k as f64) / tau - omega * cot;
    let k = match delta {
        None => 0,
        Some(requested) => {
            let k_real = ((requested + omega * cot) * tau - 2.0 * phi_minus) / (2.0 * PI);
            let k = k_real.round() as i64;
            let forced = detuning_for(k);
            if (forced - requested).abs() > 1e-9 * requested.abs().max(1.0) {
                return Err(TocError::NoSolution {
                    requested,
                    admissible: (k - 1..=k + 1).map(detuning_for).collect(),
                });
            }
            k
        }
    };
    let delta = detuning_for(k);
    PulseSpec::new(omega, delta, delta + omega * cot, target.phi0, tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GateKind {
    H,
    S,
    T,
    /// Controlled phase `diag(1, 1, 1, e^{iγ})`.
    ControlledPhase { gamma: f64 },
}

/// Closed-form gate durations (ns for rad/ns inputs).
pub fn gate_time(kind: GateKind, omega: f64, delta: f64) -> Result<f64, TocError> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(TocError::InvalidPulse(format!("drive amplitude must be positive, got {omega}")));
    }
    let norm = omega * omega + delta * delta;
    let tau = match kind {
        GateKind::H => PI / (SQRT_2 * omega),
        GateKind::S => {
            PI / (2.0 * norm) * ((16.0 * delta * delta + 7.0 * omega * omega).sqrt() - 3.0 * delta)
        }
        GateKind::T => {
            PI / (4.0 * norm) * ((64.0 * delta * delta + 15.0 * omega * omega).sqrt() - 7.0 * delta)
        }
        GateKind::ControlledPhase { gamma } => {
            let radicand = PI * PI * delta * delta - omega * omega * (gamma * gamma - 2.0 * PI * gamma);
            if radicand < 0.0 || !radicand.is_finite() {
                return Err(TocError::Infeasible(format!(
                    "negative radicand {radicand:.3e} for gamma = {gamma}, delta = {delta}"
                )));
            }
            2.0 / norm * (delta * (gamma - PI) + radicand.sqrt())
        }
    };
    if !(tau > 0.0) {
        return Err(TocError::Infeasible(format!("non-positive duration {tau}")));
    }
    Ok(tau)
}

/// Detuning in `range` minimising [`gate_time`]: a 256-point scan refined by
/// golden-section search around the best sample.
pub fn optimal_detuning(kind: GateKind, omega: f64, range: (f64, f64)) -> Result<(f64, f64), TocError> {
    let (lo, hi) = range;
    if !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(TocError::InvalidPulse(format!("empty detuning range [{lo}, {hi}]")));
    }
    if matches!(kind, GateKind::H) {
        // The Hadamard duration does not depend on the detuning.
        return Ok((lo, gate_time(kind, omega, lo)?));
    }
    const SAMPLES: usize = 256;
    let cost = |d: f64| gate_time(kind, omega, d).unwrap_or(f64::INFINITY);
    let step = (hi - lo) / (SAMPLES - 1) as f64;
    let xs: Vec<f64> = (0..SAMPLES).map(|k| if k + 1 == SAMPLES { hi } else { lo + k as f64 * step }).collect();
    let (best_idx, _) = xs
        .iter()
        .map(|&d| cost(d))
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("scan is non-empty");
    let mut a = xs[best_idx.saturating_sub(1)];
    let mut b = xs[(best_idx + 1).min(SAMPLES - 1)];
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    for _ in 0..100 {
        if cost(c) < cost(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - ratio * (b - a);
        d = a + ratio * (b - a);
    }
    let refined = 0.5 * (a + b);
    let best = if cost(refined) <= cost(xs[best_idx]) { refined } else { xs[best_idx] };
    let tau = cost(best);
    if !tau.is_finite() {
        return Err(TocError::Infeasible("no feasible detuning in range".into()));
    }
    Ok((best, tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{expm_hermitian, is_hermitian, is_unitary, mhz, to_mhz};
    use proptest::prelude::*;

    fn operating_omega() -> f64 {
        mhz(16.18)
    }

    /// Brute-force time-ordered product with 1 ps midpoint steps.
    fn stepped_evolution(p: &PulseSpec) -> CMatrix {
        let grid = TimeGrid::new(0.0, p.tau(), 1e-3).unwrap();
        let mut u = CMatrix::identity(2, 2);
        for k in 0..grid.n_steps() {
            let mid = grid.time(k) + 0.5 * grid.dt();
            u = expm_hermitian(&two_level_hamiltonian(p, mid), grid.dt()).unwrap() * u;
        }
        u
    }

    #[test]
    fn hamiltonian_zero_phase() {
        let p = PulseSpec::new(0.1, 0.0, 0.0, 0.0, 1.0).unwrap();
        let h = two_level_hamiltonian(&p, 0.0);
        assert!((h[(0, 1)] - C64::new(0.05, 0.0)).norm() < 1e-15);
        assert!((h[(1, 0)] - C64::new(0.05, 0.0)).norm() < 1e-15);
        assert!(h[(0, 0)].norm() < 1e-15);
    }

    #[test]
    fn zero_amplitude_is_rejected() {
        assert!(matches!(
            PulseSpec::new(0.0, 0.2, 0.0, 0.0, 1.0),
            Err(TocError::InvalidPulse(_))
        ));
    }

    #[test]
    fn hamiltonian_symbolic_substitution() {
        // δ = 0.1, Ω = 0.1, φ₀ = π/2, η = 0.05; at t = 20 the phase is 3π/2 + ... pick
        // t = π / 0.05 so φ = π/2 + π = 3π/2.
        let p = PulseSpec::new(0.1, 0.1, 0.05, 0.5 * PI, 100.0).unwrap();
        let t = PI / 0.05;
        let h = two_level_hamiltonian(&p, t);
        // 0.05 e^{-i 3π/2} = 0.05 i
        assert!((h[(0, 1)] - C64::new(0.0, 0.05)).norm() < 1e-14);
        assert!((h[(1, 0)] - C64::new(0.0, -0.05)).norm() < 1e-14);
        assert!((h[(0, 0)] - C64::new(0.05, 0.0)).norm() < 1e-15);
        assert!(is_hermitian(&h, 1e-15));
    }

    #[test]
    fn hadamard_synthesis_matches_quoted_values() {
        let p = synthesize(&GateTarget::hadamard(), operating_omega(), None).unwrap();
        assert!((to_mhz(p.delta()) - 29.58).abs() < 0.01, "{}", to_mhz(p.delta()));
        assert!((p.delta() - (2.0 * SQRT_2 - 1.0) * operating_omega()).abs() < 1e-12);
        assert!((p.tau() - 21.9).abs() < 0.05);
        assert!((p.tau() - PI / (SQRT_2 * operating_omega())).abs() < 1e-12);
        assert!((p.eta() * p.tau() - 2.0 * PI).abs() < 1e-12);
        assert!((p.chi() - 0.25 * PI).abs() < 1e-12);
        assert!((p.gamma_prime() - 0.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn hadamard_unitary_is_minus_i_hadamard() {
        let p = synthesize(&GateTarget::hadamard(), operating_omega(), None).unwrap();
        let u = ideal_evolution(&p);
        let s = 1.0 / SQRT_2;
        let want = CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(0.0, -s), C64::new(0.0, -s), C64::new(0.0, -s), C64::new(0.0, s)],
        );
        assert!(max_abs(&(u - want)) < 1e-12);
    }

    #[test]
    fn s_and_t_synthesis_durations() {
        let s = synthesize(&GateTarget::s_gate(), operating_omega(), Some(mhz(25.0))).unwrap();
        assert!((s.tau() - 9.5).abs() < 0.05, "{}", s.tau());
        let t = synthesize(&GateTarget::t_gate(), operating_omega(), Some(mhz(15.0))).unwrap();
        assert!((t.tau() - 7.8).abs() < 0.05, "{}", t.tau());
        let s_gate = CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 1.0)],
        );
        assert!(phase_aligned_distance(&ideal_evolution(&s), &s_gate) < 1e-10);
    }

    #[test]
    fn identity_full_loop() {
        let omega = 0.1;
        let delta = 0.07;
        let p = synthesize(&GateTarget::identity(), omega, Some(delta)).unwrap();
        let chi = p.chi();
        assert!((p.tau() - 4.0 * PI * chi.sin() / omega).abs() < 1e-10);
        assert!(phase_aligned_distance(&ideal_evolution(&p), &CMatrix::identity(2, 2)) < 1e-10);
        let u = GateTarget::new(2.0 * PI, 0.3, 0.0, 0.0).unwrap().unitary();
        assert!(max_abs(&(u - CMatrix::identity(2, 2))) < 1e-12);
    }

    #[test]
    fn forced_detuning_mismatch_lists_admissible_values() {
        let err = synthesize(&GateTarget::hadamard(), operating_omega(), Some(mhz(25.0))).unwrap_err();
        match err {
            TocError::NoSolution { admissible, .. } => {
                assert_eq!(admissible.len(), 3);
                let forced = (2.0 * SQRT_2 - 1.0) * operating_omega();
                assert!(admissible.iter().any(|d| (d - forced).abs() < 1e-12));
            }
            other => panic!("unexpected {other:?}"),
        }
        // The exact forced value is accepted.
        let forced = (2.0 * SQRT_2 - 1.0) * operating_omega();
        assert!(synthesize(&GateTarget::hadamard(), operating_omega(), Some(forced)).is_ok());
    }

    #[test]
    fn overall_phase_examples() {
        let h = synthesize(&GateTarget::hadamard(), operating_omega(), None).unwrap();
        assert!((overall_phase(&h) + h.phi_minus() - 0.5 * PI).abs() < 1e-9);

        // Resonant: χ = π/2, γ′ = Ωτ/2.
        let r = PulseSpec::new(0.2, 0.05, 0.05, 0.3, 7.0).unwrap();
        assert!((r.chi() - 0.5 * PI).abs() < 1e-15);
        assert!((overall_phase(&r) + r.phi_minus() - 0.5 * 0.2 * 7.0).abs() < 1e-9);

        let s = synthesize(&GateTarget::s_gate(), operating_omega(), Some(mhz(25.0))).unwrap();
        assert!((overall_phase(&s) + s.phi_minus() - PI).abs() < 1e-6);
    }

    #[test]
    fn auxiliary_trajectory_stays_on_toc_solution() {
        let p = synthesize(&GateTarget::t_gate(), operating_omega(), Some(mhz(15.0))).unwrap();
        let grid = TimeGrid::with_steps(0.0, p.tau(), 500).unwrap();
        let aux = auxiliary_trajectory(&p, &grid);
        for k in 0..aux.times.len() {
            assert!((aux.chi[k] - p.chi()).abs() < 1e-9);
            assert!((aux.xi[k] - (p.phase_at(aux.times[k]) - PI)).abs() < 1e-9);
        }
    }

    #[test]
    fn closed_form_matches_stepper() {
        for p in [
            synthesize(&GateTarget::hadamard(), operating_omega(), None).unwrap(),
            synthesize(&GateTarget::s_gate(), operating_omega(), Some(mhz(25.0))).unwrap(),
            PulseSpec::new(0.13, -0.04, 0.21, 1.1, 17.0).unwrap(),
        ] {
            let u = ideal_evolution(&p);
            assert!(is_unitary(&u, 1e-10));
            assert!(max_abs(&(u - stepped_evolution(&p))) < 1e-7);
        }
    }

    /// Central finite differences of I(t); independent of the analytic
    /// derivative used in `invariant_residual`.
    fn fd_residual(ansatz: &PulseSpec, drive: &PulseSpec, grid: &TimeGrid) -> f64 {
        let h = 1e-5;
        let inv = |t: f64| invariant_operator(ansatz.chi(), ansatz.phase_at(t) - PI);
        grid.times()
            .map(|t| {
                let d = (inv(t + h) - inv(t - h)) * C64::new(0.5 / h, 0.0);
                let r = d * C64::new(0.0, 1.0) - commutator(&two_level_hamiltonian(drive, t), &inv(t));
                max_abs(&r)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn invariant_residual_cases() {
        let h = synthesize(&GateTarget::hadamard(), operating_omega(), None).unwrap();
        let grid = TimeGrid::with_steps(0.0, h.tau(), 200).unwrap();
        assert!(invariant_residual(&h, &grid) < 1e-8);
        assert!(fd_residual(&h, &h, &grid) < 1e-8);

        let wrong = h.with_eta(h.eta() + 0.1 * h.omega());
        assert!(invariant_residual_against(&h, &wrong, &grid) > 1e-3);
        assert!(fd_residual(&h, &wrong, &grid) > 1e-3);

        let resonant = PulseSpec::new(0.2, 0.05, 0.05, 0.3, 7.0).unwrap();
        let g = TimeGrid::with_steps(0.0, 7.0, 100).unwrap();
        assert!(invariant_residual(&resonant, &g) < 1e-8);
    }

    #[test]
    fn gate_time_closed_forms() {
        let omega = operating_omega();
        let s = gate_time(GateKind::S, omega, mhz(25.0)).unwrap();
        assert!((s - 9.52).abs() < 0.005, "{s}");
        let t = gate_time(GateKind::T, omega, mhz(15.0)).unwrap();
        assert!((t - 7.80).abs() < 0.005, "{t}");
        let s0 = gate_time(GateKind::S, omega, 0.0).unwrap();
        assert!((s0 - PI * 7f64.sqrt() / (2.0 * omega)).abs() < 1e-12);
        let cp = gate_time(GateKind::ControlledPhase { gamma: 0.5 * PI }, mhz(11.2834), mhz(27.0)).unwrap();
        assert!((cp - 17.8).abs() < 0.05, "{cp}");
        let h = gate_time(GateKind::H, omega, 0.0).unwrap();
        assert!((h - 21.85).abs() < 0.01);
    }

    #[test]
    fn gate_time_infeasible_radicand() {
        let r = gate_time(GateKind::ControlledPhase { gamma: 3.0 * PI }, 1.0, 0.0);
        assert!(matches!(r, Err(TocError::Infeasible(_))));
        assert!(gate_time(GateKind::S, 0.0, 1.0).is_err());
    }

    /// Dense scan, 10⁴ points.
    fn dense_min(kind: GateKind, omega: f64, lo: f64, hi: f64) -> f64 {
        (0..10_000)
            .map(|k| lo + (hi - lo) * k as f64 / 9_999.0)
            .filter_map(|d| gate_time(kind, omega, d).ok())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn optimal_detuning_cases() {
        let omega = operating_omega();
        let (_, s_best) = optimal_detuning(GateKind::S, omega, (0.0, 3.0 * omega)).unwrap();
        assert!(s_best <= gate_time(GateKind::S, omega, 0.0).unwrap());

        let (_, t_best) = optimal_detuning(GateKind::T, omega, (0.0, 3.0 * omega)).unwrap();
        assert!(t_best <= 7.80);
        assert!(t_best <= dense_min(GateKind::T, omega, 0.0, 3.0 * omega) + 1e-9);

        let cp = GateKind::ControlledPhase { gamma: 0.5 * PI };
        let (d_cp, cp_best) = optimal_detuning(cp, omega, (0.0, 4.0 * omega)).unwrap();
        assert!(cp_best <= dense_min(cp, omega, 0.0, 4.0 * omega) + 1e-9);
        // Decreasing profile: the optimum sits at the top of the range.
        assert!((d_cp - 4.0 * omega).abs() < 1e-6 * omega);
        let mut prev = f64::INFINITY;
        for k in 0..=64 {
            let tau = gate_time(cp, omega, 4.0 * omega * k as f64 / 64.0).unwrap();
            assert!(tau < prev);
            prev = tau;
        }
    }

    /// Shortest positive root over windings k of
    /// f(τ) = (Ωτ)² + (2φ⁻ + 2πk − δτ)² − 4γ′², found by scanning for sign
    /// changes and bisecting. Independent of the closed forms.
    fn root_solve_duration(gamma_prime: f64, phi_minus: f64, omega: f64, delta: f64) -> f64 {
        let mut best = f64::INFINITY;
        let horizon = 8.0 * gamma_prime / omega;
        for k in -4..=4 {
            let a = 2.0 * phi_minus + 2.0 * PI * k as f64;
            let f = |tau: f64| (omega * tau).powi(2) + (a - delta * tau).powi(2) - 4.0 * gamma_prime * gamma_prime;
            let n = 20_000;
            let mut lo = 1e-9;
            let mut flo = f(lo);
            for i in 1..=n {
                let hi = horizon * i as f64 / n as f64;
                let fhi = f(hi);
                if flo.signum() != fhi.signum() {
                    let (mut a0, mut b0) = (lo, hi);
                    for _ in 0..200 {
                        let m = 0.5 * (a0 + b0);
                        if f(a0).signum() == f(m).signum() {
                            a0 = m;
                        } else {
                            b0 = m;
                        }
                    }
                    best = best.min(0.5 * (a0 + b0));
                    break;
                }
                lo = hi;
                flo = fhi;
            }
        }
        best
    }

    #[test]
    fn closed_forms_match_root_solve_on_grid() {
        for i in 0..20 {
            let omega = mhz(5.0 + 25.0 * i as f64 / 19.0);
            for j in 0..20 {
                let delta = 3.0 * omega * j as f64 / 19.0;
                for (kind, target) in [(GateKind::S, GateTarget::s_gate()), (GateKind::T, GateTarget::t_gate())] {
                    let closed = gate_time(kind, omega, delta).unwrap();
                    let solved = root_solve_duration(PI, target.phi_minus(), omega, delta);
                    assert!(((closed - solved) / solved).abs() < 1e-6, "{kind:?} Ω={omega} δ={delta}: {closed} vs {solved}");
                    let synth = synthesize(&target, omega, Some(delta)).unwrap();
                    assert!(((synth.tau() - closed) / closed).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn cp_closed_form_is_unwound_full_loop_root() {
        for &gamma in &[0.3, 0.5 * PI, 2.0, PI, 4.5, 6.0] {
            for &ratio in &[0.0, 0.7, 2.3929, 4.0] {
                let omega = 0.07;
                let delta = ratio * omega;
                let closed = gate_time(GateKind::ControlledPhase { gamma }, omega, delta).unwrap();
                // Full loop with ητ = 2(γ - π).
                let a = 2.0 * (gamma - PI);
                let residual = (omega * closed).powi(2) + (a - delta * closed).powi(2) - 4.0 * PI * PI;
                assert!(residual.abs() < 1e-9, "γ={gamma} r={ratio}: {residual}");
                let p = PulseSpec::new(omega, delta, a / closed, PI, closed).unwrap();
                let want = GateTarget::controlled_phase(gamma).unwrap().unitary();
                assert!(phase_aligned_distance(&ideal_evolution(&p), &want) < 1e-9);
                // Other windings can only be shorter.
                let target = GateTarget::controlled_phase(gamma).unwrap();
                let synth = synthesize(&target, omega, Some(delta)).unwrap();
                assert!(synth.tau() <= closed * (1.0 + 1e-12));
                let solved = root_solve_duration(PI, target.phi_minus(), omega, delta);
                assert!(((solved - synth.tau()) / synth.tau()).abs() < 1e-6);
            }
        }
    }

    proptest! {
        #[test]
        fn random_pulses_phase_and_unitarity(
            omega in 0.01f64..0.5,
            delta in -0.5f64..0.5,
            eta in -0.5f64..0.5,
            phi0 in -PI..PI,
            tau in 1.0f64..40.0,
        ) {
            let p = PulseSpec::new(omega, delta, eta, phi0, tau).unwrap();
            prop_assert!(is_unitary(&ideal_evolution(&p), 1e-10));
            let gamma = overall_phase(&p);
            prop_assert!((gamma + p.phi_minus() - p.gamma_prime()).abs() < 1e-9);
        }

        #[test]
        fn synthesized_pulses_reproduce_targets(
            gamma_prime in 0.1f64..6.0,
            chi in 0.05f64..3.09,
            phi_minus in -PI..PI,
            phi0 in -PI..PI,
            omega in 0.02f64..0.3,
        ) {
            let target = GateTarget::new(gamma_prime, chi, phi_minus, phi0).unwrap();
            let p = synthesize(&target, omega, None).unwrap();
            prop_assert!(phase_aligned_distance(&ideal_evolution(&p), &target.unitary()) < 1e-8);
            let grid = TimeGrid::with_steps(0.0, p.tau(), 64).unwrap();
            prop_assert!(invariant_residual(&p, &grid) < 1e-8);
        }

        #[test]
        fn free_chi_targets_reproduced_for_any_detuning(
            phi_minus in -PI..PI,
            delta in -0.3f64..0.3,
            omega in 0.02f64..0.3,
        ) {
            let target = GateTarget::new(PI, 0.5 * PI, phi_minus, 0.0).unwrap();
            let p = synthesize(&target, omega, Some(delta)).unwrap();
            prop_assert!((p.delta() - delta).abs() < 1e-15);
            prop_assert!(phase_aligned_distance(&ideal_evolution(&p), &target.unitary()) < 1e-8);
        }
    }
}
