//! Transmon lattices, parametric drives and the frames used for simulation.
//!
//! Product states are indexed base 3 with the first transmon as the most
//! significant digit, matching `kron(T₀, kron(T₁, ...))`.

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{
    bessel_j_table, khz, mhz, CMatrix, CVector, Hamiltonian, NumericsError, SparseMatrix, C64,
};
use crate::toc::{PulseSpec, TocError};

/// Levels kept per transmon.
pub const LEVELS: usize = 3;
pub const MAX_TRANSMONS: usize = 4;
pub const DEFAULT_BESSEL_ORDER: usize = 15;

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("no coupling between transmons {0} and {1}")]
    MissingCoupling(usize, usize),
    #[error("invalid drive: {0}")]
    InvalidDrive(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Toc(#[from] TocError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmonSpec {
    /// Bare frequency, rad/ns.
    pub omega0: f64,
    /// Anharmonicity, rad/ns.
    pub alpha: f64,
    /// Decay rate, rad/ns.
    pub r_minus: f64,
    /// Dephasing rate, rad/ns.
    pub r_z: f64,
}

impl TransmonSpec {
    pub fn new(omega0: f64, alpha: f64, r_minus: f64, r_z: f64) -> Result<Self, DeviceError> {
        let t = Self { omega0, alpha, r_minus, r_z };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<(), DeviceError> {
        if !self.omega0.is_finite() {
            return Err(DeviceError::InvalidLattice("non-finite transmon frequency".into()));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(DeviceError::InvalidLattice(format!(
                "anharmonicity must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.r_minus >= 0.0 && self.r_z >= 0.0) {
            return Err(DeviceError::InvalidLattice("decoherence rates must be non-negative".into()));
        }
        Ok(())
    }

    /// Bare energy of level `n`.
    pub fn level_energy(&self, n: usize) -> f64 {
        match n {
            0 => 0.0,
            1 => self.omega0,
            _ => 2.0 * self.omega0 - self.alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub i: usize,
    pub j: usize,
    /// rad/ns
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    transmons: Vec<TransmonSpec>,
    couplings: Vec<Coupling>,
}

impl LatticeSpec {
    pub fn new(transmons: Vec<TransmonSpec>, couplings: Vec<Coupling>) -> Result<Self, DeviceError> {
        let n = transmons.len();
        if n == 0 || n > MAX_TRANSMONS {
            return Err(DeviceError::InvalidLattice(format!(
                "between 1 and {MAX_TRANSMONS} transmons supported, got {n}"
            )));
        }
        for t in &transmons {
            t.validate()?;
        }
        for (k, c) in couplings.iter().enumerate() {
            if !(c.i < c.j && c.j < n) {
                return Err(DeviceError::InvalidLattice(format!(
                    "coupling pair ({}, {}) must satisfy i < j < {n}",
                    c.i, c.j
                )));
            }
            if !(c.g > 0.0) || !c.g.is_finite() {
                return Err(DeviceError::InvalidLattice(format!(
                    "coupling ({}, {}) must be positive, got {}",
                    c.i, c.j, c.g
                )));
            }
            if couplings[..k].iter().any(|o| o.i == c.i && o.j == c.j) {
                return Err(DeviceError::InvalidLattice(format!("duplicate coupling ({}, {})", c.i, c.j)));
            }
        }
        Ok(Self { transmons, couplings })
    }

    /// Two transmons, `Δ₁₂ = 2π×520 MHz`, `g₁₂ = 2π×14.5 MHz`, all rates `2π×4 kHz`.
    pub fn pair_default() -> Self {
        Self::pair(mhz(520.0), mhz(14.5), khz(4.0))
    }

    /// Pair with the given detuning `ω₁ - ω₂`, coupling and common decoherence rate.
    pub fn pair(delta12: f64, g12: f64, rate: f64) -> Self {
        let w2 = mhz(5000.0);
        Self::new(
            vec![
                TransmonSpec { omega0: w2 + delta12, alpha: mhz(200.0), r_minus: rate, r_z: rate },
                TransmonSpec { omega0: w2, alpha: mhz(210.0), r_minus: rate, r_z: rate },
            ],
            vec![Coupling { i: 0, j: 1, g: g12 }],
        )
        .expect("default pair is valid")
    }

    /// Four transmons in a square; T₂–T₄ is the driven pair and T₁–T₂,
    /// T₃–T₄ are spectator couplings.
    pub fn four_transmon_default() -> Self {
        Self::four_transmon(mhz(600.0), mhz(7.0), khz(4.0))
    }

    pub fn four_transmon(delta24: f64, g24: f64, rate: f64) -> Self {
        let w4 = mhz(4500.0);
        let w2 = w4 + delta24;
        let t = |omega0: f64, alpha_mhz: f64| TransmonSpec {
            omega0,
            alpha: mhz(alpha_mhz),
            r_minus: rate,
            r_z: rate,
        };
        Self::new(
            vec![
                t(w2 + mhz(900.0), 200.0),
                t(w2, 210.0),
                t(w4 + mhz(900.0), 220.0),
                t(w4, 230.0),
            ],
            vec![
                Coupling { i: 0, j: 1, g: mhz(14.5) },
                Coupling { i: 1, j: 3, g: g24 },
                Coupling { i: 2, j: 3, g: mhz(14.5) },
            ],
        )
        .expect("default four-transmon lattice is valid")
    }

    pub fn n_transmons(&self) -> usize {
        self.transmons.len()
    }

    pub fn dim(&self) -> usize {
        LEVELS.pow(self.transmons.len() as u32)
    }

    pub fn transmons(&self) -> &[TransmonSpec] {
        &self.transmons
    }

    pub fn transmon(&self, k: usize) -> &TransmonSpec {
        &self.transmons[k]
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    /// `g_ij` for either ordering of the pair.
    pub fn coupling(&self, i: usize, j: usize) -> Option<f64> {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.couplings.iter().find(|c| c.i == a && c.j == b).map(|c| c.g)
    }

    /// `Δ_ij = ω_i - ω_j`.
    pub fn detuning(&self, i: usize, j: usize) -> f64 {
        self.transmons[i].omega0 - self.transmons[j].omega0
    }

    /// Copy with every decoherence rate set to zero.
    pub fn without_decoherence(&self) -> Self {
        let mut out = self.clone();
        for t in &mut out.transmons {
            t.r_minus = 0.0;
            t.r_z = 0.0;
        }
        out
    }

    pub fn with_transmon(&self, k: usize, spec: TransmonSpec) -> Result<Self, DeviceError> {
        let mut transmons = self.transmons.clone();
        *transmons.get_mut(k).ok_or_else(|| DeviceError::InvalidLattice(format!("no transmon {k}")))? = spec;
        Self::new(transmons, self.couplings.clone())
    }

    pub fn with_coupling(&self, i: usize, j: usize, g: f64) -> Result<Self, DeviceError> {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let mut couplings: Vec<Coupling> =
            self.couplings.iter().copied().filter(|c| !(c.i == a && c.j == b)).collect();
        couplings.push(Coupling { i: a, j: b, g });
        couplings.sort_by_key(|c| (c.i, c.j));
        Self::new(self.transmons.clone(), couplings)
    }

    /// Sub-lattice on `keep` (new order), keeping couplings among them.
    pub fn sublattice(&self, keep: &[usize]) -> Result<Self, DeviceError> {
        let transmons = keep
            .iter()
            .map(|&k| {
                self.transmons
                    .get(k)
                    .copied()
                    .ok_or_else(|| DeviceError::InvalidLattice(format!("no transmon {k}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut couplings = Vec::new();
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate().skip(a + 1) {
                if let Some(g) = self.coupling(i, j) {
                    couplings.push(Coupling { i: a, j: b, g });
                }
            }
        }
        Self::new(transmons, couplings)
    }

    pub fn from_json_str(text: &str) -> Result<Self, DeviceError> {
        DeviceConfig::from_json_str(text)?.lattice()
    }

    pub fn from_file(path: &Path) -> Result<Self, DeviceError> {
        DeviceConfig::from_file(path)?.lattice()
    }
}

/// Frequency modulation `ω_j(t) = ω_j0 + ε cos(νt + φ₀ + ηt)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    target: usize,
    epsilon: f64,
    nu: f64,
    phi0: f64,
    eta: f64,
}

impl DriveSpec {
    pub fn new(target: usize, epsilon: f64, nu: f64, phi0: f64, eta: f64) -> Result<Self, DeviceError> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(DeviceError::InvalidDrive(format!("modulation depth must be >= 0, got {epsilon}")));
        }
        if !nu.is_finite() || !phi0.is_finite() || !eta.is_finite() {
            return Err(DeviceError::InvalidDrive("non-finite modulation parameter".into()));
        }
        if epsilon > 0.0 && (nu + eta).abs() < 1e-12 {
            return Err(DeviceError::InvalidDrive("modulation frequency nu + eta must be nonzero".into()));
        }
        Ok(Self { target, epsilon, nu, phi0, eta })
    }

    /// Drive with modulation index `Γ = ε / (ν + η)`.
    pub fn from_gamma(target: usize, gamma: f64, nu: f64, phi0: f64, eta: f64) -> Result<Self, DeviceError> {
        if (nu + eta).abs() < 1e-12 {
            return Err(DeviceError::InvalidDrive("modulation frequency nu + eta must be nonzero".into()));
        }
        Self::new(target, gamma * (nu + eta), nu, phi0, eta)
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn phi0(&self) -> f64 {
        self.phi0
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn with_target(&self, target: usize) -> Self {
        Self { target, ..*self }
    }

    /// `Γ = ε / (ν + η)`; constant because `η` is.
    pub fn gamma_mod(&self) -> f64 {
        if self.epsilon == 0.0 {
            0.0
        } else {
            self.epsilon / (self.nu + self.eta)
        }
    }

    /// `θ(t) = νt + φ(t)`.
    pub fn theta(&self, t: f64) -> f64 {
        (self.nu + self.eta) * t + self.phi0
    }

    /// Instantaneous frequency shift `ε cos θ(t)`.
    pub fn frequency_shift(&self, t: f64) -> f64 {
        self.epsilon * self.theta(t).cos()
    }

    /// Accumulated phase `∫ ε cos θ dt` up to a constant: `Γ sin θ(t)`.
    pub fn accumulated_phase(&self, t: f64) -> f64 {
        self.gamma_mod() * self.theta(t).sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncodingKind {
    S1,
    S2,
}

/// Single-excitation logical encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoding {
    kind: EncodingKind,
    n_transmons: usize,
    logical: Vec<usize>,
    auxiliary: Option<usize>,
}

impl Encoding {
    /// `{|10⟩, |01⟩}` on a pair.
    pub fn s1() -> Self {
        Self {
            kind: EncodingKind::S1,
            n_transmons: 2,
            logical: vec![product_index(&[1, 0]), product_index(&[0, 1])],
            auxiliary: None,
        }
    }

    /// `{|1010⟩, |1001⟩, |0110⟩, |0101⟩}` with auxiliary `|0200⟩`.
    pub fn s2() -> Self {
        Self {
            kind: EncodingKind::S2,
            n_transmons: 4,
            logical: vec![
                product_index(&[1, 0, 1, 0]),
                product_index(&[1, 0, 0, 1]),
                product_index(&[0, 1, 1, 0]),
                product_index(&[0, 1, 0, 1]),
            ],
            auxiliary: Some(product_index(&[0, 2, 0, 0])),
        }
    }

    pub fn kind(&self) -> EncodingKind {
        self.kind
    }

    pub fn n_transmons(&self) -> usize {
        self.n_transmons
    }

    pub fn physical_dim(&self) -> usize {
        LEVELS.pow(self.n_transmons as u32)
    }

    pub fn logical_dim(&self) -> usize {
        self.logical.len()
    }

    /// Full product indices of the logical kets.
    pub fn logical_indices(&self) -> &[usize] {
        &self.logical
    }

    pub fn auxiliary(&self) -> Option<usize> {
        self.auxiliary
    }

    pub fn logical_ket(&self, k: usize) -> CVector {
        let mut v = CVector::zeros(self.physical_dim());
        v[self.logical[k]] = C64::new(1.0, 0.0);
        v
    }

    /// Embeds logical amplitudes into the physical space.
    pub fn embed(&self, amplitudes: &[C64]) -> CVector {
        assert_eq!(amplitudes.len(), self.logical.len());
        let mut v = CVector::zeros(self.physical_dim());
        for (&idx, &a) in self.logical.iter().zip(amplitudes) {
            v[idx] = a;
        }
        v
    }
}

/// Projector onto the logical span, optionally with the auxiliary ket.
pub fn logical_projector(enc: &Encoding, include_auxiliary: bool) -> CMatrix {
    let mut p = CMatrix::zeros(enc.physical_dim(), enc.physical_dim());
    for &k in enc.logical_indices() {
        p[(k, k)] = C64::new(1.0, 0.0);
    }
    if include_auxiliary {
        if let Some(a) = enc.auxiliary() {
            p[(a, a)] = C64::new(1.0, 0.0);
        }
    }
    p
}

pub fn product_index(levels: &[usize]) -> usize {
    levels.iter().fold(0, |acc, &l| {
        debug_assert!(l < LEVELS);
        acc * LEVELS + l
    })
}

/// Level of transmon `k` in product state `index` of an `n`-transmon space.
pub fn level_of(index: usize, k: usize, n: usize) -> usize {
    (index / LEVELS.pow((n - 1 - k) as u32)) % LEVELS
}

pub fn excitation_number(index: usize, n: usize) -> usize {
    (0..n).map(|k| level_of(index, k, n)).sum()
}

/// Coupling elements `(m, n, amplitude)` of
/// `g(|10⟩⟨01| + √2|11⟩⟨02| + √2|20⟩⟨11|)` on transmons `(i, j)`; the
/// Hermitian conjugates are implied.
fn coupling_elements(n_transmons: usize, i: usize, j: usize, g: f64) -> Vec<(usize, usize, f64)> {
    const PATTERNS: [((usize, usize), (usize, usize), f64); 3] =
        [((1, 0), (0, 1), 1.0), ((1, 1), (0, 2), SQRT_2), ((2, 0), (1, 1), SQRT_2)];
    let dim = LEVELS.pow(n_transmons as u32);
    let mut out = Vec::new();
    for n in 0..dim {
        let (li, lj) = (level_of(n, i, n_transmons), level_of(n, j, n_transmons));
        for &(to, from, scale) in &PATTERNS {
            if (li, lj) == from {
                let stride_i = LEVELS.pow((n_transmons - 1 - i) as u32) as isize;
                let stride_j = LEVELS.pow((n_transmons - 1 - j) as u32) as isize;
                let m = n as isize
                    + (to.0 as isize - from.0 as isize) * stride_i
                    + (to.1 as isize - from.1 as isize) * stride_j;
                out.push((m as usize, n, scale * g));
            }
        }
    }
    out
}

fn bare_energy(lat: &LatticeSpec, index: usize) -> f64 {
    let n = lat.n_transmons();
    (0..n).map(|k| lat.transmon(k).level_energy(level_of(index, k, n))).sum()
}

/// Which product states a [`FrameModel`] keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Truncation {
    Full,
    /// States with at most this many total excitations. Exact for
    /// excitation-conserving couplings and lowering-type dissipation.
    MaxExcitations(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct FrameTerm {
    row: usize,
    col: usize,
    amp: f64,
    freq: f64,
    /// Change of the driven transmon's level from `col` to `row`.
    driven_step: i32,
}

#[derive(Debug, Clone, PartialEq)]
struct FrameDrive {
    rate: f64,
    phi0: f64,
    /// `J_n(Γ)` for `n = -N..=N`.
    bessel: Vec<f64>,
}

impl FrameDrive {
    /// `K(t) = Σ_n J_n(Γ) e^{-inθ(t)}`.
    fn k_factor(&self, t: f64) -> C64 {
        let theta = self.rate * t + self.phi0;
        let order = (self.bessel.len() / 2) as i64;
        self.bessel
            .iter()
            .enumerate()
            .map(|(idx, &j)| C64::from_polar(j, -((idx as i64 - order) as f64) * theta))
            .sum()
    }
}

/// Coupling Hamiltonian in the interaction picture of the bare and modulated
/// self-energies, with optional rotating-frame shifts `f_s` and static
/// diagonal terms.
///
/// An element `|m⟩⟨n|` picks up `e^{i(E_m - E_n)t}`, a Jacobi–Anger series in
/// the drive phase when it moves the driven transmon, and `e^{-i(f_m - f_n)t}`
/// from the rotating frame, which also adds `f_s` to the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameModel {
    n_transmons: usize,
    states: Vec<usize>,
    full_to_local: Vec<Option<usize>>,
    energies: Vec<f64>,
    diag: Vec<f64>,
    shifts: Vec<f64>,
    couplings: Vec<(usize, usize, f64)>,
    drive: Option<(usize, FrameDrive)>,
    terms: Vec<FrameTerm>,
}

impl FrameModel {
    /// Model of `couplings` (pairs present in `lat`) under `drive`.
    pub fn new(
        lat: &LatticeSpec,
        drive: Option<&DriveSpec>,
        couplings: &[(usize, usize)],
        n_bessel: usize,
        truncation: Truncation,
    ) -> Result<Self, DeviceError> {
        let n = lat.n_transmons();
        let dim = lat.dim();
        let states: Vec<usize> = (0..dim)
            .filter(|&s| match truncation {
                Truncation::Full => true,
                Truncation::MaxExcitations(k) => excitation_number(s, n) <= k,
            })
            .collect();
        let mut full_to_local = vec![None; dim];
        for (local, &s) in states.iter().enumerate() {
            full_to_local[s] = Some(local);
        }
        let frame_drive = match drive {
            None => None,
            Some(d) => {
                if d.target() >= n {
                    return Err(DeviceError::InvalidDrive(format!("drive target {} not in lattice", d.target())));
                }
                if n_bessel == 0 {
                    return Err(DeviceError::InvalidDrive("Bessel order must be at least 1".into()));
                }
                let gamma = d.gamma_mod();
                let positive = bessel_j_table(n_bessel, gamma)?;
                let order = n_bessel as i64;
                let bessel = (-order..=order)
                    .map(|k| {
                        let v = positive[k.unsigned_abs() as usize];
                        if k < 0 && k % 2 != 0 {
                            -v
                        } else {
                            v
                        }
                    })
                    .collect();
                Some((d.target(), FrameDrive { rate: d.nu() + d.eta(), phi0: d.phi0(), bessel }))
            }
        };
        let mut elements = Vec::new();
        for &(i, j) in couplings {
            let g = lat.coupling(i, j).ok_or(DeviceError::MissingCoupling(i, j))?;
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            elements.extend(coupling_elements(n, a, b, g));
        }
        let mut model = Self {
            n_transmons: n,
            energies: states.iter().map(|&s| bare_energy(lat, s)).collect(),
            diag: vec![0.0; states.len()],
            shifts: vec![0.0; states.len()],
            states,
            full_to_local,
            couplings: elements,
            drive: frame_drive,
            terms: Vec::new(),
        };
        model.rebuild_terms();
        Ok(model)
    }

    fn rebuild_terms(&mut self) {
        let n = self.n_transmons;
        let target = self.drive.as_ref().map(|(t, _)| *t);
        self.terms = self
            .couplings
            .iter()
            .filter_map(|&(m, k, amp)| {
                let row = self.full_to_local[m]?;
                let col = self.full_to_local[k]?;
                let driven_step = target
                    .map(|t| level_of(m, t, n) as i32 - level_of(k, t, n) as i32)
                    .unwrap_or(0);
                let freq = (self.energies[row] - self.energies[col]) - (self.shifts[row] - self.shifts[col]);
                Some(FrameTerm { row, col, amp, freq, driven_step })
            })
            .collect();
    }

    /// Rotating-frame shift `f` on full product state `index`.
    pub fn with_shift(mut self, index: usize, f: f64) -> Self {
        if let Some(local) = self.full_to_local.get(index).copied().flatten() {
            self.shifts[local] += f;
            self.diag[local] += f;
            self.rebuild_terms();
        }
        self
    }

    /// Adds `value(levels)` to every diagonal entry.
    pub fn with_diagonal(mut self, value: impl Fn(&[usize]) -> f64) -> Self {
        let n = self.n_transmons;
        for (local, &s) in self.states.iter().enumerate() {
            let levels: Vec<usize> = (0..n).map(|k| level_of(s, k, n)).collect();
            self.diag[local] += value(&levels);
        }
        self
    }

    /// Adds `βΩ(n̂_i - n̂_j)`.
    pub fn with_drift(self, drift: &DriftSpec, i: usize, j: usize) -> Self {
        let scale = drift.beta * drift.omega_ref;
        self.with_diagonal(|lv| scale * (lv[i] as f64 - lv[j] as f64))
    }

    /// Full product indices of the kept states, in local order.
    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn local_index(&self, full: usize) -> Option<usize> {
        self.full_to_local.get(full).copied().flatten()
    }

    pub fn n_transmons(&self) -> usize {
        self.n_transmons
    }

    /// Restricts a full-space vector to the kept states.
    pub fn restrict_ket(&self, v: &CVector) -> CVector {
        CVector::from_iterator(self.states.len(), self.states.iter().map(|&s| v[s]))
    }

    /// Embeds a kept-state matrix back into the full space.
    pub fn embed_matrix(&self, m: &CMatrix, full_dim: usize) -> CMatrix {
        let mut out = CMatrix::zeros(full_dim, full_dim);
        for (a, &sa) in self.states.iter().enumerate() {
            for (b, &sb) in self.states.iter().enumerate() {
                out[(sa, sb)] = m[(a, b)];
            }
        }
        out
    }
}

impl Hamiltonian for FrameModel {
    fn dim(&self) -> usize {
        self.states.len()
    }

    fn fill(&self, t: f64, out: &mut SparseMatrix) {
        if out.dim() != self.states.len() {
            *out = SparseMatrix::new(self.states.len());
        }
        out.clear();
        for (k, &d) in self.diag.iter().enumerate() {
            if d != 0.0 {
                out.push(k, k, C64::new(d, 0.0));
            }
        }
        let k_factor = self.drive.as_ref().map(|(_, d)| d.k_factor(t));
        for term in &self.terms {
            let mut v = C64::from_polar(term.amp, term.freq * t);
            match (term.driven_step, k_factor) {
                (-1, Some(k)) => v *= k,
                (1, Some(k)) => v *= k.conj(),
                (0, _) | (_, None) => {}
                (step, Some(_)) => unreachable!("coupling moves driven transmon by {step}"),
            }
            out.push(term.row, term.col, v);
            out.push(term.col, term.row, v.conj());
        }
    }
}

/// Frequency drift `βΩ(n̂₁ - n̂₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub beta: f64,
    pub omega_ref: f64,
}

impl DriftSpec {
    pub fn new(beta: f64, omega_ref: f64) -> Result<Self, DeviceError> {
        if !(beta.abs() <= 0.5) {
            return Err(DeviceError::InvalidDrive(format!("|beta| must be <= 0.5, got {beta}")));
        }
        Ok(Self { beta, omega_ref })
    }
}

/// Diagonal `βΩ(n̂₁ - n̂₂)` on the 9-dim pair space.
pub fn drift_perturbation(d: &DriftSpec) -> CMatrix {
    let dim = LEVELS * LEVELS;
    CMatrix::from_diagonal(&CVector::from_iterator(
        dim,
        (0..dim).map(|s| C64::new(d.beta * d.omega_ref * (level_of(s, 0, 2) as f64 - level_of(s, 1, 2) as f64), 0.0)),
    ))
}

fn check_pair(lat: &LatticeSpec, i: usize, j: usize, drive: Option<&DriveSpec>) -> Result<(LatticeSpec, Option<DriveSpec>), DeviceError> {
    if i == j || i >= lat.n_transmons() || j >= lat.n_transmons() {
        return Err(DeviceError::InvalidLattice(format!("invalid pair ({i}, {j})")));
    }
    lat.coupling(i, j).ok_or(DeviceError::MissingCoupling(i, j))?;
    let sub = lat.sublattice(&[i, j])?;
    let drive = match drive {
        None => None,
        Some(d) if d.target() == i => Some(d.with_target(0)),
        Some(d) if d.target() == j => Some(d.with_target(1)),
        Some(d) => {
            return Err(DeviceError::InvalidDrive(format!(
                "drive target {} is not in pair ({i}, {j})",
                d.target()
            )))
        }
    };
    Ok((sub, drive))
}

/// Lab-frame pair Hamiltonian with the modulated frequency evaluated at `t`.
pub fn pair_lab_hamiltonian(
    lat: &LatticeSpec,
    i: usize,
    j: usize,
    drive: Option<&DriveSpec>,
    t: f64,
) -> Result<CMatrix, DeviceError> {
    let (sub, drive) = check_pair(lat, i, j, drive)?;
    let dim = LEVELS * LEVELS;
    let mut h = CMatrix::zeros(dim, dim);
    for s in 0..dim {
        let mut e = bare_energy(&sub, s);
        if let Some(d) = &drive {
            e += level_of(s, d.target(), 2) as f64 * d.frequency_shift(t);
        }
        h[(s, s)] = C64::new(e, 0.0);
    }
    let g = sub.coupling(0, 1).expect("checked above");
    for (m, n, amp) in coupling_elements(2, 0, 1, g) {
        h[(m, n)] += C64::new(amp, 0.0);
        h[(n, m)] += C64::new(amp, 0.0);
    }
    Ok(h)
}

/// `U^I(t) = exp(-i ∫ H_self dt)`, diagonal, with the driven transmon's
/// accumulated phase `ω₀t + Γ sin θ(t)`.
pub fn interaction_frame_unitary(
    lat: &LatticeSpec,
    i: usize,
    j: usize,
    drive: Option<&DriveSpec>,
    t: f64,
) -> Result<CMatrix, DeviceError> {
    let (sub, drive) = check_pair(lat, i, j, drive)?;
    let dim = LEVELS * LEVELS;
    Ok(CMatrix::from_diagonal(&CVector::from_iterator(
        dim,
        (0..dim).map(|s| {
            let mut phase = bare_energy(&sub, s) * t;
            if let Some(d) = &drive {
                phase += level_of(s, d.target(), 2) as f64 * d.accumulated_phase(t);
            }
            C64::from_polar(1.0, -phase)
        }),
    )))
}

/// Pair model in the interaction picture, 9 states.
pub fn pair_interaction_model(
    lat: &LatticeSpec,
    i: usize,
    j: usize,
    drive: Option<&DriveSpec>,
    n_bessel: usize,
) -> Result<FrameModel, DeviceError> {
    let (sub, drive) = check_pair(lat, i, j, drive)?;
    FrameModel::new(&sub, drive.as_ref(), &[(0, 1)], n_bessel, Truncation::Full)
}

pub fn interaction_hamiltonian_pair(
    lat: &LatticeSpec,
    i: usize,
    j: usize,
    drive: Option<&DriveSpec>,
    t: f64,
    n_bessel: usize,
) -> Result<CMatrix, DeviceError> {
    Ok(pair_interaction_model(lat, i, j, drive, n_bessel)?.dense(t))
}

/// Single logical qubit on transmons (0, 1) with the drive on transmon 1, in
/// the frame rotating at `±δ/2` on `|10⟩`/`|01⟩`.
pub fn single_qubit_model(
    lat: &LatticeSpec,
    drive: &DriveSpec,
    delta: f64,
    n_bessel: usize,
    drift: Option<&DriftSpec>,
) -> Result<FrameModel, DeviceError> {
    let model = pair_interaction_model(lat, 0, 1, Some(drive), n_bessel)?
        .with_shift(product_index(&[1, 0]), 0.5 * delta)
        .with_shift(product_index(&[0, 1]), -0.5 * delta);
    Ok(match drift {
        Some(d) => model.with_drift(d, 0, 1),
        None => model,
    })
}

pub fn rotating_frame_hamiltonian_single(
    lat: &LatticeSpec,
    drive: &DriveSpec,
    t: f64,
    delta: f64,
    n_bessel: usize,
) -> Result<CMatrix, DeviceError> {
    Ok(single_qubit_model(lat, drive, delta, n_bessel, None)?.dense(t))
}

/// Effective Rabi frequency `2gJ₁(Γ)` of the single-qubit sideband.
pub fn effective_rabi_single(g: f64, gamma_mod: f64) -> Result<f64, DeviceError> {
    Ok(2.0 * g * bessel_j_table(1, gamma_mod)?[1])
}

/// Effective Rabi frequency `2√2 gJ₁(Γ)` of the `|11⟩_L ↔ |a⟩` transition.
pub fn effective_rabi_cp(g: f64, gamma_mod: f64) -> Result<f64, DeviceError> {
    Ok(SQRT_2 * effective_rabi_single(g, gamma_mod)?)
}

/// Two-level pulse seen by the logical qubit.
pub fn effective_pulse_single(
    g: f64,
    gamma_mod: f64,
    delta: f64,
    eta: f64,
    phi0: f64,
    tau: f64,
) -> Result<PulseSpec, DeviceError> {
    if !(gamma_mod > 0.0 && gamma_mod <= 2.5) {
        return Err(DeviceError::InvalidDrive(format!("modulation index must lie in (0, 2.5], got {gamma_mod}")));
    }
    Ok(PulseSpec::new(effective_rabi_single(g, gamma_mod)?, delta, eta, phi0, tau)?)
}

/// Modulation on transmon 1 realising `pulse` on the pair (0, 1):
/// `ν = Δ₀₁ - δ`, same phase and slope.
pub fn single_gate_drive(lat: &LatticeSpec, pulse: &PulseSpec, gamma_mod: f64) -> Result<DriveSpec, DeviceError> {
    let nu = lat.detuning(0, 1) - pulse.delta();
    if !(nu > 0.0) {
        return Err(DeviceError::InvalidDrive(format!("resonance needs nu > 0, got {nu} rad/ns")));
    }
    DriveSpec::from_gamma(1, gamma_mod, nu, pulse.phi0(), pulse.eta())
}

/// Modulation on transmon 1 realising `pulse` on `|a⟩ ↔ |11⟩_L`:
/// `ν = Δ₁₃ - α₁ - δ₂`, phase shifted by `π`.
pub fn cp_gate_drive(lat: &LatticeSpec, pulse: &PulseSpec, gamma_mod: f64) -> Result<DriveSpec, DeviceError> {
    let nu = lat.detuning(1, 3) - lat.transmon(1).alpha - pulse.delta();
    if !(nu > 0.0) {
        return Err(DeviceError::InvalidDrive(format!("resonance needs nu > 0, got {nu} rad/ns")));
    }
    DriveSpec::from_gamma(1, gamma_mod, nu, pulse.phi0() - PI, pulse.eta())
}

/// Four-transmon CP model with the drive on transmon 1 and the rotating
/// frame `±δ₂/2` on `|a⟩`/`|11⟩_L`. Spectators add couplings (0, 1) and
/// (2, 3).
pub fn cp_model(
    lat4: &LatticeSpec,
    drive: &DriveSpec,
    delta2: f64,
    n_bessel: usize,
    include_spectators: bool,
    truncation: Truncation,
) -> Result<FrameModel, DeviceError> {
    if lat4.n_transmons() != 4 {
        return Err(DeviceError::InvalidLattice(format!(
            "CP model needs 4 transmons, got {}",
            lat4.n_transmons()
        )));
    }
    if drive.target() != 1 {
        return Err(DeviceError::InvalidDrive("CP drive must modulate transmon 1".into()));
    }
    let mut pairs = vec![(1, 3)];
    if include_spectators {
        pairs.extend([(0, 1), (2, 3)]);
    }
    let enc = Encoding::s2();
    Ok(FrameModel::new(lat4, Some(drive), &pairs, n_bessel, truncation)?
        .with_shift(enc.auxiliary().expect("S2 has an auxiliary state"), 0.5 * delta2)
        .with_shift(enc.logical_indices()[3], -0.5 * delta2))
}

pub fn cp_interaction_hamiltonian(
    lat4: &LatticeSpec,
    drive: &DriveSpec,
    t: f64,
    delta2: f64,
    n_bessel: usize,
    include_spectators: bool,
) -> Result<CMatrix, DeviceError> {
    Ok(cp_model(lat4, drive, delta2, n_bessel, include_spectators, Truncation::Full)?.dense(t))
}

fn default_phase() -> f64 {
    0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmonConfig {
    pub omega0_mhz: f64,
    pub alpha_mhz: f64,
    pub r_minus_khz: f64,
    pub r_z_khz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub pair: [usize; 2],
    pub g_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    pub target: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub nu_mhz: f64,
    #[serde(default = "default_phase")]
    pub phi0: f64,
    #[serde(default = "default_phase")]
    pub eta_mhz: f64,
}

/// Device file: plain MHz / kHz, converted to rad/ns on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub transmons: Vec<TransmonConfig>,
    #[serde(default)]
    pub couplings: Vec<CouplingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveConfig>,
}

impl DeviceConfig {
    pub fn from_json_str(text: &str) -> Result<Self, DeviceError> {
        serde_json::from_str(text).map_err(|e| DeviceError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, DeviceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| DeviceError::Io { path: path.display().to_string(), source })?;
        Self::from_json_str(&text)
    }

    pub fn from_lattice(lat: &LatticeSpec) -> Self {
        Self {
            transmons: lat
                .transmons()
                .iter()
                .map(|t| TransmonConfig {
                    omega0_mhz: crate::numerics::to_mhz(t.omega0),
                    alpha_mhz: crate::numerics::to_mhz(t.alpha),
                    r_minus_khz: crate::numerics::to_khz(t.r_minus),
                    r_z_khz: crate::numerics::to_khz(t.r_z),
                })
                .collect(),
            couplings: lat
                .couplings()
                .iter()
                .map(|c| CouplingConfig { pair: [c.i, c.j], g_mhz: crate::numerics::to_mhz(c.g) })
                .collect(),
            drive: None,
        }
    }

    pub fn lattice(&self) -> Result<LatticeSpec, DeviceError> {
        let transmons = self
            .transmons
            .iter()
            .map(|t| TransmonSpec::new(mhz(t.omega0_mhz), mhz(t.alpha_mhz), khz(t.r_minus_khz), khz(t.r_z_khz)))
            .collect::<Result<Vec<_>, _>>()?;
        let couplings = self
            .couplings
            .iter()
            .map(|c| Coupling { i: c.pair[0].min(c.pair[1]), j: c.pair[0].max(c.pair[1]), g: mhz(c.g_mhz) })
            .collect();
        LatticeSpec::new(transmons, couplings)
    }

    pub fn drive_spec(&self) -> Result<Option<DriveSpec>, DeviceError> {
        let Some(d) = &self.drive else { return Ok(None) };
        let nu = mhz(d.nu_mhz);
        let eta = mhz(d.eta_mhz);
        match (d.epsilon_mhz, d.gamma) {
            (Some(eps), None) => DriveSpec::new(d.target, mhz(eps), nu, d.phi0, eta).map(Some),
            (None, Some(gamma)) => DriveSpec::from_gamma(d.target, gamma, nu, d.phi0, eta).map(Some),
            _ => Err(DeviceError::Config("drive needs exactly one of epsilon_mhz or gamma".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{
        bessel_j, commutator, expm_hermitian, is_hermitian, is_unitary, max_abs, to_mhz, TimeGrid,
    };

    fn pair_drive(lat: &LatticeSpec) -> DriveSpec {
        DriveSpec::from_gamma(1, 1.5, lat.detuning(0, 1) - mhz(29.58), 0.3, mhz(40.0)).unwrap()
    }

    /// Midpoint-rule time-ordered product.
    fn propagate(h: impl Fn(f64) -> CMatrix, t1: f64, dt: f64) -> CMatrix {
        let grid = TimeGrid::new(0.0, t1, dt).unwrap();
        let n = h(0.0).nrows();
        let mut u = CMatrix::identity(n, n);
        for k in 0..grid.n_steps() {
            let mid = grid.time(k) + 0.5 * grid.dt();
            u = expm_hermitian(&h(mid), grid.dt()).unwrap() * u;
        }
        u
    }

    #[test]
    fn index_helpers() {
        assert_eq!(product_index(&[1, 0]), 3);
        assert_eq!(product_index(&[0, 2, 0, 0]), 18);
        assert_eq!(level_of(18, 1, 4), 2);
        assert_eq!(excitation_number(product_index(&[1, 2, 0, 1]), 4), 4);
    }

    #[test]
    fn lattice_validation() {
        let t = TransmonSpec::new(1.0, 0.1, 0.0, 0.0).unwrap();
        assert!(TransmonSpec::new(1.0, -0.1, 0.0, 0.0).is_err());
        assert!(LatticeSpec::new(vec![t; 5], vec![]).is_err());
        assert!(LatticeSpec::new(vec![t; 2], vec![Coupling { i: 1, j: 0, g: 0.1 }]).is_err());
        assert!(LatticeSpec::new(vec![t; 2], vec![Coupling { i: 0, j: 1, g: 0.0 }]).is_err());
        let lat = LatticeSpec::pair_default();
        assert!((to_mhz(lat.detuning(0, 1)) - 520.0).abs() < 1e-9);
        assert_eq!(lat.detuning(0, 1), -lat.detuning(1, 0));
        assert_eq!(lat.coupling(1, 0), lat.coupling(0, 1));
    }

    #[test]
    fn lab_hamiltonian_cases() {
        let lat = LatticeSpec::pair_default();
        let drive = pair_drive(&lat);
        let h = pair_lab_hamiltonian(&lat, 0, 1, Some(&drive), 0.0).unwrap();
        assert!(max_abs(&(&h - h.adjoint())) < 1e-14);
        for t in [0.0, 1.7, 9.3] {
            let h = pair_lab_hamiltonian(&lat, 0, 1, Some(&drive), t).unwrap();
            assert_eq!(h[(3, 1)], C64::new(mhz(14.5), 0.0));
        }
        let bare = LatticeSpec::new(lat.transmons().to_vec(), vec![Coupling { i: 0, j: 1, g: 1e-300 }]).unwrap();
        let h = pair_lab_hamiltonian(&bare, 0, 1, None, 2.0).unwrap();
        for r in 0..9 {
            for c in 0..9 {
                if r != c {
                    assert!(h[(r, c)].norm() < 1e-299);
                }
            }
        }
        assert!((h[(8, 8)].re - (lat.transmon(0).level_energy(2) + lat.transmon(1).level_energy(2))).abs() < 1e-12);
        assert!(matches!(
            pair_lab_hamiltonian(&LatticeSpec::four_transmon_default(), 0, 2, None, 0.0),
            Err(DeviceError::MissingCoupling(0, 2))
        ));
    }

    #[test]
    fn lab_hamiltonian_conserves_excitations_without_drive() {
        let lat = LatticeSpec::pair_default();
        let h = pair_lab_hamiltonian(&lat, 0, 1, None, 0.0).unwrap();
        let n = CMatrix::from_diagonal(&CVector::from_iterator(
            9,
            (0..9).map(|s| C64::new(excitation_number(s, 2) as f64, 0.0)),
        ));
        assert!(max_abs(&commutator(&h, &n)) < 1e-12);
    }

    #[test]
    fn frame_unitary_cases() {
        let lat = LatticeSpec::pair_default();
        let drive = DriveSpec::from_gamma(1, 1.5, mhz(490.0), 0.0, 0.0).unwrap();
        let u0 = interaction_frame_unitary(&lat, 0, 1, Some(&drive), 0.0).unwrap();
        assert!(max_abs(&(u0 - CMatrix::identity(9, 9))) < 1e-15);
        let t = 3.3;
        let u = interaction_frame_unitary(&lat, 0, 1, None, t).unwrap();
        assert!(is_unitary(&u, 1e-12));
        for s in 0..9 {
            let want = C64::from_polar(1.0, -bare_energy(&lat, s) * t);
            assert!((u[(s, s)] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn modulation_index_is_constant() {
        let d = DriveSpec::new(1, 2.0, 1.5, 0.2, 0.3).unwrap();
        assert_eq!(d.gamma_mod(), 2.0 / 1.8);
        let d2 = DriveSpec::from_gamma(1, 1.5, 3.0, 0.0, -0.2).unwrap();
        assert!((d2.gamma_mod() - 1.5).abs() < 1e-15);
        assert!(DriveSpec::new(1, -1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn interaction_hamiltonian_cases() {
        let lat = LatticeSpec::pair_default();
        let g = mhz(14.5);
        let drive = DriveSpec::from_gamma(1, 1.5, mhz(490.0), 0.0, 0.0).unwrap();
        let h = interaction_hamiltonian_pair(&lat, 0, 1, Some(&drive), 0.0, 15).unwrap();
        let series: f64 = (-15..=15).map(|n| bessel_j(n, 1.5).unwrap()).sum();
        assert!((h[(3, 1)] - C64::new(g * series, 0.0)).norm() < 1e-14);
        assert!((series - 1.0).abs() < 1e-12);

        // No modulation: plain rotating coupling.
        let h0 = interaction_hamiltonian_pair(&lat, 0, 1, None, 2.0, 15).unwrap();
        let want = C64::from_polar(g, lat.detuning(0, 1) * 2.0);
        assert!((h0[(3, 1)] - want).norm() < 1e-14);

        for k in 0..100 {
            let t = 0.37 * k as f64;
            let h = interaction_hamiltonian_pair(&lat, 0, 1, Some(&drive), t, 15).unwrap();
            assert!(is_hermitian(&h, 1e-12));
        }
    }

    #[test]
    fn bessel_tail_below_truncation_tolerance() {
        let tail: f64 = (16..=60).map(|n| 2.0 * bessel_j(n, 1.5).unwrap().abs()).sum();
        assert!(tail < 1e-12);
    }

    /// Lab-frame propagation transformed into the interaction picture versus
    /// direct propagation of the Bessel-series Hamiltonian.
    #[test]
    fn frame_consistency() {
        let lat = LatticeSpec::pair_default();
        let drive = pair_drive(&lat);
        let t1 = 6.0;
        let lab = propagate(|t| pair_lab_hamiltonian(&lat, 0, 1, Some(&drive), t).unwrap(), t1, 2e-4);
        let model = pair_interaction_model(&lat, 0, 1, Some(&drive), 15).unwrap();
        let inter = propagate(|t| model.dense(t), t1, 2e-4);
        let ui0 = interaction_frame_unitary(&lat, 0, 1, Some(&drive), 0.0).unwrap();
        let ui1 = interaction_frame_unitary(&lat, 0, 1, Some(&drive), t1).unwrap();
        let transformed = ui1.adjoint() * lab * ui0;
        assert!(max_abs(&(transformed - inter)) < 1e-6);
    }

    #[test]
    fn single_qubit_model_logical_block() {
        let lat = LatticeSpec::pair_default();
        let delta = mhz(25.0);
        let drive = DriveSpec::from_gamma(1, 1.5, lat.detuning(0, 1) - delta, 0.4, mhz(-30.0)).unwrap();
        let model = single_qubit_model(&lat, &drive, delta, 15, None).unwrap();
        let h = model.dense(1.3);
        assert!((h[(3, 3)].re - 0.5 * delta).abs() < 1e-15);
        assert!((h[(1, 1)].re + 0.5 * delta).abs() < 1e-15);
        // The n = 1 sideband is stationary at resonance: its coefficient is
        // g J₁(Γ) e^{-iφ(t)}; check it by averaging the element against e^{iφ(t)}.
        let g = mhz(14.5);
        let n = 20_000;
        let tmax = 200.0;
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..n {
            let t = tmax * (k as f64 + 0.5) / n as f64;
            let phi = drive.phi0() + drive.eta() * t;
            acc += model.dense(t)[(3, 1)] * C64::from_polar(1.0, phi);
        }
        acc /= n as f64;
        let omega = effective_rabi_single(g, 1.5).unwrap();
        assert!((acc - C64::new(0.5 * omega, 0.0)).norm() < 2e-3 * omega);
        for k in 0..100 {
            assert!(is_hermitian(&model.dense(0.29 * k as f64), 1e-12));
        }
    }

    #[test]
    fn effective_rabi_values() {
        let omega = effective_rabi_single(mhz(14.5), 1.5).unwrap();
        assert!((to_mhz(omega) / 16.18 - 1.0).abs() < 1e-3);
        assert!((to_mhz(effective_rabi_single(mhz(7.0), 1.6).unwrap()) - 7.979).abs() < 1e-3);
        let tiny = effective_rabi_single(0.3, 1e-6).unwrap();
        assert!((tiny - 0.3 * 1e-6).abs() < 1e-15);
        assert!(effective_pulse_single(0.1, 3.0, 0.0, 0.0, 0.0, 1.0).is_err());
        let p = effective_pulse_single(mhz(14.5), 1.5, mhz(25.0), 0.0, 0.0, 9.5).unwrap();
        assert_eq!(p.omega(), omega);
    }

    #[test]
    fn cp_model_auxiliary_element() {
        let lat = LatticeSpec::four_transmon_default();
        let delta2 = mhz(27.0);
        let pulse = PulseSpec::new(effective_rabi_cp(mhz(7.0), 1.6).unwrap(), delta2, 0.05, PI, 17.8).unwrap();
        let drive = cp_gate_drive(&lat, &pulse, 1.6).unwrap();
        let model = cp_model(&lat, &drive, delta2, 15, false, Truncation::MaxExcitations(2)).unwrap();
        let enc = Encoding::s2();
        let a = enc.auxiliary().unwrap();
        let l11 = enc.logical_indices()[3];
        // Average the (a, 11) element against the two-level convention.
        let n = 200_000;
        let tmax = 2000.0;
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..n {
            let t = tmax * (k as f64 + 0.5) / n as f64;
            acc += model.dense(t)[(model.local_index(a).unwrap(), model.local_index(l11).unwrap())] * C64::from_polar(1.0, pulse.phase_at(t));
        }
        acc /= n as f64;
        assert!((acc - C64::new(0.5 * pulse.omega(), 0.0)).norm() < 2e-3 * pulse.omega(), "{acc} vs {}", 0.5 * pulse.omega());
        for k in 0..100 {
            let h = model.dense(0.23 * k as f64);
            assert!(is_hermitian(&h, 1e-12));
        }
    }

    #[test]
    fn cp_spectators_off_decouple_outer_transmons() {
        let lat = LatticeSpec::four_transmon_default();
        let drive = DriveSpec::from_gamma(1, 1.6, mhz(363.0), 0.0, 0.0).unwrap();
        let h = cp_interaction_hamiltonian(&lat, &drive, 4.2, mhz(27.0), 15, false).unwrap();
        for r in 0..81 {
            for c in 0..81 {
                let moves_outer = level_of(r, 0, 4) != level_of(c, 0, 4) || level_of(r, 2, 4) != level_of(c, 2, 4);
                if moves_outer {
                    assert_eq!(h[(r, c)], C64::new(0.0, 0.0));
                }
            }
        }
        let with = cp_interaction_hamiltonian(&lat, &drive, 4.2, mhz(27.0), 15, true).unwrap();
        assert!(with[(product_index(&[1, 0, 0, 0]), product_index(&[0, 1, 0, 0]))].norm() > 0.0);
    }

    #[test]
    fn truncated_model_is_submatrix() {
        let lat = LatticeSpec::four_transmon_default();
        let drive = DriveSpec::from_gamma(1, 1.6, mhz(363.0), 0.0, 0.0).unwrap();
        let full = cp_model(&lat, &drive, mhz(27.0), 15, true, Truncation::Full).unwrap();
        let small = cp_model(&lat, &drive, mhz(27.0), 15, true, Truncation::MaxExcitations(2)).unwrap();
        assert_eq!(small.dim(), 15);
        let hf = full.dense(3.1);
        let hs = small.dense(3.1);
        for (a, &sa) in small.states().iter().enumerate() {
            for (b, &sb) in small.states().iter().enumerate() {
                assert!((hs[(a, b)] - hf[(sa, sb)]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn drift_cases() {
        let zero = drift_perturbation(&DriftSpec::new(0.0, 1.0).unwrap());
        assert_eq!(max_abs(&zero), 0.0);
        let d = drift_perturbation(&DriftSpec::new(0.1, 2.0).unwrap());
        assert!((d[(3, 3)].re - 0.2).abs() < 1e-15);
        assert!((d[(1, 1)].re + 0.2).abs() < 1e-15);
        assert!((d[(2, 2)].re + 0.4).abs() < 1e-15);
        assert!(DriftSpec::new(0.6, 1.0).is_err());
    }

    #[test]
    fn projectors() {
        let p1 = logical_projector(&Encoding::s1(), false);
        let p2 = logical_projector(&Encoding::s2(), false);
        let p2a = logical_projector(&Encoding::s2(), true);
        assert_eq!(p1.trace().re, 2.0);
        assert_eq!(p2.trace().re, 4.0);
        assert_eq!(p2a.trace().re, 5.0);
        for p in [p1, p2, p2a] {
            assert!(max_abs(&(&p * &p - &p)) < 1e-14);
            assert!(max_abs(&(&p - p.adjoint())) < 1e-14);
        }
    }

    #[test]
    fn config_round_trip_and_errors() {
        let lat = LatticeSpec::four_transmon_default();
        let text = serde_json::to_string(&DeviceConfig::from_lattice(&lat)).unwrap();
        let back = LatticeSpec::from_json_str(&text).unwrap();
        for (a, b) in lat.transmons().iter().zip(back.transmons()) {
            assert!((a.omega0 - b.omega0).abs() < 1e-12);
            assert!((a.r_z - b.r_z).abs() < 1e-15);
        }
        let err = LatticeSpec::from_json_str(r#"{"transmons":[{"omega0_mhz":5000,"alpha_mhz":200,"r_minus_khz":4}]}"#)
            .unwrap_err();
        assert!(err.to_string().contains("r_z_khz"), "{err}");
        let cfg = DeviceConfig::from_json_str(
            r#"{"transmons":[{"omega0_mhz":5520,"alpha_mhz":200,"r_minus_khz":4,"r_z_khz":4},
                             {"omega0_mhz":5000,"alpha_mhz":210,"r_minus_khz":4,"r_z_khz":4}],
                "couplings":[{"pair":[0,1],"g_mhz":14.5}],
                "drive":{"target":1,"gamma":1.5,"nu_mhz":495}}"#,
        )
        .unwrap();
        let d = cfg.drive_spec().unwrap().unwrap();
        assert!((d.gamma_mod() - 1.5).abs() < 1e-12);
    }
}
