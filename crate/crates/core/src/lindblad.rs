//! Master-equation evolution
//! `ρ̇ = -i[H, ρ] + Σ_k (r_k/2)(2L_kρL_k† - L_k†L_kρ - ρL_k†L_k)`,
//! unitary propagation and Choi-matrix extraction.

use std::cell::RefCell;

use thiserror::Error;

use crate::device::{level_of, LatticeSpec, LEVELS};
use crate::numerics::{
    expm_hermitian, hermitian_eigen, rk4_step, CMatrix, CVector, Hamiltonian, NumericsError, SparseMatrix,
    TimeGrid, C64,
};

/// Eigenvalue floor below which evolution aborts.
pub const POSITIVITY_ABORT: f64 = -1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LindbladError {
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("positivity lost at t = {t:.6} ns (min eigenvalue {min_eigenvalue:.3e}); reduce the time step")]
    PositivityViolation { t: f64, min_eigenvalue: f64 },
    #[error("negative rate {0}")]
    NegativeRate(f64),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self, LindbladError> {
        if m.nrows() != m.ncols() {
            return Err(LindbladError::InvalidState("not square".into()));
        }
        let herm = crate::numerics::max_abs(&(&m - m.adjoint()));
        if herm > 1e-10 {
            return Err(LindbladError::InvalidState(format!("not Hermitian ({herm:.3e})")));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(LindbladError::InvalidState(format!("trace {tr} != 1")));
        }
        let min = min_eigenvalue(&m)?;
        if min < -1e-8 {
            return Err(LindbladError::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(Self(m))
    }

    /// `|ψ⟩⟨ψ|` of the normalised ket.
    pub fn pure(psi: &CVector) -> Result<Self, LindbladError> {
        let norm = psi.norm();
        if !(norm > 0.0) {
            return Err(LindbladError::InvalidState("zero ket".into()));
        }
        let v = psi / C64::new(norm, 0.0);
        Ok(Self(&v * v.adjoint()))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(CMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn min_eigenvalue(&self) -> Result<f64, LindbladError> {
        min_eigenvalue(&self.0)
    }
}

pub fn min_eigenvalue(m: &CMatrix) -> Result<f64, LindbladError> {
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let (vals, _) = hermitian_eigen(&herm)?;
    Ok(vals.iter().copied().fold(f64::INFINITY, f64::min))
}

/// One dissipation channel `r·D[L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseOp {
    pub op: SparseMatrix,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseSet {
    dim: usize,
    ops: Vec<CollapseOp>,
}

impl CollapseSet {
    pub fn new(dim: usize) -> Self {
        Self { dim, ops: Vec::new() }
    }

    pub fn push(&mut self, op: &CMatrix, rate: f64) -> Result<(), LindbladError> {
        if op.nrows() != self.dim || op.ncols() != self.dim {
            return Err(LindbladError::DimensionMismatch { expected: self.dim, got: op.nrows() });
        }
        if !(rate >= 0.0) {
            return Err(LindbladError::NegativeRate(rate));
        }
        self.ops.push(CollapseOp { op: SparseMatrix::from_dense(op, 0.0), rate });
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ops(&self) -> &[CollapseOp] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Restriction to the listed basis states; exact when the operators map
    /// that span into itself.
    pub fn restricted(&self, keep: &[usize]) -> Self {
        Self {
            dim: keep.len(),
            ops: self.ops.iter().map(|c| CollapseOp { op: c.op.restricted(keep), rate: c.rate }).collect(),
        }
    }
}

/// Per transmon: `b = |0⟩⟨1| + √2|1⟩⟨2|` at `r⁻` and `b†b` at `r^z`.
pub fn collapse_operators(lat: &LatticeSpec) -> CollapseSet {
    let all: Vec<usize> = (0..lat.n_transmons()).collect();
    collapse_operators_for(lat, &all)
}

/// As [`collapse_operators`] but only for the listed transmons.
pub fn collapse_operators_for(lat: &LatticeSpec, transmons: &[usize]) -> CollapseSet {
    let n = lat.n_transmons();
    let dim = lat.dim();
    let mut set = CollapseSet::new(dim);
    for &k in transmons {
        let stride = LEVELS.pow((n - 1 - k) as u32);
        let mut lower = CMatrix::zeros(dim, dim);
        let mut number = CMatrix::zeros(dim, dim);
        for s in 0..dim {
            let level = level_of(s, k, n);
            if level > 0 {
                lower[(s - stride, s)] = C64::new((level as f64).sqrt(), 0.0);
            }
            number[(s, s)] = C64::new(level as f64, 0.0);
        }
        let t = lat.transmon(k);
        set.push(&lower, t.r_minus).expect("dimensions match");
        set.push(&number, t.r_z).expect("dimensions match");
    }
    set
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CMatrix>,
}

struct Generator<'a> {
    h: &'a dyn Hamiltonian,
    jumps: Vec<(SparseMatrix, SparseMatrix, f64)>,
    anti: SparseMatrix,
    scratch: RefCell<SparseMatrix>,
}

impl<'a> Generator<'a> {
    fn new(h: &'a dyn Hamiltonian, c: &CollapseSet) -> Result<Self, LindbladError> {
        let dim = h.dim();
        if c.dim() != dim {
            return Err(LindbladError::DimensionMismatch { expected: dim, got: c.dim() });
        }
        let mut anti = CMatrix::zeros(dim, dim);
        let mut jumps = Vec::new();
        for op in c.ops().iter().filter(|o| o.rate > 0.0) {
            let adj = op.op.adjoint();
            anti -= adj.mul(&op.op).to_dense() * C64::new(0.5 * op.rate, 0.0);
            jumps.push((op.op.clone(), adj, op.rate));
        }
        Ok(Self {
            h,
            jumps,
            anti: SparseMatrix::from_dense(&anti, 0.0),
            scratch: RefCell::new(SparseMatrix::new(dim)),
        })
    }

    fn rhs(&self, t: f64, rho: &CMatrix) -> CMatrix {
        let dim = rho.nrows();
        let mut out = CMatrix::zeros(dim, dim);
        let mut hs = self.scratch.borrow_mut();
        self.h.fill(t, &mut hs);
        hs.mul_left_add(rho, C64::new(0.0, -1.0), &mut out);
        hs.mul_right_add(rho, C64::new(0.0, 1.0), &mut out);
        let one = C64::new(1.0, 0.0);
        self.anti.mul_left_add(rho, one, &mut out);
        self.anti.mul_right_add(rho, one, &mut out);
        if !self.jumps.is_empty() {
            let mut tmp = CMatrix::zeros(dim, dim);
            for (l, l_adj, rate) in &self.jumps {
                tmp.fill(C64::new(0.0, 0.0));
                l.mul_left_add(rho, C64::new(*rate, 0.0), &mut tmp);
                l_adj.mul_right_add(&tmp, one, &mut out);
            }
        }
        out
    }
}

/// Integrates from `x0` and calls `observe(t, ρ)` every `stride` steps and
/// at the end. Positivity is checked at the same points when `x0` is a
/// density matrix.
fn integrate(
    x0: &CMatrix,
    h: &dyn Hamiltonian,
    c: &CollapseSet,
    grid: &TimeGrid,
    stride: usize,
    check_positivity: bool,
    mut observe: impl FnMut(f64, &CMatrix),
) -> Result<CMatrix, LindbladError> {
    if x0.nrows() != h.dim() || x0.ncols() != h.dim() {
        return Err(LindbladError::DimensionMismatch { expected: h.dim(), got: x0.nrows() });
    }
    let generator = Generator::new(h, c)?;
    let stride = stride.max(1);
    let n = grid.n_steps();
    let mut x = x0.clone();
    for k in 0..=n {
        let t = grid.time(k);
        if k % stride == 0 || k == n {
            if check_positivity {
                let min = min_eigenvalue(&x)?;
                if min < POSITIVITY_ABORT {
                    return Err(LindbladError::PositivityViolation { t, min_eigenvalue: min });
                }
            }
            observe(t, &x);
        }
        if k < n {
            x = rk4_step(|s, y: &CMatrix| generator.rhs(s, y), &x, t, grid.dt());
        }
    }
    Ok(x)
}

/// RK4 trajectory sampled every `stride` steps (and at the final time).
pub fn evolve(
    rho0: &DensityMatrix,
    h: &dyn Hamiltonian,
    c: &CollapseSet,
    grid: &TimeGrid,
    stride: usize,
) -> Result<Trajectory, LindbladError> {
    let mut traj = Trajectory { times: Vec::new(), states: Vec::new() };
    integrate(rho0.matrix(), h, c, grid, stride, true, |t, rho| {
        traj.times.push(t);
        traj.states.push(rho.clone());
    })?;
    Ok(traj)
}

/// As [`evolve`] but streams samples to `observe` and returns the final state.
pub fn evolve_observed(
    rho0: &DensityMatrix,
    h: &dyn Hamiltonian,
    c: &CollapseSet,
    grid: &TimeGrid,
    stride: usize,
    observe: impl FnMut(f64, &CMatrix),
) -> Result<CMatrix, LindbladError> {
    integrate(rho0.matrix(), h, c, grid, stride, true, observe)
}

/// Applies the evolution map to an arbitrary operator (no positivity check).
pub fn evolve_operator(
    x0: &CMatrix,
    h: &dyn Hamiltonian,
    c: &CollapseSet,
    grid: &TimeGrid,
) -> Result<CMatrix, LindbladError> {
    integrate(x0, h, c, grid, usize::MAX, false, |_, _| {})
}

/// Time-ordered product of midpoint exponentials.
pub fn unitary_propagate(h: &dyn Hamiltonian, grid: &TimeGrid) -> Result<CMatrix, LindbladError> {
    let dim = h.dim();
    let mut u = CMatrix::identity(dim, dim);
    for k in 0..grid.n_steps() {
        let mid = grid.time(k) + 0.5 * grid.dt();
        u = expm_hermitian(&h.dense(mid), grid.dt())? * u;
    }
    Ok(u)
}

/// As [`evolve_operator`], streaming samples every `stride` steps.
pub fn evolve_operator_observed(
    x0: &CMatrix,
    h: &dyn Hamiltonian,
    c: &CollapseSet,
    grid: &TimeGrid,
    stride: usize,
    observe: impl FnMut(f64, &CMatrix),
) -> Result<CMatrix, LindbladError> {
    integrate(x0, h, c, grid, stride, false, observe)
}

/// Pairs `(k, l)` with `k <= l` in the order [`choi_from_outputs`] expects.
pub fn choi_input_pairs(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|k| (k..d).map(move |l| (k, l))).collect()
}

/// Assembles the Choi matrix from the images of `|k⟩⟨l|`, `k <= l`, given in
/// [`choi_input_pairs`] order: `Choi[(k·d + a, l·d + b)] = ⟨a|E(|k⟩⟨l|)|b⟩`.
pub fn choi_from_outputs(outputs: &[CMatrix], logical: &[usize]) -> CMatrix {
    let d = logical.len();
    let pairs = choi_input_pairs(d);
    assert_eq!(outputs.len(), pairs.len(), "one output per input pair");
    let mut choi = CMatrix::zeros(d * d, d * d);
    for (&(k, l), out) in pairs.iter().zip(outputs) {
        for a in 0..d {
            for b in 0..d {
                let v = out[(logical[a], logical[b])];
                choi[(k * d + a, l * d + b)] = v;
                if l != k {
                    // E(|l⟩⟨k|) = E(|k⟩⟨l|)†.
                    choi[(l * d + b, k * d + a)] = v.conj();
                }
            }
        }
    }
    choi
}

/// Choi matrix of the channel restricted to `logical` (state indices of
/// `h`); trace `d` when no population leaves the logical span.
pub fn choi_from_evolution(
    h: &dyn Hamiltonian,
    c: &CollapseSet,
    grid: &TimeGrid,
    logical: &[usize],
) -> Result<CMatrix, LindbladError> {
    let dim = h.dim();
    if let Some(&bad) = logical.iter().find(|&&k| k >= dim) {
        return Err(LindbladError::DimensionMismatch { expected: dim, got: bad });
    }
    let outputs = choi_input_pairs(logical.len())
        .into_iter()
        .map(|(k, l)| {
            let mut x0 = CMatrix::zeros(dim, dim);
            x0[(logical[k], logical[l])] = C64::new(1.0, 0.0);
            evolve_operator(&x0, h, c, grid)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(choi_from_outputs(&outputs, logical))
}
