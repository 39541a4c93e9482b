use super::{CMatrix, C64};

/// Coordinate-list square matrix. Duplicate entries add.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    entries: Vec<(usize, usize, C64)>,
}

impl SparseMatrix {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: Vec::new() }
    }

    /// Keeps entries with modulus above `tol`.
    pub fn from_dense(m: &CMatrix, tol: f64) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "sparse matrices are square");
        let mut out = Self::new(m.nrows());
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                let v = m[(r, c)];
                if v.norm() > tol {
                    out.entries.push((r, c, v));
                }
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, usize, C64)] {
        &self.entries
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn push(&mut self, row: usize, col: usize, value: C64) {
        debug_assert!(row < self.dim && col < self.dim);
        self.entries.push((row, col, value));
    }

    pub fn extend_from(&mut self, other: &SparseMatrix) {
        debug_assert_eq!(self.dim, other.dim);
        self.entries.extend_from_slice(&other.entries);
    }

    pub fn adjoint(&self) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|&(r, c, v)| (c, r, v.conj())).collect(),
        }
    }

    pub fn scaled(&self, a: C64) -> Self {
        Self { dim: self.dim, entries: self.entries.iter().map(|&(r, c, v)| (r, c, a * v)).collect() }
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    /// Product `self · other`, returned densely and re-sparsified.
    pub fn mul(&self, other: &SparseMatrix) -> SparseMatrix {
        SparseMatrix::from_dense(&(self.to_dense() * other.to_dense()), 0.0)
    }

    /// Restriction to the rows and columns listed in `keep` (new order).
    pub fn restricted(&self, keep: &[usize]) -> SparseMatrix {
        let mut map = vec![usize::MAX; self.dim];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let entries = self
            .entries
            .iter()
            .filter(|&&(r, c, _)| map[r] != usize::MAX && map[c] != usize::MAX)
            .map(|&(r, c, v)| (map[r], map[c], v))
            .collect();
        SparseMatrix { dim: keep.len(), entries }
    }

    /// `out += a · self · x`.
    pub fn mul_left_add(&self, x: &CMatrix, a: C64, out: &mut CMatrix) {
        let n = self.dim;
        let cols = x.ncols();
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        for &(r, c, v) in &self.entries {
            let w = a * v;
            for k in 0..cols {
                os[r + k * n] += w * xs[c + k * n];
            }
        }
    }

    /// `out += a · x · self`.
    pub fn mul_right_add(&self, x: &CMatrix, a: C64, out: &mut CMatrix) {
        let n = self.dim;
        let rows = x.nrows();
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        for &(r, c, v) in &self.entries {
            let w = a * v;
            let (src, dst) = (&xs[r * rows..(r + 1) * rows], &mut os[c * n..c * n + rows]);
            for (o, &xv) in dst.iter_mut().zip(src) {
                *o += w * xv;
            }
        }
    }
}

/// Time-dependent Hamiltonian that can write its nonzero entries at time `t`.
pub trait Hamiltonian: Sync {
    fn dim(&self) -> usize;

    /// Clears `out` and fills it with `H(t)`.
    fn fill(&self, t: f64, out: &mut SparseMatrix);

    fn dense(&self, t: f64) -> CMatrix {
        let mut s = SparseMatrix::new(self.dim());
        self.fill(t, &mut s);
        s.to_dense()
    }
}

/// Adapter for closures returning dense matrices.
pub struct DenseHamiltonian<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64) -> CMatrix + Sync> DenseHamiltonian<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(f64) -> CMatrix + Sync> Hamiltonian for DenseHamiltonian<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fill(&self, t: f64, out: &mut SparseMatrix) {
        let m = (self.f)(t);
        *out = SparseMatrix::from_dense(&m, 0.0);
    }

    fn dense(&self, t: f64) -> CMatrix {
        (self.f)(t)
    }
}
