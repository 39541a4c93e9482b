use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use super::NumericsError;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Tolerance of the Hermitian and unitary predicates.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Tensor product `a ⊗ b`; row index of the result is `ia * rows(b) + ib`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = CMatrix::zeros(ra * rb, ca * cb);
    for ja in 0..ca {
        for ia in 0..ra {
            let s = a[(ia, ja)];
            if s == C64::new(0.0, 0.0) {
                continue;
            }
            for jb in 0..cb {
                for ib in 0..rb {
                    out[(ia * rb + ib, ja * cb + jb)] = s * b[(ib, jb)];
                }
            }
        }
    }
    out
}

/// Max-norm `max |m_ij|`.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    m.is_square() && max_abs(&(m - m.adjoint())) <= tol
}

pub fn is_unitary(m: &CMatrix, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    max_abs(&(m.adjoint() * m - CMatrix::identity(n, n))) <= tol
}

pub fn basis_ket(dim: usize, k: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[k] = C64::new(1.0, 0.0);
    v
}

/// `|a⟩⟨b|`.
pub fn outer(a: &CVector, b: &CVector) -> CMatrix {
    a * b.adjoint()
}

fn hermitian_deviation(h: &CMatrix) -> f64 {
    max_abs(&(h - h.adjoint()))
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a Hermitian matrix.
pub fn hermitian_eigen(h: &CMatrix) -> Result<(Vec<f64>, CMatrix), NumericsError> {
    let scale = max_abs(h).max(1.0);
    let deviation = hermitian_deviation(h);
    if !h.is_square() || deviation > HERMITIAN_TOL * scale {
        return Err(NumericsError::NotHermitian { deviation });
    }
    let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 0).ok_or(NumericsError::EigenFailed)?;
    let mut order: Vec<usize> = (0..h.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(h.nrows(), h.ncols(), |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((values, vectors))
}

/// `exp(-i h s)` through the spectral decomposition of `h`.
pub fn expm_hermitian(h: &CMatrix, s: f64) -> Result<CMatrix, NumericsError> {
    let (values, vectors) = hermitian_eigen(h)?;
    let n = h.nrows();
    let mut scaled = vectors.clone();
    for (j, lambda) in values.iter().enumerate() {
        let phase = C64::from_polar(1.0, -lambda * s);
        for i in 0..n {
            scaled[(i, j)] *= phase;
        }
    }
    Ok(scaled * vectors.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn pauli_x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }

    fn pauli_z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
    }

    #[test]
    fn kron_identity_and_diagonal() {
        let i2 = CMatrix::identity(2, 2);
        assert_eq!(kron(&i2, &i2), CMatrix::identity(4, 4));
        let zi = kron(&pauli_z(), &i2);
        let want = CMatrix::from_diagonal(&CVector::from_vec(vec![
            c(1., 0.),
            c(1., 0.),
            c(-1., 0.),
            c(-1., 0.),
        ]));
        assert_eq!(zi, want);
    }

    #[test]
    fn kron_index_arithmetic() {
        // (|1⟩⟨0|) ⊗ (|0⟩⟨1|): row = 1*2 + 0 = 2, col = 0*2 + 1 = 1.
        let a = outer(&basis_ket(2, 1), &basis_ket(2, 0));
        let b = outer(&basis_ket(2, 0), &basis_ket(2, 1));
        let k = kron(&a, &b);
        for i in 0..4 {
            for j in 0..4 {
                let want = if (i, j) == (2, 1) { 1.0 } else { 0.0 };
                assert_eq!(k[(i, j)], c(want, 0.0));
            }
        }
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let u = expm_hermitian(&CMatrix::zeros(3, 3), 7.3).unwrap();
        assert!(max_abs(&(u - CMatrix::identity(3, 3))) < 1e-15);
    }

    #[test]
    fn expm_pauli_period() {
        let u = expm_hermitian(&pauli_x(), PI).unwrap();
        assert!(max_abs(&(u + CMatrix::identity(2, 2))) < 1e-14);
    }

    #[test]
    fn expm_diagonal() {
        let h = pauli_z() * c(0.5, 0.0);
        let u = expm_hermitian(&h, PI).unwrap();
        assert!((u[(0, 0)] - c(0.0, -1.0)).norm() < 1e-14);
        assert!((u[(1, 1)] - c(0.0, 1.0)).norm() < 1e-14);
        assert!(u[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn expm_rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)]);
        assert!(matches!(
            expm_hermitian(&m, 1.0),
            Err(NumericsError::NotHermitian { .. })
        ));
    }

    #[test]
    fn predicates() {
        assert!(is_hermitian(&pauli_x(), HERMITIAN_TOL));
        assert!(is_unitary(&pauli_x(), HERMITIAN_TOL));
        let m = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(1., 0.), c(0., 0.), c(1., 0.)]);
        assert!(!is_hermitian(&m, HERMITIAN_TOL));
        assert!(!is_unitary(&m, HERMITIAN_TOL));
    }

    fn random_hermitian(n: usize, entries: &[f64], scale: f64) -> CMatrix {
        let mut h = CMatrix::zeros(n, n);
        let mut it = entries.iter().cycle();
        for i in 0..n {
            h[(i, i)] = c(*it.next().unwrap(), 0.0);
            for j in (i + 1)..n {
                let z = c(*it.next().unwrap(), *it.next().unwrap());
                h[(i, j)] = z;
                h[(j, i)] = z.conj();
            }
        }
        // Rescale so ‖h s‖_max is at most `scale` with s = 1.
        let m = max_abs(&h).max(1e-12);
        h * c(scale / m, 0.0)
    }

    proptest! {
        #[test]
        fn expm_is_unitary(
            n in 1usize..7,
            entries in proptest::collection::vec(-1.0f64..1.0, 64),
            scale in 0.0f64..50.0,
        ) {
            let h = random_hermitian(n, &entries, scale);
            let u = expm_hermitian(&h, 1.0).unwrap();
            prop_assert!(is_unitary(&u, 1e-10));
        }

        #[test]
        fn expm_group_property(
            entries in proptest::collection::vec(-1.0f64..1.0, 32),
            s in 0.0f64..3.0,
        ) {
            let h = random_hermitian(4, &entries, 2.0);
            let a = expm_hermitian(&h, s).unwrap();
            let b = expm_hermitian(&h, 2.0 * s).unwrap();
            prop_assert!(max_abs(&(&a * &a - b)) < 1e-12);
        }
    }
}
