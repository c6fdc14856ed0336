//! Small numeric helpers shared by the filters and the learned readouts.

use nalgebra::{DMatrix, SymmetricEigen};

pub const TAU: f64 = core::f64::consts::TAU;
pub const PI: f64 = core::f64::consts::PI;

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a - TAU * libm::floor((a + PI) / TAU);
    // floor rounding can land exactly on +π for inputs just below it
    if w >= PI {
        w - TAU
    } else {
        w
    }
}

/// Solves the ridge system `(AᵀA + λI) X = AᵀY` by Cholesky.
///
/// `a` is samples × features, `y` samples × outputs. Returns `None` when the
/// regularized Gram matrix is not positive definite (λ ≤ 0 with a
/// rank-deficient design).
pub fn ridge_solve(a: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Option<DMatrix<f64>> {
    let mut gram = gram(a);
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    let rhs = a.tr_mul(y);
    let chol = gram.cholesky()?;
    Some(chol.solve(&rhs))
}

/// `AᵀA` through a blocked GEMM; the naive product dominates decoder solves.
pub fn gram(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    let mut c = DMatrix::zeros(n, n);
    if m == 0 || n == 0 {
        return c;
    }
    let (m_i, n_i) = (m as isize, n as isize);
    // column-major storage: Aᵀ has row stride m, column stride 1
    unsafe {
        matrixmultiply::dgemm(
            n, m, n, 1.0,
            a.as_ptr(), m_i, 1,
            a.as_ptr(), 1, m_i,
            0.0,
            c.as_mut_ptr(), 1, n_i,
        );
    }
    c
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Largest absolute asymmetry `|m_ij − m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Restores exact symmetry after floating-point drift.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// FNV-1a over the bit patterns of a float slice; used to prove weights are
/// never modified at run time.
pub fn fingerprint(values: &[f64], mut hash: u64) -> u64 {
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }
    hash
}

pub const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
