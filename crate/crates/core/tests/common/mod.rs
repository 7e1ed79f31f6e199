//! Independent oracles shared by the integration tests. Nothing here goes
//! through the packed/duplication machinery of the library.
#![allow(dead_code)]

use lqo::symcalc::DenseMatrix;
use lqo::sysmodel::LqoSystem;
use nalgebra::DVector;

pub const SEED: u64 = 0x1a0_5eed;

/// `X A + A^T X` on plain dense matrices.
pub fn lyap_dense(a: &DenseMatrix, x: &DenseMatrix) -> DenseMatrix {
    x * a + a.transpose() * x
}

/// Upper-triangle-free coordinates of a symmetric matrix in the order
/// `(i, j)` for `j <= i`, column by column.
pub fn lower_entries(x: &DenseMatrix) -> DVector<f64> {
    let n = x.nrows();
    let mut v = Vec::new();
    for j in 0..n {
        for i in j..n {
            v.push(x[(i, j)]);
        }
    }
    DVector::from_vec(v)
}

/// Column-stacked entries.
pub fn stack_columns(x: &DenseMatrix) -> DVector<f64> {
    DVector::from_iterator(x.len(), x.iter().copied())
}

/// Rank by SVD with the standard `max(r, c) eps sigma_max` cutoff.
pub fn svd_rank(m: &DenseMatrix) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Normalized iterates `L_A^k(C_h)` as rows, for every output and
/// `k = 0..=n(n+1)/2`.
pub fn krylov_rows(sys: &LqoSystem) -> DenseMatrix {
    let n = sys.n();
    let len = n * (n + 1) / 2;
    let mut rows: Vec<DVector<f64>> = Vec::new();
    for c in sys.c() {
        let mut x = c.to_dense();
        for _ in 0..=len {
            let nrm = x.norm();
            if nrm == 0.0 {
                break;
            }
            x /= nrm;
            rows.push(lower_entries(&x));
            x = lyap_dense(sys.a(), &x);
        }
    }
    DenseMatrix::from_fn(rows.len(), len, |i, j| rows[i][j])
}

/// Dimension of the smallest Lyapunov-invariant subspace containing every
/// `C_h`.
pub fn brute_force_span_dim(sys: &LqoSystem) -> usize {
    svd_rank(&krylov_rows(sys))
}

/// True when the rows of `a` and `b` span the same subspace.
pub fn same_row_space(a: &DenseMatrix, b: &DenseMatrix) -> bool {
    let ra = svd_rank(a);
    let rb = svd_rank(b);
    let stacked = DenseMatrix::from_fn(a.nrows() + b.nrows(), a.ncols(), |i, j| {
        if i < a.nrows() {
            a[(i, j)] / a.row(i).norm().max(f64::MIN_POSITIVE)
        } else {
            let r = i - a.nrows();
            b[(r, j)] / b.row(r).norm().max(f64::MIN_POSITIVE)
        }
    });
    ra == rb && svd_rank(&stacked) == ra
}

/// Quadratic outputs evaluated directly.
pub fn outputs_direct(sys: &LqoSystem, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(sys.q(), |h, _| {
        0.5 * (x.transpose() * sys.c()[h].to_dense() * x)[0] + sys.d()[h].dot(x)
    })
}
