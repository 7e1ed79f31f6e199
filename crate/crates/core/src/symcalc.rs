//! Symmetric-matrix calculus: vectorization, half-vectorization, duplication
//! matrices, Kronecker products and sums, and the Lyapunov operator
//! `L_A(X) = X A + A^T X`.
//!
//! Every half-vectorization in the crate uses one ordering: the lower
//! triangle, column by column. For `n = 3` the packed indices are
//!
//! ```text
//! [ 0 . . ]
//! [ 1 3 . ]
//! [ 2 4 5 ]
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;

/// `n (n + 1) / 2`, the dimension of the space of symmetric `n x n` matrices.
pub const fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Packed position of entry `(i, j)` of a symmetric matrix of size `n`.
#[inline]
pub fn packed_index(n: usize, i: usize, j: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    // column c starts at c n - c (c - 1) / 2
    c * n - c * c.saturating_sub(1) / 2 + (r - c)
}

/// Real symmetric matrix stored as its packed lower triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    packed: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            dim,
            packed: vec![0.0; packed_len(dim)],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.packed[packed_index(dim, i, i)] = scale;
        }
        m
    }

    pub fn from_packed(dim: usize, packed: Vec<f64>) -> Result<Self> {
        if packed.len() != packed_len(dim) {
            return Err(Error::dims(
                "SymMatrix::from_packed",
                packed_len(dim),
                packed.len(),
            ));
        }
        Ok(SymMatrix { dim, packed })
    }

    /// Symmetrizes `m` as `(m + m^T) / 2` and returns the largest entry of
    /// `|m - m^T| / 2` alongside.
    pub fn from_dense(m: &DenseMatrix) -> Result<(Self, f64)> {
        if !m.is_square() {
            return Err(Error::NotSquare {
                context: "SymMatrix::from_dense",
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let n = m.nrows();
        let mut packed = Vec::with_capacity(packed_len(n));
        let mut residual = 0.0_f64;
        for j in 0..n {
            for i in j..n {
                packed.push(0.5 * (m[(i, j)] + m[(j, i)]));
                residual = residual.max(0.5 * (m[(i, j)] - m[(j, i)]).abs());
            }
        }
        Ok((SymMatrix { dim: n, packed }, residual))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn packed(&self) -> &[f64] {
        &self.packed
    }

    pub fn packed_mut(&mut self) -> &mut [f64] {
        &mut self.packed
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.packed[packed_index(self.dim, i, j)]
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.dim;
        DenseMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            packed: self.packed.iter().map(|v| v * s).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.packed.iter().all(|v| v.is_finite())
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim == 0 {
            return f64::INFINITY;
        }
        self.to_dense().symmetric_eigenvalues().min()
    }
}

/// Packs the lower triangle of a dense matrix column by column, assuming the
/// input is symmetric.
pub fn pack_lower(m: &DenseMatrix) -> SymMatrix {
    let n = m.nrows();
    let mut packed = Vec::with_capacity(packed_len(n));
    for j in 0..n {
        for i in j..n {
            packed.push(m[(i, j)]);
        }
    }
    SymMatrix { dim: n, packed }
}

/// Half-vectorization.
pub fn vech(m: &SymMatrix) -> DVector<f64> {
    DVector::from_column_slice(&m.packed)
}

/// Column-stacking vectorization.
pub fn vec(m: &DenseMatrix) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Duplication matrix `D_n` with its Moore-Penrose inverse `D_n^+`.
#[derive(Debug, Clone)]
pub struct DuplicationPair {
    pub dim: usize,
    pub d: DenseMatrix,
    pub dplus: DenseMatrix,
}

pub fn duplication(n: usize) -> Result<DuplicationPair> {
    if n == 0 {
        return Err(Error::InvalidDimension(
            "duplication matrix needs n >= 1".into(),
        ));
    }
    let big = n * n;
    let half = packed_len(n);
    let mut d = DenseMatrix::zeros(big, half);
    let mut dplus = DenseMatrix::zeros(half, big);
    for j in 0..n {
        for i in j..n {
            let k = packed_index(n, i, j);
            // vec index of (i, j) is i + j n
            d[(i + j * n, k)] = 1.0;
            d[(j + i * n, k)] = 1.0;
            if i == j {
                dplus[(k, i + j * n)] = 1.0;
            } else {
                dplus[(k, i + j * n)] = 0.5;
                dplus[(k, j + i * n)] = 0.5;
            }
        }
    }
    Ok(DuplicationPair { dim: n, d, dplus })
}

pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DenseMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

/// `A (+) B = A (x) I_m + I_n (x) B`.
pub fn kron_sum(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    for (m, name) in [(a, "kron_sum lhs"), (b, "kron_sum rhs")] {
        if !m.is_square() {
            return Err(Error::NotSquare {
                context: name,
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
    }
    let n = a.nrows();
    let m = b.nrows();
    Ok(kron(a, &DenseMatrix::identity(m, m)) + kron(&DenseMatrix::identity(n, n), b))
}

/// `v (+) v = v (x) I_n + I_n (x) v` for a column vector `v` of length `n`,
/// an `n^2 x n` matrix.
pub fn vector_kron_sum(v: &DVector<f64>) -> DenseMatrix {
    let n = v.len();
    let vm = DenseMatrix::from_column_slice(n, 1, v.as_slice());
    let eye = DenseMatrix::identity(n, n);
    kron(&vm, &eye) + kron(&eye, &vm)
}

/// Lyapunov operator `L_A(X) = X A + A^T X`.
pub fn lyap_op(a: &DenseMatrix, x: &SymMatrix) -> Result<SymMatrix> {
    let n = x.dim();
    if a.shape() != (n, n) {
        return Err(Error::dims(
            "lyap_op",
            format!("{n}x{n}"),
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    let xa = x.to_dense() * a;
    let mut packed = Vec::with_capacity(packed_len(n));
    for j in 0..n {
        for i in j..n {
            packed.push(xa[(i, j)] + xa[(j, i)]);
        }
    }
    Ok(SymMatrix { dim: n, packed })
}

/// `k`-th iterate of the Lyapunov operator applied to `x`.
pub fn lyap_iterate(a: &DenseMatrix, x: &SymMatrix, k: usize) -> Result<SymMatrix> {
    let mut cur = x.clone();
    for _ in 0..k {
        cur = lyap_op(a, &cur)?;
    }
    Ok(cur)
}

fn require_square(a: &DenseMatrix, context: &'static str) -> Result<usize> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            context,
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.nrows() == 0 {
        return Err(Error::InvalidDimension(format!("{context}: empty matrix")));
    }
    Ok(a.nrows())
}

/// `T = D_n^+ (A (+) A)^T D_n`, the matrix of `vech . L_A` acting on
/// half-vectorized symmetric matrices.
pub fn vech_lyap_matrix(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = require_square(a, "vech_lyap_matrix")?;
    let dup = duplication(n)?;
    let ks = kron_sum(a, a)?;
    Ok(&dup.dplus * ks.transpose() * &dup.d)
}

/// Drift of the lifted monomials, `D_n^T (A (+) A) (D_n^+)^T`.
pub fn lifted_drift(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = require_square(a, "lifted_drift")?;
    let dup = duplication(n)?;
    let ks = kron_sum(a, a)?;
    Ok(dup.d.transpose() * ks * dup.dplus.transpose())
}

/// Input coupling of the lifted monomials, `D_n^T (Bu (+) Bu)`.
pub fn lifted_input(b: &DenseMatrix, u: &DVector<f64>) -> Result<DenseMatrix> {
    if b.ncols() != u.len() {
        return Err(Error::dims("lifted_input", b.ncols(), u.len()));
    }
    let n = b.nrows();
    let dup = duplication(n)?;
    let bu = b * u;
    Ok(dup.d.transpose() * vector_kron_sum(&bu))
}

/// Per-channel pieces of [`lifted_input`]: entry `j` is the coupling for the
/// unit input on channel `j`, so `U(u) = sum_j u_j U_j`.
pub fn lifted_input_basis(b: &DenseMatrix) -> Result<Vec<DenseMatrix>> {
    let p = b.ncols();
    (0..p)
        .map(|j| {
            let mut e = DVector::zeros(p);
            e[j] = 1.0;
            lifted_input(b, &e)
        })
        .collect()
}

/// Lifted state `D_n^T (x (x) x)`: `x_i^2` on the diagonal positions and
/// `2 x_i x_j` off the diagonal.
pub fn lift(x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    let mut out = DVector::zeros(packed_len(n));
    for j in 0..n {
        for i in j..n {
            let v = x[i] * x[j];
            out[packed_index(n, i, j)] = if i == j { v } else { 2.0 * v };
        }
    }
    out
}
