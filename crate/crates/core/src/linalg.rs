//! Numerical rank decisions and row-span bookkeeping shared by the immersion
//! algorithms.
//!
//! Rows are compared after scaling by the magnitude they were computed from,
//! so that a row produced by cancellation (say `r A` with `|r A| << |r| |A|`)
//! is judged against the rounding noise of its inputs rather than against
//! its own norm.

use nalgebra::{DMatrix, DVector};

pub type DenseMatrix = DMatrix<f64>;

#[derive(Debug, Clone)]
pub struct RankDecision {
    pub rank: usize,
    pub tol: f64,
    pub singular_values: Vec<f64>,
    /// `[rank, alternative]` when the smallest kept and largest dropped
    /// singular values straddle the tolerance within a factor of 10.
    pub ambiguous: Option<[usize; 2]>,
}

/// Singular-value rank with `tol = max(rows, cols) * eps * sigma_max` unless
/// an absolute tolerance is supplied.
pub fn numerical_rank(m: &DenseMatrix, tol_override: Option<f64>) -> RankDecision {
    if m.nrows() == 0 || m.ncols() == 0 {
        return RankDecision {
            rank: 0,
            tol: tol_override.unwrap_or(0.0),
            singular_values: Vec::new(),
            ambiguous: None,
        };
    }
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let smax = sv[0];
    let tol = tol_override.unwrap_or(m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax);
    let rank = sv.iter().filter(|&&s| s > tol).count();
    let ambiguous = if rank > 0 && rank < sv.len() {
        let kept = sv[rank - 1];
        let dropped = sv[rank];
        if kept < 10.0 * dropped {
            let alt = if kept / tol < tol / dropped.max(f64::MIN_POSITIVE) {
                rank - 1
            } else {
                rank + 1
            };
            Some([rank, alt])
        } else {
            None
        }
    } else {
        None
    };
    RankDecision {
        rank,
        tol,
        singular_values: sv,
        ambiguous,
    }
}

fn normalized(row: impl Iterator<Item = f64>, scale: f64, ncols: usize) -> DVector<f64> {
    DVector::from_iterator(ncols, row.map(|v| v / scale))
}

/// Accumulated row space, kept as unit-norm rows.
#[derive(Debug, Clone)]
pub struct RowSpan {
    ncols: usize,
    rows: Vec<DVector<f64>>,
}

impl RowSpan {
    pub fn new(ncols: usize) -> Self {
        RowSpan {
            ncols,
            rows: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn push_row(&mut self, row: &[f64]) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.rows
            .push(normalized(row.iter().copied(), norm, self.ncols));
    }

    fn stack_with(&self, extra: &[DVector<f64>]) -> DenseMatrix {
        let total = self.rows.len() + extra.len();
        let mut m = DenseMatrix::zeros(total, self.ncols);
        for (i, r) in self.rows.iter().chain(extra.iter()).enumerate() {
            m.row_mut(i).copy_from(&r.transpose());
        }
        m
    }

    /// Rank of the span extended by `candidates`, each row divided by its
    /// entry in `scales`. This is the rank count used to size a new stage.
    pub fn extended_rank(
        &self,
        candidates: &DenseMatrix,
        scales: &[f64],
        tol: Option<f64>,
    ) -> RankDecision {
        let extra: Vec<_> = (0..candidates.nrows())
            .filter(|&i| scales[i] > 0.0)
            .map(|i| normalized(candidates.row(i).iter().copied(), scales[i], self.ncols))
            .collect();
        numerical_rank(&self.stack_with(&extra), tol)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Selection {
    /// Candidate rows that extend the span, in their original order.
    pub independent: Vec<usize>,
    /// Remaining rows, in their original order.
    pub dependent: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Stable partition of `candidates` into rows that extend `span` (taken
/// greedily in order) and rows that lie in the span of `span` plus the rows
/// already taken. The span is extended in place.
pub fn select_independent_rows(
    span: &mut RowSpan,
    candidates: &DenseMatrix,
    scales: &[f64],
    tol: Option<f64>,
) -> Selection {
    let mut sel = Selection::default();
    for i in 0..candidates.nrows() {
        let row: Vec<f64> = candidates.row(i).iter().copied().collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || scales[i] <= 0.0 {
            sel.dependent.push(i);
            continue;
        }
        let trial = normalized(row.iter().copied(), scales[i], span.ncols);
        let dec = numerical_rank(&span.stack_with(std::slice::from_ref(&trial)), tol);
        if let Some([r, alt]) = dec.ambiguous {
            sel.warnings.push(format!(
                "rank decision for candidate row {i} is close to the tolerance {:e}: candidates {r} and {alt}",
                dec.tol
            ));
        }
        if dec.rank > span.dim() {
            span.push_row(&row);
            sel.independent.push(i);
        } else {
            sel.dependent.push(i);
        }
    }
    sel
}

/// Least-squares coefficients `c` with `c * basis ~= rows`, plus the
/// backward residual of each row,
/// `|row - c basis| / (max(|row|, s) + sum_j |c_j| |basis_j|)`, where `s` is
/// `row_scales[i]` (zero when absent), the magnitude the row was computed from.
pub fn solve_row_coefficients(
    basis: &DenseMatrix,
    rows: &DenseMatrix,
    row_scales: &[f64],
) -> (DenseMatrix, Vec<f64>) {
    let k = basis.nrows();
    let r = rows.nrows();
    if k == 0 {
        let res = (0..r)
            .map(|i| if rows.row(i).amax() == 0.0 { 0.0 } else { 1.0 })
            .collect();
        return (DenseMatrix::zeros(r, 0), res);
    }
    if r == 0 {
        return (DenseMatrix::zeros(0, k), Vec::new());
    }
    // rows of the basis are independent by construction: Householder QR on
    // the row-normalized basis, SVD only if R is singular
    let basis_norms: Vec<f64> = (0..k).map(|j| basis.row(j).norm()).collect();
    let mut normalized = basis.clone();
    for (j, &nj) in basis_norms.iter().enumerate() {
        if nj > 0.0 {
            normalized.row_mut(j).scale_mut(1.0 / nj);
        }
    }
    let bt = normalized.transpose();
    let rhs = rows.transpose();
    let sol = if bt.nrows() >= k {
        let qr = bt.clone().qr();
        qr.r().solve_upper_triangular(&(qr.q().transpose() * &rhs))
    } else {
        None
    };
    let sol = sol.unwrap_or_else(|| {
        bt.svd(true, true)
            .solve(&rhs, f64::MIN_POSITIVE)
            .unwrap_or_else(|_| DenseMatrix::zeros(k, r))
    });
    let mut coeffs = sol.transpose();
    for (j, &nj) in basis_norms.iter().enumerate() {
        let f = if nj > 0.0 { 1.0 / nj } else { 0.0 };
        coeffs.column_mut(j).scale_mut(f);
    }
    let fitted = &coeffs * basis;
    let residuals = (0..r)
        .map(|i| {
            let err = (rows.row(i) - fitted.row(i)).norm();
            let own = rows
                .row(i)
                .norm()
                .max(row_scales.get(i).copied().unwrap_or(0.0));
            let denom = own
                + (0..k)
                    .map(|j| coeffs[(i, j)].abs() * basis_norms[j])
                    .sum::<f64>();
            if denom == 0.0 {
                0.0
            } else {
                err / denom
            }
        })
        .collect();
    (coeffs, residuals)
}

/// Rows of `m` picked by `idx`, in that order.
pub fn select_rows(m: &DenseMatrix, idx: &[usize]) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(idx.len(), m.ncols());
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from(&m.row(i));
    }
    out
}

/// Vertical concatenation.
pub fn vstack(parts: &[&DenseMatrix]) -> DenseMatrix {
    let ncols = parts
        .iter()
        .map(|p| p.ncols())
        .find(|&c| c > 0)
        .unwrap_or(0);
    let nrows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DenseMatrix::zeros(nrows, ncols);
    let mut r0 = 0;
    for p in parts {
        if p.nrows() > 0 {
            out.view_mut((r0, 0), (p.nrows(), ncols)).copy_from(p);
        }
        r0 += p.nrows();
    }
    out
}
