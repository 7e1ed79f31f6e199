//! Immersion of a linear system with quadratic outputs into a bilinear
//! system `z' = A(u) z + B u`, `y = C z` with the fewest auxiliary states.
//!
//! The auxiliary states are quadratic forms of `x`, represented as rows
//! acting on the lifted state `x^[2] = D_n^T (x (x) x)`. Starting from the
//! output forms, each stage differentiates the newest forms along the drift
//! (right multiplication by the lifted drift `Abar`) and keeps only the rows
//! that leave the span accumulated so far. Iteration stops once nothing new
//! appears, i.e. the span is invariant under the Lyapunov operator.
//!
//! Extended state ordering is `z = [P_{m-1} xi_{m-1}; ...; P_0 xi_0; x]`.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    select_independent_rows, select_rows, solve_row_coefficients, vstack, RowSpan,
};
use crate::symcalc::{
    lift, lifted_drift, lifted_input_basis, packed_len, vech, vech_lyap_matrix, DenseMatrix,
    SymMatrix,
};
use crate::sysmodel::{matrix_to_rows, stacked_output, LqoSystem};

#[derive(Debug, Clone, Copy, Default)]
pub struct ImmersionOptions {
    /// Absolute singular-value tolerance for rank decisions on row-normalized
    /// stacks. Defaults to `max(rows, cols) * eps * sigma_max`.
    pub rank_tol: Option<f64>,
}

impl ImmersionOptions {
    fn residual_threshold(&self, rows: usize, cols: usize) -> f64 {
        // stacks are row-normalized, so sigma_max <= sqrt(rows)
        let tol = self
            .rank_tol
            .unwrap_or(rows.max(cols) as f64 * f64::EPSILON * (rows.max(1) as f64).sqrt());
        10.0 * tol
    }
}

/// Row reordering: `(P v)[r] = v[order[r]]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Permutation {
    pub order: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation {
            order: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.order.iter().enumerate().all(|(i, &o)| i == o)
    }

    pub fn matrix(&self) -> DenseMatrix {
        let n = self.order.len();
        let mut m = DenseMatrix::zeros(n, n);
        for (r, &c) in self.order.iter().enumerate() {
            m[(r, c)] = 1.0;
        }
        m
    }

    /// `P m` (rows of `m` reordered).
    pub fn apply_rows(&self, m: &DenseMatrix) -> DenseMatrix {
        select_rows(m, &self.order)
    }

    /// `m P^T` (columns of `m` reordered).
    pub fn apply_cols_transposed(&self, m: &DenseMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(m.nrows(), self.order.len());
        for (r, &c) in self.order.iter().enumerate() {
            out.column_mut(r).copy_from(&m.column(c));
        }
        out
    }
}

/// Single-output construction: iterates `L_A^[k](C)` until the next iterate
/// falls in the span of the previous ones.
#[derive(Debug, Clone)]
pub struct SingleOutputImmersion {
    pub m: usize,
    /// `L_A^[k](C)` for `k = 0..m`.
    pub basis: Vec<SymMatrix>,
    /// `vech(L_A^[m](C)) = sum_k alpha[k] vech(L_A^[k](C))`.
    pub alpha: Vec<f64>,
    pub residual: f64,
    pub warnings: Vec<String>,
}

pub fn single_output_immersion(
    sys: &LqoSystem,
    opts: &ImmersionOptions,
) -> Result<SingleOutputImmersion> {
    if sys.q() != 1 {
        return Err(Error::InvalidDimension(format!(
            "single-output immersion needs q = 1, got q = {}",
            sys.q()
        )));
    }
    let n = sys.n();
    let big = packed_len(n);
    let t = vech_lyap_matrix(sys.a())?;
    let tnorm = t.norm();
    let mut span = RowSpan::new(big);
    let mut iterates: Vec<DVector<f64>> = Vec::new();
    let mut warnings = Vec::new();
    let mut current = vech(&sys.c()[0]);
    let mut scale = current.norm();
    loop {
        let row = DenseMatrix::from_row_slice(1, big, current.as_slice());
        let sel = select_independent_rows(&mut span, &row, &[scale], opts.rank_tol);
        warnings.extend(sel.warnings);
        if sel.independent.is_empty() {
            break;
        }
        let next = &t * &current;
        scale = current.norm() * tnorm;
        iterates.push(std::mem::replace(&mut current, next));
        if iterates.len() > big {
            // the span of symmetric matrices is exhausted
            break;
        }
    }
    let m = iterates.len();
    let basis_rows = DenseMatrix::from_fn(m, big, |i, j| iterates[i][j]);
    let target = DenseMatrix::from_row_slice(1, big, current.as_slice());
    let (alpha, residual) = if m == 0 {
        (Vec::new(), 0.0)
    } else {
        let (c, res) = solve_row_coefficients(&basis_rows, &target, &[scale]);
        (c.row(0).iter().copied().collect(), res[0])
    };
    let threshold = opts.residual_threshold(m + 1, big);
    if residual > threshold {
        warnings.push(format!(
            "alpha residual {residual:e} exceeds {threshold:e}; rank decisions may be inconsistent"
        ));
    }
    let basis = iterates
        .into_iter()
        .map(|v| SymMatrix::from_packed(n, v.as_slice().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok(SingleOutputImmersion {
        m,
        basis,
        alpha,
        residual,
        warnings,
    })
}

/// Rank factorization `Cbar = F L0` by stable selection of independent rows:
/// `L0` holds the first maximal independent subset of the rows of `Cbar` in
/// their original order and `F` expresses every row in terms of them.
pub fn rank_factorize(
    cbar: &DenseMatrix,
    opts: &ImmersionOptions,
) -> Result<(DenseMatrix, DenseMatrix)> {
    rank_factorize_impl(cbar, opts).map(|(f, l0, _)| (f, l0))
}

fn rank_factorize_impl(
    cbar: &DenseMatrix,
    opts: &ImmersionOptions,
) -> Result<(DenseMatrix, DenseMatrix, Vec<String>)> {
    if cbar.nrows() == 0 || cbar.amax() == 0.0 {
        return Err(Error::ZeroQuadraticOutput);
    }
    let scales: Vec<f64> = (0..cbar.nrows()).map(|i| cbar.row(i).norm()).collect();
    let mut span = RowSpan::new(cbar.ncols());
    let sel = select_independent_rows(&mut span, cbar, &scales, opts.rank_tol);
    let l0 = select_rows(cbar, &sel.independent);
    let (coeffs, res) = solve_row_coefficients(&l0, &select_rows(cbar, &sel.dependent), &[]);
    let threshold = opts.residual_threshold(cbar.nrows(), cbar.ncols());
    if let Some(&worst) = res.iter().max_by(|a, b| a.total_cmp(b)) {
        if worst > threshold {
            return Err(Error::DecompositionResidual {
                stage: 0,
                residual: worst,
                threshold,
            });
        }
    }
    let mut f = DenseMatrix::zeros(cbar.nrows(), l0.nrows());
    for (j, &i) in sel.independent.iter().enumerate() {
        f[(i, j)] = 1.0;
    }
    for (r, &i) in sel.dependent.iter().enumerate() {
        f.row_mut(i).copy_from(&coeffs.row(r));
    }
    Ok((f, l0, sel.warnings))
}

/// One split of `L_{k-1} Abar` into new rows and rows already spanned.
#[derive(Debug, Clone)]
pub struct StageDecomposition {
    /// `P_{k-1}`: new rows first, then spanned rows, each group in original order.
    pub perm: Permutation,
    /// `L_k`, the new rows.
    pub next: DenseMatrix,
    /// `M_i^{(k-1)}` for `i = 0..k`, each `(p_{k-1} - p_k) x p_i`.
    pub ms: Vec<DenseMatrix>,
    /// Coefficients of the spanned rows on `L_k`, `(p_{k-1} - p_k) x p_k`.
    /// Zero whenever the spanned rows already lie in the span of the earlier
    /// stages, which is when a pure permutation split exists.
    pub new_coupling: DenseMatrix,
    pub residual: f64,
    pub warnings: Vec<String>,
}

/// Splits `la = L_{k-1} Abar` against the earlier stages.
///
/// `prior` holds `(P_i, L_i)` for `i < k - 1`, `current` is `L_{k-1}` (not
/// yet permuted) and `scales[r]` is the magnitude row `r` of `la` was
/// computed from.
pub fn decompose_stage(
    stage: usize,
    prior: &[(Permutation, DenseMatrix)],
    current: &DenseMatrix,
    la: &DenseMatrix,
    scales: &[f64],
    opts: &ImmersionOptions,
) -> Result<StageDecomposition> {
    let ncols = la.ncols();
    let mut span = RowSpan::new(ncols);
    let permuted_prior: Vec<DenseMatrix> = prior.iter().map(|(p, l)| p.apply_rows(l)).collect();
    for block in permuted_prior.iter().chain(std::iter::once(current)) {
        for r in 0..block.nrows() {
            span.push_row(block.row(r).clone_owned().as_slice());
        }
    }
    let sel = select_independent_rows(&mut span, la, scales, opts.rank_tol);
    let mut order = sel.independent.clone();
    order.extend_from_slice(&sel.dependent);
    let perm = Permutation { order };
    let next = select_rows(la, &sel.independent);
    let dependent = select_rows(la, &sel.dependent);

    let mut parts: Vec<&DenseMatrix> = permuted_prior.iter().collect();
    parts.push(current);
    parts.push(&next);
    let basis = vstack(&parts);
    let dep_scales: Vec<f64> = sel.dependent.iter().map(|&i| scales[i]).collect();
    let (coeffs, res) = solve_row_coefficients(&basis, &dependent, &dep_scales);
    let residual = res.iter().copied().fold(0.0, f64::max);
    let threshold = opts.residual_threshold(basis.nrows() + 1, ncols);
    if residual > threshold {
        return Err(Error::DecompositionResidual {
            stage,
            residual,
            threshold,
        });
    }

    let ndep = sel.dependent.len();
    let mut ms = Vec::with_capacity(prior.len() + 1);
    let mut col = 0;
    for block in &permuted_prior {
        ms.push(coeffs.view((0, col), (ndep, block.nrows())).clone_owned());
        col += block.nrows();
    }
    let on_current = coeffs.view((0, col), (ndep, current.nrows())).clone_owned();
    ms.push(perm.apply_cols_transposed(&on_current));
    col += current.nrows();
    let new_coupling = coeffs.view((0, col), (ndep, next.nrows())).clone_owned();

    Ok(StageDecomposition {
        perm,
        next,
        ms,
        new_coupling,
        residual,
        warnings: sel.warnings,
    })
}

#[derive(Debug, Clone)]
pub struct Stage {
    /// `L_k`, `p_k x n(n+1)/2`.
    pub lbar: DenseMatrix,
    /// `P_k`.
    pub perm: Permutation,
    /// `M_i^{(k)}` for `i = 0..=k`.
    pub ms: Vec<DenseMatrix>,
    /// Coefficients on `L_{k+1}` of the spanned rows of `P_k L_k Abar`.
    pub new_coupling: DenseMatrix,
    pub residual: f64,
}

impl Stage {
    pub fn dim(&self) -> usize {
        self.lbar.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct MultiOutputImmersion {
    pub m: usize,
    /// `q x p_0`; empty when the quadratic part of the output vanishes.
    pub f: DenseMatrix,
    pub stages: Vec<Stage>,
    /// Stage sizes from the rank count `rank[L_0; ..; L_{k-1}; L_{k-1} Abar] - sum p_i`.
    pub rank_counts: Vec<usize>,
    pub warnings: Vec<String>,
}

impl MultiOutputImmersion {
    pub fn dims(&self) -> Vec<usize> {
        self.stages.iter().map(Stage::dim).collect()
    }

    pub fn total_auxiliary(&self) -> usize {
        self.stages.iter().map(Stage::dim).sum()
    }

    /// True when every stage split is a pure permutation.
    pub fn is_permutation_split(&self) -> bool {
        self.stages.iter().all(|s| s.new_coupling.amax() == 0.0)
    }
}

/// Computes the stage matrices `L_k`, `P_k`, `M_i^{(k)}` and the factor `F`.
pub fn staged_immersion(sys: &LqoSystem, opts: &ImmersionOptions) -> Result<MultiOutputImmersion> {
    let n = sys.n();
    let big = packed_len(n);
    let cbar = stacked_output(sys).cbar;
    let (f, l0, mut warnings) = match rank_factorize_impl(&cbar, opts) {
        Ok(v) => v,
        Err(Error::ZeroQuadraticOutput) => {
            return Ok(MultiOutputImmersion {
                m: 0,
                f: DenseMatrix::zeros(sys.q(), 0),
                stages: Vec::new(),
                rank_counts: Vec::new(),
                warnings: vec!["all outputs are linear; the immersion is the system itself".into()],
            })
        }
        Err(e) => return Err(e),
    };
    let abar = lifted_drift(sys.a())?;
    let anorm = abar.norm();

    let mut done: Vec<Stage> = Vec::new();
    let mut prior: Vec<(Permutation, DenseMatrix)> = Vec::new();
    let mut rank_counts = vec![l0.nrows()];
    let mut current = l0;
    let mut total = current.nrows();
    loop {
        let stage = done.len();
        let la = &current * &abar;
        let scales: Vec<f64> = (0..current.nrows())
            .map(|r| current.row(r).norm() * anorm)
            .collect();

        let mut span = RowSpan::new(big);
        for (p, l) in &prior {
            let pl = p.apply_rows(l);
            for r in 0..pl.nrows() {
                span.push_row(pl.row(r).clone_owned().as_slice());
            }
        }
        for r in 0..current.nrows() {
            span.push_row(current.row(r).clone_owned().as_slice());
        }
        let counted = span.extended_rank(&la, &scales, opts.rank_tol);
        let formula = counted.rank.saturating_sub(total);

        let dec = decompose_stage(stage + 1, &prior, &current, &la, &scales, opts)?;
        warnings.extend(dec.warnings);
        if dec.next.nrows() != formula {
            warnings.push(format!(
                "stage {}: rank count gives {formula} new rows, row selection gives {}",
                stage + 1,
                dec.next.nrows()
            ));
        }
        rank_counts.push(formula);
        let finished = dec.next.nrows() == 0;
        total += dec.next.nrows();
        done.push(Stage {
            lbar: current.clone(),
            perm: dec.perm.clone(),
            ms: dec.ms,
            new_coupling: dec.new_coupling,
            residual: dec.residual,
        });
        if finished {
            break;
        }
        if total > big {
            return Err(Error::DecompositionResidual {
                stage: stage + 1,
                residual: f64::INFINITY,
                threshold: 0.0,
            });
        }
        prior.push((dec.perm, current));
        current = dec.next;
    }
    rank_counts.pop();
    Ok(MultiOutputImmersion {
        m: done.len(),
        f,
        stages: done,
        rank_counts,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub enum Immersion {
    Single(SingleOutputImmersion),
    Multi(MultiOutputImmersion),
}

impl Immersion {
    pub fn m(&self) -> usize {
        match self {
            Immersion::Single(s) => s.m,
            Immersion::Multi(s) => s.m,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        match self {
            Immersion::Single(s) => vec![1; s.m],
            Immersion::Multi(s) => s.dims(),
        }
    }

    pub fn total_auxiliary(&self) -> usize {
        self.dims().iter().sum()
    }

    pub fn warnings(&self) -> &[String] {
        match self {
            Immersion::Single(s) => &s.warnings,
            Immersion::Multi(s) => &s.warnings,
        }
    }
}

/// Single-output construction for `q = 1`, the staged algorithm otherwise.
pub fn immerse(sys: &LqoSystem, opts: &ImmersionOptions) -> Result<Immersion> {
    if sys.q() == 1 {
        single_output_immersion(sys, opts).map(Immersion::Single)
    } else {
        staged_immersion(sys, opts).map(Immersion::Multi)
    }
}

/// Extended system `z' = A(u) z + B u`, `y = C z`.
///
/// `A(u)` is stored as its constant part (auxiliary block plus `A` in the
/// lower-right corner) and one auxiliary-by-state coupling matrix per input
/// channel, so that the upper-right block is `sum_j u_j coupling[j]`.
#[derive(Debug, Clone)]
pub struct LtvSystem {
    n: usize,
    block_dims: Vec<usize>,
    a_const: DenseMatrix,
    coupling: Vec<DenseMatrix>,
    b: DenseMatrix,
    c: DenseMatrix,
    embed_rows: DenseMatrix,
}

impl LtvSystem {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_aux(&self) -> usize {
        self.embed_rows.nrows()
    }

    pub fn dim_z(&self) -> usize {
        self.n + self.n_aux()
    }

    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    pub fn q(&self) -> usize {
        self.c.nrows()
    }

    /// Auxiliary block sizes in `z` order (last stage first).
    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    /// `A(0)`.
    pub fn a_const(&self) -> &DenseMatrix {
        &self.a_const
    }

    pub fn coupling_basis(&self) -> &[DenseMatrix] {
        &self.coupling
    }

    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }

    pub fn c(&self) -> &DenseMatrix {
        &self.c
    }

    /// Rows mapping `x^[2]` to the auxiliary part of `z`.
    pub fn embed_rows(&self) -> &DenseMatrix {
        &self.embed_rows
    }

    /// Upper-right `n_aux x n` block of `A(u)`.
    pub fn coupling(&self, u: &DVector<f64>) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_aux(), self.n);
        for (j, g) in self.coupling.iter().enumerate() {
            if u[j] != 0.0 {
                out += g * u[j];
            }
        }
        out
    }

    pub fn a_matrix(&self, u: &DVector<f64>) -> DenseMatrix {
        let mut out = self.a_const.clone();
        self.a_matrix_into(u, &mut out);
        out
    }

    /// Writes `A(u)` into `out`, which must be `dim_z x dim_z`.
    pub fn a_matrix_into(&self, u: &DVector<f64>, out: &mut DenseMatrix) {
        out.copy_from(&self.a_const);
        let aux = self.n_aux();
        if aux > 0 {
            let mut block = out.view_mut((0, aux), (aux, self.n));
            for (j, g) in self.coupling.iter().enumerate() {
                if u[j] != 0.0 {
                    block += g * u[j];
                }
            }
        }
    }

    /// `A(u) z + B u`.
    pub fn derivative(&self, z: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut dz = &self.a_const * z + &self.b * u;
        let aux = self.n_aux();
        if aux > 0 {
            let x = z.rows(aux, self.n);
            let mut top = dz.rows_mut(0, aux);
            for (j, g) in self.coupling.iter().enumerate() {
                if u[j] != 0.0 {
                    top += (g * x) * u[j];
                }
            }
        }
        dz
    }

    pub fn output(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.c * z
    }

    /// `z = [S x^[2]; x]`.
    pub fn embed(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n {
            return Err(Error::dims("embed state", self.n, x.len()));
        }
        let aux = self.n_aux();
        let mut z = DVector::zeros(self.dim_z());
        if aux > 0 {
            z.rows_mut(0, aux).copy_from(&(&self.embed_rows * lift(x)));
        }
        z.rows_mut(aux, self.n).copy_from(x);
        Ok(z)
    }

    /// Trailing `n` entries of `z`.
    pub fn recover_x(&self, z: &DVector<f64>) -> DVector<f64> {
        z.rows(self.n_aux(), self.n).clone_owned()
    }
}

fn check_built_from(sys: &LqoSystem, imm: &Immersion) -> Result<()> {
    let big = packed_len(sys.n());
    let ok = match imm {
        Immersion::Single(s) => sys.q() == 1 && s.basis.iter().all(|b| b.dim() == sys.n()),
        Immersion::Multi(s) => {
            s.f.nrows() == sys.q() && s.stages.iter().all(|st| st.lbar.ncols() == big)
        }
    };
    if ok {
        Ok(())
    } else {
        Err(Error::dims(
            "build_ltv",
            "immersion computed from this system",
            "mismatched immersion",
        ))
    }
}

pub fn build_ltv(sys: &LqoSystem, imm: &Immersion) -> Result<LtvSystem> {
    check_built_from(sys, imm)?;
    match imm {
        Immersion::Single(s) => build_single(sys, s),
        Immersion::Multi(s) => build_multi(sys, s),
    }
}

fn assemble_common(sys: &LqoSystem, aux: usize) -> (DenseMatrix, DenseMatrix) {
    let n = sys.n();
    let dim = aux + n;
    let mut a_const = DenseMatrix::zeros(dim, dim);
    a_const.view_mut((aux, aux), (n, n)).copy_from(sys.a());
    let mut b = DenseMatrix::zeros(dim, sys.p());
    b.view_mut((aux, 0), (n, sys.p())).copy_from(sys.b());
    (a_const, b)
}

fn build_single(sys: &LqoSystem, imm: &SingleOutputImmersion) -> Result<LtvSystem> {
    let n = sys.n();
    let m = imm.m;
    let (mut a_const, b) = assemble_common(sys, m);
    for (col, k) in (0..m).rev().enumerate() {
        a_const[(0, col)] = imm.alpha[k];
    }
    for r in 1..m {
        a_const[(r, r - 1)] = 1.0;
    }
    // row r carries xi_{m-1-r}; its coupling is (B e_j)^T L^[m-1-r](C)
    let dense: Vec<DenseMatrix> = imm.basis.iter().map(SymMatrix::to_dense).collect();
    let coupling = (0..sys.p())
        .map(|j| {
            let bj = sys.b().column(j).clone_owned();
            let mut g = DenseMatrix::zeros(m, n);
            for r in 0..m {
                let k = m - 1 - r;
                g.row_mut(r).copy_from(&(&dense[k] * &bj).transpose());
            }
            g
        })
        .collect();
    let big = packed_len(n);
    let mut embed_rows = DenseMatrix::zeros(m, big);
    for r in 0..m {
        embed_rows
            .row_mut(r)
            .copy_from(&(vech(&imm.basis[m - 1 - r]) * 0.5).transpose());
    }
    let mut c = DenseMatrix::zeros(1, m + n);
    if m > 0 {
        c[(0, m - 1)] = 1.0;
    }
    c.view_mut((0, m), (1, n))
        .copy_from(&sys.d()[0].transpose());
    Ok(LtvSystem {
        n,
        block_dims: vec![1; m],
        a_const,
        coupling,
        b,
        c,
        embed_rows,
    })
}

fn build_multi(sys: &LqoSystem, imm: &MultiOutputImmersion) -> Result<LtvSystem> {
    let n = sys.n();
    let m = imm.m;
    let dims = imm.dims();
    let aux: usize = dims.iter().sum();
    // offset of stage k's block inside z
    let offsets: Vec<usize> = (0..m).map(|k| dims[k + 1..].iter().sum()).collect();
    let (mut a_const, b) = assemble_common(sys, aux);
    for k in 0..m {
        let st = &imm.stages[k];
        let pk = dims[k];
        let pnext = if k + 1 < m { dims[k + 1] } else { 0 };
        let row0 = offsets[k];
        if pnext > 0 {
            let next_perm = &imm.stages[k + 1].perm;
            let pt = next_perm.matrix().transpose();
            a_const
                .view_mut((row0, offsets[k + 1]), (pnext, pnext))
                .copy_from(&pt);
            if pk > pnext {
                a_const
                    .view_mut((row0 + pnext, offsets[k + 1]), (pk - pnext, pnext))
                    .copy_from(&(&st.new_coupling * &pt));
            }
        }
        if pk > pnext {
            for (i, mi) in st.ms.iter().enumerate() {
                a_const
                    .view_mut((row0 + pnext, offsets[i]), (pk - pnext, dims[i]))
                    .copy_from(mi);
            }
        }
    }
    let big = packed_len(n);
    let mut embed_rows = DenseMatrix::zeros(aux, big);
    for k in 0..m {
        let st = &imm.stages[k];
        embed_rows
            .view_mut((offsets[k], 0), (dims[k], big))
            .copy_from(&st.perm.apply_rows(&st.lbar));
    }
    let coupling = lifted_input_basis(sys.b())?
        .iter()
        .map(|ubar| &embed_rows * ubar)
        .collect();
    let mut c = DenseMatrix::zeros(sys.q(), aux + n);
    if m > 0 {
        let fpt = imm.stages[0].perm.apply_cols_transposed(&imm.f);
        c.view_mut((0, offsets[0]), (sys.q(), dims[0]))
            .copy_from(&fpt);
    }
    c.view_mut((0, aux), (sys.q(), n))
        .copy_from(&stacked_output(sys).dmat);
    Ok(LtvSystem {
        n,
        block_dims: (0..m).rev().map(|k| dims[k]).collect(),
        a_const,
        coupling,
        b,
        c,
        embed_rows,
    })
}

/// `z = [P_{m-1} L_{m-1} x^[2]; ...; P_0 L_0 x^[2]; x]`.
pub fn embed(sys: &LqoSystem, imm: &Immersion, x: &DVector<f64>) -> Result<DVector<f64>> {
    build_ltv(sys, imm)?.embed(x)
}

/// Largest violation of the closure identity `A_aux S + G = S Abar` where
/// `S` are the embedding rows and `A_aux` the auxiliary-to-auxiliary block,
/// relative to `|S| |Abar|`.
pub fn closure_residual(sys: &LqoSystem, ltv: &LtvSystem) -> Result<f64> {
    let aux = ltv.n_aux();
    if aux == 0 {
        return Ok(0.0);
    }
    let abar = lifted_drift(sys.a())?;
    let s = ltv.embed_rows();
    let lhs = ltv.a_const().view((0, 0), (aux, aux)) * s;
    let rhs = s * &abar;
    let scale = (s.norm() * abar.norm()).max(f64::MIN_POSITIVE);
    Ok((lhs - rhs).amax() / scale)
}

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub k: usize,
    pub dim: usize,
    #[serde(rename = "Lbar")]
    pub lbar: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    pub perm: Vec<Vec<f64>>,
    #[serde(rename = "M")]
    pub ms: Vec<Vec<Vec<f64>>>,
    pub new_coupling: Vec<Vec<f64>>,
    pub residual: f64,
}

/// Machine-readable summary written by the `immerse` command.
#[derive(Debug, Clone, Serialize)]
pub struct ImmersionReport {
    pub method: &'static str,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub m: usize,
    pub dims: Vec<usize>,
    pub total_auxiliary: usize,
    pub dim_z: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(rename = "F", skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<Vec<f64>>>,
    pub stages: Vec<StageReport>,
    #[serde(rename = "A_const")]
    pub a_const: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    pub closure_residual: f64,
    pub decomposition_residual: f64,
    pub permutation_split: bool,
    pub warnings: Vec<String>,
}

pub fn report(sys: &LqoSystem, imm: &Immersion, ltv: &LtvSystem) -> Result<ImmersionReport> {
    let closure = closure_residual(sys, ltv)?;
    let (method, alpha, f, stages, decomposition_residual, permutation_split) = match imm {
        Immersion::Single(s) => {
            let stages = s
                .basis
                .iter()
                .enumerate()
                .map(|(k, b)| StageReport {
                    k,
                    dim: 1,
                    lbar: vec![(vech(b) * 0.5).iter().copied().collect()],
                    perm: vec![vec![1.0]],
                    ms: Vec::new(),
                    new_coupling: Vec::new(),
                    residual: 0.0,
                })
                .collect();
            (
                "single-output",
                Some(s.alpha.clone()),
                None,
                stages,
                s.residual,
                true,
            )
        }
        Immersion::Multi(s) => {
            let stages = s
                .stages
                .iter()
                .enumerate()
                .map(|(k, st)| StageReport {
                    k,
                    dim: st.dim(),
                    lbar: matrix_to_rows(&st.lbar),
                    perm: matrix_to_rows(&st.perm.matrix()),
                    ms: st.ms.iter().map(matrix_to_rows).collect(),
                    new_coupling: matrix_to_rows(&st.new_coupling),
                    residual: st.residual,
                })
                .collect();
            let res = s.stages.iter().map(|st| st.residual).fold(0.0, f64::max);
            (
                "staged",
                None,
                Some(matrix_to_rows(&s.f)),
                stages,
                res,
                s.is_permutation_split(),
            )
        }
    };
    Ok(ImmersionReport {
        method,
        n: sys.n(),
        p: sys.p(),
        q: sys.q(),
        m: imm.m(),
        dims: imm.dims(),
        total_auxiliary: imm.total_auxiliary(),
        dim_z: ltv.dim_z(),
        alpha,
        f,
        stages,
        a_const: matrix_to_rows(ltv.a_const()),
        b: matrix_to_rows(ltv.b()),
        c: matrix_to_rows(ltv.c()),
        closure_residual: closure,
        decomposition_residual,
        permutation_split,
        warnings: imm.warnings().to_vec(),
    })
}
