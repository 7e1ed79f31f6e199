//! Plant model: linear dynamics `x' = A x + B u` observed through quadratic
//! outputs `y_h = x^T C_h x / 2 + d_h^T x`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symcalc::{lift, packed_len, vech, DenseMatrix, SymMatrix};

/// Largest accepted `|C - C^T| / 2` entry when loading a document.
pub const DEFAULT_MAX_ASYMMETRY: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LqoSystem {
    a: DenseMatrix,
    b: DenseMatrix,
    c: Vec<SymMatrix>,
    d: Vec<DVector<f64>>,
}

impl LqoSystem {
    pub fn new(
        a: DenseMatrix,
        b: DenseMatrix,
        c: Vec<SymMatrix>,
        d: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Err(Error::InvalidDimension(
                "state dimension must be at least 1".into(),
            ));
        }
        if !a.is_square() {
            return Err(Error::NotSquare {
                context: "A",
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        if b.nrows() != n {
            return Err(Error::dims("B rows", n, b.nrows()));
        }
        if c.is_empty() {
            return Err(Error::InvalidDimension(
                "at least one output is required".into(),
            ));
        }
        if c.len() != d.len() {
            return Err(Error::dims("output count (C vs d)", c.len(), d.len()));
        }
        for (h, ch) in c.iter().enumerate() {
            if ch.dim() != n {
                return Err(Error::dims(
                    "C_h dimension",
                    n,
                    format!("{} (output {h})", ch.dim()),
                ));
            }
        }
        for (h, dh) in d.iter().enumerate() {
            if dh.len() != n {
                return Err(Error::dims(
                    "d_h length",
                    n,
                    format!("{} (output {h})", dh.len()),
                ));
            }
        }
        let finite = a.iter().all(|v| v.is_finite())
            && b.iter().all(|v| v.is_finite())
            && c.iter().all(SymMatrix::is_finite)
            && d.iter().all(|v| v.iter().all(|e| e.is_finite()));
        if !finite {
            return Err(Error::NonFinite {
                context: "system matrices".into(),
            });
        }
        Ok(LqoSystem { a, b, c, d })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    pub fn q(&self) -> usize {
        self.c.len()
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }

    pub fn c(&self) -> &[SymMatrix] {
        &self.c
    }

    pub fn d(&self) -> &[DVector<f64>] {
        &self.d
    }

    /// `A x + B u`.
    pub fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }
}

/// Quadratic outputs evaluated directly as `x^T C_h x / 2 + d_h^T x`.
pub fn output_of(sys: &LqoSystem, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != sys.n() {
        return Err(Error::dims("output_of state", sys.n(), x.len()));
    }
    Ok(DVector::from_iterator(
        sys.q(),
        sys.c.iter().zip(&sys.d).map(|(ch, dh)| {
            let cx = ch.to_dense() * x;
            0.5 * x.dot(&cx) + dh.dot(x)
        }),
    ))
}

/// `y = Cbar x^[2] + D x` with row `h` of `Cbar` equal to `vech(C_h)^T / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedOutput {
    pub cbar: DenseMatrix,
    pub dmat: DenseMatrix,
}

impl StackedOutput {
    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.cbar * lift(x) + &self.dmat * x
    }
}

pub fn stacked_output(sys: &LqoSystem) -> StackedOutput {
    let n = sys.n();
    let q = sys.q();
    let mut cbar = DenseMatrix::zeros(q, packed_len(n));
    let mut dmat = DenseMatrix::zeros(q, n);
    for h in 0..q {
        cbar.row_mut(h)
            .copy_from(&(vech(&sys.c[h]) * 0.5).transpose());
        dmat.row_mut(h).copy_from(&sys.d[h].transpose());
    }
    let out = StackedOutput { cbar, dmat };
    if cfg!(debug_assertions) {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..10 {
            let x = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let direct = output_of(sys, &x).expect("length checked");
            let stacked = out.eval(&x);
            let scale = 1.0_f64.max(direct.amax());
            debug_assert!((direct - stacked).amax() <= 1e-11 * scale);
        }
    }
    out
}

/// On-disk system document. Matrices are row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemDocument {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<Vec<f64>>>,
    pub d: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Largest tolerated asymmetry of a dense `C_h`; `None` accepts any
    /// input and only reports it.
    pub max_asymmetry: Option<f64>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            max_asymmetry: Some(DEFAULT_MAX_ASYMMETRY),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedSystem {
    pub system: LqoSystem,
    /// Per-output largest entry of `|C_h - C_h^T| / 2` before symmetrization.
    pub asymmetry: Vec<f64>,
}

pub(crate) fn matrix_from_rows(
    rows: &[Vec<f64>],
    nrows: usize,
    ncols: usize,
    name: &str,
) -> Result<DenseMatrix> {
    // an n x 0 matrix may be written as [] as well as n empty rows
    if ncols == 0 && rows.is_empty() {
        return Ok(DenseMatrix::zeros(nrows, 0));
    }
    if rows.len() != nrows {
        return Err(Error::DimensionMismatch {
            context: "matrix rows",
            expected: format!("{nrows} rows in {name}"),
            found: rows.len().to_string(),
        });
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::DimensionMismatch {
                context: "matrix columns",
                expected: format!("{ncols} entries in {name} row {i}"),
                found: r.len().to_string(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: name.to_string(),
            });
        }
    }
    Ok(DenseMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

impl SystemDocument {
    pub fn into_system(self, opts: &LoadOptions) -> Result<LoadedSystem> {
        let SystemDocument {
            n,
            p,
            q,
            a,
            b,
            c,
            d,
        } = self;
        if n == 0 || q == 0 {
            return Err(Error::InvalidDimension(format!(
                "need n >= 1 and q >= 1, got n = {n}, q = {q}"
            )));
        }
        let a = matrix_from_rows(&a, n, n, "A")?;
        let b = matrix_from_rows(&b, n, p, "B")?;
        if c.len() != q {
            return Err(Error::dims("number of C matrices", q, c.len()));
        }
        if d.len() != q {
            return Err(Error::dims("number of d vectors", q, d.len()));
        }
        let mut cs = Vec::with_capacity(q);
        let mut asymmetry = Vec::with_capacity(q);
        for (h, ch) in c.iter().enumerate() {
            let dense = matrix_from_rows(ch, n, n, &format!("C[{h}]"))?;
            let (sym, residual) = SymMatrix::from_dense(&dense)?;
            if let Some(limit) = opts.max_asymmetry {
                if residual > limit {
                    return Err(Error::Asymmetric {
                        index: h,
                        residual,
                        limit,
                    });
                }
            }
            cs.push(sym);
            asymmetry.push(residual);
        }
        let mut ds = Vec::with_capacity(q);
        for (h, dh) in d.into_iter().enumerate() {
            if dh.len() != n {
                return Err(Error::dims(
                    "d_h length",
                    n,
                    format!("{} (output {h})", dh.len()),
                ));
            }
            if dh.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("d[{h}]"),
                });
            }
            ds.push(DVector::from_vec(dh));
        }
        Ok(LoadedSystem {
            system: LqoSystem::new(a, b, cs, ds)?,
            asymmetry,
        })
    }

    pub fn from_system(sys: &LqoSystem) -> Self {
        SystemDocument {
            n: sys.n(),
            p: sys.p(),
            q: sys.q(),
            a: matrix_to_rows(&sys.a),
            b: matrix_to_rows(&sys.b),
            c: sys
                .c
                .iter()
                .map(|ch| matrix_to_rows(&ch.to_dense()))
                .collect(),
            d: sys
                .d
                .iter()
                .map(|dh| dh.iter().copied().collect())
                .collect(),
        }
    }
}

pub fn load_system(text: &str) -> Result<LoadedSystem> {
    load_system_with(text, &LoadOptions::default())
}

pub fn load_system_with(text: &str, opts: &LoadOptions) -> Result<LoadedSystem> {
    let doc: SystemDocument = serde_json::from_str(text)?;
    doc.into_system(opts)
}

pub fn save_system(sys: &LqoSystem) -> String {
    serde_json::to_string_pretty(&SystemDocument::from_system(sys)).expect("plain data serializes")
}

/// Systems used throughout the tests and the bundled scenarios.
pub mod examples {
    use super::*;

    fn block_diag_selector(blocks: usize, block: usize, which: usize) -> SymMatrix {
        let n = blocks * block;
        let mut m = DenseMatrix::zeros(n, n);
        m.view_mut((which * block, which * block), (block, block))
            .fill_with_identity();
        SymMatrix::from_dense(&m).expect("square").0
    }

    /// `x'' = u` in `R^n` with state `(x, x')` and output `|x|^2 / 2`.
    pub fn double_integrator(n: usize) -> LqoSystem {
        let mut a = DenseMatrix::zeros(2 * n, 2 * n);
        a.view_mut((0, n), (n, n)).fill_with_identity();
        let mut b = DenseMatrix::zeros(2 * n, n);
        b.view_mut((n, 0), (n, n)).fill_with_identity();
        let c = block_diag_selector(2, n, 0);
        LqoSystem::new(a, b, vec![c], vec![DVector::zeros(2 * n)]).expect("consistent")
    }

    /// `x1' = x2`, `x2' = x1 + 2 x2 + u`, `y = (x1^2 + x2^2) / 2`.
    pub fn two_state() -> LqoSystem {
        let a = DenseMatrix::from_row_slice(2, 2, &[0., 1., 1., 2.]);
        let b = DenseMatrix::from_row_slice(2, 1, &[0., 1.]);
        LqoSystem::new(a, b, vec![SymMatrix::identity(2)], vec![DVector::zeros(2)])
            .expect("consistent")
    }

    /// Vehicle with position `p`, air velocity `v_a` and constant wind `v_w`
    /// in `R^np`: `p' = v_a + v_w`, `v_a' = u`, `v_w' = 0`, with range
    /// `|p|^2 / 2` and airspeed `|v_a|^2 / 2` outputs. State order is
    /// `(p, v_a, v_w)`.
    pub fn range_airspeed(np: usize) -> LqoSystem {
        let n = 3 * np;
        let mut a = DenseMatrix::zeros(n, n);
        a.view_mut((0, np), (np, np)).fill_with_identity();
        a.view_mut((0, 2 * np), (np, np)).fill_with_identity();
        let mut b = DenseMatrix::zeros(n, np);
        b.view_mut((np, 0), (np, np)).fill_with_identity();
        let c = vec![block_diag_selector(3, np, 0), block_diag_selector(3, np, 1)];
        LqoSystem::new(a, b, c, vec![DVector::zeros(n); 2]).expect("consistent")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_STATE: &str =
        r#"{"n":2,"p":1,"q":1,"A":[[0,1],[1,2]],"B":[[0],[1]],"C":[[[1,0],[0,1]]],"d":[[0,0]]}"#;

    #[test]
    fn loads_two_state_document() {
        let loaded = load_system(TWO_STATE).unwrap();
        assert_eq!(loaded.system, examples::two_state());
        assert_eq!(loaded.asymmetry, vec![0.0]);
    }

    #[test]
    fn asymmetric_output_matrix() {
        let doc = r#"{"n":2,"p":0,"q":1,"A":[[0,0],[0,0]],"B":[],"C":[[[0,1],[0,0]]],"d":[[0,0]]}"#;
        match load_system(doc) {
            Err(Error::Asymmetric {
                index: 0, residual, ..
            }) => assert_eq!(residual, 0.5),
            other => panic!("expected asymmetry error, got {other:?}"),
        }
        let loaded = load_system_with(
            doc,
            &LoadOptions {
                max_asymmetry: None,
            },
        )
        .unwrap();
        assert_eq!(loaded.asymmetry, vec![0.5]);
        assert_eq!(
            loaded.system.c()[0].to_dense(),
            DenseMatrix::from_row_slice(2, 2, &[0., 0.5, 0.5, 0.])
        );
        assert_eq!(loaded.system.p(), 0);
    }

    #[test]
    fn rejects_bad_documents() {
        let wrong_a = r#"{"n":2,"p":1,"q":1,"A":[[0,1,3],[1,2,3]],"B":[[0],[1]],"C":[[[1,0],[0,1]]],"d":[[0,0]]}"#;
        assert!(matches!(
            load_system(wrong_a),
            Err(Error::DimensionMismatch { .. })
        ));
        let wrong_q = r#"{"n":2,"p":1,"q":2,"A":[[0,1],[1,2]],"B":[[0],[1]],"C":[[[1,0],[0,1]]],"d":[[0,0]]}"#;
        assert!(matches!(
            load_system(wrong_q),
            Err(Error::DimensionMismatch { .. })
        ));
        let zero_n = r#"{"n":0,"p":0,"q":1,"A":[],"B":[],"C":[[]],"d":[[]]}"#;
        assert!(matches!(
            load_system(zero_n),
            Err(Error::InvalidDimension(_))
        ));
        assert!(matches!(load_system("{"), Err(Error::Json(_))));
        let huge = r#"{"n":1,"p":0,"q":1,"A":[[1e999]],"B":[],"C":[[[1]]],"d":[[0]]}"#;
        assert!(load_system(huge).is_err());
    }

    #[test]
    fn output_examples() {
        let di = examples::double_integrator(2);
        let mut x = DVector::zeros(4);
        x[0] = 1.0;
        assert_eq!(output_of(&di, &x).unwrap()[0], 0.5);
        assert_eq!(output_of(&di, &DVector::zeros(4)).unwrap()[0], 0.0);

        let veh = examples::range_airspeed(3);
        let x = DVector::from_vec(vec![0., 0., 2., 0., 1., 0., 0., 0., 1.]);
        assert_eq!(output_of(&veh, &x).unwrap().as_slice(), &[2.0, 0.5]);
        assert!(output_of(&veh, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn stacked_output_examples() {
        let sys = LqoSystem::new(
            DenseMatrix::zeros(2, 2),
            DenseMatrix::zeros(2, 0),
            vec![SymMatrix::identity(2)],
            vec![DVector::zeros(2)],
        )
        .unwrap();
        let so = stacked_output(&sys);
        assert_eq!(
            so.cbar.row(0).iter().copied().collect::<Vec<_>>(),
            vec![0.5, 0.0, 0.5]
        );
        assert_eq!(so.dmat, DenseMatrix::zeros(1, 2));

        let veh = stacked_output(&examples::range_airspeed(3));
        assert_eq!(veh.cbar.nrows(), 2);
        assert_eq!(crate::linalg::numerical_rank(&veh.cbar, None).rank, 2);

        let c1 = SymMatrix::from_dense(&DenseMatrix::from_row_slice(2, 2, &[1., 2., 2., -1.]))
            .unwrap()
            .0;
        let sys = LqoSystem::new(
            DenseMatrix::zeros(2, 2),
            DenseMatrix::zeros(2, 0),
            vec![c1.clone(), c1.scale(3.0)],
            vec![
                DVector::from_vec(vec![1., 0.]),
                DVector::from_vec(vec![0., 5.]),
            ],
        )
        .unwrap();
        assert_eq!(
            crate::linalg::numerical_rank(&stacked_output(&sys).cbar, None).rank,
            1
        );
    }

    #[test]
    fn save_then_load_is_identity() {
        for sys in [
            examples::two_state(),
            examples::range_airspeed(2),
            examples::double_integrator(1),
        ] {
            let text = save_system(&sys);
            assert_eq!(load_system(&text).unwrap().system, sys);
        }
    }
}
