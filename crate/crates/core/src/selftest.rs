//! Seeded self-checks of the core identities and of immersion exactness,
//! run by `lqo selftest`.

use std::io::Write;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::immersion::{build_ltv, immerse, ImmersionOptions};
use crate::linalg::numerical_rank;
use crate::randsys::random_case;
use crate::simkit::{simulate_extended, simulate_truth};
use crate::symcalc::{
    duplication, lift, lifted_drift, lifted_input, lyap_op, packed_len, vec, vech,
    vech_lyap_matrix, DenseMatrix, SymMatrix,
};
use crate::sysmodel::LqoSystem;

/// Dimension of the span of `L_A^k(C_h)` over all outputs and `k`, computed
/// directly from normalized iterates.
pub fn krylov_span_dim(sys: &LqoSystem) -> usize {
    let n = sys.n();
    let len = packed_len(n);
    let mut rows: Vec<DVector<f64>> = Vec::new();
    for c in sys.c() {
        let mut x = c.clone();
        for _ in 0..=len {
            let v = vech(&x);
            let norm = v.norm();
            if norm == 0.0 {
                break;
            }
            rows.push(v / norm);
            x = lyap_op(
                sys.a(),
                &SymMatrix::from_packed(n, x.packed().iter().map(|e| e / norm).collect())
                    .expect("sized"),
            )
            .expect("square drift");
        }
    }
    if rows.is_empty() {
        return 0;
    }
    let m = DenseMatrix::from_fn(rows.len(), len, |i, j| rows[i][j]);
    numerical_rank(&m, None).rank
}

fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
    SymMatrix::from_packed(
        n,
        (0..packed_len(n))
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
    )
    .expect("sized")
}

struct Tally<'a, W: Write> {
    out: &'a mut W,
    ok: bool,
}

impl<W: Write> Tally<'_, W> {
    fn check(&mut self, name: &str, worst: f64, limit: f64) -> Result<()> {
        let pass = worst <= limit;
        self.ok &= pass;
        writeln!(
            self.out,
            "{} {name}: worst {worst:.3e} (limit {limit:.0e})",
            if pass { "ok  " } else { "FAIL" }
        )
        .map_err(|source| crate::Error::Io {
            path: "<stdout>".into(),
            source,
        })
    }
}

/// Runs every check with the given seed, writing one line per check.
/// Returns whether all checks passed.
pub fn run<W: Write>(seed: u64, out: &mut W) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    writeln!(out, "selftest seed {seed}").ok();
    let mut tally = Tally { out, ok: true };

    let (mut dup_err, mut lyap_err, mut lift_err) = (0.0f64, 0.0f64, 0.0f64);
    for n in 1..=5 {
        let dup = duplication(n)?;
        for _ in 0..20 {
            let x = random_sym(&mut rng, n);
            let a = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            dup_err = dup_err
                .max((&dup.d * vech(&x) - vec(&x.to_dense())).amax())
                .max((&dup.dplus * vec(&x.to_dense()) - vech(&x)).amax());
            lyap_err =
                lyap_err.max((vech(&lyap_op(&a, &x)?) - vech_lyap_matrix(&a)? * vech(&x)).amax());

            // derivative of the lifted state along x' = A x + B u
            let b = DenseMatrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
            let xs = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let u = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let xdot = &a * &xs + &b * &u;
            let exact = DVector::from_fn(packed_len(n), |k, _| {
                let mut acc = 0.0;
                for j in 0..n {
                    for i in j..n {
                        if crate::symcalc::packed_index(n, i, j) == k {
                            let f = if i == j { 1.0 } else { 2.0 };
                            acc = f * (xdot[i] * xs[j] + xs[i] * xdot[j]);
                        }
                    }
                }
                acc
            });
            let lifted = lifted_drift(&a)? * lift(&xs) + lifted_input(&b, &u)? * &xs;
            lift_err = lift_err.max((lifted - exact).amax());
        }
    }
    tally.check("duplication identities", dup_err, 1e-12)?;
    tally.check("half-vectorized Lyapunov operator", lyap_err, 1e-11)?;
    tally.check("lifted monomial dynamics", lift_err, 1e-11)?;

    let opts = ImmersionOptions::default();
    let (mut track, mut out_err, mut excess, mut rank_mismatch) = (0.0f64, 0.0f64, 0usize, 0usize);
    let cases = 24;
    for _ in 0..cases {
        let case = random_case(&mut rng, 4, 3);
        let sys = &case.system;
        let imm = immerse(sys, &opts)?;
        let total = imm.total_auxiliary();
        if total > packed_len(sys.n()) {
            excess += 1;
        }
        if total != krylov_span_dim(sys) {
            rank_mismatch += 1;
        }
        let ltv = build_ltv(sys, &imm)?;
        let (h, steps) = (1e-3, 1000);
        let truth = simulate_truth(sys, &case.input, &case.x0, h * steps as f64, h)?;
        let zs = simulate_extended(&ltv, &case.input, &ltv.embed(&case.x0)?, h, steps);
        for (k, z) in zs.iter().enumerate() {
            track = track.max((z - ltv.embed(&truth.x[k])?).amax());
            out_err = out_err.max((ltv.output(z) - &truth.y[k]).amax());
        }
    }
    tally.check("extended state tracks embedded truth", track, 1e-6)?;
    tally.check("extended output matches plant output", out_err, 1e-8)?;
    tally.check("auxiliary size exceeds n(n+1)/2", excess as f64, 0.0)?;
    tally.check(
        "auxiliary size differs from span dimension",
        rank_mismatch as f64,
        0.0,
    )?;
    Ok(tally.ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::examples;

    #[test]
    fn span_dims_of_examples() {
        assert_eq!(krylov_span_dim(&examples::two_state()), 2);
        assert_eq!(krylov_span_dim(&examples::double_integrator(2)), 3);
        assert_eq!(krylov_span_dim(&examples::range_airspeed(3)), 4);
    }

    #[test]
    fn selftest_passes() {
        let mut buf = Vec::new();
        let ok = run(11, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(ok, "{text}");
        assert!(text.starts_with("selftest seed 11"));
    }
}
