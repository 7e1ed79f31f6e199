//! Seeded generators of random systems for property checks.

use std::f64::consts::TAU;

use nalgebra::DVector;
use rand::Rng;

use crate::simkit::InputSignal;
use crate::symcalc::{DenseMatrix, SymMatrix};
use crate::sysmodel::LqoSystem;

/// Structural family of a generated system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Uniform real entries, generically full Krylov spans.
    Dense,
    /// Sparse entries in `{-1, 0, 1}`, often rank deficient.
    IntegerSparse,
    /// Strictly upper triangular integer drift.
    Nilpotent,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Dense, Family::IntegerSparse, Family::Nilpotent];
}

#[derive(Debug, Clone)]
pub struct RandomCase {
    pub family: Family,
    pub system: LqoSystem,
    pub input: InputSignal,
    pub x0: DVector<f64>,
}

fn sparse_int<R: Rng>(rng: &mut R) -> f64 {
    match rng.gen_range(0..4) {
        0 => -1.0,
        1 => 1.0,
        _ => 0.0,
    }
}

/// Logarithmic 2-norm of `a`, the largest eigenvalue of its symmetric part.
/// It bounds the real parts of the eigenvalues of `a` from above.
pub fn log_norm(a: &DenseMatrix) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues().max()
}

fn random_sym<R: Rng>(rng: &mut R, n: usize, family: Family) -> SymMatrix {
    let mut m = DenseMatrix::zeros(n, n);
    match family {
        Family::Dense if rng.gen_bool(0.3) => {
            let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            m = &v * v.transpose();
        }
        Family::Dense => {
            for j in 0..n {
                for i in j..n {
                    let x = rng.gen_range(-1.0..1.0);
                    m[(i, j)] = x;
                    m[(j, i)] = x;
                }
            }
        }
        _ => {
            for j in 0..n {
                for i in j..n {
                    let x = sparse_int(rng);
                    m[(i, j)] = x;
                    m[(j, i)] = x;
                }
            }
            if m.iter().all(|&x| x == 0.0) {
                let i = rng.gen_range(0..n);
                m[(i, i)] = 1.0;
            }
        }
    }
    SymMatrix::from_dense(&m).expect("square").0
}

/// Random system with state size `n`, `q` outputs and one or two inputs.
///
/// Dense and integer drifts are shifted by a multiple of the identity to a
/// nonpositive logarithmic norm, so trajectories stay bounded. All drifts are
/// then scaled by a power of two to Frobenius norm at most one.
/// Neither step changes a Lyapunov-invariant subspace.
pub fn random_system<R: Rng>(rng: &mut R, family: Family, n: usize, q: usize) -> LqoSystem {
    let p = rng.gen_range(1..=2);
    let mut a = DenseMatrix::zeros(n, n);
    let b;
    match family {
        Family::Dense => {
            a = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            b = DenseMatrix::from_fn(n, p, |_, _| rng.gen_range(-1.0..1.0));
            let s = log_norm(&a);
            if s > -0.1 {
                a -= DenseMatrix::identity(n, n) * (s + 0.1);
            }
        }
        Family::IntegerSparse => {
            a = DenseMatrix::from_fn(n, n, |_, _| sparse_int(rng));
            b = DenseMatrix::from_fn(n, p, |_, _| sparse_int(rng));
            let s = log_norm(&a);
            if s > 0.0 {
                a -= DenseMatrix::identity(n, n) * (s + 1e-6).ceil();
            }
        }
        Family::Nilpotent => {
            for j in 0..n {
                for i in 0..j {
                    a[(i, j)] = sparse_int(rng);
                }
            }
            b = DenseMatrix::from_fn(n, p, |_, _| sparse_int(rng));
        }
    }
    // power-of-two scaling is exact, so integer structure survives
    let norm = a.norm();
    if norm > 1.0 {
        a /= 2f64.powi(norm.log2().ceil() as i32);
    }
    let c = (0..q).map(|_| random_sym(rng, n, family)).collect();
    let d = (0..q)
        .map(|_| match family {
            Family::Dense => DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
            _ => DVector::from_fn(n, |_, _| sparse_int(rng)),
        })
        .collect();
    LqoSystem::new(a, b, c, d).expect("consistent by construction")
}

/// Sinusoidal input with amplitudes in `[0.2, 1]` and frequencies in
/// `[0.3, 2]` rad/s.
pub fn random_sinusoid<R: Rng>(rng: &mut R, p: usize) -> InputSignal {
    InputSignal::Sinusoid {
        amplitude: (0..p).map(|_| rng.gen_range(0.2..1.0)).collect(),
        omega: (0..p).map(|_| rng.gen_range(0.3..2.0)).collect(),
        phase: (0..p).map(|_| rng.gen_range(0.0..TAU)).collect(),
    }
}

/// System, input and initial state with `n <= max_n` and `q <= max_q`.
pub fn random_case<R: Rng>(rng: &mut R, max_n: usize, max_q: usize) -> RandomCase {
    let family = Family::ALL[rng.gen_range(0..Family::ALL.len())];
    let n = rng.gen_range(1..=max_n);
    let q = rng.gen_range(1..=max_q);
    let system = random_system(rng, family, n, q);
    let input = random_sinusoid(rng, system.p());
    let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    RandomCase {
        family,
        system,
        input,
        x0,
    }
}
