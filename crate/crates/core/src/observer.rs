//! Kalman-type observer for the extended system:
//!
//! ```text
//! zhat' = A(u) zhat + B u + P C^T Q (y - C zhat)
//! P'    = A(u) P + P A(u)^T - P C^T Q C P + V
//! ```
//!
//! `P` is carried in packed symmetric form, so it stays exactly symmetric
//! through the integration.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::immersion::LtvSystem;
use crate::ode::rk4_step;
use crate::symcalc::{pack_lower, packed_len, DenseMatrix, SymMatrix};
use crate::sysmodel::matrix_from_rows;

/// Relative slack below zero tolerated on the smallest eigenvalue of `P`.
pub const PD_SLACK: f64 = 1e-9;

/// Constant weight or a piecewise-linear table in time, held constant
/// outside its range.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSchedule {
    Constant(SymMatrix),
    Table(Vec<(f64, SymMatrix)>),
}

impl WeightSchedule {
    pub fn dim(&self) -> usize {
        match self {
            WeightSchedule::Constant(m) => m.dim(),
            WeightSchedule::Table(k) => k.first().map(|(_, m)| m.dim()).unwrap_or(0),
        }
    }

    pub fn at(&self, t: f64) -> SymMatrix {
        match self {
            WeightSchedule::Constant(m) => m.clone(),
            WeightSchedule::Table(knots) => {
                let idx = knots.partition_point(|(tk, _)| *tk <= t);
                if idx == 0 {
                    return knots[0].1.clone();
                }
                if idx == knots.len() {
                    return knots[idx - 1].1.clone();
                }
                let (t0, m0) = &knots[idx - 1];
                let (t1, m1) = &knots[idx];
                let w = (t - t0) / (t1 - t0);
                let packed = m0
                    .packed()
                    .iter()
                    .zip(m1.packed())
                    .map(|(a, b)| (1.0 - w) * a + w * b)
                    .collect();
                SymMatrix::from_packed(m0.dim(), packed).expect("knots share a dimension")
            }
        }
    }

    /// Every knot positive definite, table times strictly increasing.
    /// Convex combinations of positive definite knots stay positive definite,
    /// so this bounds the whole schedule away from singularity.
    fn validate(&self, name: &'static str, dim: usize) -> Result<()> {
        let knots: Vec<&SymMatrix> = match self {
            WeightSchedule::Constant(m) => vec![m],
            WeightSchedule::Table(k) => {
                if k.is_empty() {
                    return Err(Error::Config(format!("{name}: empty schedule")));
                }
                if k.windows(2).any(|w| !(w[0].0 < w[1].0)) || k.iter().any(|(t, _)| !t.is_finite())
                {
                    return Err(Error::Config(format!(
                        "{name}: schedule times must increase strictly"
                    )));
                }
                k.iter().map(|(_, m)| m).collect()
            }
        };
        for m in knots {
            if m.dim() != dim {
                return Err(Error::dims("weight dimension", dim, m.dim()));
            }
            require_pd(name, m)?;
        }
        Ok(())
    }
}

fn require_pd(name: &'static str, m: &SymMatrix) -> Result<()> {
    if !m.is_finite() {
        return Err(Error::NonFinite {
            context: name.into(),
        });
    }
    let e = m.min_eigenvalue();
    if e.is_finite() && e > 0.0 {
        Ok(())
    } else {
        Err(Error::NotPositiveDefinite(name, e))
    }
}

#[derive(Debug, Clone)]
pub struct ObserverConfig {
    pub p0: SymMatrix,
    pub q: WeightSchedule,
    pub v: WeightSchedule,
    pub z0: DVector<f64>,
}

impl ObserverConfig {
    /// Identity weights and initial covariance.
    pub fn identity(ltv: &LtvSystem, z0: DVector<f64>) -> Self {
        ObserverConfig {
            p0: SymMatrix::identity(ltv.dim_z()),
            q: WeightSchedule::Constant(SymMatrix::identity(ltv.q())),
            v: WeightSchedule::Constant(SymMatrix::identity(ltv.dim_z())),
            z0,
        }
    }

    pub fn validate(&self, ltv: &LtvSystem) -> Result<()> {
        let dz = ltv.dim_z();
        if self.p0.dim() != dz {
            return Err(Error::dims("P0 dimension", dz, self.p0.dim()));
        }
        if self.z0.len() != dz {
            return Err(Error::dims("initial estimate length", dz, self.z0.len()));
        }
        if self.z0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "initial estimate".into(),
            });
        }
        require_pd("P0", &self.p0)?;
        self.q.validate("Q", ltv.q())?;
        self.v.validate("V", dz)
    }
}

#[derive(Debug, Clone)]
pub struct ObserverState {
    pub t: f64,
    pub zhat: DVector<f64>,
    pub p: SymMatrix,
}

/// Right-hand sides of the estimate and Riccati equations.
pub fn observer_derivative(
    ltv: &LtvSystem,
    state: &ObserverState,
    u: &DVector<f64>,
    y: &DVector<f64>,
    q: &SymMatrix,
    v: &SymMatrix,
) -> Result<(DVector<f64>, SymMatrix)> {
    let dz = ltv.dim_z();
    if state.zhat.len() != dz || state.p.dim() != dz || v.dim() != dz {
        return Err(Error::dims("observer state", dz, state.zhat.len()));
    }
    if u.len() != ltv.p() {
        return Err(Error::dims("observer input", ltv.p(), u.len()));
    }
    if y.len() != ltv.q() || q.dim() != ltv.q() {
        return Err(Error::dims("observer output", ltv.q(), y.len()));
    }
    Ok(derivative_unchecked(
        ltv,
        &state.zhat,
        &state.p.to_dense(),
        u,
        y,
        &q.to_dense(),
        v,
    ))
}

fn derivative_unchecked(
    ltv: &LtvSystem,
    zhat: &DVector<f64>,
    p: &DenseMatrix,
    u: &DVector<f64>,
    y: &DVector<f64>,
    q: &DenseMatrix,
    v: &SymMatrix,
) -> (DVector<f64>, SymMatrix) {
    let a = ltv.a_matrix(u);
    let c = ltv.c();
    let gain = p * c.transpose();
    let innovation = y - c * zhat;
    let dz = &a * zhat + ltv.b() * u + &gain * (q * innovation);
    let ap = &a * p;
    let dp_dense = &ap + ap.transpose() - &gain * q * gain.transpose();
    let mut dp = pack_lower(&dp_dense);
    for (d, vv) in dp.packed_mut().iter_mut().zip(v.packed()) {
        *d += vv;
    }
    (dz, dp)
}

/// Input and output samples as a function of time.
pub trait Measurements {
    fn at(&self, t: f64) -> (DVector<f64>, DVector<f64>);
}

impl<F> Measurements for F
where
    F: Fn(f64) -> (DVector<f64>, DVector<f64>),
{
    fn at(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        self(t)
    }
}

/// Samples on a uniform grid `t0 + i dt`, linearly interpolated in between
/// and held at the ends.
#[derive(Debug, Clone)]
pub struct SampledSignals {
    pub t0: f64,
    pub dt: f64,
    pub u: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
}

impl Measurements for SampledSignals {
    fn at(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let last = self.u.len() - 1;
        let s = ((t - self.t0) / self.dt).max(0.0);
        let i = (s.floor() as usize).min(last);
        let w = s - i as f64;
        // snap to a sample when within rounding of it
        if i == last || w < 1e-9 {
            return (self.u[i].clone(), self.y[i].clone());
        }
        if w > 1.0 - 1e-9 {
            return (self.u[i + 1].clone(), self.y[i + 1].clone());
        }
        (
            &self.u[i] * (1.0 - w) + &self.u[i + 1] * w,
            &self.y[i] * (1.0 - w) + &self.y[i + 1] * w,
        )
    }
}

#[derive(Debug, Clone)]
pub struct ObserverRun {
    pub t: Vec<f64>,
    pub zhat: Vec<DVector<f64>>,
    /// Trailing `n` entries of each estimate.
    pub xhat: Vec<DVector<f64>>,
    pub final_state: ObserverState,
    /// Smallest eigenvalue of `P` seen over the run.
    pub min_p_eigenvalue: f64,
}

fn unpack_state(v: &DVector<f64>, dz: usize) -> (DVector<f64>, SymMatrix) {
    let zhat = v.rows(0, dz).clone_owned();
    let p = SymMatrix::from_packed(dz, v.rows(dz, packed_len(dz)).iter().copied().collect())
        .expect("sized by construction");
    (zhat, p)
}

/// Integrates the observer over `steps` steps of size `h` from `t0`.
pub fn run_observer(
    ltv: &LtvSystem,
    cfg: &ObserverConfig,
    signals: &dyn Measurements,
    t0: f64,
    h: f64,
    steps: usize,
) -> Result<ObserverRun> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("step must be positive, got {h}")));
    }
    cfg.validate(ltv)?;
    let dz = ltv.dim_z();
    let np = packed_len(dz);
    let mut state = DVector::zeros(dz + np);
    state.rows_mut(0, dz).copy_from(&cfg.z0);
    state.rows_mut(dz, np).copy_from_slice(cfg.p0.packed());

    let mut rhs = |t: f64, s: &DVector<f64>| -> DVector<f64> {
        let (u, y) = signals.at(t);
        let (zhat, p) = unpack_state(s, dz);
        let q = cfg.q.at(t).to_dense();
        let v = cfg.v.at(t);
        let (dzh, dp) = derivative_unchecked(ltv, &zhat, &p.to_dense(), &u, &y, &q, &v);
        let mut out = DVector::zeros(dz + np);
        out.rows_mut(0, dz).copy_from(&dzh);
        out.rows_mut(dz, np).copy_from_slice(dp.packed());
        out
    };

    let mut run = ObserverRun {
        t: Vec::with_capacity(steps + 1),
        zhat: Vec::with_capacity(steps + 1),
        xhat: Vec::with_capacity(steps + 1),
        final_state: ObserverState {
            t: t0,
            zhat: cfg.z0.clone(),
            p: cfg.p0.clone(),
        },
        min_p_eigenvalue: cfg.p0.min_eigenvalue(),
    };
    run.t.push(t0);
    run.zhat.push(cfg.z0.clone());
    run.xhat.push(ltv.recover_x(&cfg.z0));
    for i in 0..steps {
        let t = t0 + i as f64 * h;
        let t_next = t0 + (i + 1) as f64 * h;
        state = rk4_step(&mut rhs, t, &state, h);
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                t: t_next,
                context: "observer",
            });
        }
        let (zhat, p) = unpack_state(&state, dz);
        let min_eig = p.min_eigenvalue();
        let pnorm = p.to_dense().norm();
        if min_eig < -PD_SLACK * pnorm {
            return Err(Error::RiccatiIndefinite { t: t_next, min_eig });
        }
        run.min_p_eigenvalue = run.min_p_eigenvalue.min(min_eig);
        run.t.push(t_next);
        run.xhat.push(ltv.recover_x(&zhat));
        run.zhat.push(zhat.clone());
        run.final_state = ObserverState { t: t_next, zhat, p };
    }
    Ok(run)
}

/// Finite-window observability Gramian
/// `W = int_{t0}^{t0+T} Phi(s, t0)^T C^T C Phi(s, t0) ds` of the extended
/// system along the input `u`. Diagnostic only.
pub fn observability_gramian(
    ltv: &LtvSystem,
    u: &dyn Fn(f64) -> DVector<f64>,
    t0: f64,
    h: f64,
    steps: usize,
) -> DenseMatrix {
    let dz = ltv.dim_z();
    let np = packed_len(dz);
    let ctc = ltv.c().transpose() * ltv.c();
    let mut s = DVector::zeros(dz * dz + np);
    for i in 0..dz {
        s[i * dz + i] = 1.0;
    }
    let mut rhs = |t: f64, s: &DVector<f64>| -> DVector<f64> {
        let phi = DenseMatrix::from_column_slice(dz, dz, s.rows(0, dz * dz).as_slice());
        let a = ltv.a_matrix(&u(t));
        let dphi = &a * &phi;
        let dw = pack_lower(&(phi.transpose() * &ctc * &phi));
        let mut out = DVector::zeros(dz * dz + np);
        out.rows_mut(0, dz * dz).copy_from_slice(dphi.as_slice());
        out.rows_mut(dz * dz, np).copy_from_slice(dw.packed());
        out
    };
    for i in 0..steps {
        s = rk4_step(&mut rhs, t0 + i as f64 * h, &s, h);
    }
    SymMatrix::from_packed(dz, s.rows(dz * dz, np).iter().copied().collect())
        .expect("sized by construction")
        .to_dense()
}

/// Weight as written in a configuration document.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum MatrixSpec {
    Identity { identity: f64 },
    Dense(Vec<Vec<f64>>),
}

impl MatrixSpec {
    fn resolve(&self, dim: usize, name: &str) -> Result<SymMatrix> {
        match self {
            MatrixSpec::Identity { identity } => {
                if !identity.is_finite() {
                    return Err(Error::NonFinite {
                        context: name.into(),
                    });
                }
                Ok(SymMatrix::scaled_identity(dim, *identity))
            }
            MatrixSpec::Dense(rows) => {
                let m = matrix_from_rows(rows, dim, dim, name)?;
                let (sym, residual) = SymMatrix::from_dense(&m)?;
                if residual > crate::sysmodel::DEFAULT_MAX_ASYMMETRY * m.amax().max(1.0) {
                    return Err(Error::Config(format!(
                        "{name} is not symmetric (residual {residual:e})"
                    )));
                }
                Ok(sym)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Knot {
    pub t: f64,
    pub value: MatrixSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ScheduleSpec {
    Table { table: Vec<Knot> },
    Constant(MatrixSpec),
}

impl ScheduleSpec {
    fn resolve(&self, dim: usize, name: &'static str) -> Result<WeightSchedule> {
        match self {
            ScheduleSpec::Constant(m) => Ok(WeightSchedule::Constant(m.resolve(dim, name)?)),
            ScheduleSpec::Table { table } => Ok(WeightSchedule::Table(
                table
                    .iter()
                    .map(|k| Ok((k.t, k.value.resolve(dim, name)?)))
                    .collect::<Result<_>>()?,
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialEstimate {
    /// Embed a guess of the original state.
    Embed(Vec<f64>),
    /// Extended-state estimate given directly.
    Z0(Vec<f64>),
}

/// Observer configuration document.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ObserverDocument {
    #[serde(rename = "P0")]
    pub p0: MatrixSpec,
    #[serde(rename = "Q")]
    pub q: ScheduleSpec,
    #[serde(rename = "V")]
    pub v: ScheduleSpec,
    pub initial: InitialEstimate,
}

impl ObserverDocument {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn resolve(&self, ltv: &LtvSystem) -> Result<ObserverConfig> {
        let dz = ltv.dim_z();
        let z0 = match &self.initial {
            InitialEstimate::Embed(x) => ltv.embed(&DVector::from_column_slice(x))?,
            InitialEstimate::Z0(z) => DVector::from_column_slice(z),
        };
        let cfg = ObserverConfig {
            p0: self.p0.resolve(dz, "P0")?,
            q: self.q.resolve(ltv.q(), "Q")?,
            v: self.v.resolve(dz, "V")?,
            z0,
        };
        cfg.validate(ltv)?;
        Ok(cfg)
    }
}
