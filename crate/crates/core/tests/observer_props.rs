mod common;

use lqo::immersion::{build_ltv, immerse, ImmersionOptions, LtvSystem};
use lqo::observer::{
    observability_gramian, observer_derivative, run_observer, ObserverConfig, ObserverDocument,
    ObserverState, WeightSchedule,
};
use lqo::symcalc::{pack_lower, packed_len, DenseMatrix, SymMatrix};
use lqo::sysmodel::{examples, output_of, LqoSystem};
use lqo::Error;
use nalgebra::DVector;

/// Closed-form state of the three-dimensional vehicle under
/// `u = (-cos t, -sin t, cos(t / 2) / 2)` from `p = (0, 0, 2)`,
/// `v_a = (0, 1, 0)`, `v_w = (0, 0, 1)`.
fn vehicle_state(t: f64) -> DVector<f64> {
    DVector::from_vec(vec![
        t.cos() - 1.0,
        t.sin(),
        4.0 - 2.0 * (0.5 * t).cos() + t,
        -t.sin(),
        t.cos(),
        (0.5 * t).sin(),
        0.0,
        0.0,
        1.0,
    ])
}

fn vehicle_input(t: f64) -> DVector<f64> {
    DVector::from_vec(vec![-t.cos(), -t.sin(), 0.5 * (0.5 * t).cos()])
}

fn vehicle() -> (LqoSystem, LtvSystem) {
    let sys = examples::range_airspeed(3);
    let ltv = build_ltv(&sys, &immerse(&sys, &ImmersionOptions::default()).unwrap()).unwrap();
    (sys, ltv)
}

#[test]
fn closed_form_vehicle_trajectory_matches_integration() {
    let (sys, _) = vehicle();
    let xs = lqo::ode::rk4_solve(
        |t, x| sys.dynamics(x, &vehicle_input(t)),
        0.0,
        vehicle_state(0.0),
        1e-3,
        10_000,
    );
    for (k, x) in xs.iter().enumerate().step_by(500) {
        assert!((x - vehicle_state(k as f64 * 1e-3)).amax() < 1e-10);
    }
}

#[test]
fn exact_initial_estimate_stays_on_the_trajectory() {
    let (sys, ltv) = vehicle();
    let cfg = ObserverConfig::identity(&ltv, ltv.embed(&vehicle_state(0.0)).unwrap());
    let signals = |t: f64| {
        (
            vehicle_input(t),
            output_of(&sys, &vehicle_state(t)).unwrap(),
        )
    };
    let run = run_observer(&ltv, &cfg, &signals, 0.0, 1e-3, 5000).unwrap();
    for (k, xhat) in run.xhat.iter().enumerate() {
        assert!(
            (xhat - vehicle_state(k as f64 * 1e-3)).amax() < 1e-6,
            "step {k}"
        );
    }
    assert!(run.min_p_eigenvalue > 0.0);
}

#[test]
fn offset_estimate_converges() {
    let (sys, ltv) = vehicle();
    let guess = vehicle_state(0.0).add_scalar(0.5);
    let cfg = ObserverConfig::identity(&ltv, ltv.embed(&guess).unwrap());
    let signals = |t: f64| {
        (
            vehicle_input(t),
            output_of(&sys, &vehicle_state(t)).unwrap(),
        )
    };
    let run = run_observer(&ltv, &cfg, &signals, 0.0, 1e-2, 6000).unwrap();
    let e0 = (&run.xhat[0] - vehicle_state(0.0)).norm();
    let e60 = (&run.xhat[6000] - vehicle_state(60.0)).norm();
    assert!(e60 < 0.1 * e0, "{e0} -> {e60}");
}

#[test]
fn zero_innovation_leaves_the_model() {
    let (_, ltv) = vehicle();
    let dz = ltv.dim_z();
    let zhat = DVector::from_fn(dz, |i, _| 0.1 * i as f64 - 0.3);
    let u = vehicle_input(0.7);
    let y = ltv.output(&zhat);
    let state = ObserverState {
        t: 0.7,
        zhat: zhat.clone(),
        p: SymMatrix::identity(dz),
    };
    let q = SymMatrix::identity(ltv.q());
    let v = SymMatrix::identity(dz);
    let (d, dp) = observer_derivative(&ltv, &state, &u, &y, &q, &v).unwrap();
    let model = ltv.a_matrix(&u) * &zhat + ltv.b() * &u;
    assert!((d - model).amax() < 1e-13);
    let dense = dp.to_dense();
    assert!((&dense - dense.transpose()).amax() == 0.0);
}

#[test]
fn riccati_without_weights_is_a_congruence() {
    // with Q = V = 0 and constant u, P(t) = exp(A t) P0 exp(A t)^T
    let sys = examples::two_state();
    let ltv = build_ltv(&sys, &immerse(&sys, &ImmersionOptions::default()).unwrap()).unwrap();
    let dz = ltv.dim_z();
    let u = DVector::from_element(1, 0.3);
    let p0 = SymMatrix::from_dense(&DenseMatrix::from_fn(dz, dz, |i, j| {
        if i == j {
            2.0
        } else {
            0.1
        }
    }))
    .unwrap()
    .0;
    let zero_q = SymMatrix::zeros(ltv.q());
    let zero_v = SymMatrix::zeros(dz);
    let len = packed_len(dz);
    let ys = lqo::ode::rk4_solve(
        |_, s: &DVector<f64>| {
            let p = SymMatrix::from_packed(dz, s.iter().copied().collect()).unwrap();
            let state = ObserverState {
                t: 0.0,
                zhat: DVector::zeros(dz),
                p,
            };
            let y = DVector::zeros(ltv.q());
            let (_, dp) = observer_derivative(&ltv, &state, &u, &y, &zero_q, &zero_v).unwrap();
            DVector::from_column_slice(dp.packed())
        },
        0.0,
        DVector::from_column_slice(p0.packed()),
        1e-3,
        500,
    );
    let a = ltv.a_matrix(&u);
    let phi = (&a * 0.5).exp();
    let exact = &phi * p0.to_dense() * phi.transpose();
    let got = SymMatrix::from_packed(dz, ys[500].iter().copied().collect())
        .unwrap()
        .to_dense();
    assert_eq!(ys[500].len(), len);
    assert!(
        (&got - &exact).amax() < 1e-9 * exact.amax(),
        "{got} vs {exact}"
    );
}

#[test]
fn configuration_is_validated() {
    let (_, ltv) = vehicle();
    let dz = ltv.dim_z();
    let z0 = DVector::zeros(dz);
    let mut cfg = ObserverConfig::identity(&ltv, z0.clone());
    cfg.q = WeightSchedule::Constant(SymMatrix::zeros(ltv.q()));
    assert!(matches!(
        cfg.validate(&ltv),
        Err(Error::NotPositiveDefinite("Q", _))
    ));
    let mut cfg = ObserverConfig::identity(&ltv, DVector::zeros(dz - 1));
    assert!(matches!(
        cfg.validate(&ltv),
        Err(Error::DimensionMismatch { .. })
    ));
    cfg.z0 = z0;
    cfg.v = WeightSchedule::Table(vec![
        (1.0, SymMatrix::identity(dz)),
        (0.5, SymMatrix::identity(dz)),
    ]);
    assert!(matches!(cfg.validate(&ltv), Err(Error::Config(_))));
}

#[test]
fn weight_tables_interpolate() {
    let s = WeightSchedule::Table(vec![
        (0.0, SymMatrix::scaled_identity(2, 1.0)),
        (2.0, SymMatrix::scaled_identity(2, 3.0)),
    ]);
    assert_eq!(s.at(1.0), SymMatrix::scaled_identity(2, 2.0));
    assert_eq!(s.at(-1.0), SymMatrix::scaled_identity(2, 1.0));
    assert_eq!(s.at(9.0), SymMatrix::scaled_identity(2, 3.0));
}

#[test]
fn documents_resolve_against_the_extended_system() {
    let (_, ltv) = vehicle();
    let dz = ltv.dim_z();
    let doc = ObserverDocument::parse(
        r#"{"P0": {"identity": 2.0},
            "Q": {"table": [{"t": 0, "value": {"identity": 1.0}}, {"t": 10, "value": [[2, 0], [0, 2]]}]},
            "V": {"identity": 0.5},
            "initial": {"embed": [0, 0, 2, 0, 1, 0, 0, 0, 1]}}"#,
    )
    .unwrap();
    let cfg = doc.resolve(&ltv).unwrap();
    assert_eq!(cfg.p0, SymMatrix::scaled_identity(dz, 2.0));
    assert_eq!(cfg.q.at(5.0), SymMatrix::scaled_identity(2, 1.5));
    assert_eq!(cfg.z0, ltv.embed(&vehicle_state(0.0)).unwrap());

    let bad = ObserverDocument::parse(r#"{"P0": {"identity": 1}, "Q": {"identity": 1}, "V": {"identity": 1}, "initial": {"z0": [1, 2]}}"#)
        .unwrap();
    assert!(bad.resolve(&ltv).is_err());
    assert!(ObserverDocument::parse(r#"{"P0": 1}"#).is_err());
}

#[test]
fn vehicle_is_observable_along_the_reference_input() {
    let (_, ltv) = vehicle();
    let w = observability_gramian(&ltv, &vehicle_input, 0.0, 1e-2, 1000);
    let sym = pack_lower(&w);
    assert!(sym.min_eigenvalue() > 0.0);
}
