//! Simulation harness: input signals, truth simulation, scenario documents,
//! observer runs and CSV traces.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::immersion::{build_ltv, immerse, report, ImmersionOptions, ImmersionReport, LtvSystem};
use crate::observer::{run_observer, ObserverDocument, ObserverRun, SampledSignals};
use crate::ode::{rk4_step, step_count};
use crate::sysmodel::{load_system_with, output_of, LoadOptions, LqoSystem};

/// Open-loop input `u(t)`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSignal {
    Zero,
    Constant {
        value: Vec<f64>,
    },
    /// `u_i(t) = amplitude_i cos(omega_i t + phase_i)`, angular frequency in
    /// rad/s and phase in rad.
    Sinusoid {
        amplitude: Vec<f64>,
        omega: Vec<f64>,
        #[serde(default)]
        phase: Vec<f64>,
    },
    /// Samples `values[k]` at times `t[k]`, linearly interpolated and held
    /// at the ends.
    Table {
        t: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

impl InputSignal {
    pub fn validate(&self, p: usize) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            InputSignal::Zero => Ok(()),
            InputSignal::Constant { value } => {
                if value.len() != p {
                    return Err(Error::dims("constant input", p, value.len()));
                }
                if !finite(value) {
                    return Err(Error::NonFinite {
                        context: "input".into(),
                    });
                }
                Ok(())
            }
            InputSignal::Sinusoid {
                amplitude,
                omega,
                phase,
            } => {
                if amplitude.len() != p
                    || omega.len() != p
                    || !(phase.is_empty() || phase.len() == p)
                {
                    return Err(Error::dims("sinusoid channels", p, amplitude.len()));
                }
                if !(finite(amplitude) && finite(omega) && finite(phase)) {
                    return Err(Error::NonFinite {
                        context: "input".into(),
                    });
                }
                Ok(())
            }
            InputSignal::Table { t, values } => {
                if t.is_empty() || t.len() != values.len() {
                    return Err(Error::Config(
                        "input table needs one value row per time".into(),
                    ));
                }
                if !finite(t) || t.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::Config(
                        "input table times must increase strictly".into(),
                    ));
                }
                for v in values {
                    if v.len() != p {
                        return Err(Error::dims("input table row", p, v.len()));
                    }
                    if !finite(v) {
                        return Err(Error::NonFinite {
                            context: "input".into(),
                        });
                    }
                }
                Ok(())
            }
        }
    }

    /// Value at `t` for a system with `p` inputs. Assumes [`validate`](Self::validate) passed.
    pub fn eval(&self, t: f64, p: usize) -> DVector<f64> {
        match self {
            InputSignal::Zero => DVector::zeros(p),
            InputSignal::Constant { value } => DVector::from_column_slice(value),
            InputSignal::Sinusoid {
                amplitude,
                omega,
                phase,
            } => DVector::from_fn(p, |i, _| {
                let ph = phase.get(i).copied().unwrap_or(0.0);
                amplitude[i] * (omega[i] * t + ph).cos()
            }),
            InputSignal::Table { t: ts, values } => {
                let idx = ts.partition_point(|&tk| tk <= t);
                if idx == 0 {
                    return DVector::from_column_slice(&values[0]);
                }
                if idx == ts.len() {
                    return DVector::from_column_slice(&values[idx - 1]);
                }
                let w = (t - ts[idx - 1]) / (ts[idx] - ts[idx - 1]);
                DVector::from_fn(p, |i, _| {
                    (1.0 - w) * values[idx - 1][i] + w * values[idx][i]
                })
            }
        }
    }
}

/// Noise-free plant trajectory on a uniform grid.
#[derive(Debug, Clone)]
pub struct TruthTrace {
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
}

/// Integrates `x' = A x + B u(t)` with fixed-step RK4 and evaluates the
/// quadratic outputs on the grid.
pub fn simulate_truth(
    sys: &LqoSystem,
    sig: &InputSignal,
    x0: &DVector<f64>,
    t_end: f64,
    h: f64,
) -> Result<TruthTrace> {
    let steps = step_count(t_end, h).ok_or_else(|| {
        Error::Config(format!(
            "T = {t_end} must be a positive whole multiple of h = {h}"
        ))
    })?;
    if x0.len() != sys.n() {
        return Err(Error::dims("initial state", sys.n(), x0.len()));
    }
    sig.validate(sys.p())?;
    let p = sys.p();
    let mut rhs = |t: f64, x: &DVector<f64>| sys.dynamics(x, &sig.eval(t, p));
    let mut tr = TruthTrace {
        t: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
    };
    let mut x = x0.clone();
    for i in 0..=steps {
        let t = i as f64 * h;
        if i > 0 {
            x = rk4_step(&mut rhs, t - h, &x, h);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    t,
                    context: "plant",
                });
            }
        }
        tr.t.push(t);
        tr.u.push(sig.eval(t, p));
        tr.y.push(output_of(sys, &x)?);
        tr.x.push(x.clone());
    }
    Ok(tr)
}

/// Integrates `z' = A(u(t)) z + B u(t)` on the grid `i h`, `i = 0..=steps`.
pub fn simulate_extended(
    ltv: &LtvSystem,
    sig: &InputSignal,
    z0: &DVector<f64>,
    h: f64,
    steps: usize,
) -> Vec<DVector<f64>> {
    let p = ltv.p();
    crate::ode::rk4_solve(
        |t, z| ltv.derivative(z, &sig.eval(t, p)),
        0.0,
        z0.clone(),
        h,
        steps,
    )
}

/// Named half-open index range `[start, end)` of the state vector.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ErrorGroup {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    /// Path of the system document, relative to the scenario file.
    pub system: String,
    /// Path of the observer document, relative to the scenario file.
    #[serde(default)]
    pub observer: Option<String>,
    pub input: InputSignal,
    pub x0: Vec<f64>,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub h: f64,
    #[serde(default)]
    pub error_groups: Vec<ErrorGroup>,
    /// Accept asymmetric `C_h` and symmetrize them.
    #[serde(default)]
    pub symmetrize: bool,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub system: LqoSystem,
    pub observer: Option<ObserverDocument>,
    pub input: InputSignal,
    pub x0: DVector<f64>,
    pub t_end: f64,
    pub h: f64,
    pub steps: usize,
    pub error_groups: Vec<ErrorGroup>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

impl Scenario {
    pub fn new(
        system: LqoSystem,
        observer: Option<ObserverDocument>,
        input: InputSignal,
        x0: DVector<f64>,
        t_end: f64,
        h: f64,
        error_groups: Vec<ErrorGroup>,
    ) -> Result<Self> {
        let steps = step_count(t_end, h).ok_or_else(|| {
            Error::Config(format!(
                "T = {t_end} must be a positive whole multiple of h = {h}"
            ))
        })?;
        if x0.len() != system.n() {
            return Err(Error::dims("initial state", system.n(), x0.len()));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "x0".into(),
            });
        }
        input.validate(system.p())?;
        for g in &error_groups {
            if g.start >= g.end || g.end > system.n() {
                return Err(Error::Config(format!(
                    "error group {} = [{}, {}) does not fit a state of size {}",
                    g.name,
                    g.start,
                    g.end,
                    system.n()
                )));
            }
        }
        Ok(Scenario {
            system,
            observer,
            input,
            x0,
            t_end,
            h,
            steps,
            error_groups,
        })
    }

    /// Loads a scenario document and the documents it references.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read(path)?;
        let doc: ScenarioDocument = serde_json::from_str(&text)?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let opts = LoadOptions {
            max_asymmetry: if doc.symmetrize {
                None
            } else {
                LoadOptions::default().max_asymmetry
            },
        };
        let system = load_system_with(&read(&base.join(&doc.system))?, &opts)?.system;
        let observer = match &doc.observer {
            Some(p) => Some(ObserverDocument::parse(&read(&base.join(p))?)?),
            None => None,
        };
        Scenario::new(
            system,
            observer,
            doc.input,
            DVector::from_vec(doc.x0),
            doc.t_end,
            doc.h,
            doc.error_groups,
        )
    }

    fn simulate_columns(&self) -> Vec<String> {
        let (n, p, q) = (self.system.n(), self.system.p(), self.system.q());
        let mut cols = vec!["t".to_string()];
        cols.extend((0..n).map(|i| format!("x_{i}")));
        cols.extend((0..p).map(|i| format!("u_{i}")));
        cols.extend((0..q).map(|i| format!("y_{i}")));
        cols
    }
}

/// Table of samples with a header row; first column is time.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl SimulationTrace {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io {
            path: "<trace>".into(),
            source: e.into_error(),
        })?;
        Ok(String::from_utf8(bytes).expect("ascii output"))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if columns.first().map(String::as_str) != Some("t") {
            return Err(Error::Config("trace must start with a t column".into()));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != columns.len() {
                return Err(Error::Config(format!(
                    "trace row {} has {} fields, header has {}",
                    rows.len(),
                    rec.len(),
                    columns.len()
                )));
            }
            let row = rec
                .iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad number {f:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if let Some(prev) = rows.last().map(|p: &Vec<f64>| p[0]) {
                if !(row[0] > prev) {
                    return Err(Error::Config("trace times must increase strictly".into()));
                }
            }
            rows.push(row);
        }
        Ok(SimulationTrace { columns, rows })
    }
}

/// Truth-only trace: `t, x, u, y`.
pub fn simulate_scenario(sc: &Scenario) -> Result<SimulationTrace> {
    let tr = simulate_truth(&sc.system, &sc.input, &sc.x0, sc.t_end, sc.h)?;
    let rows = (0..tr.t.len())
        .map(|i| {
            let mut r = vec![tr.t[i]];
            r.extend(tr.x[i].iter());
            r.extend(tr.u[i].iter());
            r.extend(tr.y[i].iter());
            r
        })
        .collect();
    Ok(SimulationTrace {
        columns: sc.simulate_columns(),
        rows,
    })
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub trace: SimulationTrace,
    pub report: ImmersionReport,
    pub ltv: LtvSystem,
    pub observer: ObserverRun,
    pub truth: TruthTrace,
}

impl ScenarioRun {
    /// Error norm of group `g` at every grid point.
    pub fn group_errors(&self, g: &ErrorGroup) -> Vec<f64> {
        self.trace
            .column(&format!("err_{}", g.name))
            .expect("group column present")
    }
}

/// Full run: immersion, truth simulation, observer, error norms.
///
/// The plant is simulated on a grid twice as fine as the observer step, so
/// the observer's Runge-Kutta midpoints land on samples.
pub fn run_scenario(sc: &Scenario, opts: &ImmersionOptions) -> Result<ScenarioRun> {
    let obs_doc = sc
        .observer
        .as_ref()
        .ok_or_else(|| Error::Config("scenario has no observer configuration".into()))?;
    let imm = immerse(&sc.system, opts)?;
    let ltv = build_ltv(&sc.system, &imm)?;
    let rep = report(&sc.system, &imm, &ltv)?;
    let cfg = obs_doc.resolve(&ltv)?;

    let fine = simulate_truth(&sc.system, &sc.input, &sc.x0, sc.t_end, 0.5 * sc.h)?;
    let signals = SampledSignals {
        t0: 0.0,
        dt: 0.5 * sc.h,
        u: fine.u.clone(),
        y: fine.y.clone(),
    };
    let run = run_observer(&ltv, &cfg, &signals, 0.0, sc.h, sc.steps)?;

    let mut columns = sc.simulate_columns();
    columns.extend((0..ltv.dim_z()).map(|i| format!("zhat_{i}")));
    columns.extend((0..sc.system.n()).map(|i| format!("xhat_{i}")));
    columns.extend(sc.error_groups.iter().map(|g| format!("err_{}", g.name)));
    let truth = TruthTrace {
        t: (0..=sc.steps).map(|i| i as f64 * sc.h).collect(),
        x: fine.x.iter().step_by(2).cloned().collect(),
        u: fine.u.iter().step_by(2).cloned().collect(),
        y: fine.y.iter().step_by(2).cloned().collect(),
    };
    let rows = (0..=sc.steps)
        .map(|i| {
            let x = &truth.x[i];
            let xhat = &run.xhat[i];
            let mut r = vec![truth.t[i]];
            r.extend(x.iter());
            r.extend(truth.u[i].iter());
            r.extend(truth.y[i].iter());
            r.extend(run.zhat[i].iter());
            r.extend(xhat.iter());
            for g in &sc.error_groups {
                let e =
                    (x.rows(g.start, g.end - g.start) - xhat.rows(g.start, g.end - g.start)).norm();
                r.push(e);
            }
            r
        })
        .collect();
    Ok(ScenarioRun {
        trace: SimulationTrace { columns, rows },
        report: rep,
        ltv,
        observer: run,
        truth,
    })
}
