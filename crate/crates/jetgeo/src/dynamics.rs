//! Fixed-step integration of first-order flows, of second-order dynamics,
//! and the check that flow lines satisfy their own second-order
//! prolongation.
//!
//! Only classical RK4 with a fixed step is offered: outputs must be
//! reproducible byte for byte and convergence-order tests need a clean
//! h⁴ signal, neither of which survives adaptive stepping.

use crate::geometry::{GeometryError, VectorField};
use crate::expr::EvalError;

/// Boxed error type accepted from acceleration callbacks, so callers can
/// round-trip their own error enums through the integrator.
pub type CallbackError = Box<dyn std::error::Error + Send + Sync + 'static>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rk4,
}

/// Integration interval and step. `(t1 - t0)/step` is capped at 1e7 points
/// to guard against runaway grids from mistyped steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    t0: f64,
    t1: f64,
    step: f64,
    method: Method,
}

pub const MAX_GRID_POINTS: f64 = 1e7;

impl IntegratorConfig {
    pub fn new(t0: f64, t1: f64, step: f64, method: Method) -> Result<IntegratorConfig, DynamicsError> {
        if !t0.is_finite() || !t1.is_finite() || t1 <= t0 {
            return Err(DynamicsError::BadInterval { t0, t1 });
        }
        if !step.is_finite() || step <= 0.0 {
            return Err(DynamicsError::BadStep(step));
        }
        let points = (t1 - t0) / step;
        if points > MAX_GRID_POINTS {
            return Err(DynamicsError::GridTooLarge(points));
        }
        Ok(IntegratorConfig { t0, t1, step, method })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Arithmetic grid t0, t0+h, ... capped by t1, with t1 appended as a
    /// final (possibly partial) step. Points are computed as t0 + j·h, not
    /// accumulated, so the grid is identical across runs and platforms.
    fn time_grid(&self) -> Vec<f64> {
        let tol = self.step * 1e-9;
        let mut times = Vec::new();
        let mut j = 0u64;
        loop {
            let t = self.t0 + (j as f64) * self.step;
            if t >= self.t1 - tol {
                break;
            }
            times.push(t);
            j += 1;
        }
        times.push(self.t1);
        times
    }
}

/// A sampled curve with its jet lift: states, velocities, optionally
/// accelerations, all row-major with one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    n: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    velocities: Vec<f64>,
    accelerations: Option<Vec<f64>>,
}

impl Trajectory {
    /// `states` and `velocities` (and `accelerations` when given) hold
    /// `times.len() * n` values, sample-major. Times must strictly
    /// increase and at least two samples are required.
    pub fn new(
        n: usize,
        times: Vec<f64>,
        states: Vec<f64>,
        velocities: Vec<f64>,
        accelerations: Option<Vec<f64>>,
    ) -> Result<Trajectory, DynamicsError> {
        let m = times.len();
        if m < 2 {
            return Err(DynamicsError::TooShort);
        }
        for j in 1..m {
            // NaN entries fail the comparison too and are rejected here
            if times[j].partial_cmp(&times[j - 1]) != Some(std::cmp::Ordering::Greater) {
                return Err(DynamicsError::NonMonotoneTime(j));
            }
        }
        for (name, len) in [("states", states.len()), ("velocities", velocities.len())] {
            if len != m * n {
                return Err(DynamicsError::RowShape {
                    what: name,
                    expected: m * n,
                    got: len,
                });
            }
        }
        if let Some(acc) = &accelerations {
            if acc.len() != m * n {
                return Err(DynamicsError::RowShape {
                    what: "accelerations",
                    expected: m * n,
                    got: acc.len(),
                });
            }
        }
        Ok(Trajectory {
            n,
            times,
            states,
            velocities,
            accelerations,
        })
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the constructor guarantees at least two samples
    }

    /// State dimension.
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn time(&self, j: usize) -> f64 {
        self.times[j]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, j: usize) -> &[f64] {
        &self.states[j * self.n..(j + 1) * self.n]
    }

    pub fn velocity(&self, j: usize) -> &[f64] {
        &self.velocities[j * self.n..(j + 1) * self.n]
    }

    pub fn acceleration(&self, j: usize) -> Option<&[f64]> {
        self.accelerations
            .as_ref()
            .map(|a| &a[j * self.n..(j + 1) * self.n])
    }

    pub fn has_accelerations(&self) -> bool {
        self.accelerations.is_some()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DynamicsError {
    #[error("integration interval needs finite t1 > t0, got [{t0}, {t1}]")]
    BadInterval { t0: f64, t1: f64 },
    #[error("step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("(t1 - t0)/step = {0:.3e} exceeds the 1e7-point grid limit")]
    GridTooLarge(f64),
    #[error("a trajectory needs at least two samples")]
    TooShort,
    #[error("trajectory times must strictly increase (violated at sample {0})")]
    NonMonotoneTime(usize),
    #[error("{what} holds {got} values, expected {expected}")]
    RowShape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("solution became non-finite at t = {time}")]
    BlowUp {
        time: f64,
        /// Samples recorded before the failure, when at least two exist.
        partial: Option<Box<Trajectory>>,
    },
    #[error("acceleration callback failed at t = {time}: {source}")]
    Callback {
        time: f64,
        #[source]
        source: CallbackError,
    },
    #[error(transparent)]
    Field(#[from] GeometryError),
    #[error("trajectory carries no accelerations to verify")]
    MissingAccelerations,
}

/// One classical RK4 step of size h from x, for any right-hand side.
fn rk4_step<E>(
    rhs: &mut impl FnMut(&[f64]) -> Result<Vec<f64>, E>,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>, E> {
    let k1 = rhs(x)?;
    let mid1: Vec<f64> = x.iter().zip(&k1).map(|(xi, k)| xi + 0.5 * h * k).collect();
    let k2 = rhs(&mid1)?;
    let mid2: Vec<f64> = x.iter().zip(&k2).map(|(xi, k)| xi + 0.5 * h * k).collect();
    let k3 = rhs(&mid2)?;
    let end: Vec<f64> = x.iter().zip(&k3).map(|(xi, k)| xi + h * k).collect();
    let k4 = rhs(&end)?;
    Ok((0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

struct Recorder {
    n: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    velocities: Vec<f64>,
    accelerations: Vec<f64>,
}

impl Recorder {
    fn new(n: usize, capacity: usize) -> Recorder {
        Recorder {
            n,
            times: Vec::with_capacity(capacity),
            states: Vec::with_capacity(capacity * n),
            velocities: Vec::with_capacity(capacity * n),
            accelerations: Vec::with_capacity(capacity * n),
        }
    }

    fn push(&mut self, t: f64, x: &[f64], v: &[f64], a: &[f64]) {
        self.times.push(t);
        self.states.extend_from_slice(x);
        self.velocities.extend_from_slice(v);
        self.accelerations.extend_from_slice(a);
    }

    fn finish(self) -> Option<Trajectory> {
        Trajectory::new(
            self.n,
            self.times,
            self.states,
            self.velocities,
            Some(self.accelerations),
        )
        .ok()
    }

    fn blow_up(self, time: f64) -> DynamicsError {
        DynamicsError::BlowUp {
            time,
            partial: self.finish().map(Box::new),
        }
    }
}

fn non_finite_eval(err: &GeometryError) -> bool {
    matches!(
        err,
        GeometryError::Eval {
            source: EvalError::NonFinite(_),
            ..
        }
    )
}

/// Integrate ẋ = X(x) from x0 over the configured grid.
///
/// Velocities and accelerations are the analytic lift sampled from the
/// field — velocity row j is X(x_j) and acceleration row j is J(x_j)·X(x_j)
/// — never finite differences of the discrete states. A state or field
/// value turning non-finite aborts with [`DynamicsError::BlowUp`] carrying
/// the samples recorded so far.
pub fn integrate_first_order(
    f: &VectorField,
    x0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory, DynamicsError> {
    let n = f.n();
    let times = cfg.time_grid();
    let mut rec = Recorder::new(n, times.len());
    let mut state = x0.to_vec();

    for (j, &t) in times.iter().enumerate() {
        if state.iter().any(|v| !v.is_finite()) {
            return Err(rec.blow_up(t));
        }
        let velocity = match f.value(&state) {
            Ok(v) => v,
            Err(e) if non_finite_eval(&e) => return Err(rec.blow_up(t)),
            Err(e) => return Err(e.into()),
        };
        let acceleration = match f.jacobian(&state) {
            Ok(jac) => jac.mul_vec(&velocity),
            Err(e) if non_finite_eval(&e) => return Err(rec.blow_up(t)),
            Err(e) => return Err(e.into()),
        };
        rec.push(t, &state, &velocity, &acceleration);

        if j + 1 < times.len() {
            let h = times[j + 1] - t;
            state = match rk4_step(&mut |x| f.value(x), &state, h) {
                Ok(next) => next,
                Err(e) if non_finite_eval(&e) => return Err(rec.blow_up(times[j + 1])),
                Err(e) => return Err(e.into()),
            };
        }
    }

    Ok(rec.finish().expect("grid always has at least two points"))
}

/// Integrate ẍ = accel(x, ẋ) from (x0, v0) via the first-order reduction
/// on (x, v). Acceleration rows are filled from `accel` at each recorded
/// sample. Callback failures abort with [`DynamicsError::Callback`] naming
/// the time, so callers can map domain errors (for example a metric losing
/// positive-definiteness along the path) onto their own handling.
pub fn integrate_second_order(
    accel: impl Fn(&[f64], &[f64]) -> Result<Vec<f64>, CallbackError>,
    x0: &[f64],
    v0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory, DynamicsError> {
    assert_eq!(x0.len(), v0.len(), "state and velocity dimensions differ");
    let n = x0.len();
    let times = cfg.time_grid();
    let mut rec = Recorder::new(n, times.len());
    let mut z: Vec<f64> = x0.iter().chain(v0).copied().collect();

    // shared by the recorder and the RK4 stages
    let eval = |z: &[f64]| -> Result<Vec<f64>, CallbackError> {
        let (x, v) = z.split_at(n);
        let a = accel(x, v)?;
        let mut dz = v.to_vec();
        dz.extend_from_slice(&a);
        Ok(dz)
    };

    for (j, &t) in times.iter().enumerate() {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(rec.blow_up(t));
        }
        let (x, v) = z.split_at(n);
        let a = match accel(x, v) {
            Ok(a) => a,
            Err(source) => return Err(DynamicsError::Callback { time: t, source }),
        };
        rec.push(t, x, v, &a);

        if j + 1 < times.len() {
            let h = times[j + 1] - t;
            z = match rk4_step(&mut |z: &[f64]| eval(z), &z, h) {
                Ok(next) => next,
                Err(source) => {
                    return Err(DynamicsError::Callback {
                        time: times[j + 1],
                        source,
                    })
                }
            };
        }
    }

    Ok(rec.finish().expect("grid always has at least two points"))
}

/// Max over samples of the ∞-norm of the Euler–Lagrange residual at
/// (x, ẋ, ẍ). For trajectories produced by [`integrate_first_order`] the
/// lift is analytic, so the residual vanishes identically and this reports
/// only floating-point noise, independent of the step size.
pub fn verify_prolongation(f: &VectorField, traj: &Trajectory) -> Result<f64, DynamicsError> {
    if !traj.has_accelerations() {
        return Err(DynamicsError::MissingAccelerations);
    }
    let mut worst = 0.0f64;
    for j in 0..traj.len() {
        let residual = f.el_residual(
            traj.state(j),
            traj.velocity(j),
            traj.acceleration(j).expect("checked above"),
        )?;
        for r in residual {
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}
