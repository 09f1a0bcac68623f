//! Integrators for `dx/dt = v(x, t)` run from noise at `t = 1` to data at `t = 0`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::nn::VelocityField;

/// Anything that can be integrated: a trained network or an analytic field.
pub trait Velocity {
    fn dim(&self) -> usize;
    fn velocity_into(&self, x: &[f64], t: f64, out: &mut [f64]);

    fn velocity(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.velocity_into(x, t, &mut out);
        out
    }
}

impl Velocity for VelocityField {
    fn dim(&self) -> usize {
        VelocityField::dim(self)
    }

    fn velocity_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        self.eval_into(x, t, out);
    }
}

/// Closure-backed field, mostly for analytic test fields.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], f64, &mut [f64])> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<F: Fn(&[f64], f64, &mut [f64])> Velocity for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn velocity_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (self.f)(x, t, out)
    }
}

/// Wraps a field and counts evaluations.
pub struct Counting<'a, V: ?Sized> {
    inner: &'a V,
    calls: std::cell::Cell<usize>,
}

impl<'a, V: Velocity + ?Sized> Counting<'a, V> {
    pub fn new(inner: &'a V) -> Self {
        Counting {
            inner,
            calls: std::cell::Cell::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

impl<V: Velocity + ?Sized> Velocity for Counting<'_, V> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn velocity_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        self.calls.set(self.calls.get() + 1);
        self.inner.velocity_into(x, t, out)
    }
}

fn default_atol() -> f64 {
    1e-3
}

fn default_max_nfe() -> usize {
    10_000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverSpec {
    Euler {
        steps: usize,
    },
    Heun {
        steps: usize,
    },
    Rk45 {
        rtol: f64,
        #[serde(default = "default_atol")]
        atol: f64,
        #[serde(default = "default_max_nfe")]
        max_nfe: usize,
    },
    TwoStep {
        t_mid: f64,
    },
}

impl SolverSpec {
    pub fn rk45(tol: f64) -> Self {
        SolverSpec::Rk45 {
            rtol: tol,
            atol: tol,
            max_nfe: default_max_nfe(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SolverSpec::Euler { steps } | SolverSpec::Heun { steps } if steps == 0 => {
                Err(Error::contract("solver needs at least one step"))
            }
            SolverSpec::Rk45 { rtol, atol, .. } if !(rtol > 0.0 && atol > 0.0) => {
                Err(Error::contract("rk45 tolerances must be positive"))
            }
            SolverSpec::TwoStep { t_mid } if !(t_mid > 0.0 && t_mid < 1.0) => Err(Error::contract(
                format!("two-step t_mid {t_mid} outside (0, 1)"),
            )),
            _ => Ok(()),
        }
    }

    pub fn solve<V: Velocity + ?Sized>(&self, field: &V, x1: &[f64]) -> Result<Trajectory> {
        self.validate()?;
        match *self {
            SolverSpec::Euler { steps } => euler_solve(field, x1, steps),
            SolverSpec::Heun { steps } => heun_solve(field, x1, steps),
            SolverSpec::Rk45 {
                rtol,
                atol,
                max_nfe,
            } => rk45_solve(field, x1, rtol, atol, max_nfe),
            SolverSpec::TwoStep { t_mid } => two_step_trajectory(field, x1, t_mid),
        }
    }

    /// Endpoints `x̂0` for a batch of starting noises, in input order.
    pub fn sample<V: Velocity + ?Sized>(
        &self,
        field: &V,
        x1s: &[Vec<f64>],
    ) -> Result<Vec<Vec<f64>>> {
        x1s.iter()
            .map(|x1| self.solve(field, x1).map(|tr| tr.endpoint().to_vec()))
            .collect()
    }
}

/// Short label without commas, used in CSV rows.
impl fmt::Display for SolverSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverSpec::Euler { steps } => write!(f, "euler-{steps}"),
            SolverSpec::Heun { steps } => write!(f, "heun-{steps}"),
            SolverSpec::Rk45 { rtol, .. } => write!(f, "rk45-{rtol:e}"),
            SolverSpec::TwoStep { t_mid } => write!(f, "two-step-{t_mid}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Descending from 1 to 0.
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub nfe: usize,
}

impl Trajectory {
    pub fn endpoint(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectory has at least one state")
    }
}

fn check_finite(x: &[f64], step: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { step })
    }
}

/// `x_{t - 1/N} = x_t - v(x_t, t) / N` for `t = 1, (N-1)/N, ..., 1/N`.
pub fn euler_solve<V: Velocity + ?Sized>(
    field: &V,
    x1: &[f64],
    steps: usize,
) -> Result<Trajectory> {
    check_dim(field.dim(), x1.len())?;
    if steps == 0 {
        return Err(Error::contract("euler needs at least one step"));
    }
    let n = steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x1.to_vec();
    let mut v = vec![0.0; x.len()];
    times.push(1.0);
    states.push(x.clone());
    for i in 0..steps {
        let t = (steps - i) as f64 / n;
        field.velocity_into(&x, t, &mut v);
        x.iter_mut().zip(&v).for_each(|(xi, vi)| *xi -= vi / n);
        check_finite(&x, i)?;
        times.push((steps - i - 1) as f64 / n);
        states.push(x.clone());
    }
    Ok(Trajectory {
        times,
        states,
        nfe: steps,
    })
}

/// Heun's method on an even grid. The final step into `t = 0` is a plain
/// Euler step, so `nfe = 2 * steps - 1`.
pub fn heun_solve<V: Velocity + ?Sized>(field: &V, x1: &[f64], steps: usize) -> Result<Trajectory> {
    check_dim(field.dim(), x1.len())?;
    if steps == 0 {
        return Err(Error::contract("heun needs at least one step"));
    }
    let n = steps as f64;
    let d = x1.len();
    let mut times = vec![1.0];
    let mut states = vec![x1.to_vec()];
    let mut x = x1.to_vec();
    let (mut v0, mut v1) = (vec![0.0; d], vec![0.0; d]);
    let mut pred = vec![0.0; d];
    let mut nfe = 0;
    for i in 0..steps {
        let t = (steps - i) as f64 / n;
        let t_next = (steps - i - 1) as f64 / n;
        let h = t - t_next;
        field.velocity_into(&x, t, &mut v0);
        nfe += 1;
        if i + 1 == steps {
            x.iter_mut().zip(&v0).for_each(|(xi, vi)| *xi -= h * vi);
        } else {
            pred.iter_mut()
                .zip(x.iter().zip(&v0))
                .for_each(|(p, (xi, vi))| *p = xi - h * vi);
            field.velocity_into(&pred, t_next, &mut v1);
            nfe += 1;
            x.iter_mut()
                .zip(v0.iter().zip(&v1))
                .for_each(|(xi, (a, b))| *xi -= 0.5 * h * (a + b));
        }
        check_finite(&x, i)?;
        times.push(t_next);
        states.push(x.clone());
    }
    Ok(Trajectory { times, states, nfe })
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Difference between the 5th- and embedded 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const RK45_INITIAL_STEP: f64 = 1.0;
const RK45_SAFETY: f64 = 0.9;

/// Adaptive Dormand-Prince 5(4) with PI step control.
///
/// Works in `s = 1 - t`, so steps are positive. The last stage of an accepted
/// step is reused as the first stage of the next (FSAL): 7 evaluations for the
/// first attempt, 6 for every attempt after that.
pub fn rk45_solve<V: Velocity + ?Sized>(
    field: &V,
    x1: &[f64],
    rtol: f64,
    atol: f64,
    max_nfe: usize,
) -> Result<Trajectory> {
    check_dim(field.dim(), x1.len())?;
    if !(rtol > 0.0 && atol > 0.0) {
        return Err(Error::contract("rk45 tolerances must be positive"));
    }
    let d = x1.len();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; d]; 7];
    let mut stage = vec![0.0; d];
    let mut x = x1.to_vec();
    let mut s = 0.0f64;
    let mut h = RK45_INITIAL_STEP;
    let mut err_prev = 1e-4f64;
    let mut rejected_last = false;
    let mut times = vec![1.0];
    let mut states = vec![x.clone()];

    let rhs = |x: &[f64], s: f64, out: &mut [f64]| {
        field.velocity_into(x, (1.0 - s).clamp(0.0, 1.0), out);
        out.iter_mut().for_each(|v| *v = -*v);
    };

    if max_nfe < 7 {
        return Err(Error::MaxNfeExceeded {
            max_nfe,
            t: 1.0,
            last_state: x,
        });
    }
    rhs(&x, s, &mut k[0]);
    let mut nfe = 1;
    let mut attempts = 0usize;

    while s < 1.0 {
        if nfe + 6 > max_nfe {
            return Err(Error::MaxNfeExceeded {
                max_nfe,
                t: 1.0 - s,
                last_state: x,
            });
        }
        let last = s + h >= 1.0;
        if last {
            h = 1.0 - s;
        }
        for i in 1..7 {
            for j in 0..d {
                let mut acc = 0.0;
                for (l, kl) in k.iter().enumerate().take(i) {
                    acc += A[i][l] * kl[j];
                }
                stage[j] = x[j] + h * acc;
            }
            rhs(&stage, s + C[i] * h, &mut k[i]);
        }
        nfe += 6;
        attempts += 1;
        // stage now holds the 5th-order solution (row 7 of A equals the b weights).
        let mut sum = 0.0;
        for j in 0..d {
            let e: f64 = h * E.iter().zip(&k).map(|(ei, ki)| ei * ki[j]).sum::<f64>();
            let scale = atol + rtol * x[j].abs().max(stage[j].abs());
            sum += (e / scale).powi(2);
        }
        let err = (sum / d as f64).sqrt();
        if !err.is_finite() {
            return Err(Error::NonFiniteState { step: attempts });
        }
        if err <= 1.0 {
            s = if last { 1.0 } else { s + h };
            x.copy_from_slice(&stage);
            check_finite(&x, attempts)?;
            k.swap(0, 6);
            times.push(1.0 - s);
            states.push(x.clone());
            let mut factor = if err == 0.0 {
                10.0
            } else {
                RK45_SAFETY * err.powf(-0.17) * err_prev.powf(0.04)
            };
            factor = factor.clamp(0.2, 10.0);
            if rejected_last {
                factor = factor.min(1.0);
            }
            h *= factor;
            err_prev = err.max(1e-4);
            rejected_last = false;
        } else {
            h *= (RK45_SAFETY * err.powf(-0.2)).max(0.2);
            rejected_last = true;
        }
    }
    *times.last_mut().unwrap() = 0.0;
    Ok(Trajectory { times, states, nfe })
}

/// `x1 - (1-t) v(x1, 1) - t v(x_t, t)` with `x_t = x1 - (1-t) v(x1, 1)`; two evaluations.
pub fn two_step_euler<V: Velocity + ?Sized>(field: &V, x1: &[f64], t: f64) -> Result<Vec<f64>> {
    Ok(two_step_trajectory(field, x1, t)?.endpoint().to_vec())
}

fn two_step_trajectory<V: Velocity + ?Sized>(field: &V, x1: &[f64], t: f64) -> Result<Trajectory> {
    check_dim(field.dim(), x1.len())?;
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::contract(format!("two-step t {t} outside (0, 1)")));
    }
    let v1 = field.velocity(x1, 1.0);
    let xt: Vec<f64> = x1.iter().zip(&v1).map(|(x, v)| x - (1.0 - t) * v).collect();
    check_finite(&xt, 0)?;
    let vt = field.velocity(&xt, t);
    // (1-t) v1 + t vt written as v1 + t (vt - v1): exact when the field is constant
    let x0: Vec<f64> = x1
        .iter()
        .zip(v1.iter().zip(&vt))
        .map(|(x, (a, b))| x - (a + t * (b - a)))
        .collect();
    check_finite(&x0, 1)?;
    Ok(Trajectory {
        times: vec![1.0, t, 0.0],
        states: vec![x1.to_vec(), xt, x0],
        nfe: 2,
    })
}
