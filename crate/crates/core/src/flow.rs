//! Flows F(x, t) of a vector field and their state sensitivities dF/dx.
//!
//! The sensitivity matrix Phi solves the variational equation
//! `dPhi/dt = DV(x(t)) Phi`, `Phi(0) = I`. When requested it is integrated
//! together with the state as one system of dimension n + n^2, so both see
//! the same step sequence and the same error control. Negative times
//! integrate `-V` forward over `|t|`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dsl::{EvalError, VectorField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Classical fourth-order Runge-Kutta with a fixed step; cross-check only.
    Rk4Fixed,
    /// Dormand-Prince 5(4) with PI step-size control.
    DopriAdaptive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    pub method: Method,
    /// Step length for [`Method::Rk4Fixed`]; the last step is shortened to land on `t`.
    pub rk4_step: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_steps: 1_000_000,
            method: Method::DopriAdaptive,
            rk4_step: 1e-3,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        let ok = self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.rel_tol.is_finite()
            && self.abs_tol.is_finite()
            && self.max_steps >= 1
            && self.rk4_step > 0.0
            && self.rk4_step.is_finite();
        if ok {
            Ok(())
        } else {
            Err(FlowError::InvalidConfig)
        }
    }

    /// Same configuration with both tolerances divided by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            rel_tol: self.rel_tol / factor,
            abs_tol: self.abs_tol / factor,
            // RK4 global error scales as h^4
            rk4_step: self.rk4_step / factor.powf(0.25),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub endpoint: DVector<f64>,
    /// dF/dx at the starting point; present only when sensitivities were requested.
    pub sensitivity: Option<DMatrix<f64>>,
    pub steps_taken: usize,
    /// Largest accepted local error estimate, scaled by `abs_tol + rel_tol*|y|`
    /// per component (so at most 1 on success). Zero for the fixed-step method.
    pub est_local_error: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("field undefined along the trajectory at t = {time}: {source}")]
    Domain { time: f64, source: EvalError },
    #[error("step limit {max_steps} exhausted at t = {time}")]
    StepLimit { max_steps: usize, time: f64 },
    #[error("step size underflow at t = {time}")]
    StepSizeUnderflow { time: f64 },
    #[error("integration time must be finite")]
    NonFiniteTime,
    #[error("integrator tolerances and step counts must be positive")]
    InvalidConfig,
}

/// Endpoint of the flow of `field` from `x` over time `t`.
pub fn integrate_flow(
    field: &VectorField,
    x: &DVector<f64>,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<FlowResult, FlowError> {
    run(field, x, t, cfg, false)
}

/// Endpoint and state sensitivity dF/dx of the flow of `field` from `x` over time `t`.
pub fn flow_sensitivity(
    field: &VectorField,
    x: &DVector<f64>,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<FlowResult, FlowError> {
    run(field, x, t, cfg, true)
}

fn run(
    field: &VectorField,
    x: &DVector<f64>,
    t: f64,
    cfg: &IntegratorConfig,
    with_sensitivity: bool,
) -> Result<FlowResult, FlowError> {
    cfg.validate()?;
    if !t.is_finite() {
        return Err(FlowError::NonFiniteTime);
    }
    assert_eq!(
        x.len(),
        field.dimension(),
        "point dimension does not match field"
    );
    let n = field.dimension();
    if t == 0.0 {
        return Ok(FlowResult {
            endpoint: x.clone(),
            sensitivity: with_sensitivity.then(|| DMatrix::identity(n, n)),
            steps_taken: 0,
            est_local_error: 0.0,
        });
    }
    let reversed;
    let field = if t < 0.0 {
        reversed = field.negated();
        &reversed
    } else {
        field
    };
    let system = Augmented {
        field,
        n,
        with_sensitivity,
    };
    let mut y = vec![0.0; system.len()];
    y[..n].copy_from_slice(x.as_slice());
    if with_sensitivity {
        for i in 0..n {
            y[n + i * n + i] = 1.0;
        }
    }
    let span = t.abs();
    let (steps_taken, est_local_error) = match cfg.method {
        Method::DopriAdaptive => dopri5(&system, &mut y, span, cfg)?,
        Method::Rk4Fixed => (rk4(&system, &mut y, span, cfg.rk4_step)?, 0.0),
    };
    let endpoint = DVector::from_column_slice(&y[..n]);
    let sensitivity = with_sensitivity.then(|| DMatrix::from_column_slice(n, n, &y[n..]));
    Ok(FlowResult {
        endpoint,
        sensitivity,
        steps_taken,
        est_local_error,
    })
}

/// State followed by the column-major sensitivity matrix.
struct Augmented<'a> {
    field: &'a VectorField,
    n: usize,
    with_sensitivity: bool,
}

impl Augmented<'_> {
    fn len(&self) -> usize {
        if self.with_sensitivity {
            self.n + self.n * self.n
        } else {
            self.n
        }
    }

    fn rhs(&self, y: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let n = self.n;
        let state = &y[..n];
        let v = self.field.eval(state)?;
        out[..n].copy_from_slice(v.as_slice());
        if self.with_sensitivity {
            let jac = self.field.jacobian(state)?;
            let phi = &y[n..];
            for col in 0..n {
                for row in 0..n {
                    let mut acc = 0.0;
                    for l in 0..n {
                        acc += jac[(row, l)] * phi[col * n + l];
                    }
                    out[n + col * n + row] = acc;
                }
            }
        }
        Ok(())
    }
}

fn rk4(sys: &Augmented<'_>, y: &mut [f64], span: f64, step: f64) -> Result<usize, FlowError> {
    let steps = (span / step).ceil().max(1.0) as usize;
    let h = span / steps as f64;
    let dim = y.len();
    let (mut k1, mut k2, mut k3, mut k4) = (
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
    );
    let mut tmp = vec![0.0; dim];
    let offset = |tmp: &mut [f64], y: &[f64], k: &[f64], scale: f64| {
        for i in 0..dim {
            tmp[i] = y[i] + scale * k[i];
        }
    };
    for s in 0..steps {
        let time = s as f64 * h;
        let domain = |source| FlowError::Domain { time, source };
        sys.rhs(y, &mut k1).map_err(domain)?;
        offset(&mut tmp, y, &k1, 0.5 * h);
        sys.rhs(&tmp, &mut k2).map_err(domain)?;
        offset(&mut tmp, y, &k2, 0.5 * h);
        sys.rhs(&tmp, &mut k3).map_err(domain)?;
        offset(&mut tmp, y, &k3, h);
        sys.rhs(&tmp, &mut k4).map_err(domain)?;
        for i in 0..dim {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(steps)
}

// Dormand-Prince 5(4) tableau.
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
// difference between the fifth- and embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], cfg: &IntegratorConfig) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / err.len() as f64).sqrt()
}

fn initial_step(
    sys: &Augmented<'_>,
    y: &[f64],
    f0: &[f64],
    span: f64,
    cfg: &IntegratorConfig,
) -> f64 {
    let scaled = |v: &[f64]| {
        let s: f64 = v
            .iter()
            .zip(y)
            .map(|(a, b)| (a / (cfg.abs_tol + cfg.rel_tol * b.abs())).powi(2))
            .sum();
        (s / v.len() as f64).sqrt()
    };
    let d0 = scaled(y);
    let d1 = scaled(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    if sys.rhs(&y1, &mut f1).is_err() {
        return h0 * 1e-3;
    }
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled(&diff) / h0;
    let dmax = d1.max(d2);
    let h1 = if dmax <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dmax).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(span)
}

fn dopri5(
    sys: &Augmented<'_>,
    y: &mut [f64],
    span: f64,
    cfg: &IntegratorConfig,
) -> Result<(usize, f64), FlowError> {
    let dim = y.len();
    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; dim]).collect();
    let mut stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut err = vec![0.0; dim];

    sys.rhs(y, &mut k[0])
        .map_err(|source| FlowError::Domain { time: 0.0, source })?;
    let mut h = initial_step(sys, y, &k[0], span, cfg);
    let mut time = 0.0;
    let mut accepted = 0usize;
    let mut attempts = 0usize;
    let mut fac_old = 1e-4_f64;
    let mut worst = 0.0_f64;
    let expo = 0.2 - BETA * 0.75;

    while time < span {
        if attempts >= cfg.max_steps {
            return Err(FlowError::StepLimit {
                max_steps: cfg.max_steps,
                time,
            });
        }
        attempts += 1;
        // stretch by up to 1% rather than leave a sliver before the endpoint
        let last = time + 1.01 * h >= span;
        if last {
            h = span - time;
        }
        if h <= 16.0 * f64::EPSILON * span {
            return Err(FlowError::StepSizeUnderflow { time });
        }

        let mut fault = None;
        for s in 1..7 {
            for i in 0..dim {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += h * A[s][j] * kj[i];
                }
                stage[i] = acc;
            }
            if s == 6 {
                y_new.copy_from_slice(&stage);
            }
            if let Err(e) = sys.rhs(&stage, &mut k[s]) {
                fault = Some(e);
                break;
            }
        }
        if let Some(source) = fault {
            // a trial stage left the domain; retry with a shorter step
            h *= 0.25;
            if h <= 16.0 * f64::EPSILON * span {
                return Err(FlowError::Domain { time, source });
            }
            continue;
        }

        for i in 0..dim {
            err[i] = h * (0..7).map(|s| E[s] * k[s][i]).sum::<f64>();
        }
        let e = error_norm(&err, y, &y_new, cfg);
        let fac11 = e.powf(expo);
        if e <= 1.0 {
            let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            fac_old = e.max(1e-4);
            worst = worst.max(e);
            time = if last { span } else { time + h };
            y.copy_from_slice(&y_new);
            k.swap(0, 6);
            accepted += 1;
            h /= fac;
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
        }
    }
    Ok((accepted, worst))
}
