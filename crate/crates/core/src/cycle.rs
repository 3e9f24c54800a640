//! K-cycles near a regular stasis point.
//!
//! Unknowns are the cycle points `x_1..x_k`, stacked into one vector of
//! length `n*k`. For a total time `delta` with leg times `delta * m_j`, the
//! system solved is
//!
//! ```text
//! block 0:  A(x, delta) = sum_j (F_j(x_j, delta m_j) - x_j) / delta
//! block j:  F_j(x_j, delta m_j) - x_{j+1}                 (j = 1..k-1)
//! ```
//!
//! `A` is the average velocity around the prospective cycle. Once the chain
//! blocks vanish, `delta * A` telescopes to `F_k(x_k, delta m_k) - x_1`, so
//! the last leg closes; [`solve_cycle`] still checks that closure
//! explicitly. At `delta = 0` the quotient has the removable limit
//! `sum_j m_j V_j(x_j)`, and the Jacobian is the block matrix
//!
//! ```text
//! [ m_1 DV_1   m_2 DV_2   ...   m_k DV_k ]
//! [   I          -I       ...      0     ]
//! [   0           I       -I  ...  0     ]
//! [                 ...                  ]
//! [   0     ...           I       -I     ]
//! ```
//!
//! whose determinant has the magnitude of `det(sum_j m_j DV_j)`. Regular
//! stasis points therefore give a non-singular system at `delta = 0`, and
//! Newton's method continues the solution branch to small positive `delta`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dsl::VectorField;
use crate::flow::{flow_sensitivity, integrate_flow, FlowError, IntegratorConfig};
use crate::linalg::{lu_solve, max_norm, singular_value_range};
use crate::stasis::{StasisError, Weights};

pub const DEFAULT_CYCLE_TOL: f64 = 1e-10;
pub const MAX_NEWTON_ITERATIONS: usize = 25;
/// Step halvings tried by the Armijo line search.
pub const MAX_STEP_HALVINGS: usize = 8;
/// The Newton matrix counts as singular when `sigma_min <= SINGULAR_RATIO * sigma_max`.
pub const SINGULAR_RATIO: f64 = 1e-10;
/// The final leg must close to within this multiple of the Newton tolerance.
pub const CLOSURE_FACTOR: f64 = 10.0;

const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CycleError {
    #[error(transparent)]
    Setup(#[from] StasisError),
    #[error("need at least two cycle points, got {0}")]
    TooFewPoints(usize),
    #[error("delta must be {0}")]
    InvalidDelta(&'static str),
    #[error("leg {leg} could not be integrated: {source}")]
    Flow { leg: usize, source: FlowError },
    #[error("field {field} undefined at cycle point: {source}")]
    Eval {
        field: usize,
        source: crate::dsl::EvalError,
    },
    #[error(
        "Newton iteration did not converge in {iterations} iterations (residual {residual:e})"
    )]
    NewtonDivergence { iterations: usize, residual: f64 },
    #[error("line search stalled at iteration {iteration} (residual {residual:e})")]
    LineSearchStalled { iteration: usize, residual: f64 },
    #[error("cycle Jacobian is singular at iteration {iteration} (sigma_min {sigma_min:e}, sigma_max {sigma_max:e})")]
    SingularJacobian {
        iteration: usize,
        sigma_min: f64,
        sigma_max: f64,
    },
    #[error("final leg misses the first point by {closure:e} (limit {limit:e}); integrator tolerance too loose for the Newton tolerance")]
    ClosureFailure { closure: f64, limit: f64 },
    #[error("no cycle at the smallest delta {delta}: {source}")]
    BranchLostAtStart { delta: f64, source: Box<CycleError> },
}

/// The points x_1..x_k of a prospective cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclePoints {
    points: Vec<DVector<f64>>,
}

impl CyclePoints {
    pub fn new(points: Vec<DVector<f64>>) -> Result<Self, CycleError> {
        if points.len() < 2 {
            return Err(CycleError::TooFewPoints(points.len()));
        }
        let n = points[0].len();
        if let Some(p) = points.iter().find(|p| p.len() != n) {
            return Err(StasisError::DimensionMismatch {
                expected: n,
                found: p.len(),
            }
            .into());
        }
        Ok(Self { points })
    }

    /// All k points placed at `x0`.
    pub fn constant(x0: &DVector<f64>, k: usize) -> Result<Self, CycleError> {
        Self::new(vec![x0.clone(); k])
    }

    pub fn from_stacked(z: &DVector<f64>, k: usize) -> Result<Self, CycleError> {
        if k < 2 {
            return Err(CycleError::TooFewPoints(k));
        }
        let n = z.len() / k;
        Self::new((0..k).map(|j| z.rows(j * n, n).into_owned()).collect())
    }

    pub fn stacked(&self) -> DVector<f64> {
        let n = self.dimension();
        let mut z = DVector::zeros(n * self.len());
        for (j, p) in self.points.iter().enumerate() {
            z.rows_mut(j * n, n).copy_from(p);
        }
        z
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.points[0].len()
    }
}

/// A solved cycle: following field j from `points[j]` for `leg_times[j]`
/// reaches `points[j + 1]`, and the last leg returns to `points[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KCycle {
    pub points: CyclePoints,
    pub delta: f64,
    /// `delta * m_j`, as computed.
    pub leg_times: Vec<f64>,
    /// Max-norm mismatch of leg j, `|F_j(x_j, delta m_j) - x_{j+1}|`, cyclically.
    pub leg_mismatches: Vec<f64>,
    /// Largest entry of `leg_mismatches`.
    pub closure_residual: f64,
    pub newton_iters: usize,
    /// Max-norm of the stacked residual at acceptance.
    pub residual_norm: f64,
}

/// Per-leg re-integration check of a cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosureCheck {
    pub leg_mismatches: Vec<f64>,
    pub closure: f64,
}

fn check_setup(
    fields: &[VectorField],
    weights: &Weights,
    pts: &CyclePoints,
) -> Result<(), CycleError> {
    if fields.len() < 2 {
        return Err(StasisError::TooFewFields(fields.len()).into());
    }
    if weights.len() != fields.len() {
        return Err(StasisError::WeightCountMismatch {
            weights: weights.len(),
            fields: fields.len(),
        }
        .into());
    }
    if pts.len() != fields.len() {
        return Err(StasisError::WeightCountMismatch {
            weights: pts.len(),
            fields: fields.len(),
        }
        .into());
    }
    let n = fields[0].dimension();
    for d in fields
        .iter()
        .map(VectorField::dimension)
        .chain([pts.dimension()])
    {
        if d != n {
            return Err(StasisError::DimensionMismatch {
                expected: n,
                found: d,
            }
            .into());
        }
    }
    Ok(())
}

fn check_delta(delta: f64, allow_zero: bool) -> Result<(), CycleError> {
    if !delta.is_finite() {
        return Err(CycleError::InvalidDelta("finite"));
    }
    if delta < 0.0 || (!allow_zero && delta == 0.0) {
        return Err(CycleError::InvalidDelta(if allow_zero {
            "non-negative"
        } else {
            "positive"
        }));
    }
    Ok(())
}

/// Leg times `delta * m_j`.
pub fn leg_times(weights: &Weights, delta: f64) -> Vec<f64> {
    weights.as_slice().iter().map(|m| delta * m).collect()
}

struct Leg {
    endpoint: DVector<f64>,
    sensitivity: Option<DMatrix<f64>>,
}

fn integrate_legs(
    fields: &[VectorField],
    weights: &Weights,
    pts: &CyclePoints,
    delta: f64,
    cfg: &IntegratorConfig,
    sensitivities: bool,
) -> Result<Vec<Leg>, CycleError> {
    fields
        .iter()
        .zip(pts.points())
        .zip(leg_times(weights, delta))
        .enumerate()
        .map(|(j, ((f, x), t))| {
            let r = if sensitivities {
                flow_sensitivity(f, x, t, cfg)
            } else {
                integrate_flow(f, x, t, cfg)
            }
            .map_err(|source| CycleError::Flow { leg: j + 1, source })?;
            Ok(Leg {
                endpoint: r.endpoint,
                sensitivity: r.sensitivity,
            })
        })
        .collect()
}

fn average_velocity_from_legs(legs: &[Leg], pts: &CyclePoints, delta: f64) -> DVector<f64> {
    let mut acc = DVector::zeros(pts.dimension());
    // fixed summation order j = 1..k
    for (leg, x) in legs.iter().zip(pts.points()) {
        acc += &leg.endpoint - x;
    }
    acc / delta
}

fn average_velocity_at_zero(
    fields: &[VectorField],
    weights: &Weights,
    pts: &CyclePoints,
) -> Result<DVector<f64>, CycleError> {
    let mut acc = DVector::zeros(pts.dimension());
    for (j, ((f, x), m)) in fields
        .iter()
        .zip(pts.points())
        .zip(weights.as_slice())
        .enumerate()
    {
        let v = f.eval(x.as_slice()).map_err(|source| CycleError::Eval {
            field: j + 1,
            source,
        })?;
        acc += v * *m;
    }
    Ok(acc)
}

/// Average velocity `sum_j (F_j(x_j, delta m_j) - x_j) / delta`; at
/// `delta = 0` its limit `sum_j m_j V_j(x_j)`.
pub fn average_velocity(
    fields: &[VectorField],
    weights: &Weights,
    pts: &CyclePoints,
    delta: f64,
    cfg: &IntegratorConfig,
) -> Result<DVector<f64>, CycleError> {
    check_setup(fields, weights, pts)?;
    check_delta(delta, true)?;
    if delta == 0.0 {
        return average_velocity_at_zero(fields, weights, pts);
    }
    let legs = integrate_legs(fields, weights, pts, delta, cfg, false)?;
    Ok(average_velocity_from_legs(&legs, pts, delta))
}

fn assemble_residual(
    top: DVector<f64>,
    endpoints: impl Iterator<Item = DVector<f64>>,
    pts: &CyclePoints,
) -> DVector<f64> {
    let (n, k) = (pts.dimension(), pts.len());
    let mut r = DVector::zeros(n * k);
    r.rows_mut(0, n).copy_from(&top);
    for (j, end) in endpoints.take(k - 1).enumerate() {
        r.rows_mut((j + 1) * n, n)
            .copy_from(&(end - &pts.points()[j + 1]));
    }
    r
}

/// Stacked system: the average velocity followed by the k-1 chain
/// mismatches `F_j(x_j, delta m_j) - x_{j+1}`.
pub fn cycle_residual(
    fields: &[VectorField],
    weights: &Weights,
    pts: &CyclePoints,
    delta: f64,
    cfg: &IntegratorConfig,
) -> Result<DVector<f64>, CycleError> {
    check_setup(fields, weights, pts)?;
    check_delta(delta, true)?;
    if delta == 0.0 {
        let top = average_velocity_at_zero(fields, weights, pts)?;
        return Ok(assemble_residual(top, pts.points().iter().cloned(), pts));
    }
    let legs = integrate_legs(fields, weights, pts, delta, cfg, false)?;
    let top = average_velocity_from_legs(&legs, pts, delta);
    Ok(assemble_residual(
        top,
        legs.into_iter().map(|l| l.endpoint),
        pts,
    ))
}

fn chain_blocks(
    jac: &mut DMatrix<f64>,
    n: usize,
    k: usize,
    sens: impl Iterator<Item = DMatrix<f64>>,
) {
    let neg_identity = -DMatrix::<f64>::identity(n, n);
    for (j, phi) in sens.take(k - 1).enumerate() {
        let row = (j + 1) * n;
        jac.view_mut((row, j * n), (n, n)).copy_from(&phi);
        jac.view_mut((row, (j + 1) * n), (n, n))
            .copy_from(&neg_identity);
    }
}

/// Jacobian of [`cycle_residual`] with respect to the stacked points.
///
/// At `delta = 0` this is the analytic block matrix with top row
/// `m_j DV_j(x_j)`; for `delta > 0` the top row is `(Phi_j - I) / delta` and
/// the chain blocks are `Phi_j` and `-I`, with `Phi_j` the flow sensitivity
/// of leg j.
pub fn cycle_jacobian(
    fields: &[VectorField],
    weights: &Weights,
    pts: &CyclePoints,
    delta: f64,
    cfg: &IntegratorConfig,
) -> Result<DMatrix<f64>, CycleError> {
    check_setup(fields, weights, pts)?;
    check_delta(delta, true)?;
    if delta == 0.0 {
        return analytic_jacobian(fields, weights, pts);
    }
    let legs = integrate_legs(fields, weights, pts, delta, cfg, true)?;
    Ok(linearize_from_legs(&legs, pts, delta).1)
}

fn analytic_jacobian(
    fields: &[VectorField],
    weights: &Weights,
    pts: &CyclePoints,
) -> Result<DMatrix<f64>, CycleError> {
    let (n, k) = (pts.dimension(), pts.len());
    let mut jac = DMatrix::zeros(n * k, n * k);
    for (j, ((f, x), m)) in fields
        .iter()
        .zip(pts.points())
        .zip(weights.as_slice())
        .enumerate()
    {
        let dv = f
            .jacobian(x.as_slice())
            .map_err(|source| CycleError::Eval {
                field: j + 1,
                source,
            })?;
        jac.view_mut((0, j * n), (n, n)).copy_from(&(dv * *m));
    }
    chain_blocks(&mut jac, n, k, std::iter::repeat(DMatrix::identity(n, n)));
    Ok(jac)
}

fn linearize_from_legs(
    legs: &[Leg],
    pts: &CyclePoints,
    delta: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let (n, k) = (pts.dimension(), pts.len());
    let top = average_velocity_from_legs(legs, pts, delta);
    let residual = assemble_residual(top, legs.iter().map(|l| l.endpoint.clone()), pts);
    let mut jac = DMatrix::zeros(n * k, n * k);
    let identity = DMatrix::<f64>::identity(n, n);
    let sens: Vec<DMatrix<f64>> = legs
        .iter()
        .map(|l| {
            l.sensitivity
                .clone()
                .expect("legs integrated with sensitivities")
        })
        .collect();
    for (j, phi) in sens.iter().enumerate() {
        jac.view_mut((0, j * n), (n, n))
            .copy_from(&((phi - &identity) / delta));
    }
    chain_blocks(&mut jac, n, k, sens.into_iter());
    (residual, jac)
}

struct Linearization {
    residual: DVector<f64>,
    jacobian: DMatrix<f64>,
    endpoints: Vec<DVector<f64>>,
}

fn linearize(
    fields: &[VectorField],
    weights: &Weights,
    pts: &CyclePoints,
    delta: f64,
    cfg: &IntegratorConfig,
) -> Result<Linearization, CycleError> {
    let legs = integrate_legs(fields, weights, pts, delta, cfg, true)?;
    let (residual, jacobian) = linearize_from_legs(&legs, pts, delta);
    Ok(Linearization {
        residual,
        jacobian,
        endpoints: legs.into_iter().map(|l| l.endpoint).collect(),
    })
}

fn leg_mismatches(endpoints: &[DVector<f64>], pts: &CyclePoints) -> Vec<f64> {
    let k = pts.len();
    endpoints
        .iter()
        .enumerate()
        .map(|(j, end)| max_norm(&(end - &pts.points()[(j + 1) % k])))
        .collect()
}

/// Damped Newton on [`cycle_residual`] at fixed `delta > 0`, starting from
/// `seed`. Converges when the max-norm of the stacked residual is at most
/// `tol`; the closing leg `F_k(x_k, delta m_k) = x_1` must then hold to
/// `CLOSURE_FACTOR * tol`.
pub fn solve_cycle(
    fields: &[VectorField],
    weights: &Weights,
    seed: &CyclePoints,
    delta: f64,
    tol: f64,
    cfg: &IntegratorConfig,
) -> Result<KCycle, CycleError> {
    check_setup(fields, weights, seed)?;
    check_delta(delta, false)?;
    let k = seed.len();
    let mut pts = seed.clone();
    let mut lin = linearize(fields, weights, &pts, delta, cfg)?;

    for iteration in 0..=MAX_NEWTON_ITERATIONS {
        let res_max = max_norm(&lin.residual);
        if res_max <= tol {
            let mismatches = leg_mismatches(&lin.endpoints, &pts);
            let closing = mismatches[k - 1];
            let limit = CLOSURE_FACTOR * tol;
            if closing > limit {
                return Err(CycleError::ClosureFailure {
                    closure: closing,
                    limit,
                });
            }
            let closure_residual = mismatches.iter().copied().fold(0.0, f64::max);
            return Ok(KCycle {
                points: pts,
                delta,
                leg_times: leg_times(weights, delta),
                leg_mismatches: mismatches,
                closure_residual,
                newton_iters: iteration,
                residual_norm: res_max,
            });
        }
        if iteration == MAX_NEWTON_ITERATIONS {
            return Err(CycleError::NewtonDivergence {
                iterations: iteration,
                residual: res_max,
            });
        }

        let (sigma_min, sigma_max) = singular_value_range(&lin.jacobian);
        if sigma_min <= SINGULAR_RATIO * sigma_max {
            return Err(CycleError::SingularJacobian {
                iteration,
                sigma_min,
                sigma_max,
            });
        }
        let z = pts.stacked();
        let step =
            lu_solve(&lin.jacobian, &(-&lin.residual)).ok_or(CycleError::SingularJacobian {
                iteration,
                sigma_min,
                sigma_max,
            })?;

        let current = lin.residual.norm();
        let mut alpha = 1.0;
        let mut fallback = None;
        let mut accepted = None;
        for _ in 0..=MAX_STEP_HALVINGS {
            let trial_pts = CyclePoints::from_stacked(&(&z + &step * alpha), k)?;
            if let Ok(trial) = linearize(fields, weights, &trial_pts, delta, cfg) {
                let norm = trial.residual.norm();
                if norm <= (1.0 - ARMIJO * alpha) * current {
                    accepted = Some((trial_pts, trial));
                    break;
                }
                if norm < current {
                    fallback = Some((trial_pts, trial));
                }
            }
            alpha *= 0.5;
        }
        match accepted.or(fallback) {
            Some((p, l)) => {
                pts = p;
                lin = l;
            }
            None => {
                return Err(CycleError::LineSearchStalled {
                    iteration,
                    residual: res_max,
                })
            }
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// Re-integrates every leg of `cycle` with `cfg` and reports the cyclic
/// mismatches.
pub fn check_closure(
    fields: &[VectorField],
    weights: &Weights,
    cycle: &KCycle,
    cfg: &IntegratorConfig,
) -> Result<ClosureCheck, CycleError> {
    check_setup(fields, weights, &cycle.points)?;
    let k = cycle.points.len();
    let mut mismatches = Vec::with_capacity(k);
    for (j, (f, x)) in fields.iter().zip(cycle.points.points()).enumerate() {
        let end = integrate_flow(f, x, cycle.leg_times[j], cfg)
            .map_err(|source| CycleError::Flow { leg: j + 1, source })?
            .endpoint;
        mismatches.push(max_norm(&(end - &cycle.points.points()[(j + 1) % k])));
    }
    let closure = mismatches.iter().copied().fold(0.0, f64::max);
    Ok(ClosureCheck {
        leg_mismatches: mismatches,
        closure,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ladder {
    /// `steps` values spaced geometrically from `delta_max / ratio` to `delta_max`.
    Geometric { ratio: f64 },
    /// `delta_max * i / steps` for i = 1..steps.
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub delta_max: f64,
    pub steps: usize,
    pub ladder: Ladder,
    pub max_bisections: usize,
}

impl SweepConfig {
    pub fn geometric(delta_max: f64, steps: usize) -> Self {
        Self {
            delta_max,
            steps,
            ladder: Ladder::Geometric { ratio: 1024.0 },
            max_bisections: 8,
        }
    }

    /// The target deltas, strictly increasing. A single step is `delta_max`.
    pub fn deltas(&self) -> Vec<f64> {
        let s = self.steps;
        if s <= 1 {
            return vec![self.delta_max; s];
        }
        match self.ladder {
            Ladder::Geometric { ratio } => {
                let lo = self.delta_max / ratio;
                (0..s)
                    .map(|i| {
                        if i == s - 1 {
                            self.delta_max
                        } else {
                            lo * ratio.powf(i as f64 / (s - 1) as f64)
                        }
                    })
                    .collect()
            }
            Ladder::Linear => (1..=s)
                .map(|i| self.delta_max * i as f64 / s as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub delta: f64,
    pub cycle: KCycle,
    /// max_j |x_j(delta) - x0| (Euclidean).
    pub max_distance_to_x0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
    /// Largest delta with an accepted cycle.
    pub largest_delta: f64,
    /// Why the branch was lost before `delta_max`, if it was.
    pub failure: Option<String>,
}

impl SweepResult {
    pub fn reached_target(&self) -> bool {
        self.failure.is_none()
    }

    /// The `count` records with the smallest deltas.
    pub fn tail(&self, count: usize) -> &[SweepRecord] {
        &self.records[..count.min(self.records.len())]
    }

    /// Least-squares slope of `ln max_distance_to_x0` against `ln delta`
    /// over the `count` smallest deltas; `None` with fewer than two usable points.
    pub fn loglog_slope(&self, count: usize) -> Option<f64> {
        loglog_slope(
            self.tail(count)
                .iter()
                .map(|r| (r.delta, r.max_distance_to_x0)),
        )
    }

    /// Whether the distance to x0 strictly decreases as delta decreases
    /// over the `count` smallest deltas.
    pub fn tail_is_monotone(&self, count: usize) -> bool {
        self.tail(count)
            .windows(2)
            .all(|w| w[0].max_distance_to_x0 < w[1].max_distance_to_x0)
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let count = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / count;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / count;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Continues the cycle branch from `x0` up the delta ladder. Each solve is
/// seeded with the previous cycle (the first with every point at `x0`). A
/// failed step is bisected toward the last accepted delta up to
/// `max_bisections` times before the branch is declared lost; failure at
/// the first delta is an error.
pub fn sweep_delta(
    fields: &[VectorField],
    weights: &Weights,
    x0: &DVector<f64>,
    sweep: &SweepConfig,
    tol: f64,
    cfg: &IntegratorConfig,
) -> Result<SweepResult, CycleError> {
    check_delta(sweep.delta_max, false)?;
    let k = fields.len();
    let mut seed = CyclePoints::constant(x0, k)?;
    check_setup(fields, weights, &seed)?;
    let mut records: Vec<SweepRecord> = Vec::new();
    let mut last_delta: Option<f64> = None;

    for target in sweep.deltas() {
        let mut attempt = target;
        let mut failures = 0;
        loop {
            match solve_cycle(fields, weights, &seed, attempt, tol, cfg) {
                Ok(cycle) => {
                    let max_distance_to_x0 = cycle
                        .points
                        .points()
                        .iter()
                        .map(|p| (p - x0).norm())
                        .fold(0.0, f64::max);
                    seed = cycle.points.clone();
                    last_delta = Some(attempt);
                    records.push(SweepRecord {
                        delta: attempt,
                        cycle,
                        max_distance_to_x0,
                    });
                    if attempt == target {
                        break;
                    }
                    attempt = target;
                }
                Err(err) => {
                    let Some(prev) = last_delta else {
                        return Err(CycleError::BranchLostAtStart {
                            delta: attempt,
                            source: Box::new(err),
                        });
                    };
                    failures += 1;
                    let next = prev + 0.5 * (attempt - prev);
                    if failures > sweep.max_bisections || next <= prev {
                        return Ok(SweepResult {
                            records,
                            largest_delta: prev,
                            failure: Some(format!("branch lost near delta = {attempt}: {err}")),
                        });
                    }
                    attempt = next;
                }
            }
        }
    }
    Ok(SweepResult {
        largest_delta: last_delta.unwrap_or(0.0),
        records,
        failure: None,
    })
}
