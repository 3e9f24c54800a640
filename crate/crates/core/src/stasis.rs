//! K-stasis points: where a strictly positive probability weighting of the
//! fields vanishes, and whether the same weighting of their Jacobians is
//! non-singular (regularity).
//!
//! Two entry modes share this module. With the weights pinned,
//! [`find_stasis`] solves for the point by Newton's method. With the point
//! pinned, [`find_weights`] solves for the weighting by least squares over
//! the probability simplex.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dsl::{EvalError, VectorField};
use crate::linalg::{lu_solve, rank, singular_value_range};

/// Smallest admissible weight; encodes strict positivity.
pub const DEFAULT_MIN_WEIGHT: f64 = 1e-9;
/// Allowed deviation of the weight sum from one.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Iteration cap for [`find_stasis`].
pub const MAX_STASIS_ITERATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StasisError {
    #[error("need at least two vector fields, got {0}")]
    TooFewFields(usize),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{weights} weights given for {fields} fields")]
    WeightCountMismatch { weights: usize, fields: usize },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("field {field} cannot be evaluated: {source}")]
    Eval { field: usize, source: EvalError },
    #[error(
        "Newton iteration did not converge in {iterations} iterations (residual {residual_norm:e})"
    )]
    NewtonDivergence {
        iterations: usize,
        residual_norm: f64,
    },
    #[error("weighted Jacobian is singular (sigma_min {sigma_min:e}, residual {residual_norm:e}); likely a non-regular stasis point")]
    SingularJacobian {
        point: DVector<f64>,
        residual_norm: f64,
        sigma_min: f64,
    },
    #[error("no positive weighting cancels the fields here (best residual {residual_norm:e})")]
    Infeasible {
        weights: Vec<f64>,
        residual_norm: f64,
    },
    #[error("best weighting pins weights {pinned:?} at the lower bound; stasis requires strictly positive weights")]
    WeightOnBoundary {
        weights: Vec<f64>,
        pinned: Vec<usize>,
    },
}

/// A probability weighting with every entry at least the configured minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(Vec<f64>);

impl Weights {
    /// Validates with the default lower bound [`DEFAULT_MIN_WEIGHT`].
    pub fn new(values: Vec<f64>) -> Result<Self, StasisError> {
        Self::with_min(values, DEFAULT_MIN_WEIGHT)
    }

    pub fn with_min(values: Vec<f64>, min_weight: f64) -> Result<Self, StasisError> {
        if values.is_empty() {
            return Err(StasisError::InvalidWeights("empty weighting".into()));
        }
        if let Some((j, w)) = values
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < min_weight)
        {
            return Err(StasisError::InvalidWeights(format!(
                "weight {} is {w}, below the minimum {min_weight}",
                j + 1
            )));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(StasisError::InvalidWeights(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        Ok(Self(values))
    }

    /// Rescales positive values to sum to one, then validates.
    pub fn normalized(values: Vec<f64>) -> Result<Self, StasisError> {
        let sum: f64 = values.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(StasisError::InvalidWeights(format!(
                "cannot normalize sum {sum}"
            )));
        }
        Self::new(values.into_iter().map(|w| w / sum).collect())
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Cut-off below which the smallest singular value counts as zero:
/// `max(relative * sigma_max, floor)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityThreshold {
    pub relative: f64,
    pub floor: f64,
}

impl Default for RegularityThreshold {
    fn default() -> Self {
        Self {
            relative: 1e-8,
            floor: 1e-12,
        }
    }
}

impl RegularityThreshold {
    pub fn cutoff(&self, sigma_max: f64) -> f64 {
        (self.relative * sigma_max).max(self.floor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    /// sum_j m_j DV_j(x0)
    pub weighted_jacobian: DMatrix<f64>,
    pub smallest_singular_value: f64,
    pub largest_singular_value: f64,
    /// sigma_max / sigma_min; infinite when sigma_min is zero.
    pub condition_number: f64,
    /// The cut-off actually applied.
    pub threshold: f64,
    pub is_regular: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StasisPoint {
    pub x0: DVector<f64>,
    pub weights: Weights,
    /// Euclidean norm of sum_j m_j V_j(x0).
    pub residual_norm: f64,
    pub regularity: RegularityReport,
    pub iterations: usize,
}

/// Result of [`find_weights`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSolution {
    pub weights: Weights,
    pub residual_norm: f64,
    /// Dimension of the affine set {m : sum m_j V_j(x) = 0, sum m_j = 1};
    /// zero when the weighting is unique.
    pub solution_set_dim: usize,
}

fn check_fields(fields: &[VectorField]) -> Result<usize, StasisError> {
    if fields.len() < 2 {
        return Err(StasisError::TooFewFields(fields.len()));
    }
    let n = fields[0].dimension();
    for f in fields {
        if f.dimension() != n {
            return Err(StasisError::DimensionMismatch {
                expected: n,
                found: f.dimension(),
            });
        }
    }
    Ok(n)
}

fn check_problem(
    fields: &[VectorField],
    weights: Option<&Weights>,
    x: &DVector<f64>,
) -> Result<usize, StasisError> {
    let n = check_fields(fields)?;
    if x.len() != n {
        return Err(StasisError::DimensionMismatch {
            expected: n,
            found: x.len(),
        });
    }
    if let Some(w) = weights {
        if w.len() != fields.len() {
            return Err(StasisError::WeightCountMismatch {
                weights: w.len(),
                fields: fields.len(),
            });
        }
    }
    Ok(n)
}

fn eval_field(
    field: &VectorField,
    index: usize,
    x: &DVector<f64>,
) -> Result<DVector<f64>, StasisError> {
    field
        .eval(x.as_slice())
        .map_err(|source| StasisError::Eval {
            field: index + 1,
            source,
        })
}

fn jacobian_field(
    field: &VectorField,
    index: usize,
    x: &DVector<f64>,
) -> Result<DMatrix<f64>, StasisError> {
    field
        .jacobian(x.as_slice())
        .map_err(|source| StasisError::Eval {
            field: index + 1,
            source,
        })
}

/// sum_j m_j V_j(x)
pub fn stasis_residual(
    fields: &[VectorField],
    weights: &Weights,
    x: &DVector<f64>,
) -> Result<DVector<f64>, StasisError> {
    let n = check_problem(fields, Some(weights), x)?;
    let mut acc = DVector::zeros(n);
    for (j, (f, m)) in fields.iter().zip(weights.as_slice()).enumerate() {
        acc += eval_field(f, j, x)? * *m;
    }
    Ok(acc)
}

/// sum_j m_j DV_j(x)
pub fn weighted_jacobian(
    fields: &[VectorField],
    weights: &Weights,
    x: &DVector<f64>,
) -> Result<DMatrix<f64>, StasisError> {
    let n = check_problem(fields, Some(weights), x)?;
    let mut acc = DMatrix::zeros(n, n);
    for (j, (f, m)) in fields.iter().zip(weights.as_slice()).enumerate() {
        acc += jacobian_field(f, j, x)? * *m;
    }
    Ok(acc)
}

pub fn check_regularity(
    fields: &[VectorField],
    weights: &Weights,
    x: &DVector<f64>,
) -> Result<RegularityReport, StasisError> {
    check_regularity_with(fields, weights, x, RegularityThreshold::default())
}

pub fn check_regularity_with(
    fields: &[VectorField],
    weights: &Weights,
    x: &DVector<f64>,
    threshold: RegularityThreshold,
) -> Result<RegularityReport, StasisError> {
    let jac = weighted_jacobian(fields, weights, x)?;
    Ok(regularity_of(jac, threshold))
}

pub(crate) fn regularity_of(jac: DMatrix<f64>, threshold: RegularityThreshold) -> RegularityReport {
    let (lo, hi) = singular_value_range(&jac);
    let cutoff = threshold.cutoff(hi);
    RegularityReport {
        weighted_jacobian: jac,
        smallest_singular_value: lo,
        largest_singular_value: hi,
        condition_number: if lo == 0.0 { f64::INFINITY } else { hi / lo },
        threshold: cutoff,
        is_regular: lo > cutoff,
    }
}

/// Newton's method on `x -> sum_j m_j V_j(x)` from `x_guess`, with step
/// halving whenever a full step fails to reduce the residual. Accepts once
/// the Euclidean residual is at most `tol`.
pub fn find_stasis(
    fields: &[VectorField],
    weights: &Weights,
    x_guess: &DVector<f64>,
    tol: f64,
) -> Result<StasisPoint, StasisError> {
    check_problem(fields, Some(weights), x_guess)?;
    let threshold = RegularityThreshold::default();
    let mut x = x_guess.clone();
    let mut r = stasis_residual(fields, weights, &x)?;
    for iteration in 0..=MAX_STASIS_ITERATIONS {
        let report = regularity_of(weighted_jacobian(fields, weights, &x)?, threshold);
        let norm = r.norm();
        if !report.is_regular {
            return Err(StasisError::SingularJacobian {
                point: x,
                residual_norm: norm,
                sigma_min: report.smallest_singular_value,
            });
        }
        if norm <= tol {
            return Ok(StasisPoint {
                x0: x,
                weights: weights.clone(),
                residual_norm: norm,
                regularity: report,
                iterations: iteration,
            });
        }
        if iteration == MAX_STASIS_ITERATIONS {
            break;
        }
        let step =
            lu_solve(&report.weighted_jacobian, &(-&r)).ok_or(StasisError::SingularJacobian {
                point: x.clone(),
                residual_norm: norm,
                sigma_min: report.smallest_singular_value,
            })?;
        let mut scale = 1.0;
        let (mut x_next, mut r_next);
        loop {
            x_next = &x + &step * scale;
            r_next = stasis_residual(fields, weights, &x_next);
            match &r_next {
                Ok(v) if v.norm() < norm => break,
                _ if scale < 1.0 / 128.0 => break,
                _ => scale *= 0.5,
            }
        }
        x = x_next;
        r = r_next?;
    }
    Err(StasisError::NewtonDivergence {
        iterations: MAX_STASIS_ITERATIONS,
        residual_norm: r.norm(),
    })
}

/// Minimizes `|sum_j m_j V_j(x)|` over weightings with `sum m = 1` and
/// `m_j >= min_weight`, by a primal active-set method on the quadratic
/// program `min m^T G m`, G the Gram matrix of the field values.
///
/// Accepts when the optimal residual is at most `tol` and no weight sits
/// on the lower bound.
pub fn find_weights(
    fields: &[VectorField],
    x: &DVector<f64>,
    tol: f64,
) -> Result<WeightSolution, StasisError> {
    find_weights_with_min(fields, x, tol, DEFAULT_MIN_WEIGHT)
}

pub fn find_weights_with_min(
    fields: &[VectorField],
    x: &DVector<f64>,
    tol: f64,
    min_weight: f64,
) -> Result<WeightSolution, StasisError> {
    let n = check_problem(fields, None, x)?;
    let k = fields.len();
    let mut values = DMatrix::zeros(n, k);
    for (j, f) in fields.iter().enumerate() {
        values.set_column(j, &eval_field(f, j, x)?);
    }
    let (m, pinned) = simplex_least_squares(&values, min_weight);
    let residual_norm = (&values * &m).norm();
    let weights: Vec<f64> = m.iter().copied().collect();
    if residual_norm > tol {
        return Err(StasisError::Infeasible {
            weights,
            residual_norm,
        });
    }
    if !pinned.is_empty() {
        return Err(StasisError::WeightOnBoundary { weights, pinned });
    }
    let mut constraint = values.clone().insert_row(n, 1.0);
    constraint.row_mut(n).fill(1.0);
    let solution_set_dim = k - rank(&constraint, 1e-10);
    Ok(WeightSolution {
        weights: Weights::with_min(weights, min_weight)?,
        residual_norm,
        solution_set_dim,
    })
}

/// Active-set solve of `min |A m|^2` s.t. `sum m = 1`, `m >= lower`.
/// Returns the minimizer and the indices held at the bound.
fn simplex_least_squares(a: &DMatrix<f64>, lower: f64) -> (DVector<f64>, Vec<usize>) {
    let k = a.ncols();
    let scale = (a.transpose() * a).amax().max(f64::MIN_POSITIVE);
    let mut m = DVector::from_element(k, 1.0 / k as f64);
    let mut active = vec![false; k];

    for _ in 0..100 * k.max(1) {
        let free: Vec<usize> = (0..k).filter(|&i| !active[i]).collect();
        let target = equality_ls(a, &free, &active, lower);
        let step: DVector<f64> =
            DVector::from_fn(k, |i, _| if active[i] { 0.0 } else { target[i] - m[i] });

        if step.amax() <= 1e-15 {
            // multiplier of the sum constraint from the free gradient entries
            let grad = a.transpose() * (a * &m) * 2.0;
            let lambda = free.iter().map(|&i| grad[i]).sum::<f64>() / free.len() as f64;
            let worst = (0..k)
                .filter(|&i| active[i])
                .map(|i| (i, grad[i] - lambda))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match worst {
                Some((i, mu)) if mu < -1e-13 * scale => active[i] = false,
                _ => break,
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        for &i in &free {
            if step[i] < 0.0 {
                let limit = (m[i] - lower) / -step[i];
                if limit < alpha {
                    alpha = limit;
                    blocking = Some(i);
                }
            }
        }
        m += &step * alpha;
        if let Some(i) = blocking {
            if free.len() > 1 {
                active[i] = true;
                m[i] = lower;
            }
        }
    }
    let pinned = (0..k).filter(|&i| active[i]).collect();
    (m, pinned)
}

/// Minimizer of `|A m|` over the free coordinates with the others fixed at
/// `lower` and `sum m = 1`. The constraint is eliminated with
/// `m_F = c/nf + sum_i y_i (e_i - e_last)`; the reduced problem is solved
/// in the least-norm sense so rank-deficient sets are fine.
fn equality_ls(a: &DMatrix<f64>, free: &[usize], active: &[bool], lower: f64) -> DVector<f64> {
    let (n, k) = a.shape();
    let nf = free.len();
    let mut out = DVector::from_element(k, lower);
    if nf == 0 {
        return out;
    }
    let share = (1.0 - lower * (k - nf) as f64) / nf as f64;
    let mut base = DVector::zeros(n);
    for (col, &pinned) in a.column_iter().zip(active) {
        base += col * if pinned { lower } else { share };
    }
    for &i in free {
        out[i] = share;
    }
    if nf == 1 {
        return out;
    }
    let last = free[nf - 1];
    let mut reduced = DMatrix::zeros(n, nf - 1);
    for (c, &i) in free[..nf - 1].iter().enumerate() {
        reduced.set_column(c, &(a.column(i) - a.column(last)));
    }
    let svd = reduced.svd(true, true);
    let eps = 1e-14 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    let y = svd
        .solve(&(-base), eps)
        .unwrap_or_else(|_| DVector::zeros(nf - 1));
    for (c, &i) in free[..nf - 1].iter().enumerate() {
        out[i] += y[c];
        out[last] -= y[c];
    }
    out
}
