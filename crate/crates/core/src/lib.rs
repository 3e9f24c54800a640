//! Switched-system solver for K-stasis points and the small K-cycles that
//! surround regular ones.
//!
//! Given vector fields V_1..V_k on R^n, a K-stasis point x0 is a point where
//! some strictly positive probability weighting m satisfies
//! `sum_j m_j V_j(x0) = 0`. When the weighted Jacobian `sum_j m_j DV_j(x0)` is
//! non-singular, every small total time `delta > 0` admits a closed chain
//! x_1 -> x_2 -> ... -> x_k -> x_1 that follows field j for time `delta * m_j`.
//! The [`cycle`] module computes those chains by Newton's method on the
//! average-velocity system, continuing from `delta = 0` where the system's
//! Jacobian is known in closed form.

pub mod cycle;
pub mod dsl;
pub mod flow;
pub mod linalg;
pub mod linear;
pub mod stasis;

pub use cycle::{CycleError, CyclePoints, KCycle, SweepConfig, SweepRecord, SweepResult};
pub use dsl::{EvalError, ParseError, VectorField};
pub use flow::{FlowError, FlowResult, IntegratorConfig, Method};
pub use stasis::{RegularityReport, StasisError, StasisPoint, WeightSolution, Weights};
