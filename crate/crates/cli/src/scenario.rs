//! Scenario files.
//!
//! A scenario is a JSON object:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "name": "pair_1d",
//!   "dimension": 1,
//!   "fields": ["1 - x1", "-1 - x1"],
//!   "weights": [0.5, 0.5],
//!   "stasis_guess": [0.7],
//!   "tolerances": { "stasis_tol": 1e-12, "cycle_tol": 1e-10,
//!                   "integrator": { "rel_tol": 1e-10, "abs_tol": 1e-12 } },
//!   "sweep": { "delta_max": 0.8, "steps": 32 }
//! }
//! ```
//!
//! At least one of `weights` and `stasis_point` must be present. With only
//! `weights` the stasis point is solved for (from `stasis_guess`, else the
//! origin); with only `stasis_point` the weights are. With both, the weights
//! are pinned and the point is the starting guess.
//!
//! Instead of `dimension` and `fields`, a scenario may carry
//! `"random_linear": { "seed": 7, "dimension": 2, "fields": 3 }`, which
//! expands to seeded affine fields with a known regular stasis point.

use std::path::Path;

use kcycle::dsl::ParseError;
use kcycle::linear::LinearSystem;
use kcycle::{IntegratorConfig, Method, VectorField, Weights};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stasis_guess: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stasis_point: Option<Vec<f64>>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_linear: Option<RandomLinear>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub stasis_tol: f64,
    pub cycle_tol: f64,
    pub integrator: IntegratorSpec,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            stasis_tol: 1e-12,
            cycle_tol: kcycle::cycle::DEFAULT_CYCLE_TOL,
            integrator: IntegratorSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Dopri5,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    pub method: MethodName,
    pub rk4_step: f64,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        let cfg = IntegratorConfig::default();
        Self {
            rel_tol: cfg.rel_tol,
            abs_tol: cfg.abs_tol,
            max_steps: cfg.max_steps,
            method: MethodName::Dopri5,
            rk4_step: cfg.rk4_step,
        }
    }
}

impl IntegratorSpec {
    pub fn config(&self) -> IntegratorConfig {
        IntegratorConfig {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_steps: self.max_steps,
            method: match self.method {
                MethodName::Dopri5 => Method::DopriAdaptive,
                MethodName::Rk4 => Method::Rk4Fixed,
            },
            rk4_step: self.rk4_step,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub delta_max: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomLinear {
    pub seed: u64,
    pub dimension: usize,
    pub fields: usize,
}

/// A validated scenario with parsed fields. `scenario` is the fully
/// expanded form (random generators replaced by their output), suitable for
/// embedding in result records.
#[derive(Debug, Clone)]
pub struct Problem {
    pub scenario: Scenario,
    pub fields: Vec<VectorField>,
    pub weights: Option<Weights>,
    pub point: Option<DVector<f64>>,
    pub guess: DVector<f64>,
    pub integrator: IntegratorConfig,
}

impl Problem {
    pub fn dimension(&self) -> usize {
        self.guess.len()
    }

    pub fn name(&self) -> &str {
        &self.scenario.name
    }
}

pub fn load(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Scenario(msg.into())
}

fn positive(name: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!(
            "{name} must be positive and finite, got {x}"
        )))
    }
}

fn point(name: &str, xs: &Option<Vec<f64>>, n: usize) -> Result<Option<DVector<f64>>, CliError> {
    match xs {
        None => Ok(None),
        Some(v) if v.len() != n => Err(invalid(format!(
            "{name} has {} entries, dimension is {n}",
            v.len()
        ))),
        Some(v) if v.iter().any(|x| !x.is_finite()) => {
            Err(invalid(format!("{name} must be finite")))
        }
        Some(v) => Ok(Some(DVector::from_column_slice(v))),
    }
}

/// Expands and validates `scenario`. `seed_override` replaces the seed of a
/// random-linear scenario.
pub fn resolve(mut scenario: Scenario, seed_override: Option<u64>) -> Result<Problem, CliError> {
    if scenario.schema_version != SCHEMA_VERSION {
        return Err(invalid(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            scenario.schema_version
        )));
    }
    if let Some(mut gen) = scenario.random_linear.take() {
        if scenario.dimension.is_some() || !scenario.fields.is_empty() {
            return Err(invalid(
                "random_linear replaces dimension and fields; give one or the other",
            ));
        }
        if gen.dimension == 0 || gen.fields < 2 {
            return Err(invalid(
                "random_linear needs dimension >= 1 and fields >= 2",
            ));
        }
        if let Some(seed) = seed_override {
            gen.seed = seed;
        }
        let sys = LinearSystem::generate(gen.seed, gen.dimension, gen.fields);
        scenario.dimension = Some(gen.dimension);
        scenario.fields = sys.sources();
        if scenario.weights.is_none() {
            scenario.weights = Some(sys.weights.as_slice().to_vec());
        }
        if scenario.stasis_point.is_none() {
            scenario.stasis_point = Some(sys.x0.iter().copied().collect());
        }
    }

    let n = scenario
        .dimension
        .ok_or_else(|| invalid("missing dimension"))?;
    if n == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    let k = scenario.fields.len();
    if k < 2 {
        return Err(invalid(format!("need at least two fields, got {k}")));
    }
    let fields = scenario
        .fields
        .iter()
        .enumerate()
        .map(|(j, src)| {
            VectorField::parse(src, n).map_err(|source: ParseError| CliError::Field {
                index: j + 1,
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let weights = match &scenario.weights {
        None => None,
        Some(w) if w.len() != k => {
            return Err(invalid(format!("{} weights given for {k} fields", w.len())));
        }
        Some(w) => Some(Weights::new(w.clone()).map_err(|e| invalid(e.to_string()))?),
    };
    let stasis_point = point("stasis_point", &scenario.stasis_point, n)?;
    let guess = point("stasis_guess", &scenario.stasis_guess, n)?;
    if weights.is_none() && stasis_point.is_none() {
        return Err(invalid("give weights, stasis_point, or both"));
    }

    let tol = &scenario.tolerances;
    positive("stasis_tol", tol.stasis_tol)?;
    positive("cycle_tol", tol.cycle_tol)?;
    let integrator = tol.integrator.config();
    integrator
        .validate()
        .map_err(|e| invalid(format!("integrator: {e}")))?;
    if let Some(s) = &scenario.sweep {
        positive("sweep.delta_max", s.delta_max)?;
        if s.steps == 0 {
            return Err(invalid("sweep.steps must be at least 1"));
        }
    }

    let guess = stasis_point
        .clone()
        .or(guess)
        .unwrap_or_else(|| DVector::zeros(n));
    Ok(Problem {
        scenario,
        fields,
        weights,
        point: stasis_point,
        guess,
        integrator,
    })
}
