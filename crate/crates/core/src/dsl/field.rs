use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::expr::{DomainFault, Expr};
use super::parser::{parse_components, ParseError};

/// A field component could not be evaluated at the requested point.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("component {component} undefined: {fault} in `{subexpression}`")]
pub struct EvalError {
    /// One-based component index.
    pub component: usize,
    pub fault: DomainFault,
    pub subexpression: String,
}

/// A smooth vector field V: R^n -> R^n given by one expression per component,
/// together with its symbolic Jacobian (built once, at construction).
#[derive(Debug, Clone)]
pub struct VectorField {
    dimension: usize,
    components: Vec<Expr>,
    // row i, column l holds dV_i/dx_l
    jacobian: Vec<Vec<Expr>>,
}

impl VectorField {
    /// Parses `source` (components separated by `;` or newlines) as a field on R^dimension.
    pub fn parse(source: &str, dimension: usize) -> Result<Self, ParseError> {
        let components = parse_components(source, dimension)?;
        Ok(Self::from_components(components))
    }

    /// Builds a field from already-validated component trees.
    ///
    /// # Panics
    /// If `components` is empty or a component references a variable beyond
    /// `components.len()`.
    pub fn from_components(components: Vec<Expr>) -> Self {
        let dimension = components.len();
        assert!(dimension > 0, "a vector field needs at least one component");
        for c in &components {
            if let Some(max) = c.max_var() {
                assert!(max < dimension, "variable x{} out of range", max + 1);
            }
        }
        let jacobian = components
            .iter()
            .map(|c| (0..dimension).map(|l| c.derivative(l)).collect())
            .collect();
        Self {
            dimension,
            components,
            jacobian,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    /// Symbolic partial derivative dV_i/dx_l (zero-based indices).
    pub fn partial(&self, i: usize, l: usize) -> &Expr {
        &self.jacobian[i][l]
    }

    /// Source text that parses back to the same component trees.
    pub fn unparse(&self) -> String {
        self.components
            .iter()
            .map(Expr::to_string)
            .collect::<Vec<_>>()
            .join("; ")
    }

    /// Returns `-V`, the field whose flow runs this one backwards in time.
    pub fn negated(&self) -> Self {
        Self::from_components(self.components.iter().cloned().map(Expr::neg).collect())
    }

    pub fn eval(&self, x: &[f64]) -> Result<DVector<f64>, EvalError> {
        self.check_point(x);
        let mut out = DVector::zeros(self.dimension);
        for (i, c) in self.components.iter().enumerate() {
            out[i] = c.eval(x).map_err(|v| EvalError {
                component: i + 1,
                fault: v.fault,
                subexpression: v.subexpression,
            })?;
        }
        Ok(out)
    }

    /// Exact Jacobian at `x`; entry (i, l) is dV_i/dx_l.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        self.check_point(x);
        let n = self.dimension;
        let mut out = DMatrix::zeros(n, n);
        for (i, row) in self.jacobian.iter().enumerate() {
            for (l, d) in row.iter().enumerate() {
                out[(i, l)] = d.eval(x).map_err(|v| EvalError {
                    component: i + 1,
                    fault: v.fault,
                    subexpression: v.subexpression,
                })?;
            }
        }
        Ok(out)
    }

    fn check_point(&self, x: &[f64]) {
        assert_eq!(
            x.len(),
            self.dimension,
            "point dimension does not match field dimension"
        );
    }
}

impl PartialEq for VectorField {
    fn eq(&self, other: &Self) -> bool {
        self.components == other.components
    }
}
