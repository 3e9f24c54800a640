//! Oracles shared by the integration tests. Nothing here calls the
//! integrator or the cycle solver.
#![allow(dead_code)]

use kcycle::linear::LinearSystem;
use kcycle::VectorField;
use nalgebra::{DMatrix, DVector};

pub fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

pub fn parse_all(srcs: &[&str], n: usize) -> Vec<VectorField> {
    srcs.iter()
        .map(|s| VectorField::parse(s, n).unwrap())
        .collect()
}

/// Exact flow map of x' = A x + b over time t: (e^{At}, (int_0^t e^{As} ds) b),
/// from one matrix exponential of the augmented matrix [[A, b], [0, 0]] t.
pub fn affine_flow(a: &DMatrix<f64>, b: &DVector<f64>, t: f64) -> (DMatrix<f64>, DVector<f64>) {
    let n = a.nrows();
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * t));
    aug.view_mut((0, n), (n, 1)).copy_from(&(b * t));
    let e = aug.exp();
    (
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, 1)).column(0).into_owned(),
    )
}

/// Cycle of affine fields by dense solve of x_{j+1} = E_j x_j + g_j (cyclic).
pub fn affine_cycle(sys: &LinearSystem, delta: f64) -> Vec<DVector<f64>> {
    let n = sys.dimension();
    let k = sys.matrices.len();
    let mut lhs = DMatrix::zeros(n * k, n * k);
    let mut rhs = DVector::zeros(n * k);
    for j in 0..k {
        let t = delta * sys.weights.as_slice()[j];
        let (e, g) = affine_flow(&sys.matrices[j], &sys.offsets[j], t);
        let next = (j + 1) % k;
        lhs.view_mut((j * n, next * n), (n, n))
            .copy_from(&DMatrix::identity(n, n));
        let block = lhs.view((j * n, j * n), (n, n)).into_owned();
        lhs.view_mut((j * n, j * n), (n, n)).copy_from(&(block - e));
        rhs.rows_mut(j * n, n).copy_from(&g);
    }
    let z = lhs
        .lu()
        .solve(&rhs)
        .expect("affine cycle system is non-singular");
    (0..k).map(|j| z.rows(j * n, n).into_owned()).collect()
}

/// Central-difference Jacobian of a vector function.
pub fn central_jacobian<F>(f: F, x: &DVector<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let m = f(x).len();
    let mut out = DMatrix::zeros(m, x.len());
    for l in 0..x.len() {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[l] += h;
        minus[l] -= h;
        out.set_column(l, &((f(&plus) - f(&minus)) / (2.0 * h)));
    }
    out
}

/// Determinant by cofactor expansion along the first row.
pub fn cofactor_det(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    match n {
        0 => 1.0,
        1 => a[(0, 0)],
        2 => a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)],
        _ => (0..n)
            .filter(|&c| a[(0, c)] != 0.0)
            .map(|c| {
                let minor = a.clone().remove_row(0).remove_column(c);
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                sign * a[(0, c)] * cofactor_det(&minor)
            })
            .sum(),
    }
}

/// Fields exercised by the numerical hygiene tests.
pub const HYGIENE_FIELDS: &[(&str, usize)] = &[
    ("1 - x1", 1),
    ("-1 - x1", 1),
    ("x2; -x1", 2),
    ("sin(x1)*x2; x1^2", 2),
    ("x2 - 0.2*x1^3; sin(x1) - 0.5*x2", 2),
    ("cos(x2) - sin(x1); 0.5*sin(x3) - x2; exp(-x1) - x3", 3),
    ("tanh(x3) - x1*x2; 1 - x2 + 0.2*x1^2; -cos(x1 - x2)", 3),
    ("-1 + sin(x2) - x1; -exp(x3) + 0.1*x1*x3; sin(x1) - x3", 3),
    ("sqrt(4 + x1^2) / (2 + cos(x2)); x1 * exp(-x2^2)", 2),
];
