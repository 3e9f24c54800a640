//! Seeded random affine scenarios `V_j(x) = A_j x + b_j` with a stasis
//! point at a known `x0` for known weights.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsl::VectorField;
use crate::linalg::singular_value_range;
use crate::stasis::Weights;

/// Affine fields with `sum_j m_j (A_j x0 + b_j) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub matrices: Vec<DMatrix<f64>>,
    pub offsets: Vec<DVector<f64>>,
    pub weights: Weights,
    pub x0: DVector<f64>,
}

/// Frobenius-norm cap; bounds the spectral radius of each A_j.
const MAX_SPECTRAL_BOUND: f64 = 2.0;
/// Lower bound on sigma_min of the weighted matrix for regular draws.
const MIN_SIGMA: f64 = 0.1;

impl LinearSystem {
    /// A regular scenario: `sum_j m_j A_j` has smallest singular value at
    /// least 0.1, and every `A_j` has Frobenius norm at most 2.
    pub fn generate(seed: u64, n: usize, k: usize) -> Self {
        assert!(n >= 1 && k >= 2, "need n >= 1 and k >= 2");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = random_weights(&mut rng, k);
        let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let matrices = loop {
            let mats: Vec<DMatrix<f64>> = (0..k).map(|_| bounded_matrix(&mut rng, n)).collect();
            let sum = weighted_sum(&mats, &weights);
            if singular_value_range(&sum).0 >= MIN_SIGMA {
                break mats;
            }
        };
        Self::with_offsets(&mut rng, matrices, weights, x0)
    }

    /// A scenario whose weighted matrix `sum_j m_j A_j` is singular (rank n - 1),
    /// up to rounding in forming the sum.
    pub fn generate_singular(seed: u64, n: usize, k: usize) -> Self {
        assert!(n >= 1 && k >= 2, "need n >= 1 and k >= 2");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = random_weights(&mut rng, k);
        let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let mut matrices: Vec<DMatrix<f64>> =
            (0..k - 1).map(|_| bounded_matrix(&mut rng, n)).collect();
        let mut target = bounded_matrix(&mut rng, n);
        // last column a combination of the others (zero when n = 1)
        let coeffs: Vec<f64> = (0..n.saturating_sub(1))
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let mut last = DVector::zeros(n);
        for (c, col) in coeffs.iter().zip(target.column_iter()) {
            last += col * *c;
        }
        target.set_column(n - 1, &last);
        let m = weights.as_slice();
        let mut partial = DMatrix::zeros(n, n);
        for (a, w) in matrices.iter().zip(m) {
            partial += a * *w;
        }
        matrices.push((target - partial) / m[k - 1]);
        Self::with_offsets(&mut rng, matrices, weights, x0)
    }

    fn with_offsets(
        rng: &mut ChaCha8Rng,
        matrices: Vec<DMatrix<f64>>,
        weights: Weights,
        x0: DVector<f64>,
    ) -> Self {
        let n = x0.len();
        let k = matrices.len();
        let m = weights.as_slice();
        let mut offsets: Vec<DVector<f64>> = (0..k - 1)
            .map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let mut partial = &matrices[k - 1] * &x0 * m[k - 1];
        for j in 0..k - 1 {
            partial += (&matrices[j] * &x0 + &offsets[j]) * m[j];
        }
        offsets.push(-partial / m[k - 1]);
        Self {
            matrices,
            offsets,
            weights,
            x0,
        }
    }

    pub fn dimension(&self) -> usize {
        self.x0.len()
    }

    /// `sum_j m_j A_j`
    pub fn weighted_matrix(&self) -> DMatrix<f64> {
        weighted_sum(&self.matrices, &self.weights)
    }

    /// Field sources in the expression language; coefficients are written
    /// with round-trip precision.
    pub fn sources(&self) -> Vec<String> {
        self.matrices
            .iter()
            .zip(&self.offsets)
            .map(|(a, b)| {
                (0..self.dimension())
                    .map(|i| {
                        let mut terms: Vec<String> = (0..self.dimension())
                            .map(|l| format!("{:?}*x{}", a[(i, l)], l + 1))
                            .collect();
                        terms.push(format!("{:?}", b[i]));
                        terms.join(" + ")
                    })
                    .collect::<Vec<_>>()
                    .join("; ")
            })
            .collect()
    }

    pub fn fields(&self) -> Vec<VectorField> {
        self.sources()
            .iter()
            .map(|s| VectorField::parse(s, self.dimension()).expect("generated source parses"))
            .collect()
    }
}

fn random_weights(rng: &mut ChaCha8Rng, k: usize) -> Weights {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..1.5)).collect();
    let sum: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|r| r / sum).collect();
    // absorb rounding so the sum is one to the last bit available
    let head: f64 = w[..k - 1].iter().sum();
    w[k - 1] = 1.0 - head;
    Weights::new(w).expect("weights in [0.5, 1.5] normalize cleanly")
}

fn bounded_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let norm = a.norm();
    if norm > MAX_SPECTRAL_BOUND {
        a * (MAX_SPECTRAL_BOUND / norm)
    } else {
        a
    }
}

fn weighted_sum(mats: &[DMatrix<f64>], weights: &Weights) -> DMatrix<f64> {
    let n = mats[0].nrows();
    mats.iter()
        .zip(weights.as_slice())
        .fold(DMatrix::zeros(n, n), |acc, (a, m)| acc + a * *m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stasis::stasis_residual;

    #[test]
    fn generated_point_is_a_stasis_point() {
        for seed in 0..10 {
            let sys =
                LinearSystem::generate(seed, 1 + (seed as usize % 3), 2 + (seed as usize % 3));
            let r = stasis_residual(&sys.fields(), &sys.weights, &sys.x0).unwrap();
            assert!(r.amax() < 1e-14, "seed {seed}: {r}");
            assert!(singular_value_range(&sys.weighted_matrix()).0 >= MIN_SIGMA);
        }
    }

    #[test]
    fn singular_variant_is_singular() {
        for seed in 0..10 {
            let sys = LinearSystem::generate_singular(seed, 1 + (seed as usize % 3), 3);
            let (lo, hi) = singular_value_range(&sys.weighted_matrix());
            assert!(lo <= 1e-12 * hi.max(1.0), "seed {seed}: {lo} {hi}");
        }
    }

    #[test]
    fn same_seed_same_system() {
        assert_eq!(
            LinearSystem::generate(42, 3, 4),
            LinearSystem::generate(42, 3, 4)
        );
        assert_ne!(
            LinearSystem::generate(42, 3, 4),
            LinearSystem::generate(43, 3, 4)
        );
    }

    #[test]
    fn sources_round_trip_coefficients() {
        let sys = LinearSystem::generate(5, 2, 3);
        let fields = sys.fields();
        for (f, a) in fields.iter().zip(&sys.matrices) {
            assert_eq!(&f.jacobian(&[0.3, -0.2]).unwrap(), a);
        }
    }
}
