//! Transport plans between two point clouds, in permutation or dense form,
//! and the cross-covariance matrices they induce.

use nalgebra::{DMatrix, DVector};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Tolerance on marginal constraints of a coupling.
pub const MARGINAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub enum Plan {
    /// `sigma[i]` is the target index receiving the mass of source `i`.
    /// Valid only when the transported weights match the target weights.
    Permutation(Vec<usize>),
    /// Dense `n x m` nonnegative matrix with prescribed marginals.
    Dense(DMatrix<f64>),
}

/// A coupling `pi` between two discrete measures, together with the
/// marginal weight vectors it must match.
#[derive(Debug, Clone)]
pub struct Coupling {
    plan: Plan,
    source_weights: DVector<f64>,
    target_weights: DVector<f64>,
}

impl Coupling {
    pub fn permutation(
        sigma: Vec<usize>,
        source_weights: DVector<f64>,
        target_weights: DVector<f64>,
    ) -> Result<Self> {
        let n = sigma.len();
        if source_weights.len() != n || target_weights.len() != n {
            return Err(Error::InvalidCoupling(
                "permutation length must match both marginals".into(),
            ));
        }
        let mut seen = vec![false; n];
        for &j in &sigma {
            if j >= n || seen[j] {
                return Err(Error::InvalidCoupling("not a bijection".into()));
            }
            seen[j] = true;
        }
        for i in 0..n {
            let diff = (source_weights[i] - target_weights[sigma[i]]).abs();
            if diff > MARGINAL_TOL {
                return Err(Error::InvalidCoupling(format!(
                    "permutation transports weight {} onto slot holding {}",
                    source_weights[i],
                    target_weights[sigma[i]]
                )));
            }
        }
        Ok(Self {
            plan: Plan::Permutation(sigma),
            source_weights,
            target_weights,
        })
    }

    pub fn dense(
        matrix: DMatrix<f64>,
        source_weights: DVector<f64>,
        target_weights: DVector<f64>,
    ) -> Result<Self> {
        let (n, m) = matrix.shape();
        if source_weights.len() != n || target_weights.len() != m {
            return Err(Error::InvalidCoupling(
                "plan shape must match marginal lengths".into(),
            ));
        }
        if matrix.iter().any(|p| !p.is_finite() || *p < -MARGINAL_TOL) {
            return Err(Error::InvalidCoupling(
                "plan entries must be finite and nonnegative".into(),
            ));
        }
        for i in 0..n {
            let row_sum: f64 = matrix.row(i).iter().sum();
            if (row_sum - source_weights[i]).abs() > MARGINAL_TOL {
                return Err(Error::InvalidCoupling(format!(
                    "row {i} sums to {row_sum}, expected {}",
                    source_weights[i]
                )));
            }
        }
        for j in 0..m {
            let col_sum: f64 = matrix.column(j).iter().sum();
            if (col_sum - target_weights[j]).abs() > MARGINAL_TOL {
                return Err(Error::InvalidCoupling(format!(
                    "column {j} sums to {col_sum}, expected {}",
                    target_weights[j]
                )));
            }
        }
        Ok(Self {
            plan: Plan::Dense(matrix),
            source_weights,
            target_weights,
        })
    }

    /// Identity permutation coupling of a measure with itself.
    pub fn identity(weights: DVector<f64>) -> Self {
        let n = weights.len();
        Self {
            plan: Plan::Permutation((0..n).collect()),
            source_weights: weights.clone(),
            target_weights: weights,
        }
    }

    /// Independence coupling `pi = mu (x) nu`.
    pub fn product(source_weights: DVector<f64>, target_weights: DVector<f64>) -> Self {
        let matrix = &source_weights * target_weights.transpose();
        Self {
            plan: Plan::Dense(matrix),
            source_weights,
            target_weights,
        }
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn as_permutation(&self) -> Option<&[usize]> {
        match &self.plan {
            Plan::Permutation(sigma) => Some(sigma),
            Plan::Dense(_) => None,
        }
    }

    pub fn source_len(&self) -> usize {
        self.source_weights.len()
    }

    pub fn target_len(&self) -> usize {
        self.target_weights.len()
    }

    pub fn source_weights(&self) -> &DVector<f64> {
        &self.source_weights
    }

    pub fn target_weights(&self) -> &DVector<f64> {
        &self.target_weights
    }

    /// Checks that this plan couples exactly the measures carried by `x`
    /// and `y` (marginals match the cloud weights within [`MARGINAL_TOL`]).
    pub fn couples(&self, x: &PointCloud, y: &PointCloud) -> Result<()> {
        if self.source_len() != x.len() || self.target_len() != y.len() {
            return Err(Error::InvalidCoupling(format!(
                "plan is {}x{}, clouds are {}x{}",
                self.source_len(),
                self.target_len(),
                x.len(),
                y.len()
            )));
        }
        for i in 0..x.len() {
            if (self.source_weights[i] - x.weights()[i]).abs() > MARGINAL_TOL {
                return Err(Error::InvalidCoupling(format!(
                    "source marginal {i} disagrees with cloud weight"
                )));
            }
        }
        for j in 0..y.len() {
            if (self.target_weights[j] - y.weights()[j]).abs() > MARGINAL_TOL {
                return Err(Error::InvalidCoupling(format!(
                    "target marginal {j} disagrees with cloud weight"
                )));
            }
        }
        Ok(())
    }

}

/// Cross-covariance `sum_ij pi_ij x_i y_j^T` of the plan.
pub fn cross_covariance(x: &PointCloud, y: &PointCloud, plan: &Coupling) -> Result<DMatrix<f64>> {
    plan.couples(x, y)?;
    let d = x.dim();
    if y.dim() != d {
        return Err(Error::DimensionMismatch {
            what: "cloud dimensions in cross covariance",
            expected: d,
            got: y.dim(),
        });
    }
    let mut c = DMatrix::<f64>::zeros(d, d);
    match plan.plan() {
        Plan::Permutation(sigma) => {
            for (i, &j) in sigma.iter().enumerate() {
                let w = plan.source_weights()[i];
                let xi = x.points().row(i);
                let yj = y.points().row(j);
                for a in 0..d {
                    for b in 0..d {
                        c[(a, b)] += w * xi[a] * yj[b];
                    }
                }
            }
        }
        Plan::Dense(pi) => {
            for i in 0..x.len() {
                let xi = x.points().row(i);
                for j in 0..y.len() {
                    let p = pi[(i, j)];
                    if p == 0.0 {
                        continue;
                    }
                    let yj = y.points().row(j);
                    for a in 0..d {
                        for b in 0..d {
                            c[(a, b)] += p * xi[a] * yj[b];
                        }
                    }
                }
            }
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> PointCloud {
        let points = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        PointCloud::uniform(points).unwrap()
    }

    #[test]
    fn identity_coupling_gives_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_cloud(&mut rng, 9, 3);
        let id = Coupling::identity(x.weights().clone());
        let c = cross_covariance(&x, &x, &id).unwrap();
        assert_eq!(c, x.covariance());
    }

    #[test]
    fn product_coupling_of_centered_clouds_is_zero() {
        let x = PointCloud::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let y = PointCloud::from_rows(&[vec![0.0, 2.0], vec![0.0, -2.0]]).unwrap();
        let prod = Coupling::product(x.weights().clone(), y.weights().clone());
        let c = cross_covariance(&x, &y, &prod).unwrap();
        assert!(c.amax() < 1e-15);
    }

    #[test]
    fn dense_plan_matches_double_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_cloud(&mut rng, 5, 2);
        let y = random_cloud(&mut rng, 7, 2);
        let pi = x.weights() * y.weights().transpose();
        let plan = Coupling::dense(pi.clone(), x.weights().clone(), y.weights().clone()).unwrap();
        let c = cross_covariance(&x, &y, &plan).unwrap();
        let mut oracle = DMatrix::<f64>::zeros(2, 2);
        for i in 0..5 {
            for j in 0..7 {
                for a in 0..2 {
                    for b in 0..2 {
                        oracle[(a, b)] += pi[(i, j)] * x.points()[(i, a)] * y.points()[(j, b)];
                    }
                }
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                assert_relative_eq!(c[(a, b)], oracle[(a, b)], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn cross_covariance_rotation_identity() {
        // cross_cov(x, O#y, same plan) = cross_cov(x, y, plan) * O^T
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_cloud(&mut rng, 6, 2);
        let y = random_cloud(&mut rng, 6, 2);
        let sigma: Vec<usize> = vec![2, 0, 1, 5, 3, 4];
        let plan =
            Coupling::permutation(sigma, x.weights().clone(), y.weights().clone()).unwrap();
        let reflect = rng.random::<bool>();
        let o = crate::linalg::random_orthogonal(&mut rng, 2, reflect);
        let y_rot = y.apply_linear(&o).unwrap();
        let lhs = cross_covariance(&x, &y_rot, &plan).unwrap();
        let rhs = cross_covariance(&x, &y, &plan).unwrap() * o.transpose();
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn rejects_marginal_mismatch() {
        let x = PointCloud::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let bad = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.3]);
        assert!(Coupling::dense(bad, x.weights().clone(), x.weights().clone()).is_err());
    }

    #[test]
    fn rejects_non_bijection() {
        let w = DVector::from_element(3, 1.0 / 3.0);
        assert!(Coupling::permutation(vec![0, 0, 2], w.clone(), w).is_err());
    }
}
