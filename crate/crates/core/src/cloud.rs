//! Point-cloud data model: weighted finite supports in `R^d`, their moment
//! matrices, and per-support-point vector fields.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance on the total mass of a weight vector.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Weighted finite support of a probability measure in `R^d`.
///
/// Rows of `points` are support locations; `weights` are the corresponding
/// probability masses. Weights are nonnegative and sum to one.
#[derive(Debug, Clone)]
pub struct PointCloud {
    points: DMatrix<f64>,
    weights: DVector<f64>,
}

impl PointCloud {
    /// Builds a cloud from an `n x d` point matrix and explicit weights.
    pub fn new(points: DMatrix<f64>, weights: DVector<f64>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::InvalidCloud("need n >= 1 and d >= 1".into()));
        }
        if weights.len() != points.nrows() {
            return Err(Error::DimensionMismatch {
                what: "weights length vs point count",
                expected: points.nrows(),
                got: weights.len(),
            });
        }
        if !linalg::all_finite(&points) {
            return Err(Error::NonFinite("point coordinates"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidCloud("weights must be finite and >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidCloud(format!(
                "weights sum to {total}, expected 1 within {WEIGHT_SUM_TOL:e}"
            )));
        }
        Ok(Self { points, weights })
    }

    /// Builds a uniform-weight cloud; every weight is exactly `1/n`.
    pub fn uniform(points: DMatrix<f64>) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(Error::InvalidCloud("need n >= 1".into()));
        }
        let weights = DVector::from_element(n, 1.0 / n as f64);
        Self::new(points, weights)
    }

    /// Convenience constructor from row data.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidCloud("need n >= 1".into()));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidCloud("ragged rows".into()));
        }
        let n = rows.len();
        let points = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
        Self::uniform(points)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // n >= 1 by construction
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// The `i`-th support point as a column vector.
    pub fn point(&self, i: usize) -> DVector<f64> {
        self.points.row(i).transpose()
    }

    pub fn has_uniform_weights(&self, tol: f64) -> bool {
        let u = 1.0 / self.len() as f64;
        self.weights.iter().all(|w| (w - u).abs() <= tol)
    }

    /// Uncentered second-moment matrix `Sigma = sum_i w_i x_i x_i^T`.
    /// Exactly symmetric: the `(a, b)` and `(b, a)` accumulations multiply
    /// the same factors.
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut sigma = DMatrix::<f64>::zeros(d, d);
        for i in 0..self.len() {
            let x = self.points.row(i);
            let w = self.weights[i];
            for a in 0..d {
                for b in 0..d {
                    sigma[(a, b)] += w * x[a] * x[b];
                }
            }
        }
        sigma
    }

    /// `M_2 = sum_i w_i ||x_i||^2 = tr(covariance)`.
    pub fn second_moment(&self) -> f64 {
        let mut m2 = 0.0;
        for i in 0..self.len() {
            m2 += self.weights[i] * self.points.row(i).norm_squared();
        }
        m2
    }

    /// Pushforward through the linear map `M`: points become `points * M^T`,
    /// weights are unchanged.
    pub fn apply_linear(&self, m: &DMatrix<f64>) -> Result<Self> {
        let d = self.dim();
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::DimensionMismatch {
                what: "linear map vs cloud dimension",
                expected: d,
                got: m.nrows().max(m.ncols()),
            });
        }
        if !linalg::all_finite(m) {
            return Err(Error::NonFinite("linear map entries"));
        }
        Ok(Self {
            points: &self.points * m.transpose(),
            weights: self.weights.clone(),
        })
    }

    /// Linear transform of the cloud so that its covariance is the identity.
    /// Fails when the covariance is singular below `threshold`.
    pub fn whitened(&self, threshold: f64) -> Result<Self> {
        let sigma = self.covariance();
        let w = linalg::sqrt_inv_spd(&sigma, threshold)?;
        self.apply_linear(&w)
    }

    /// Mean of the support points under the weights.
    pub fn mean(&self) -> DVector<f64> {
        let d = self.dim();
        let mut mu = DVector::<f64>::zeros(d);
        for i in 0..self.len() {
            mu += self.weights[i] * self.point(i);
        }
        mu
    }
}

/// Velocity values attached to the support points of an associated cloud;
/// row `i` is `v(x_i)`.
#[derive(Debug, Clone)]
pub struct VectorField {
    values: DMatrix<f64>,
}

impl VectorField {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if !linalg::all_finite(&values) {
            return Err(Error::NonFinite("vector field values"));
        }
        Ok(Self { values })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            values: DMatrix::zeros(n, d),
        }
    }

    /// Field `x_i -> M x_i` over the support of `cloud`.
    pub fn from_linear(cloud: &PointCloud, m: &DMatrix<f64>) -> Result<Self> {
        Self::new(cloud.points() * m.transpose())
    }

    /// Identity field `v(x) = x`.
    pub fn identity(cloud: &PointCloud) -> Self {
        Self {
            values: cloud.points().clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.values.row(i).transpose()
    }

    /// Checks that the field matches the support of `cloud`.
    pub fn matches(&self, cloud: &PointCloud) -> Result<()> {
        if self.len() != cloud.len() {
            return Err(Error::DimensionMismatch {
                what: "field rows vs cloud size",
                expected: cloud.len(),
                got: self.len(),
            });
        }
        if self.dim() != cloud.dim() {
            return Err(Error::DimensionMismatch {
                what: "field columns vs cloud dimension",
                expected: cloud.dim(),
                got: self.dim(),
            });
        }
        Ok(())
    }

    /// `L^2(mu)` inner product `sum_i w_i <v_i, u_i>`.
    pub fn l2_inner(&self, other: &Self, cloud: &PointCloud) -> Result<f64> {
        self.matches(cloud)?;
        other.matches(cloud)?;
        let mut acc = 0.0;
        for i in 0..self.len() {
            acc += cloud.weights()[i] * self.values.row(i).dot(&other.values.row(i));
        }
        Ok(acc)
    }

    pub fn l2_norm(&self, cloud: &PointCloud) -> Result<f64> {
        Ok(self.l2_inner(self, cloud)?.max(0.0).sqrt())
    }

    /// Moment matrix `M_v = sum_i w_i x_i v_i^T`.
    pub fn moment(&self, cloud: &PointCloud) -> Result<DMatrix<f64>> {
        self.matches(cloud)?;
        let d = cloud.dim();
        let mut m = DMatrix::<f64>::zeros(d, d);
        for i in 0..self.len() {
            let w = cloud.weights()[i];
            let x = cloud.points().row(i);
            let v = self.values.row(i);
            for a in 0..d {
                for b in 0..d {
                    m[(a, b)] += w * x[a] * v[b];
                }
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{is_psd, is_symmetric, random_orthogonal};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> PointCloud {
        let points = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        PointCloud::uniform(points).unwrap()
    }

    #[test]
    fn covariance_single_point() {
        let cloud = PointCloud::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        let sigma = cloud.covariance();
        assert_eq!(sigma[(0, 0)], 1.0);
        assert_eq!(sigma.iter().filter(|&&x| x != 0.0).count(), 1);
    }

    #[test]
    fn covariance_symmetric_pair() {
        let cloud = PointCloud::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let sigma = cloud.covariance();
        assert_eq!(sigma[(0, 0)], 1.0);
        assert_eq!(sigma[(1, 1)], 0.0);
        assert_eq!(sigma[(0, 1)], 0.0);
    }

    #[test]
    fn covariance_matches_extended_precision_sum() {
        // brute-force oracle in Kahan-compensated accumulation
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cloud = random_cloud(&mut rng, 20, 3);
        let sigma = cloud.covariance();
        for a in 0..3 {
            for b in 0..3 {
                let mut sum = 0.0f64;
                let mut comp = 0.0f64;
                for i in 0..20 {
                    let term = cloud.weights()[i]
                        * cloud.points()[(i, a)]
                        * cloud.points()[(i, b)];
                    let y = term - comp;
                    let t = sum + y;
                    comp = (t - sum) - y;
                    sum = t;
                }
                assert_relative_eq!(sigma[(a, b)], sum, epsilon = 1e-13);
            }
        }
        assert!(is_symmetric(&sigma, 0.0));
        assert!(is_psd(&sigma, 1e-12));
    }

    #[test]
    fn second_moment_examples() {
        let origin = PointCloud::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert_eq!(origin.second_moment(), 0.0);

        let n = 8;
        let circle = DMatrix::from_fn(n, 2, |i, j| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            if j == 0 {
                t.cos()
            } else {
                t.sin()
            }
        });
        let circle = PointCloud::uniform(circle).unwrap();
        assert_relative_eq!(circle.second_moment(), 1.0, epsilon = 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cloud = random_cloud(&mut rng, 17, 3);
        assert_relative_eq!(
            cloud.second_moment(),
            cloud.covariance().trace(),
            epsilon = 1e-13
        );
    }

    #[test]
    fn apply_linear_examples() {
        let cloud = PointCloud::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let id = DMatrix::<f64>::identity(2, 2);
        let same = cloud.apply_linear(&id).unwrap();
        assert_eq!(same.points(), cloud.points());

        let rot = crate::linalg::planar_rotation(2, std::f64::consts::FRAC_PI_2);
        let rotated = cloud.apply_linear(&rot).unwrap();
        assert_relative_eq!(rotated.points()[(0, 0)], 0.0, epsilon = 1e-15);
        assert_relative_eq!(rotated.points()[(0, 1)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn orthogonal_maps_preserve_second_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let cloud = random_cloud(&mut rng, 12, 3);
            let reflect = rng.random::<bool>();
            let o = random_orthogonal(&mut rng, 3, reflect);
            let moved = cloud.apply_linear(&o).unwrap();
            assert_relative_eq!(
                moved.second_moment(),
                cloud.second_moment(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn whitened_cloud_has_identity_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cloud = random_cloud(&mut rng, 25, 2);
        let white = cloud.whitened(1e-12).unwrap();
        let sigma = white.covariance();
        assert!((sigma - DMatrix::<f64>::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn rejects_bad_weights() {
        let points = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let weights = DVector::from_column_slice(&[0.7, 0.7]);
        assert!(PointCloud::new(points.clone(), weights).is_err());
        let negative = DVector::from_column_slice(&[1.5, -0.5]);
        assert!(PointCloud::new(points, negative).is_err());
    }

    #[test]
    fn rejects_non_finite_points() {
        let points = DMatrix::from_row_slice(1, 2, &[f64::NAN, 0.0]);
        assert!(PointCloud::uniform(points).is_err());
    }
}
