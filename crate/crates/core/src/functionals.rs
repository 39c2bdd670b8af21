//! Objective functionals on point clouds and their Wasserstein gradients:
//! the potential energy, the smoothed two-dimensional Coulomb interaction,
//! and the nearest-neighbor entropy surrogate.

use crate::cloud::{PointCloud, VectorField};
use crate::error::{Error, Result};
use nalgebra::DMatrix;

pub const DEFAULT_EPSILON: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionalKind {
    Potential,
    Coulomb,
    Entropy,
}

impl std::str::FromStr for FunctionalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "potential" => Ok(Self::Potential),
            "coulomb" => Ok(Self::Coulomb),
            "entropy" => Ok(Self::Entropy),
            other => Err(Error::InvalidCloud(format!(
                "unknown functional '{other}'"
            ))),
        }
    }
}

/// An objective functional with its smoothing parameter.
#[derive(Debug, Clone, Copy)]
pub struct Functional {
    pub kind: FunctionalKind,
    pub epsilon: f64,
}

impl Functional {
    pub fn new(kind: FunctionalKind, epsilon: f64) -> Result<Self> {
        if kind != FunctionalKind::Potential && epsilon <= 0.0 {
            return Err(Error::InvalidCloud(
                "smoothing epsilon must be positive".into(),
            ));
        }
        Ok(Self { kind, epsilon })
    }

    pub fn potential() -> Self {
        Self {
            kind: FunctionalKind::Potential,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn coulomb(epsilon: f64) -> Result<Self> {
        Self::new(FunctionalKind::Coulomb, epsilon)
    }

    pub fn entropy(epsilon: f64) -> Result<Self> {
        Self::new(FunctionalKind::Entropy, epsilon)
    }

    fn check_pairwise(&self, cloud: &PointCloud) -> Result<()> {
        if cloud.len() < 2 {
            return Err(Error::InvalidCloud(format!(
                "{:?} needs at least 2 points",
                self.kind
            )));
        }
        if !cloud.has_uniform_weights(1e-12) {
            return Err(Error::UnsupportedMarginals(
                "pairwise surrogates are defined for uniform point clouds".into(),
            ));
        }
        Ok(())
    }

    pub fn value(&self, cloud: &PointCloud) -> Result<f64> {
        match self.kind {
            FunctionalKind::Potential => {
                let mut acc = 0.0;
                for i in 0..cloud.len() {
                    acc += cloud.weights()[i] * cloud.points().row(i).norm_squared() / 2.0;
                }
                Ok(acc)
            }
            FunctionalKind::Coulomb => {
                self.check_pairwise(cloud)?;
                let n = cloud.len();
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        if i == j {
                            continue;
                        }
                        let d2 =
                            (cloud.points().row(i) - cloud.points().row(j)).norm_squared();
                        acc += (self.epsilon + d2).ln();
                    }
                }
                Ok(-acc / (2.0 * n as f64 * (n as f64 - 1.0)))
            }
            FunctionalKind::Entropy => {
                self.check_pairwise(cloud)?;
                let n = cloud.len();
                let mut acc = 0.0;
                for i in 0..n {
                    let (_, d2) = nearest_neighbor(cloud, i);
                    acc += (self.epsilon + d2).ln() / 2.0;
                }
                Ok(acc / n as f64)
            }
        }
    }

    /// The per-point Wasserstein gradient field of the surrogate, in the
    /// form the flows consume directly: the potential gradient is the
    /// identity field, the Coulomb gradient is
    /// `-(1/(n-1)) sum_{j != i} (x_i - x_j) / (eps + ||x_i - x_j||^2)`,
    /// and the entropy gradient is
    /// `(x_i - x_nn(i)) / (eps + min_j ||x_i - x_j||^2)` with
    /// nearest-neighbor ties broken by smallest index.
    pub fn wasserstein_gradient(&self, cloud: &PointCloud) -> Result<VectorField> {
        let n = cloud.len();
        let d = cloud.dim();
        match self.kind {
            FunctionalKind::Potential => Ok(VectorField::identity(cloud)),
            FunctionalKind::Coulomb => {
                self.check_pairwise(cloud)?;
                let mut g = DMatrix::<f64>::zeros(n, d);
                for i in 0..n {
                    for j in 0..n {
                        if i == j {
                            continue;
                        }
                        let diff = cloud.points().row(i) - cloud.points().row(j);
                        let scale = self.epsilon + diff.norm_squared();
                        for k in 0..d {
                            g[(i, k)] -= diff[k] / scale / (n as f64 - 1.0);
                        }
                    }
                }
                VectorField::new(g)
            }
            FunctionalKind::Entropy => {
                self.check_pairwise(cloud)?;
                let mut g = DMatrix::<f64>::zeros(n, d);
                for i in 0..n {
                    let (j, d2) = nearest_neighbor(cloud, i);
                    let diff = cloud.points().row(i) - cloud.points().row(j);
                    let scale = self.epsilon + d2;
                    for k in 0..d {
                        g[(i, k)] = diff[k] / scale;
                    }
                }
                VectorField::new(g)
            }
        }
    }

    /// Exact scaled position gradient of [`Functional::value`]:
    /// row `i` equals `n * d value / d x_i`. The gradient-flow integrators
    /// and the JKO inner solver use this field so that the decay identity
    /// `dF/dt = <flow_gradient, velocity>_{L^2(mu)}` holds exactly.
    ///
    /// For the potential this coincides with [`Functional::wasserstein_gradient`].
    /// For the Coulomb surrogate it is twice the displayed gradient (each
    /// unordered pair enters the value sum twice); for the entropy surrogate
    /// it adds the reverse nearest-neighbor terms.
    pub fn flow_gradient(&self, cloud: &PointCloud) -> Result<VectorField> {
        let n = cloud.len();
        let d = cloud.dim();
        match self.kind {
            FunctionalKind::Potential => Ok(VectorField::identity(cloud)),
            FunctionalKind::Coulomb => {
                let g = self.wasserstein_gradient(cloud)?;
                VectorField::new(g.values() * 2.0)
            }
            FunctionalKind::Entropy => {
                self.check_pairwise(cloud)?;
                let mut g = DMatrix::<f64>::zeros(n, d);
                for i in 0..n {
                    let (j, d2) = nearest_neighbor(cloud, i);
                    let diff = cloud.points().row(i) - cloud.points().row(j);
                    let scale = self.epsilon + d2;
                    for k in 0..d {
                        // own term, plus the mirrored contribution to x_j
                        g[(i, k)] += diff[k] / scale;
                        g[(j, k)] -= diff[k] / scale;
                    }
                }
                VectorField::new(g)
            }
        }
    }
}

/// Index and squared distance of the nearest other support point; ties are
/// broken by the smallest index.
pub fn nearest_neighbor(cloud: &PointCloud, i: usize) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for j in 0..cloud.len() {
        if j == i {
            continue;
        }
        let d2 = (cloud.points().row(i) - cloud.points().row(j)).norm_squared();
        if d2 < best.1 {
            best = (j, d2);
        }
    }
    best
}
