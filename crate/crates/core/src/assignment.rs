//! Exact discrete optimal transport for equal-size uniform marginals:
//! a linear assignment solver (shortest augmenting paths with dual
//! potentials, O(n^3)), the bilinear-cost OT used inside the IGW dual,
//! and the 2-Wasserstein distance.

use nalgebra::DMatrix;

use crate::cloud::PointCloud;
use crate::coupling::Coupling;
use crate::error::{Error, Result};

/// Uniform-weight tolerance for the solver preconditions.
const UNIFORM_TOL: f64 = 1e-12;

/// Solves the square linear assignment problem exactly.
///
/// Returns the permutation `sigma` minimizing `sum_i cost[i, sigma(i)]`
/// together with the optimal value interpreted under uniform weights,
/// `(1/n) * sum_i cost[i, sigma(i)]`.
///
/// Among equal-cost assignments the pass is deterministic: column scans run
/// in index order and, on exact ties, free columns are preferred, which in
/// particular returns the identity for constant cost matrices.
pub fn solve_assignment(cost: &DMatrix<f64>) -> Result<(Vec<usize>, f64)> {
    let n = cost.nrows();
    if cost.ncols() != n {
        return Err(Error::NonSquareCost {
            rows: n,
            cols: cost.ncols(),
        });
    }
    if n == 0 {
        return Err(Error::NonSquareCost { rows: 0, cols: 0 });
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("cost matrix"));
    }

    const FREE: usize = usize::MAX;
    let mut row_of = vec![FREE; n + 1]; // row matched to each column; n is virtual
    let mut u = vec![0.0f64; n]; // row potentials
    let mut v = vec![0.0f64; n + 1]; // column potentials

    for i in 0..n {
        row_of[n] = i;
        let mut j0 = n;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut prev = vec![n; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = FREE;
            for j in 0..n {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0, j)] - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    prev[j] = j0;
                }
                let take = if j1 == FREE {
                    true
                } else {
                    min_to[j] < delta
                        || (min_to[j] == delta
                            && row_of[j] == FREE
                            && row_of[j1] != FREE)
                };
                if take {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    if row_of[j] != FREE {
                        u[row_of[j]] += delta;
                    }
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == FREE {
                break;
            }
        }
        while j0 != n {
            let j1 = prev[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
        }
    }

    let mut sigma = vec![0usize; n];
    for j in 0..n {
        sigma[row_of[j]] = j;
    }
    let mut total = 0.0;
    for (i, &j) in sigma.iter().enumerate() {
        total += cost[(i, j)];
    }
    Ok((sigma, total / n as f64))
}

fn require_equal_uniform(x: &PointCloud, y: &PointCloud) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::UnsupportedMarginals(format!(
            "clouds have {} and {} points; solver needs equal sizes",
            x.len(),
            y.len()
        )));
    }
    if !x.has_uniform_weights(UNIFORM_TOL) || !y.has_uniform_weights(UNIFORM_TOL) {
        return Err(Error::UnsupportedMarginals(
            "solver needs uniform weights on both clouds".into(),
        ));
    }
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            what: "cloud dimensions",
            expected: x.dim(),
            got: y.dim(),
        });
    }
    Ok(())
}

/// Optimal transport for the bilinear cost `c_A(x, y) = -8 x^T A y`.
///
/// Returns the optimal permutation coupling and the OT value
/// `sum_ij pi_ij c_A(x_i, y_j)`.
pub fn solve_ot_bilinear(
    x: &PointCloud,
    y: &PointCloud,
    a: &DMatrix<f64>,
) -> Result<(Coupling, f64)> {
    require_equal_uniform(x, y)?;
    let d = x.dim();
    if a.nrows() != d || a.ncols() != d {
        return Err(Error::DimensionMismatch {
            what: "dual variable vs cloud dimension",
            expected: d,
            got: a.nrows().max(a.ncols()),
        });
    }
    // cost[i][j] = -8 x_i^T A y_j, assembled as -8 (X A Y^T)
    let cost = (x.points() * a * y.points().transpose()) * -8.0;
    let (sigma, value) = solve_assignment(&cost)?;
    let coupling = Coupling::permutation(sigma, x.weights().clone(), y.weights().clone())?;
    Ok((coupling, value))
}

/// 2-Wasserstein distance between equal-size uniform clouds via exact
/// assignment with squared Euclidean cost. Returns the distance (not its
/// square) and the optimal permutation coupling.
pub fn w2_distance(x: &PointCloud, y: &PointCloud) -> Result<(f64, Coupling)> {
    require_equal_uniform(x, y)?;
    let n = x.len();
    let cost = DMatrix::from_fn(n, n, |i, j| {
        (x.points().row(i) - y.points().row(j)).norm_squared()
    });
    let (sigma, value) = solve_assignment(&cost)?;
    let coupling = Coupling::permutation(sigma, x.weights().clone(), y.weights().clone())?;
    Ok((value.max(0.0).sqrt(), coupling))
}
