//! The mobility operator `L_{A,mu}[v](x) = 2 (A v(x) + int y <v(y), x> dmu(y))`,
//! its closed-form inverse on the invariant space
//! `I_mu = { v : int x v(x)^T dmu symmetric }`, the projection onto that
//! space, and dense realizations for spectrum checks.

use nalgebra::DMatrix;

use crate::cloud::{PointCloud, VectorField};
use crate::error::{Error, Result};
use crate::linalg;

/// Absolute eigenvalue threshold below which a matrix counts as singular.
pub const SINGULARITY_THRESHOLD: f64 = 1e-10;

/// Condition-number threshold above which the inverse carries a warning.
pub const ILL_CONDITIONED: f64 = 1e12;

/// Guard on the dense `nd x nd` realization.
pub const OPERATOR_MATRIX_MAX: usize = 2000;

/// Parameter matrix, cloud, and cached covariance for operator evaluations.
#[derive(Debug, Clone)]
pub struct OperatorContext {
    a: DMatrix<f64>,
    cloud: PointCloud,
    sigma: DMatrix<f64>,
}

impl OperatorContext {
    /// A symmetric `A` together with the cloud. The covariance is cached.
    pub fn new(a: DMatrix<f64>, cloud: PointCloud) -> Result<Self> {
        let d = cloud.dim();
        if a.nrows() != d || a.ncols() != d {
            return Err(Error::DimensionMismatch {
                what: "operator parameter vs cloud dimension",
                expected: d,
                got: a.nrows().max(a.ncols()),
            });
        }
        if !linalg::is_symmetric(&a, 1e-10) {
            return Err(Error::InvalidCloud(
                "operator parameter A must be symmetric within 1e-10".into(),
            ));
        }
        let sigma = cloud.covariance();
        Ok(Self { a, cloud, sigma })
    }

    /// The mobility operator `L_{Sigma_mu, mu}`.
    pub fn mobility(cloud: PointCloud) -> Result<Self> {
        let sigma = cloud.covariance();
        Ok(Self {
            a: sigma.clone(),
            cloud,
            sigma,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
}

/// Applies the operator: row `i` is `2 (A v_i + M_v x_i)` with
/// `M_v = sum_j w_j x_j v_j^T`.
pub fn apply(ctx: &OperatorContext, v: &VectorField) -> Result<VectorField> {
    v.matches(ctx.cloud())?;
    let m_v = v.moment(ctx.cloud())?;
    // rows: 2 (V A^T + X M_v^T); A is symmetric
    let out = (v.values() * ctx.a().transpose() + ctx.cloud().points() * m_v.transpose()) * 2.0;
    VectorField::new(out)
}

fn check_nonsingular(m: &DMatrix<f64>, what: &'static str) -> Result<f64> {
    let (lo, _hi) = linalg::symmetric_eigen_range(m);
    let min_abs = m
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, &l| acc.min(l.abs()));
    if min_abs <= SINGULARITY_THRESHOLD {
        return Err(Error::SingularMatrix {
            what,
            eigenvalue: if lo.abs() < min_abs { lo } else { min_abs },
            threshold: SINGULARITY_THRESHOLD,
        });
    }
    Ok(min_abs)
}

/// Result of [`inverse`]: the preimage field plus solve diagnostics.
#[derive(Debug, Clone)]
pub struct InverseOutcome {
    pub field: VectorField,
    /// True when the input moment matrix was asymmetric beyond 1e-10 and the
    /// input was first projected onto the invariant space.
    pub projected: bool,
    /// Condition number of the Kronecker system `I (x) A + Sigma (x) I`.
    pub condition: f64,
    pub ill_conditioned: bool,
}

/// Principal inverse of the operator on the invariant space: solves the
/// Sylvester equation `A B + B Sigma = (1/2) int w(y) y^T dmu`, then returns
/// `v(x) = (1/2) A^{-1} w(x) - A^{-1} B x`.
///
/// When the moment matrix of `w` is asymmetric beyond 1e-10, `w` is first
/// projected onto the invariant space (recorded in the outcome); the inverse
/// is only defined there.
pub fn inverse(ctx: &OperatorContext, w: &VectorField) -> Result<InverseOutcome> {
    w.matches(ctx.cloud())?;
    check_nonsingular(ctx.a(), "operator parameter A")?;
    check_nonsingular(ctx.sigma(), "covariance")?;

    let d = ctx.cloud().dim();
    let id = DMatrix::<f64>::identity(d, d);
    let kron_system = linalg::kron(&id, ctx.a()) + linalg::kron(ctx.sigma(), &id);
    let condition = linalg::condition_number(&kron_system);
    if !condition.is_finite() {
        return Err(Error::SingularMatrix {
            what: "Kronecker system I(x)A + Sigma(x)I",
            eigenvalue: 0.0,
            threshold: SINGULARITY_THRESHOLD,
        });
    }

    let moment = w.moment(ctx.cloud())?; // int x w^T dmu
    let asym = (&moment - moment.transpose()).amax();
    let (w_eff, projected) = if asym > 1e-10 {
        (project_invariant(ctx.cloud(), w)?, true)
    } else {
        (w.clone(), false)
    };

    // N = int w(y) y^T dmu is the transpose of the (symmetrized) moment
    let n_mat = w_eff.moment(ctx.cloud())?.transpose();
    let b = linalg::solve_sylvester(ctx.a(), ctx.sigma(), &(n_mat * 0.5))?;

    let a_lu = ctx.a().clone().lu();
    let a_inv_b = a_lu
        .solve(&b)
        .ok_or(Error::SingularMatrix {
            what: "operator parameter A",
            eigenvalue: 0.0,
            threshold: SINGULARITY_THRESHOLD,
        })?;
    // rows: (1/2) w A^{-T} - x (A^{-1} B)^T; A symmetric
    let half_w = a_lu
        .solve(&w_eff.values().transpose())
        .ok_or(Error::SingularMatrix {
            what: "operator parameter A",
            eigenvalue: 0.0,
            threshold: SINGULARITY_THRESHOLD,
        })?
        .transpose()
        * 0.5;
    let out = half_w - ctx.cloud().points() * a_inv_b.transpose();
    Ok(InverseOutcome {
        field: VectorField::new(out)?,
        projected,
        condition,
        ill_conditioned: condition > ILL_CONDITIONED,
    })
}

/// Projects a field onto the invariant space by adding the kernel direction
/// `S id`, where the skew `S` solves `Sigma S + S Sigma = M - M^T` with
/// `M = int x v^T dmu`. The moment matrix of the output is symmetric and the
/// mobility operator sees the same field.
pub fn project_invariant(cloud: &PointCloud, v: &VectorField) -> Result<VectorField> {
    v.matches(cloud)?;
    let sigma = cloud.covariance();
    check_nonsingular(&sigma, "covariance")?;
    let m = v.moment(cloud)?;
    let rhs = &m - m.transpose();
    if rhs.amax() == 0.0 {
        return Ok(v.clone());
    }
    let s = linalg::solve_sylvester(&sigma, &sigma, &rhs)?;
    // v' = v + S x per row
    let out = v.values() + cloud.points() * s.transpose();
    VectorField::new(out)
}

/// Dense `nd x nd` realization acting on row-major flattened fields
/// (entry `(i*d + a, j*d + b) = 2 (A_ab delta_ij + w_j x_j[a] x_i[b])`).
pub fn operator_matrix(ctx: &OperatorContext) -> Result<DMatrix<f64>> {
    let n = ctx.cloud().len();
    let d = ctx.cloud().dim();
    let nd = n * d;
    if nd > OPERATOR_MATRIX_MAX {
        return Err(Error::SizeGuard {
            what: "operator_matrix",
            n: nd,
            max: OPERATOR_MATRIX_MAX,
        });
    }
    let mut l = DMatrix::<f64>::zeros(nd, nd);
    for i in 0..n {
        for j in 0..n {
            let wj = ctx.cloud().weights()[j];
            for a in 0..d {
                for b in 0..d {
                    let mut val =
                        2.0 * wj * ctx.cloud().points()[(j, a)] * ctx.cloud().points()[(i, b)];
                    if i == j {
                        val += 2.0 * ctx.a()[(a, b)];
                    }
                    l[(i * d + a, j * d + b)] = val;
                }
            }
        }
    }
    Ok(l)
}

/// Row-major flattening matching the [`operator_matrix`] index layout.
#[cfg(test)]
fn flatten(v: &VectorField) -> nalgebra::DVector<f64> {
    let (n, d) = (v.len(), v.dim());
    nalgebra::DVector::from_fn(n * d, |k, _| v.values()[(k / d, k % d)])
}

/// Report of the invariant-space spectrum verification.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Predicted eigenvalue set `2 (Lambda_mu union Gamma_mu)`.
    pub predicted: Vec<f64>,
    /// Computed eigenvalues of the operator restricted to the invariant space.
    pub computed: Vec<f64>,
    /// Largest distance from a computed eigenvalue to the predicted set.
    pub max_mismatch: f64,
    /// True when the invariant space is trivial and the check was skipped.
    pub degenerate: bool,
}

/// Builds the dense mobility operator, restricts it numerically to the
/// invariant space, and verifies that every eigenvalue lies within `tol` of
/// the predicted set `2 (Lambda_mu union Gamma_mu)`,
/// `Gamma_mu = { lambda_i + lambda_j }`.
pub fn spectrum_check(cloud: &PointCloud, tol: f64) -> Result<SpectrumReport> {
    let n = cloud.len();
    let d = cloud.dim();
    if n * d > 500 {
        return Err(Error::SizeGuard {
            what: "spectrum_check",
            n: n * d,
            max: 500,
        });
    }
    let sigma = cloud.covariance();
    let eigen = sigma.clone().symmetric_eigen();
    let lambdas: Vec<f64> = eigen.eigenvalues.iter().copied().collect();
    let mut predicted: Vec<f64> = lambdas.iter().map(|l| 2.0 * l).collect();
    for &li in &lambdas {
        for &lj in &lambdas {
            predicted.push(2.0 * (li + lj));
        }
    }
    predicted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    predicted.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    // Invariant-space basis: null space of the skew-moment constraints
    // sum_i w_i (x_i[a] v_i[b] - x_i[b] v_i[a]) = 0 for a < b.
    let nd = n * d;
    let n_constraints = d * (d - 1) / 2;
    if n == 1 || n_constraints == 0 {
        return Ok(SpectrumReport {
            predicted,
            computed: Vec::new(),
            max_mismatch: 0.0,
            degenerate: true,
        });
    }
    check_nonsingular(&sigma, "covariance")?;
    let mut constraints = DMatrix::<f64>::zeros(n_constraints, nd);
    let mut row = 0;
    for a in 0..d {
        for b in (a + 1)..d {
            for i in 0..n {
                let w = cloud.weights()[i];
                constraints[(row, i * d + b)] += w * cloud.points()[(i, a)];
                constraints[(row, i * d + a)] -= w * cloud.points()[(i, b)];
            }
            row += 1;
        }
    }
    // null-space basis: eigenvectors of the Gram matrix C^T C with
    // numerically zero eigenvalue (orthonormal since the Gram is symmetric)
    let gram = constraints.transpose() * &constraints;
    let eig = gram.symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut basis_cols: Vec<usize> = Vec::new();
    for k in 0..nd {
        if eig.eigenvalues[k] < 1e-12 * scale {
            basis_cols.push(k);
        }
    }
    let m = basis_cols.len();
    if m == 0 {
        return Ok(SpectrumReport {
            predicted,
            computed: Vec::new(),
            max_mismatch: 0.0,
            degenerate: true,
        });
    }
    let mut q = DMatrix::<f64>::zeros(nd, m);
    for (col, &k) in basis_cols.iter().enumerate() {
        for r in 0..nd {
            q[(r, col)] = eig.eigenvectors[(r, k)];
        }
    }

    let ctx = OperatorContext::mobility(cloud.clone())?;
    let l = operator_matrix(&ctx)?;
    let restricted = q.transpose() * &l * &q;
    let eigvals = restricted.complex_eigenvalues();

    let mut computed = Vec::with_capacity(m);
    let mut max_mismatch: f64 = 0.0;
    for ev in eigvals.iter() {
        computed.push(ev.re);
        if ev.re.abs() <= tol && ev.im.abs() <= tol {
            continue; // numerically zero eigenvalues are outside the claim
        }
        let dist = predicted
            .iter()
            .map(|p| (p - ev.re).abs().max(ev.im.abs()))
            .fold(f64::INFINITY, f64::min);
        max_mismatch = max_mismatch.max(dist);
    }
    computed.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(SpectrumReport {
        predicted,
        computed,
        max_mismatch,
        degenerate: false,
    })
}
