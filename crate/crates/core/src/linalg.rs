//! Small dense linear-algebra helpers shared across modules: matrix
//! predicates, Kronecker products, Sylvester solves, and seeded random
//! orthogonal matrices.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Maximum matrix dimension for the Kronecker-backed Sylvester solver.
pub const SYLVESTER_MAX_DIM: usize = 8;

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// PSD test on the symmetric part: smallest eigenvalue >= -tol.
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    eig.eigenvalues.iter().all(|&l| l >= -tol)
}

pub fn is_orthogonal(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let n = m.nrows();
    let gram = m.transpose() * m;
    let id = DMatrix::<f64>::identity(n, n);
    (gram - id).amax() <= tol
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Eigenvalue range of a symmetric matrix.
pub fn symmetric_eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = m.clone().symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &l in eig.eigenvalues.iter() {
        lo = lo.min(l);
        hi = hi.max(l);
    }
    (lo, hi)
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Solves `A X + X B = C` through the Kronecker linear system
/// `(I (x) A + B^T (x) I) vec(X) = vec(C)` with a dense LU factorization.
/// Dimensions are capped at [`SYLVESTER_MAX_DIM`].
pub fn solve_sylvester(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    if a.ncols() != d || b.nrows() != d || b.ncols() != d || c.nrows() != d || c.ncols() != d {
        return Err(Error::DimensionMismatch {
            what: "sylvester operands",
            expected: d,
            got: b.nrows().max(c.nrows()),
        });
    }
    if d > SYLVESTER_MAX_DIM {
        return Err(Error::SizeGuard {
            what: "sylvester solve",
            n: d,
            max: SYLVESTER_MAX_DIM,
        });
    }
    let id = DMatrix::<f64>::identity(d, d);
    let system = kron(&id, a) + kron(&b.transpose(), &id);
    let rhs = DVector::from_column_slice(c.as_slice());
    let lu = system.lu();
    let x = lu.solve(&rhs).ok_or(Error::SingularMatrix {
        what: "sylvester Kronecker system",
        eigenvalue: 0.0,
        threshold: 0.0,
    })?;
    Ok(DMatrix::from_column_slice(d, d, x.as_slice()))
}

/// 2-norm condition number estimate of a dense matrix via SVD.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let svd = m.clone().svd(false, false);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse square root of a symmetric positive definite matrix.
pub fn sqrt_inv_spd(m: &DMatrix<f64>, threshold: f64) -> Result<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min <= threshold {
        return Err(Error::SingularMatrix {
            what: "covariance",
            eigenvalue: min,
            threshold,
        });
    }
    let d = m.nrows();
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..d {
        let s = 1.0 / eig.eigenvalues[j].sqrt();
        for i in 0..d {
            scaled[(i, j)] *= s;
        }
    }
    Ok(&scaled * eig.eigenvectors.transpose())
}

/// Draws a random orthogonal matrix by QR of a Gaussian matrix, with the
/// R diagonal sign-fixed so the distribution is Haar and the output is
/// deterministic for a given generator state. `reflect` selects the
/// determinant -1 component.
pub fn random_orthogonal<R: Rng>(rng: &mut R, d: usize, reflect: bool) -> DMatrix<f64> {
    let normal = StandardNormal;
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| normal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    let want: f64 = if reflect { -1.0 } else { 1.0 };
    if q.determinant() * want < 0.0 {
        for i in 0..d {
            q[(i, d - 1)] = -q[(i, d - 1)];
        }
    }
    q
}

/// Reflection `diag(-1, 1, ..., 1)`.
pub fn reflection(d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::identity(d, d);
    m[(0, 0)] = -1.0;
    m
}

/// Rotation by `theta` radians in the first two coordinates.
pub fn planar_rotation(d: usize, theta: f64) -> DMatrix<f64> {
    assert!(d >= 2, "planar rotation needs d >= 2");
    let mut m = DMatrix::<f64>::identity(d, d);
    let (s, c) = theta.sin_cos();
    m[(0, 0)] = c;
    m[(0, 1)] = -s;
    m[(1, 0)] = s;
    m[(1, 1)] = c;
    m
}
