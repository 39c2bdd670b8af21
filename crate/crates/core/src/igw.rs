//! The IGW distance on equal-size uniform point clouds: primal objective,
//! exact brute-force solver, the alternating dual solver, PSD rotations,
//! Gromov-Monge maps, and Wasserstein comparison bounds.
//!
//! Throughout, `IGW(x, y)^2 = F1 - 2 max_pi ||C_pi||_F^2` with
//! `F1 = ||Sigma_x||_F^2 + ||Sigma_y||_F^2` and `C_pi` the cross-covariance
//! of the plan; the dual form runs over `8 ||A||_F^2 + IOT_A` with optimal
//! `A* = C_{pi*} / 2`.

use nalgebra::DMatrix;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::assignment::{solve_ot_bilinear, w2_distance};
use crate::cloud::PointCloud;
use crate::coupling::{cross_covariance, Coupling};
use crate::error::{Error, Result};
use crate::linalg;

/// Brute force enumerates `n!` permutations; guarded here.
pub const BRUTEFORCE_MAX_N: usize = 9;

#[derive(Debug, Clone)]
pub struct IgwOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for IgwOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-10,
            restarts: 8,
            seed: 0,
        }
    }
}

/// Output of an IGW solve.
#[derive(Debug, Clone)]
pub struct IgwResult {
    /// Squared distance; tiny negative round-off is clamped by [`IgwResult::igw`].
    pub igw_squared: f64,
    pub coupling: Coupling,
    /// Optimal dual variable `A* = cross-covariance / 2`.
    pub dual_a: DMatrix<f64>,
    /// Orthogonal matrix aligning the second cloud (identity unless computed
    /// via [`psd_rotation`]).
    pub rotation: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl IgwResult {
    pub fn igw(&self) -> f64 {
        self.igw_squared.max(0.0).sqrt()
    }
}

fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum()
}

/// `F1 = ||Sigma_x||_F^2 + ||Sigma_y||_F^2`, the coupling-independent part
/// of the primal objective.
pub fn f1_term(x: &PointCloud, y: &PointCloud) -> f64 {
    frobenius_sq(&x.covariance()) + frobenius_sq(&y.covariance())
}

/// Primal objective of a fixed plan:
/// `||Sigma_x||_F^2 + ||Sigma_y||_F^2 - 2 ||C_pi||_F^2`, clamped to zero
/// when within -1e-12 of it.
pub fn igw_objective(x: &PointCloud, y: &PointCloud, plan: &Coupling) -> Result<f64> {
    let c = cross_covariance(x, y, plan)?;
    let value = f1_term(x, y) - 2.0 * frobenius_sq(&c);
    if value < 0.0 && value > -1e-12 {
        Ok(0.0)
    } else {
        Ok(value)
    }
}

fn require_equal_uniform(x: &PointCloud, y: &PointCloud) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::UnsupportedMarginals(format!(
            "IGW solver needs equal sizes, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if !x.has_uniform_weights(1e-12) || !y.has_uniform_weights(1e-12) {
        return Err(Error::UnsupportedMarginals(
            "IGW solver needs uniform weights".into(),
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

/// Gram matrix of pairwise inner products.
fn gram(points: &DMatrix<f64>) -> DMatrix<f64> {
    points * points.transpose()
}

/// Primal objective of a permutation plan through the definitional double
/// sum over Gram entries. Being a sum of squares, it is nonnegative by
/// construction and free of the cancellation that affects the
/// `F1 - 2 ||C||_F^2` shortcut when the clouds are nearly isomorphic.
fn primal_of_permutation(
    gx: &DMatrix<f64>,
    gy: &DMatrix<f64>,
    weight: f64,
    sigma: &[usize],
) -> f64 {
    let n = sigma.len();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            let diff = gx[(i, k)] - gy[(sigma[i], sigma[k])];
            acc += diff * diff;
        }
    }
    acc * weight * weight
}

/// Visits every permutation of `0..n` (Heap's algorithm). The first visit is
/// the identity, so strict-improvement searches keep identity among ties.
fn for_each_permutation<F: FnMut(&[usize])>(n: usize, mut f: F) {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    f(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            f(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Exact IGW by enumerating all `n!` permutations; the oracle for every
/// other IGW computation. Guarded at `n <= 9`.
pub fn igw_bruteforce(x: &PointCloud, y: &PointCloud) -> Result<IgwResult> {
    require_equal_uniform(x, y)?;
    let n = x.len();
    if n > BRUTEFORCE_MAX_N {
        return Err(Error::SizeGuard {
            what: "igw_bruteforce",
            n,
            max: BRUTEFORCE_MAX_N,
        });
    }
    let d = x.dim();
    let w = 1.0 / n as f64;
    let gx = gram(x.points());
    let gy = gram(y.points());
    let mut best_perm: Vec<usize> = (0..n).collect();
    let mut best_value = f64::INFINITY;
    let mut count = 0usize;
    for_each_permutation(n, |perm| {
        count += 1;
        let value = primal_of_permutation(&gx, &gy, w, perm);
        if value < best_value {
            best_value = value;
            best_perm = perm.to_vec();
        }
    });
    let coupling = Coupling::permutation(best_perm, x.weights().clone(), y.weights().clone())?;
    let c = cross_covariance(x, y, &coupling)?;
    Ok(IgwResult {
        igw_squared: best_value,
        coupling,
        dual_a: c * 0.5,
        rotation: DMatrix::identity(d, d),
        iterations: count,
        converged: true,
    })
}

/// One run of block-coordinate descent on the dual
/// `8 ||A||_F^2 + IOT_A(x, y)` from a given initial `A`.
fn alternate_from(
    x: &PointCloud,
    y: &PointCloud,
    mut a: DMatrix<f64>,
    opts: &IgwOptions,
) -> Result<(DMatrix<f64>, Coupling, f64, usize, bool)> {
    let mut objective = f64::INFINITY;
    let mut converged = false;
    let mut coupling = Coupling::identity(x.weights().clone());
    let mut iterations = 0;
    for iter in 0..opts.max_iters {
        iterations = iter + 1;
        let (plan, iot) = solve_ot_bilinear(x, y, &a)?;
        let current = 8.0 * frobenius_sq(&a) + iot;
        // each half-step is an exact argmin, so the dual objective cannot
        // increase beyond round-off
        debug_assert!(
            current <= objective + 1e-9,
            "dual objective increased: {objective} -> {current}"
        );
        let next_a = cross_covariance(x, y, &plan)? * 0.5;
        let delta = (&next_a - &a).norm();
        let improved = objective - current;
        a = next_a;
        coupling = plan;
        objective = current;
        if delta < opts.tol || (iter > 0 && improved.abs() < 1e-12) {
            converged = true;
            break;
        }
    }
    // At A = C_pi / 2 the joint objective collapses to -2 ||C_pi||_F^2
    // = -8 ||A||_F^2, which is never above the last dual evaluation and
    // keeps the returned (coupling, dual_a, objective) triple consistent.
    let fixed_point_obj = -8.0 * frobenius_sq(&a);
    Ok((a, coupling, fixed_point_obj, iterations, converged))
}

/// IGW via restarted block-coordinate descent on the dual form.
///
/// Restart 0 warm-starts `A` from the W2-optimal coupling; the remaining
/// restarts use identity-index couplings against seeded random rotations of
/// the second cloud, one of which is a reflection so both connected
/// components of `O(d)` are probed. Returns the best restart; ties resolve
/// to the lower restart index.
pub fn igw_alternating(x: &PointCloud, y: &PointCloud, opts: &IgwOptions) -> Result<IgwResult> {
    require_equal_uniform(x, y)?;
    let d = x.dim();
    let n = x.len();
    let w = 1.0 / n as f64;
    let gx = gram(x.points());
    let gy = gram(y.points());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let restarts = opts.restarts.max(1);

    let index_cross = {
        let mut c = DMatrix::<f64>::zeros(d, d);
        for i in 0..n {
            let xi = x.points().row(i);
            let yi = y.points().row(i);
            for a in 0..d {
                for b in 0..d {
                    c[(a, b)] += w * xi[a] * yi[b];
                }
            }
        }
        c
    };

    let mut best: Option<IgwResult> = None;
    for r in 0..restarts {
        let a0 = if r == 0 {
            let (_, plan) = w2_distance(x, y)?;
            cross_covariance(x, y, &plan)? * 0.5
        } else {
            // one reflected initialization probes the det = -1 component
            let reflect = r == 1 && restarts > 1;
            let rot = linalg::random_orthogonal(&mut rng, d, reflect);
            &index_cross * rot.transpose() * 0.5
        };
        let (a, coupling, _dual_obj, iterations, converged) = alternate_from(x, y, a0, opts)?;
        let sigma_perm = coupling
            .as_permutation()
            .expect("bilinear OT returns permutations");
        let igw_squared = primal_of_permutation(&gx, &gy, w, sigma_perm);
        let better = match &best {
            None => true,
            Some(b) => igw_squared < b.igw_squared,
        };
        if better {
            best = Some(IgwResult {
                igw_squared,
                coupling,
                dual_a: a,
                rotation: DMatrix::identity(d, d),
                iterations,
                converged,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Orthogonal `O = P Q^T` from the SVD `P Lambda Q^T` of the plan's
/// cross-covariance. Pushing the second cloud forward through `O` makes the
/// transported plan's cross-covariance symmetric PSD.
pub fn psd_rotation(x: &PointCloud, y: &PointCloud, plan: &Coupling) -> Result<DMatrix<f64>> {
    let c = cross_covariance(x, y, plan)?;
    if !linalg::all_finite(&c) {
        return Err(Error::NonFinite("cross covariance"));
    }
    let svd = c.svd(true, true);
    let p = svd.u.ok_or(Error::NonFinite("SVD factor U"))?;
    let qt = svd.v_t.ok_or(Error::NonFinite("SVD factor V^T"))?;
    Ok(&p * &qt)
}

/// Gromov-Monge map between equal-size uniform clouds: the permutation
/// induced by the Brenier assignment for cost `||x - 8 A* y||^2`, where `A*`
/// is the optimal dual variable. Requires `A*` nonsingular.
pub fn gromov_monge_map(x: &PointCloud, y: &PointCloud) -> Result<(Vec<usize>, DMatrix<f64>)> {
    gromov_monge_map_with(x, y, &IgwOptions::default())
}

pub fn gromov_monge_map_with(
    x: &PointCloud,
    y: &PointCloud,
    opts: &IgwOptions,
) -> Result<(Vec<usize>, DMatrix<f64>)> {
    require_equal_uniform(x, y)?;
    let result = igw_alternating(x, y, opts)?;
    let a_star = result.dual_a;
    let svd = a_star.clone().svd(false, false);
    let min_sv = svd.singular_values.min();
    if min_sv <= 1e-10 {
        return Err(Error::MapDoesNotExist {
            min_singular_value: min_sv,
        });
    }
    // Brenier map for mu -> (8 A*)# nu is the optimal assignment under
    // squared Euclidean cost against the transformed targets 8 A* y_j.
    let transformed = y.apply_linear(&(&a_star * 8.0))?;
    let n = x.len();
    let cost = DMatrix::from_fn(n, n, |i, j| {
        (x.points().row(i) - transformed.points().row(j)).norm_squared()
    });
    let (sigma, _) = crate::assignment::solve_assignment(&cost)?;
    Ok((sigma, a_star))
}

/// Both sides of the IGW / Wasserstein comparison inequalities.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub igw: f64,
    pub w2: f64,
    /// `sqrt(2 M2(x) + 2 M2(y)) * W2(x, y)`, an upper bound on IGW.
    pub upper_rhs: f64,
    /// `(  (lmin(Sx)^2 + lmin(Sy)^2) / 2 )^{1/4} * W2(x, O# y)`, a lower
    /// bound on IGW; NaN when either covariance is singular.
    pub lower_lhs: f64,
    /// `W2(x, O# y)` for the PSD rotation `O` of an optimal coupling.
    pub w2_aligned: f64,
    pub upper_violation: bool,
    pub lower_violation: bool,
}

pub const COMPARISON_TOL: f64 = 1e-8;

/// Evaluates the two-sided comparison between IGW and W2. Uses brute force
/// when `n <= 8`, the alternating solver otherwise.
pub fn check_comparison_bounds(x: &PointCloud, y: &PointCloud) -> Result<ComparisonReport> {
    require_equal_uniform(x, y)?;
    let result = if x.len() <= 8 {
        igw_bruteforce(x, y)?
    } else {
        igw_alternating(x, y, &IgwOptions::default())?
    };
    let igw = result.igw();
    let (w2, _) = w2_distance(x, y)?;
    let upper_rhs = (2.0 * x.second_moment() + 2.0 * y.second_moment()).sqrt() * w2;

    let (lx, _) = linalg::symmetric_eigen_range(&x.covariance());
    let (ly, _) = linalg::symmetric_eigen_range(&y.covariance());
    let (lower_lhs, w2_aligned) = if lx > 0.0 && ly > 0.0 {
        let o = psd_rotation(x, y, &result.coupling)?;
        let y_aligned = y.apply_linear(&o)?;
        let (w2a, _) = w2_distance(x, &y_aligned)?;
        let factor = (0.5 * (lx * lx + ly * ly)).powf(0.25);
        (factor * w2a, w2a)
    } else {
        (f64::NAN, f64::NAN)
    };

    Ok(ComparisonReport {
        igw,
        w2,
        upper_rhs,
        lower_lhs,
        w2_aligned,
        upper_violation: igw > upper_rhs + COMPARISON_TOL,
        lower_violation: lower_lhs.is_finite() && lower_lhs > igw + COMPARISON_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{is_psd, planar_rotation, random_orthogonal};
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> PointCloud {
        let points = nalgebra::DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        PointCloud::uniform(points).unwrap()
    }

    /// Definitional quadruple-sum objective, collapsed to a double sum for
    /// permutation plans.
    fn primal_oracle(x: &PointCloud, y: &PointCloud, sigma: &[usize]) -> f64 {
        let n = x.len();
        let w = 1.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            for k in 0..n {
                let xx = x.points().row(i).dot(&x.points().row(k));
                let yy = y.points().row(sigma[i]).dot(&y.points().row(sigma[k]));
                acc += w * w * (xx - yy) * (xx - yy);
            }
        }
        acc
    }

    #[test]
    fn objective_zero_for_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = random_cloud(&mut rng, 10, 2);
        let id = Coupling::identity(x.weights().clone());
        assert_eq!(igw_objective(&x, &x, &id).unwrap(), 0.0);
    }

    #[test]
    fn objective_invariant_under_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let x = random_cloud(&mut rng, 12, 3);
        let o = random_orthogonal(&mut rng, 3, false);
        let y = x.apply_linear(&o).unwrap();
        let id = Coupling::identity(x.weights().clone());
        let value = igw_objective(&x, &y, &id).unwrap();
        assert!(value.abs() <= 1e-12, "got {value}");
    }

    #[test]
    fn objective_matches_quadruple_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let x = random_cloud(&mut rng, 7, 3);
            let y = random_cloud(&mut rng, 7, 3);
            let mut sigma: Vec<usize> = (0..7).collect();
            for i in (1..7).rev() {
                let j = rng.random_range(0..=i);
                sigma.swap(i, j);
            }
            let plan = Coupling::permutation(
                sigma.clone(),
                x.weights().clone(),
                y.weights().clone(),
            )
            .unwrap();
            let fast = igw_objective(&x, &y, &plan).unwrap();
            let slow = primal_oracle(&x, &y, &sigma);
            assert_relative_eq!(fast, slow, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn bruteforce_identical_clouds() {
        let x = PointCloud::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]])
            .unwrap();
        let result = igw_bruteforce(&x, &x).unwrap();
        assert!(result.igw_squared.abs() <= 1e-15);
        assert_eq!(result.coupling.as_permutation().unwrap(), &[0, 1, 2]);
    }

    #[test]
    fn bruteforce_hand_computed_pair() {
        // x = {(1,0),(-1,0)}, y = {(0,2),(0,-2)}: F1 = 1 + 16, best cross
        // norm 4, so IGW^2 = 17 - 8 = 9.
        let x = PointCloud::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let y = PointCloud::from_rows(&[vec![0.0, 2.0], vec![0.0, -2.0]]).unwrap();
        let result = igw_bruteforce(&x, &y).unwrap();
        assert_relative_eq!(result.igw_squared, 9.0, epsilon = 1e-14);
    }

    #[test]
    fn bruteforce_matches_definitional_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..5 {
            let x = random_cloud(&mut rng, 6, 2);
            let y = random_cloud(&mut rng, 6, 2);
            let result = igw_bruteforce(&x, &y).unwrap();
            // independent recursive enumeration of the primal objective
            let mut best = f64::INFINITY;
            let mut perm = Vec::new();
            let mut free = vec![true; 6];
            fn rec(
                x: &PointCloud,
                y: &PointCloud,
                perm: &mut Vec<usize>,
                free: &mut Vec<bool>,
                best: &mut f64,
                oracle: &dyn Fn(&PointCloud, &PointCloud, &[usize]) -> f64,
            ) {
                if perm.len() == x.len() {
                    *best = best.min(oracle(x, y, perm));
                    return;
                }
                for j in 0..x.len() {
                    if free[j] {
                        free[j] = false;
                        perm.push(j);
                        rec(x, y, perm, free, best, oracle);
                        perm.pop();
                        free[j] = true;
                    }
                }
            }
            rec(&x, &y, &mut perm, &mut free, &mut best, &primal_oracle);
            assert_relative_eq!(result.igw_squared, best, epsilon = 1e-10);
        }
    }

    #[test]
    fn bruteforce_guard() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let x = random_cloud(&mut rng, 10, 2);
        assert!(matches!(
            igw_bruteforce(&x, &x),
            Err(Error::SizeGuard { .. })
        ));
    }

    #[test]
    fn alternating_identical_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let x = random_cloud(&mut rng, 15, 2);
        let result = igw_alternating(&x, &x, &IgwOptions::default()).unwrap();
        assert!(result.igw_squared.abs() <= 1e-10, "{}", result.igw_squared);
    }

    #[test]
    fn alternating_rotation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let x = random_cloud(&mut rng, 50, 2);
        let y = x
            .apply_linear(&planar_rotation(2, 37.0_f64.to_radians()))
            .unwrap();
        let result = igw_alternating(&x, &y, &IgwOptions::default()).unwrap();
        assert!(result.igw_squared.abs() <= 1e-8, "{}", result.igw_squared);
    }

    #[test]
    fn alternating_result_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..10 {
            let x = random_cloud(&mut rng, 7, 3);
            let y = random_cloud(&mut rng, 7, 3);
            let result = igw_alternating(&x, &y, &IgwOptions::default()).unwrap();
            // A* = cross-covariance / 2
            let c = cross_covariance(&x, &y, &result.coupling).unwrap();
            assert!((&result.dual_a - &c * 0.5).amax() <= 1e-10);
            // primal/dual consistency: igw^2 = F1 + 8||A||^2 + IOT
            let (_, iot) = solve_ot_bilinear(&x, &y, &result.dual_a).unwrap();
            let dual = 8.0 * result.dual_a.iter().map(|v| v * v).sum::<f64>() + iot;
            assert_relative_eq!(
                result.igw_squared,
                f1_term(&x, &y) + dual,
                epsilon = 1e-9
            );
            assert!(result.igw_squared >= -1e-9);
        }
    }

    #[test]
    fn alternating_tracks_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let mut hits = 0;
        let total = 40;
        for _ in 0..total {
            let n = rng.random_range(4..=7);
            let d = rng.random_range(2..=3);
            let x = random_cloud(&mut rng, n, d);
            let y = random_cloud(&mut rng, n, d);
            let exact = igw_bruteforce(&x, &y).unwrap().igw_squared;
            let approx = igw_alternating(&x, &y, &IgwOptions::default())
                .unwrap()
                .igw_squared;
            assert!(approx >= exact - 1e-8, "below exact: {approx} < {exact}");
            if (approx - exact).abs() <= 1e-8 {
                hits += 1;
            }
        }
        assert!(hits * 100 >= total * 95, "only {hits}/{total} matched");
    }

    #[test]
    fn psd_rotation_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        // already-PSD cross-covariance: O = I
        let x = random_cloud(&mut rng, 8, 2);
        let id_plan = Coupling::identity(x.weights().clone());
        let o = psd_rotation(&x, &x, &id_plan).unwrap();
        assert!((&o - DMatrix::<f64>::identity(2, 2)).amax() <= 1e-10);

        // rotated cloud: O recovers R^T so the aligned cross-cov is Sigma_x
        let r = planar_rotation(2, 1.1);
        let y = x.apply_linear(&r).unwrap();
        let o = psd_rotation(&x, &y, &id_plan).unwrap();
        let aligned = y.apply_linear(&o).unwrap();
        let c = cross_covariance(&x, &aligned, &id_plan).unwrap();
        assert!(is_psd(&c, 1e-9));
        assert!((&c - x.covariance()).amax() <= 1e-9);

        // random plans: symmetrized cross-covariance is PSD
        for _ in 0..10 {
            let x = random_cloud(&mut rng, 6, 3);
            let y = random_cloud(&mut rng, 6, 3);
            let mut sigma: Vec<usize> = (0..6).collect();
            for i in (1..6).rev() {
                let j = rng.random_range(0..=i);
                sigma.swap(i, j);
            }
            let plan =
                Coupling::permutation(sigma, x.weights().clone(), y.weights().clone()).unwrap();
            let o = psd_rotation(&x, &y, &plan).unwrap();
            let aligned = y.apply_linear(&o).unwrap();
            let c = cross_covariance(&x, &aligned, &plan).unwrap();
            assert!(is_psd(&c, 1e-9));
        }
    }

    #[test]
    fn gromov_monge_identity_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let x = random_cloud(&mut rng, 6, 2);
        let (sigma, a_star) = gromov_monge_map(&x, &x).unwrap();
        assert_eq!(sigma, vec![0, 1, 2, 3, 4, 5]);
        assert!((&a_star - x.covariance() * 0.5).amax() <= 1e-9);
    }

    #[test]
    fn gromov_monge_matches_bruteforce_plan() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        for _ in 0..5 {
            let x = random_cloud(&mut rng, 6, 2);
            let o = random_orthogonal(&mut rng, 2, false);
            let y = x.apply_linear(&o).unwrap();
            let (sigma, a_star) = gromov_monge_map(&x, &y).unwrap();
            // consistency: half cross-covariance under sigma equals A*
            let plan = Coupling::permutation(
                sigma.clone(),
                x.weights().clone(),
                y.weights().clone(),
            )
            .unwrap();
            let c = cross_covariance(&x, &y, &plan).unwrap();
            assert!((c * 0.5 - &a_star).amax() <= 1e-8);
            // the induced plan achieves the brute-force optimum
            let exact = igw_bruteforce(&x, &y).unwrap().igw_squared;
            let induced = igw_objective(&x, &y, &plan).unwrap();
            assert_relative_eq!(induced, exact, epsilon = 1e-8);
        }
    }

    #[test]
    fn gromov_monge_degenerate_cloud_errors() {
        // collinear cloud: singular covariance, singular A*
        let x = PointCloud::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![2.0, 0.0],
            vec![3.0, 0.0],
        ])
        .unwrap();
        assert!(matches!(
            gromov_monge_map(&x, &x),
            Err(Error::MapDoesNotExist { .. })
        ));
    }

    #[test]
    fn comparison_bounds_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        // identical clouds: both sides of the upper bound vanish
        let x = random_cloud(&mut rng, 6, 2);
        let report = check_comparison_bounds(&x, &x).unwrap();
        assert_eq!(report.igw, 0.0);
        assert_eq!(report.upper_rhs, 0.0);
        assert!(!report.upper_violation && !report.lower_violation);

        for _ in 0..25 {
            let x = random_cloud(&mut rng, 6, 2);
            let y = random_cloud(&mut rng, 6, 2);
            let report = check_comparison_bounds(&x, &y).unwrap();
            assert!(!report.upper_violation, "{report:?}");
            assert!(!report.lower_violation, "{report:?}");
        }
    }

    #[test]
    fn comparison_translated_cloud_strict_slack() {
        let mut rng = ChaCha8Rng::seed_from_u64(89);
        let x = random_cloud(&mut rng, 6, 2);
        let mut far = x.points().clone();
        for i in 0..far.nrows() {
            far[(i, 0)] += 50.0;
        }
        let y = PointCloud::uniform(far).unwrap();
        let report = check_comparison_bounds(&x, &y).unwrap();
        assert!(!report.upper_violation);
        assert!(report.upper_rhs > report.igw + 1.0);
    }

    #[test]
    fn pseudometric_suite_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        for _ in 0..10 {
            let x = random_cloud(&mut rng, 5, 2);
            let y = random_cloud(&mut rng, 5, 2);
            let z = random_cloud(&mut rng, 5, 2);
            let xy = igw_bruteforce(&x, &y).unwrap().igw();
            let yx = igw_bruteforce(&y, &x).unwrap().igw();
            let yz = igw_bruteforce(&y, &z).unwrap().igw();
            let xz = igw_bruteforce(&x, &z).unwrap().igw();
            assert!((xy - yx).abs() <= 1e-10);
            assert!(xz <= xy + yz + 1e-9);
            assert!(xy >= 0.0);
        }
        // orthogonal invariance at the brute-force level
        let x = random_cloud(&mut rng, 5, 3);
        for _ in 0..5 {
            let reflect = rng.random::<bool>();
            let o = random_orthogonal(&mut rng, 3, reflect);
            let y = x.apply_linear(&o).unwrap();
            assert!(igw_bruteforce(&x, &y).unwrap().igw() <= 1e-10);
        }
    }
}
