//! Gradient flows in the IGW and Wasserstein geometries: the IGW gradient
//! via the inverse mobility operator, the descent/damping decomposition of
//! the functional decay, explicit Euler integration, and the JKO-style
//! minimizing-movement scheme with PSD rotations.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::cloud::{PointCloud, VectorField};
use crate::coupling::cross_covariance;
use crate::error::{Error, Result};
use crate::functionals::Functional;
use crate::igw::{igw_alternating, psd_rotation, IgwOptions};
use crate::linalg;
use crate::mobility::{self, OperatorContext};

/// One time slice of a flow.
#[derive(Debug, Clone)]
pub struct Frame {
    pub t: f64,
    pub cloud: PointCloud,
    pub velocity: Option<VectorField>,
    pub scalars: BTreeMap<String, f64>,
}

/// Time-stamped sequence of frames; all frames share `n` and `d` and the
/// time stamps are strictly increasing.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub tau: f64,
    pub frames: Vec<Frame>,
}

impl Trajectory {
    pub fn first(&self) -> &Frame {
        self.frames.first().expect("trajectory has frames")
    }

    pub fn last(&self) -> &Frame {
        self.frames.last().expect("trajectory has frames")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    Igw,
    Wasserstein,
}

impl std::str::FromStr for Geometry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "igw" => Ok(Self::Igw),
            "wasserstein" | "w2" => Ok(Self::Wasserstein),
            other => Err(Error::InvalidCloud(format!("unknown geometry '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub geometry: Geometry,
    pub tau: f64,
    pub steps: usize,
    pub functional: Functional,
    pub singularity_floor: f64,
    pub record_velocity: bool,
}

impl FlowConfig {
    pub fn new(geometry: Geometry, functional: Functional, tau: f64, steps: usize) -> Self {
        Self {
            geometry,
            tau,
            steps,
            functional,
            singularity_floor: 1e-8,
            record_velocity: true,
        }
    }
}

#[derive(Debug, Clone)]
pub enum StopReason {
    Completed,
    CovarianceSingular { lambda_min: f64, frame: usize },
}

impl StopReason {
    pub fn is_singular_stop(&self) -> bool {
        matches!(self, Self::CovarianceSingular { .. })
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Completed => "completed".into(),
            Self::CovarianceSingular { lambda_min, frame } => format!(
                "stopped at frame {frame}: covariance lambda_min {lambda_min:e} below floor"
            ),
        }
    }
}

#[derive(Debug)]
pub struct FlowOutcome {
    pub trajectory: Trajectory,
    pub stop: StopReason,
}

/// The IGW gradient `L_{Sigma,mu}^{-1}[grad_W F]`: project the Wasserstein
/// gradient onto the invariant space, then invert the mobility operator.
pub fn igw_gradient(f: &Functional, cloud: &PointCloud) -> Result<VectorField> {
    let g = f.wasserstein_gradient(cloud)?;
    igw_transform(cloud, &g)
}

/// Applies the inverse mobility operator (after invariant-space projection)
/// to an arbitrary field.
pub fn igw_transform(cloud: &PointCloud, field: &VectorField) -> Result<VectorField> {
    let (lmin, _) = linalg::symmetric_eigen_range(&cloud.covariance());
    if lmin <= mobility::SINGULARITY_THRESHOLD {
        return Err(Error::FlowDegenerate { lambda_min: lmin });
    }
    let projected = mobility::project_invariant(cloud, field)?;
    let ctx = OperatorContext::mobility(cloud.clone())?;
    Ok(mobility::inverse(&ctx, &projected)?.field)
}

/// Signed decomposition of the functional decay along the IGW flow.
#[derive(Debug, Clone, Copy)]
pub struct DecayTerms {
    /// `-<g, Sigma^{-1} g / 2>_{L^2}`, always <= 0.
    pub descent: f64,
    /// The Kronecker quadratic form, always >= 0.
    pub damping: f64,
    /// `descent + damping = dF/dt` along the flow.
    pub total: f64,
}

/// Computes descent and damping for the exact gradient field of the
/// functional at this cloud. `descent <= 0`, `damping >= 0`, and
/// `total` equals `<g, v>` for the flow velocity `v = -L^{-1}[g]`.
pub fn descent_damping(f: &Functional, cloud: &PointCloud) -> Result<DecayTerms> {
    let g = f.flow_gradient(cloud)?;
    decay_terms(cloud, &g)
}

/// Descent/damping decomposition for an arbitrary gradient field: the field
/// is projected onto the invariant space, then
/// `descent = -<h, Sigma^{-1} h>/2` and
/// `damping = vec(N)^T (I (x) Sigma^2 + Sigma (x) Sigma)^{-1} vec(N) / 2`
/// with `N = int h(y) y^T dmu`.
pub fn decay_terms(cloud: &PointCloud, gradient: &VectorField) -> Result<DecayTerms> {
    let sigma = cloud.covariance();
    let (lmin, _) = linalg::symmetric_eigen_range(&sigma);
    if lmin <= mobility::SINGULARITY_THRESHOLD {
        return Err(Error::FlowDegenerate { lambda_min: lmin });
    }
    let h = mobility::project_invariant(cloud, gradient)?;

    let lu = sigma.clone().lu();
    let solved = lu
        .solve(&h.values().transpose())
        .ok_or(Error::SingularMatrix {
            what: "covariance",
            eigenvalue: lmin,
            threshold: mobility::SINGULARITY_THRESHOLD,
        })?;
    let mut descent = 0.0;
    for i in 0..cloud.len() {
        descent -= 0.5 * cloud.weights()[i] * h.values().row(i).dot(&solved.column(i).transpose());
    }

    let n_mat = h.moment(cloud)?.transpose(); // int h(y) y^T dmu
    let d = cloud.dim();
    let id = DMatrix::<f64>::identity(d, d);
    let system = linalg::kron(&id, &(&sigma * &sigma)) + linalg::kron(&sigma, &sigma);
    let q = DVector::from_column_slice(n_mat.as_slice());
    let solved_q = system.lu().solve(&q).ok_or(Error::SingularMatrix {
        what: "damping Kronecker system",
        eigenvalue: lmin,
        threshold: mobility::SINGULARITY_THRESHOLD,
    })?;
    let damping = 0.5 * q.dot(&solved_q);

    Ok(DecayTerms {
        descent,
        damping,
        total: descent + damping,
    })
}

fn require_finite(points: &DMatrix<f64>, context: &str) -> Result<()> {
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteState {
            context: context.to_string(),
        });
    }
    Ok(())
}

/// Explicit Euler integration of the gradient flow
/// `x_i <- x_i + tau * v(x_i)` with `v = -grad F` in the configured
/// geometry. Emits `steps + 1` frames carrying the functional value, the
/// descent/damping split, and `lambda_min(Sigma)`. In the IGW geometry the
/// run halts early (with the reason recorded) once `lambda_min(Sigma)`
/// falls below the singularity floor.
pub fn euler_flow(cfg: &FlowConfig, cloud0: &PointCloud) -> Result<FlowOutcome> {
    let mut state = cloud0.clone();
    let mut frames = Vec::with_capacity(cfg.steps + 1);
    let mut stop = StopReason::Completed;

    for j in 0..=cfg.steps {
        let t = j as f64 * cfg.tau;
        let sigma = state.covariance();
        let (lmin, _) = linalg::symmetric_eigen_range(&sigma);

        if cfg.geometry == Geometry::Igw && lmin < cfg.singularity_floor {
            stop = StopReason::CovarianceSingular {
                lambda_min: lmin,
                frame: j,
            };
            let mut scalars = BTreeMap::new();
            scalars.insert(
                "functional_value".into(),
                cfg.functional.value(&state)?,
            );
            scalars.insert("lambda_min_sigma".into(), lmin);
            frames.push(Frame {
                t,
                cloud: state.clone(),
                velocity: None,
                scalars,
            });
            break;
        }

        let gradient = cfg.functional.flow_gradient(&state)?;
        let (velocity, terms) = match cfg.geometry {
            Geometry::Igw => {
                let v = igw_transform(&state, &gradient)?;
                let terms = decay_terms(&state, &gradient)?;
                (
                    VectorField::new(-v.values().clone())?,
                    terms,
                )
            }
            Geometry::Wasserstein => {
                let sq = gradient.l2_inner(&gradient, &state)?;
                (
                    VectorField::new(-gradient.values().clone())?,
                    DecayTerms {
                        descent: -sq,
                        damping: 0.0,
                        total: -sq,
                    },
                )
            }
        };

        let mut scalars = BTreeMap::new();
        scalars.insert("functional_value".into(), cfg.functional.value(&state)?);
        scalars.insert("descent".into(), terms.descent);
        scalars.insert("damping".into(), terms.damping);
        scalars.insert("lambda_min_sigma".into(), lmin);
        frames.push(Frame {
            t,
            cloud: state.clone(),
            velocity: cfg.record_velocity.then(|| velocity.clone()),
            scalars,
        });

        if j < cfg.steps {
            let next = state.points() + velocity.values() * cfg.tau;
            require_finite(&next, &format!("euler step {j}"))?;
            state = PointCloud::new(next, state.weights().clone())?;
        }
    }

    Ok(FlowOutcome {
        trajectory: Trajectory {
            tau: cfg.tau,
            frames,
        },
        stop,
    })
}

/// Inner-solver settings for one JKO step.
#[derive(Debug, Clone)]
pub struct JkoInner {
    /// Learning rate; defaults to `0.1 * tau` when unset.
    pub lr: Option<f64>,
    pub iters: usize,
    pub replan_every: usize,
    pub igw_restarts: usize,
    pub seed: u64,
}

impl Default for JkoInner {
    fn default() -> Self {
        Self {
            lr: None,
            iters: 500,
            replan_every: 10,
            igw_restarts: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct JkoDiagnostics {
    /// `IGW(rho_{i+1}, rho_i)^2` of the accepted step.
    pub step_igw_squared: f64,
    /// `F(rho_i) - F(rho_{i+1})`.
    pub functional_drop: f64,
    /// Slack in `IGW^2 <= 2 tau (F_i - F_{i+1}) + 1e-8` (>= 0 when satisfied).
    pub inequality_margin: f64,
    /// Smallest eigenvalue of the symmetrized cross-covariance between the
    /// consecutive clouds under the optimal plan (PSD check).
    pub cross_cov_min_eig: f64,
    pub inner_iterations: usize,
    pub replans: usize,
    /// Final inner objective `F(rho) + IGW^2/(2 tau)`.
    pub objective: f64,
}

pub const JKO_STEP_SLACK: f64 = 1e-8;

fn igw_opts_for(inner: &JkoInner) -> IgwOptions {
    IgwOptions {
        restarts: inner.igw_restarts,
        seed: inner.seed,
        ..IgwOptions::default()
    }
}

/// One minimizing-movement step: minimize `F(rho) + IGW(rho, rho_i)^2 / (2 tau)`
/// over particle positions by gradient descent with an envelope IGW gradient
/// (the dual pair `(A*, pi*)` is held fixed between replans), then align the
/// minimizer to `rho_i` with the PSD rotation.
pub fn jko_step(
    f: &Functional,
    cloud_i: &PointCloud,
    tau: f64,
    inner: &JkoInner,
) -> Result<(PointCloud, JkoDiagnostics)> {
    if tau <= 0.0 {
        return Err(Error::InvalidCloud("tau must be positive".into()));
    }
    let (lmin, _) = linalg::symmetric_eigen_range(&cloud_i.covariance());
    if lmin <= mobility::SINGULARITY_THRESHOLD {
        return Err(Error::FlowDegenerate { lambda_min: lmin });
    }
    let lr = inner.lr.unwrap_or(0.1 * tau);
    let opts = igw_opts_for(inner);
    let n = cloud_i.len();
    let d = cloud_i.dim();
    let f_prev = f.value(cloud_i)?;

    let mut z = cloud_i.points().clone();
    let mut a_star = DMatrix::<f64>::zeros(d, d);
    // target index per moved point under the frozen plan
    let mut matched: Vec<usize> = (0..n).collect();
    let mut last_objective = f64::INFINITY;
    let mut stalled = 0usize;
    let mut replans = 0usize;
    let mut iterations = 0usize;

    let objective_of = |zc: &PointCloud, igw_sq: f64| -> Result<f64> {
        Ok(f.value(zc)? + igw_sq / (2.0 * tau))
    };

    for it in 0..inner.iters.max(1) {
        let zc = PointCloud::new(z.clone(), cloud_i.weights().clone())?;
        if it % inner.replan_every.max(1) == 0 {
            // replan: fresh dual pair between the moved cloud and rho_i
            let result = igw_alternating(&zc, cloud_i, &opts)?;
            a_star = result.dual_a.clone();
            let sigma_perm = result
                .coupling
                .as_permutation()
                .expect("alternating solver returns permutations")
                .to_vec();
            matched = sigma_perm;
            replans += 1;
            let objective = objective_of(&zc, result.igw_squared.max(0.0))?;
            if objective > last_objective + 1e-12 {
                stalled += 1;
                if stalled >= 10 {
                    return Err(Error::InnerDivergence {
                        stalled_replans: stalled,
                        last_iterate: Box::new(zc),
                    });
                }
            } else {
                stalled = 0;
            }
            last_objective = objective;
        }
        iterations = it + 1;

        // envelope gradient: n * d/dz [ F + IGW^2/(2 tau) ] per point is
        // flow_gradient + (4 Sigma_z z - 8 A* y_matched) / (2 tau)
        let g_f = f.flow_gradient(&zc)?;
        let sigma_z = zc.covariance();
        for i in 0..n {
            let zi = z.row(i).transpose();
            let yi = cloud_i.point(matched[i]);
            let envelope = (&sigma_z * &zi * 4.0 - &a_star * &yi * 8.0) / (2.0 * tau);
            for k in 0..d {
                z[(i, k)] -= lr * (g_f.values()[(i, k)] + envelope[k]);
            }
        }
        require_finite(&z, "jko inner iteration")?;
    }

    // final alignment: PSD-rotate the minimizer with respect to rho_i
    let z_cloud = PointCloud::new(z, cloud_i.weights().clone())?;
    let final_result = igw_alternating(cloud_i, &z_cloud, &opts)?;
    let rotation = psd_rotation(cloud_i, &z_cloud, &final_result.coupling)?;
    let next = z_cloud.apply_linear(&rotation)?;

    let step_igw_squared = final_result.igw_squared.max(0.0);
    let f_next = f.value(&next)?;
    let drop = f_prev - f_next;
    let inequality_margin = 2.0 * tau * drop + JKO_STEP_SLACK - step_igw_squared;

    // PSD property of the aligned consecutive pair
    let aligned = igw_alternating(cloud_i, &next, &opts)?;
    let c = cross_covariance(cloud_i, &next, &aligned.coupling)?;
    let sym = (&c + c.transpose()) * 0.5;
    let (ceig, _) = linalg::symmetric_eigen_range(&sym);

    Ok((
        next,
        JkoDiagnostics {
            step_igw_squared,
            functional_drop: drop,
            inequality_margin,
            cross_cov_min_eig: ceig,
            inner_iterations: iterations,
            replans,
            objective: f_next + step_igw_squared / (2.0 * tau),
        },
    ))
}

/// Iterates [`jko_step`], collecting a trajectory whose frame scalars carry
/// the functional value, the stepwise IGW cost, and the step-inequality
/// margin.
pub fn jko_flow(
    f: &Functional,
    cloud0: &PointCloud,
    tau: f64,
    n_steps: usize,
    inner: &JkoInner,
) -> Result<(Trajectory, Vec<JkoDiagnostics>)> {
    let mut frames = Vec::with_capacity(n_steps + 1);
    let mut diags = Vec::with_capacity(n_steps);
    let mut state = cloud0.clone();

    let mut scalars = BTreeMap::new();
    scalars.insert("functional_value".into(), f.value(&state)?);
    let (l0, _) = linalg::symmetric_eigen_range(&state.covariance());
    scalars.insert("lambda_min_sigma".into(), l0);
    frames.push(Frame {
        t: 0.0,
        cloud: state.clone(),
        velocity: None,
        scalars,
    });

    for i in 0..n_steps {
        let (next, diag) = jko_step(f, &state, tau, inner)?;
        let mut scalars = BTreeMap::new();
        scalars.insert("functional_value".into(), f.value(&next)?);
        scalars.insert("step_igw".into(), diag.step_igw_squared.max(0.0).sqrt());
        scalars.insert("step_inequality_margin".into(), diag.inequality_margin);
        let (lmin, _) = linalg::symmetric_eigen_range(&next.covariance());
        scalars.insert("lambda_min_sigma".into(), lmin);
        frames.push(Frame {
            t: (i + 1) as f64 * tau,
            cloud: next.clone(),
            velocity: None,
            scalars,
        });
        diags.push(diag);
        state = next;
    }

    Ok((
        Trajectory { tau, frames },
        diags,
    ))
}
