//! Benamou-Brenier-style flow matching: train an MLP velocity field so the
//! Euler rollout carries a source cloud to a target, minimizing
//! `(1/k) sum_{j=1}^k g_{rho_{t_j}}(v_{t_j}, v_{t_j}) + lambda MMD(rho_{t_k}, mu_1)`
//! by plain gradient descent with hand-written reverse mode through the
//! discrete rollout (discretize-then-optimize).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::mmd::{mmd, mmd_gradient_source, MmdKernel};
use super::model::{ModelGrads, VelocityModel};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::flow::{Frame, Trajectory};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionGeometry {
    /// The IGW metric tensor quadratic form.
    IgwAction,
    /// Plain `L^2(rho_t)` kinetic energy.
    W2Action,
}

impl std::str::FromStr for ActionGeometry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "igw" | "igw_action" => Ok(Self::IgwAction),
            "w2" | "w2_action" | "wasserstein" => Ok(Self::W2Action),
            other => Err(Error::InvalidCloud(format!(
                "unknown action geometry '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MatchConfig {
    pub k: usize,
    pub lambda: f64,
    pub epochs: usize,
    pub lr: f64,
    pub kernel: MmdKernel,
    pub geometry: ActionGeometry,
    pub try_reflection: bool,
    pub hidden: usize,
    /// Momentum coefficient; zero (plain gradient descent) by default.
    pub momentum: f64,
    /// Epochs without improvement before an early stop.
    pub patience: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            k: 10,
            lambda: 100.0,
            epochs: 2000,
            lr: 0.01,
            kernel: MmdKernel::default(),
            geometry: ActionGeometry::IgwAction,
            try_reflection: true,
            hidden: 50,
            momentum: 0.0,
            patience: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchTarget {
    Original,
    Reflected,
}

#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: f64,
    pub action: f64,
    pub mmd: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub action: f64,
    pub mmd: f64,
}

#[derive(Debug, Clone)]
pub struct MatchReport {
    pub loss_curve: Vec<EpochRecord>,
    pub final_loss: f64,
    pub final_action: f64,
    pub final_mmd: f64,
    pub chosen_target: MatchTarget,
    pub early_stopped_at: Option<usize>,
    pub epochs_run: usize,
}

/// Euler rollout of the model field over `[0, 1]` with `k` steps of size
/// `1/k`; frames carry the evaluated velocities.
pub fn rollout(model: &VelocityModel, cloud0: &PointCloud, k: usize) -> Result<Trajectory> {
    if k == 0 {
        return Err(Error::InvalidCloud("rollout needs k >= 1".into()));
    }
    let eta = 1.0 / k as f64;
    let mut frames = Vec::with_capacity(k + 1);
    let mut state = cloud0.clone();
    for j in 0..=k {
        let t = j as f64 * eta;
        let velocity = model.eval(t, &state)?;
        frames.push(Frame {
            t,
            cloud: state.clone(),
            velocity: Some(velocity.clone()),
            scalars: BTreeMap::new(),
        });
        if j < k {
            let next = state.points() + velocity.values() * eta;
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState {
                    context: format!("rollout step {j}"),
                });
            }
            state = PointCloud::new(next, state.weights().clone())?;
        }
    }
    Ok(Trajectory { tau: eta, frames })
}

/// Per-frame action term and its gradients for uniform-weight clouds.
/// `X` is `n x d` positions, `V` is the field evaluated there.
struct FrameTerm {
    value: f64,
    grad_x: DMatrix<f64>,
    grad_v: DMatrix<f64>,
}

fn igw_action_term(x: &DMatrix<f64>, v: &DMatrix<f64>) -> FrameTerm {
    let n = x.nrows() as f64;
    let sigma = x.transpose() * x / n; // uncentered second moment
    let m = x.transpose() * v / n; // int x v^T
    let k_v = v.transpose() * v / n;
    let quad = (v * &sigma).dot(v) / n; // (1/n) sum_i v_i^T Sigma v_i
    let value = 2.0 * quad + 2.0 * (&m * &m).trace();
    let grad_v = (v * &sigma + x * m.transpose()) * (4.0 / n);
    let grad_x = (x * &k_v + v * &m) * (4.0 / n);
    FrameTerm {
        value,
        grad_x,
        grad_v,
    }
}

fn w2_action_term(x: &DMatrix<f64>, v: &DMatrix<f64>) -> FrameTerm {
    let n = x.nrows() as f64;
    let value = v.dot(v) / n;
    FrameTerm {
        value,
        grad_x: DMatrix::zeros(x.nrows(), x.ncols()),
        grad_v: v * (2.0 / n),
    }
}

fn frame_term(geometry: ActionGeometry, x: &DMatrix<f64>, v: &DMatrix<f64>) -> FrameTerm {
    match geometry {
        ActionGeometry::IgwAction => igw_action_term(x, v),
        ActionGeometry::W2Action => w2_action_term(x, v),
    }
}

/// Forward-only loss evaluation (the matching objective for a fixed target).
pub fn flow_match_loss(
    model: &VelocityModel,
    cloud0: &PointCloud,
    target: &PointCloud,
    cfg: &MatchConfig,
) -> Result<LossParts> {
    let traj = rollout(model, cloud0, cfg.k)?;
    let inv_k = 1.0 / cfg.k as f64;
    let mut action = 0.0;
    for frame in traj.frames.iter().skip(1) {
        let term = frame_term(
            cfg.geometry,
            frame.cloud.points(),
            frame.velocity.as_ref().expect("rollout records").values(),
        );
        action += inv_k * term.value;
    }
    let terminal = mmd(&traj.last().cloud, target, &cfg.kernel)?;
    Ok(LossParts {
        total: action + cfg.lambda * terminal,
        action,
        mmd: terminal,
    })
}

/// Loss and the flat parameter gradient (index order of
/// [`VelocityModel::get_param`]) via reverse mode through the rollout.
/// This is the object the finite-difference oracle validates.
pub fn flow_match_gradient(
    model: &VelocityModel,
    cloud0: &PointCloud,
    target: &PointCloud,
    cfg: &MatchConfig,
) -> Result<(LossParts, Vec<f64>)> {
    let (loss, grads) = loss_and_grad(model, cloud0, target, cfg)?;
    Ok((loss, grads.flatten()))
}

/// Loss and parameter gradient via reverse mode through the rollout.
fn loss_and_grad(
    model: &VelocityModel,
    cloud0: &PointCloud,
    target: &PointCloud,
    cfg: &MatchConfig,
) -> Result<(LossParts, ModelGrads)> {
    let k = cfg.k;
    let n = cloud0.len();
    let d = cloud0.dim();
    let eta = 1.0 / k as f64;
    let inv_k = eta;

    // forward: positions, velocities, and per-point caches at every frame
    let mut positions: Vec<DMatrix<f64>> = Vec::with_capacity(k + 1);
    let mut velocities: Vec<DMatrix<f64>> = Vec::with_capacity(k + 1);
    let mut caches: Vec<Vec<super::model::EvalCache>> = Vec::with_capacity(k + 1);
    let mut x = cloud0.points().clone();
    let mut point = vec![0.0; d];
    for j in 0..=k {
        let t = j as f64 * eta;
        let mut v = DMatrix::zeros(n, d);
        let mut frame_caches = Vec::with_capacity(n);
        for i in 0..n {
            for c in 0..d {
                point[c] = x[(i, c)];
            }
            let (out, cache) = model.forward_cached(t, &point);
            for c in 0..d {
                v[(i, c)] = out[c];
            }
            frame_caches.push(cache);
        }
        positions.push(x.clone());
        velocities.push(v.clone());
        caches.push(frame_caches);
        if j < k {
            x = &x + &v * eta;
            if x.iter().any(|val| !val.is_finite()) {
                return Err(Error::NonFiniteState {
                    context: format!("rollout step {j}"),
                });
            }
        }
    }

    // loss parts
    let mut action = 0.0;
    let mut terms: Vec<Option<FrameTerm>> = (0..=k).map(|_| None).collect();
    for j in 1..=k {
        let term = frame_term(cfg.geometry, &positions[j], &velocities[j]);
        action += inv_k * term.value;
        terms[j] = Some(term);
    }
    let final_cloud = PointCloud::new(positions[k].clone(), cloud0.weights().clone())?;
    let terminal = mmd(&final_cloud, target, &cfg.kernel)?;
    let loss = LossParts {
        total: action + cfg.lambda * terminal,
        action,
        mmd: terminal,
    };

    // reverse sweep
    let mut grads = ModelGrads::zeros_like(model);
    let mut x_bar = mmd_gradient_source(&final_cloud, target, &cfg.kernel) * cfg.lambda;
    let mut out_adjoint = DVector::zeros(d);
    for j in (0..=k).rev() {
        let mut v_bar = if j < k {
            // X_{j+1} = X_j + eta V_j
            &x_bar * eta
        } else {
            DMatrix::zeros(n, d)
        };
        if j >= 1 {
            let term = terms[j].as_ref().expect("computed above");
            v_bar += &term.grad_v * inv_k;
            x_bar += &term.grad_x * inv_k;
        }
        for i in 0..n {
            for c in 0..d {
                out_adjoint[c] = v_bar[(i, c)];
            }
            let x_adj = model.backprop(&caches[j][i], &out_adjoint, &mut grads);
            for c in 0..d {
                x_bar[(i, c)] += x_adj[c];
            }
        }
    }
    Ok((loss, grads))
}

fn train_against(
    cloud0: &PointCloud,
    target: &PointCloud,
    cfg: &MatchConfig,
    seed: u64,
) -> Result<(VelocityModel, Vec<EpochRecord>, Option<usize>)> {
    let mut model = VelocityModel::new(cloud0.dim(), cfg.hidden, seed);
    let mut momentum_buf = ModelGrads::zeros_like(&model);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    let mut early = None;

    for epoch in 0..cfg.epochs {
        let (loss, grads) = loss_and_grad(&model, cloud0, target, cfg)?;
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        curve.push(EpochRecord {
            epoch,
            total: loss.total,
            action: loss.action,
            mmd: loss.mmd,
        });
        if loss.total < best - 1e-15 {
            best = loss.total;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                early = Some(epoch);
                break;
            }
        }
        if cfg.momentum > 0.0 {
            momentum_buf.accumulate_momentum(&grads, cfg.momentum);
            model.step(&momentum_buf, cfg.lr);
        } else {
            model.step(&grads, cfg.lr);
        }
        if !model.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
    }
    Ok((model, curve, early))
}

/// Trains the velocity model to match `cloud1` from `cloud0`. With
/// `try_reflection` on, trains against both the target and its reflection
/// through `diag(-1, 1, ..., 1)` and keeps the lower-loss model.
pub fn train_flow_match(
    cloud0: &PointCloud,
    cloud1: &PointCloud,
    cfg: &MatchConfig,
    seed: u64,
) -> Result<(VelocityModel, MatchReport)> {
    if cloud0.dim() != cloud1.dim() {
        return Err(Error::DimensionMismatch {
            what: "source vs target dimension",
            expected: cloud0.dim(),
            got: cloud1.dim(),
        });
    }
    let mut candidates = vec![(MatchTarget::Original, cloud1.clone())];
    if cfg.try_reflection {
        let reflected = cloud1.apply_linear(&linalg::reflection(cloud1.dim()))?;
        candidates.push((MatchTarget::Reflected, reflected));
    }

    let mut best: Option<(f64, VelocityModel, MatchReport)> = None;
    for (which, target) in candidates {
        let (model, curve, early) = train_against(cloud0, &target, cfg, seed)?;
        let final_parts = flow_match_loss(&model, cloud0, &target, cfg)?;
        let report = MatchReport {
            final_loss: final_parts.total,
            final_action: final_parts.action,
            final_mmd: final_parts.mmd,
            chosen_target: which,
            early_stopped_at: early,
            epochs_run: curve.len(),
            loss_curve: curve,
        };
        let better = match &best {
            None => true,
            Some((loss, _, _)) => final_parts.total < *loss,
        };
        if better {
            best = Some((final_parts.total, model, report));
        }
    }
    let (_, model, report) = best.expect("at least one candidate");
    Ok((model, report))
}
