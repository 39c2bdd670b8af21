//! Riemannian side of the IGW geometry: the metric tensor, trajectory
//! action, MMD penalty, the MLP velocity model, and Benamou-Brenier-style
//! flow matching.

mod matching;
mod mmd;
mod model;

pub use matching::{
    flow_match_gradient, flow_match_loss, rollout, train_flow_match, ActionGeometry,
    EpochRecord, LossParts, MatchConfig, MatchReport, MatchTarget,
};
pub use mmd::{mmd, MmdKernel};
pub use model::VelocityModel;

use crate::cloud::{PointCloud, VectorField};
use crate::error::{Error, Result};
use crate::flow::Trajectory;

/// The IGW metric tensor
/// `g_mu(v, w) = 2 int v^T Sigma w dmu + 2 tr(M_v M_w)` with
/// `M_v = int x v^T dmu`; equals `<v, L_{Sigma,mu}[w]>_{L^2(mu)}`.
pub fn metric_tensor(cloud: &PointCloud, v: &VectorField, w: &VectorField) -> Result<f64> {
    v.matches(cloud)?;
    w.matches(cloud)?;
    let sigma = cloud.covariance();
    let mut quad = 0.0;
    for i in 0..cloud.len() {
        let vi = v.values().row(i);
        let wi = w.values().row(i);
        quad += cloud.weights()[i] * (vi * &sigma).dot(&wi);
    }
    let m_v = v.moment(cloud)?;
    let m_w = w.moment(cloud)?;
    Ok(2.0 * quad + 2.0 * (m_v * m_w).trace())
}

/// Kinetic action of a trajectory: the time-weighted sum
/// `sum_{j>=1} g_{rho_{t_j}}(v_{t_j}, v_{t_j}) (t_j - t_{j-1})`.
///
/// For the uniform grid `t_j = j/k` this is exactly the matching cost's
/// action term `(1/k) sum_{j=1}^k g_{rho_{t_j}}(v_{t_j}, v_{t_j})`.
pub fn action(traj: &Trajectory) -> Result<f64> {
    let mut total = 0.0;
    for (j, frame) in traj.frames.iter().enumerate() {
        let velocity = frame
            .velocity
            .as_ref()
            .ok_or(Error::MissingVelocity { frame: j })?;
        if j == 0 {
            continue;
        }
        let dt = frame.t - traj.frames[j - 1].t;
        total += metric_tensor(&frame.cloud, velocity, velocity)? * dt;
    }
    Ok(total.max(0.0))
}
