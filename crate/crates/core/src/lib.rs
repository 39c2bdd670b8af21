//! Inner-product Gromov-Wasserstein (IGW) geometry on discrete point clouds.
//!
//! The crate provides the IGW distance and its optimal-transport dual solver,
//! the mobility operator with its closed-form inverse on the invariant space,
//! IGW gradient flows (explicit Euler and a JKO-style minimizing movement),
//! the IGW Riemannian metric tensor and action, and Benamou-Brenier-style
//! flow matching between shapes.

pub mod assignment;
pub mod cloud;
pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod flow;
pub mod functionals;
pub mod igw;
pub mod io;
pub mod linalg;
pub mod mobility;
pub mod shapes;

pub use cloud::{PointCloud, VectorField};
pub use coupling::Coupling;
pub use error::{Error, Result};
