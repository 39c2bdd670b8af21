//! Deterministic 2-D benchmark shape generators with optional seeded
//! Gaussian jitter.

use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Ellipse,
    Square,
    TwoMoons,
    TwoCircles,
    Infinity,
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ellipse" => Ok(Self::Ellipse),
            "square" => Ok(Self::Square),
            "two_moons" => Ok(Self::TwoMoons),
            "two_circles" => Ok(Self::TwoCircles),
            "infinity" => Ok(Self::Infinity),
            other => Err(Error::InvalidCloud(format!("unknown shape kind '{other}'"))),
        }
    }
}

/// Shape parameters. `a` is the primary scale (ellipse semi-axis along x,
/// square side length, outer radius, lemniscate width); `b` is the secondary
/// scale where the shape has one (ellipse semi-axis along y, inner/outer
/// radius ratio for two_circles).
#[derive(Debug, Clone, Copy)]
pub struct ShapeParams {
    pub a: f64,
    pub b: f64,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for ShapeParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            jitter: 0.0,
            seed: 0,
        }
    }
}

/// Generates a uniform-weight point cloud tracing the named 2-D shape.
/// Deterministic for a given seed.
pub fn generate_shape(kind: ShapeKind, n: usize, params: &ShapeParams) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::InvalidCloud("need n >= 1".into()));
    }
    let mut points = match kind {
        ShapeKind::Ellipse => ellipse(n, params.a, params.b),
        ShapeKind::Square => square(n, params.a),
        ShapeKind::TwoMoons => two_moons(n, params.a),
        ShapeKind::TwoCircles => two_circles(n, params.a, params.b),
        ShapeKind::Infinity => infinity(n, params.a),
    };
    if params.jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let normal = Normal::new(0.0, params.jitter).expect("positive std");
        for v in points.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    PointCloud::uniform(points)
}

fn ellipse(n: usize, a: f64, b: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, 2, |i, j| {
        let t = 2.0 * PI * i as f64 / n as f64;
        if j == 0 {
            a * t.cos()
        } else {
            b * t.sin()
        }
    })
}

/// Boundary of the axis-aligned square with side `side` centered at the
/// origin, traced counterclockwise from the corner (-side/2, -side/2).
fn square(n: usize, side: f64) -> DMatrix<f64> {
    let h = side / 2.0;
    let perimeter = 4.0 * side;
    DMatrix::from_fn(n, 2, |i, j| {
        let s = perimeter * i as f64 / n as f64;
        let (x, y) = if s < side {
            (-h + s, -h)
        } else if s < 2.0 * side {
            (h, -h + (s - side))
        } else if s < 3.0 * side {
            (h - (s - 2.0 * side), h)
        } else {
            (-h, h - (s - 3.0 * side))
        };
        if j == 0 {
            x
        } else {
            y
        }
    })
}

/// Two interleaved half circles, scaled by `scale`.
fn two_moons(n: usize, scale: f64) -> DMatrix<f64> {
    let n_upper = n.div_ceil(2);
    DMatrix::from_fn(n, 2, |i, j| {
        let (x, y) = if i < n_upper {
            let t = PI * i as f64 / n_upper as f64;
            (t.cos(), t.sin())
        } else {
            let k = i - n_upper;
            let m = n - n_upper;
            let t = PI * k as f64 / m as f64;
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        if j == 0 {
            scale * x
        } else {
            scale * y
        }
    })
}

/// Concentric circles with radii `a` and `a * ratio`.
fn two_circles(n: usize, a: f64, ratio: f64) -> DMatrix<f64> {
    let inner_ratio = if ratio == 1.0 { 0.5 } else { ratio };
    let n_outer = n.div_ceil(2);
    DMatrix::from_fn(n, 2, |i, j| {
        let (r, t) = if i < n_outer {
            (a, 2.0 * PI * i as f64 / n_outer as f64)
        } else {
            let k = i - n_outer;
            let m = n - n_outer;
            (a * inner_ratio, 2.0 * PI * k as f64 / m as f64)
        };
        if j == 0 {
            r * t.cos()
        } else {
            r * t.sin()
        }
    })
}

/// Lemniscate of Bernoulli scaled to half-width `a`.
fn infinity(n: usize, a: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, 2, |i, j| {
        let t = 2.0 * PI * i as f64 / n as f64;
        let denom = 1.0 + t.sin() * t.sin();
        if j == 0 {
            a * t.cos() / denom
        } else {
            a * t.sin() * t.cos() / denom
        }
    })
}
