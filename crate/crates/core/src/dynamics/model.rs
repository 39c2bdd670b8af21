//! Small MLP velocity field `v(t, x)` with two tanh hidden layers, manual
//! forward/backward passes, and a JSON checkpoint format.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, VectorField};
use crate::error::{Error, Result};

/// `v(t, x) = W3 tanh(W2 tanh(W1 [t; x] + b1) + b2) + b3`.
#[derive(Debug, Clone)]
pub struct VelocityModel {
    pub(crate) w1: DMatrix<f64>, // hidden x (d + 1)
    pub(crate) b1: DVector<f64>,
    pub(crate) w2: DMatrix<f64>, // hidden x hidden
    pub(crate) b2: DVector<f64>,
    pub(crate) w3: DMatrix<f64>, // d x hidden
    pub(crate) b3: DVector<f64>,
}

/// Parameter gradients with the same layout as the model.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub(crate) w1: DMatrix<f64>,
    pub(crate) b1: DVector<f64>,
    pub(crate) w2: DMatrix<f64>,
    pub(crate) b2: DVector<f64>,
    pub(crate) w3: DMatrix<f64>,
    pub(crate) b3: DVector<f64>,
}

pub(crate) struct EvalCache {
    input: DVector<f64>,
    h1: DVector<f64>,
    h2: DVector<f64>,
}

impl VelocityModel {
    /// Fresh model for dimension `d`: hidden weights uniform in
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases and the whole final layer
    /// zero, so the initial field is identically zero.
    pub fn new(d: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound1 = 1.0 / ((d + 1) as f64).sqrt();
        let bound2 = 1.0 / (hidden as f64).sqrt();
        let w1 = DMatrix::from_fn(hidden, d + 1, |_, _| rng.random_range(-bound1..bound1));
        let w2 = DMatrix::from_fn(hidden, hidden, |_, _| rng.random_range(-bound2..bound2));
        Self {
            w1,
            b1: DVector::zeros(hidden),
            w2,
            b2: DVector::zeros(hidden),
            w3: DMatrix::zeros(d, hidden),
            b3: DVector::zeros(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.w3.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn layer_sizes(&self) -> [usize; 4] {
        [self.dim() + 1, self.hidden(), self.hidden(), self.dim()]
    }

    pub(crate) fn forward_cached(&self, t: f64, x: &[f64]) -> (DVector<f64>, EvalCache) {
        let d = self.dim();
        debug_assert_eq!(x.len(), d);
        let mut input = DVector::zeros(d + 1);
        input[0] = t;
        for k in 0..d {
            input[k + 1] = x[k];
        }
        let mut h1 = &self.w1 * &input + &self.b1;
        h1.apply(|v| *v = v.tanh());
        let mut h2 = &self.w2 * &h1 + &self.b2;
        h2.apply(|v| *v = v.tanh());
        let out = &self.w3 * &h2 + &self.b3;
        (out, EvalCache { input, h1, h2 })
    }

    /// Evaluates `v(t, x)` at one point.
    pub fn eval_point(&self, t: f64, x: &[f64]) -> Vec<f64> {
        self.forward_cached(t, x).0.as_slice().to_vec()
    }

    /// Evaluates the field on every support point of `cloud`.
    pub fn eval(&self, t: f64, cloud: &PointCloud) -> Result<VectorField> {
        if cloud.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "model vs cloud dimension",
                expected: self.dim(),
                got: cloud.dim(),
            });
        }
        let n = cloud.len();
        let d = self.dim();
        let mut values = DMatrix::zeros(n, d);
        let mut x = vec![0.0; d];
        for i in 0..n {
            for k in 0..d {
                x[k] = cloud.points()[(i, k)];
            }
            let (out, _) = self.forward_cached(t, &x);
            for k in 0..d {
                values[(i, k)] = out[k];
            }
        }
        VectorField::new(values)
    }

    /// Accumulates parameter gradients for one evaluation given the output
    /// adjoint, and returns the adjoint of the spatial input `x`.
    pub(crate) fn backprop(
        &self,
        cache: &EvalCache,
        out_adjoint: &DVector<f64>,
        grads: &mut ModelGrads,
    ) -> DVector<f64> {
        grads.w3 += out_adjoint * cache.h2.transpose();
        grads.b3 += out_adjoint;
        let mut s2 = self.w3.transpose() * out_adjoint;
        for k in 0..s2.len() {
            s2[k] *= 1.0 - cache.h2[k] * cache.h2[k];
        }
        grads.w2 += &s2 * cache.h1.transpose();
        grads.b2 += &s2;
        let mut s1 = self.w2.transpose() * &s2;
        for k in 0..s1.len() {
            s1[k] *= 1.0 - cache.h1[k] * cache.h1[k];
        }
        grads.w1 += &s1 * cache.input.transpose();
        grads.b1 += &s1;
        let full = self.w1.transpose() * &s1;
        full.rows(1, self.dim()).into_owned()
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w3.len() + self.b3.len()
    }

    fn slot(&self, idx: usize) -> (usize, usize) {
        let sizes = [
            self.w1.len(),
            self.b1.len(),
            self.w2.len(),
            self.b2.len(),
            self.w3.len(),
            self.b3.len(),
        ];
        let mut offset = idx;
        for (slab, size) in sizes.iter().enumerate() {
            if offset < *size {
                return (slab, offset);
            }
            offset -= size;
        }
        panic!("parameter index {idx} out of range");
    }

    pub fn get_param(&self, idx: usize) -> f64 {
        match self.slot(idx) {
            (0, k) => self.w1[k],
            (1, k) => self.b1[k],
            (2, k) => self.w2[k],
            (3, k) => self.b2[k],
            (4, k) => self.w3[k],
            (5, k) => self.b3[k],
            _ => unreachable!(),
        }
    }

    pub fn set_param(&mut self, idx: usize, value: f64) {
        match self.slot(idx) {
            (0, k) => self.w1[k] = value,
            (1, k) => self.b1[k] = value,
            (2, k) => self.w2[k] = value,
            (3, k) => self.b2[k] = value,
            (4, k) => self.w3[k] = value,
            (5, k) => self.b3[k] = value,
            _ => unreachable!(),
        }
    }

    /// `theta <- theta - lr * grads`.
    pub(crate) fn step(&mut self, grads: &ModelGrads, lr: f64) {
        self.w1 -= &grads.w1 * lr;
        self.b1 -= &grads.b1 * lr;
        self.w2 -= &grads.w2 * lr;
        self.b2 -= &grads.b2 * lr;
        self.w3 -= &grads.w3 * lr;
        self.b3 -= &grads.b3 * lr;
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().all(|v| v.is_finite())
            && self.b1.iter().all(|v| v.is_finite())
            && self.w2.iter().all(|v| v.is_finite())
            && self.b2.iter().all(|v| v.is_finite())
            && self.w3.iter().all(|v| v.is_finite())
            && self.b3.iter().all(|v| v.is_finite())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            layer_sizes: self.layer_sizes().to_vec(),
            w1: row_major(&self.w1),
            b1: self.b1.as_slice().to_vec(),
            w2: row_major(&self.w2),
            b2: self.b2.as_slice().to_vec(),
            w3: row_major(&self.w3),
            b3: self.b3.as_slice().to_vec(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.layer_sizes.len() != 4 || ckpt.layer_sizes[1] != ckpt.layer_sizes[2] {
            return Err(Error::InvalidCloud(
                "checkpoint layer_sizes must be [d+1, hidden, hidden, d]".into(),
            ));
        }
        let d = ckpt.layer_sizes[3];
        let hidden = ckpt.layer_sizes[1];
        if ckpt.layer_sizes[0] != d + 1 {
            return Err(Error::InvalidCloud(
                "checkpoint input width must be d + 1".into(),
            ));
        }
        let take = |data: &[f64], rows: usize, cols: usize| -> Result<DMatrix<f64>> {
            if data.len() != rows * cols {
                return Err(Error::InvalidCloud(
                    "checkpoint weight array has the wrong length".into(),
                ));
            }
            Ok(DMatrix::from_fn(rows, cols, |i, j| data[i * cols + j]))
        };
        let vector = |data: &[f64], len: usize| -> Result<DVector<f64>> {
            if data.len() != len {
                return Err(Error::InvalidCloud(
                    "checkpoint bias array has the wrong length".into(),
                ));
            }
            Ok(DVector::from_column_slice(data))
        };
        Ok(Self {
            w1: take(&ckpt.w1, hidden, d + 1)?,
            b1: vector(&ckpt.b1, hidden)?,
            w2: take(&ckpt.w2, hidden, hidden)?,
            b2: vector(&ckpt.b2, hidden)?,
            w3: take(&ckpt.w3, d, hidden)?,
            b3: vector(&ckpt.b3, d)?,
        })
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// JSON checkpoint: layer sizes plus row-major weight arrays.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub layer_sizes: Vec<usize>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

impl ModelGrads {
    pub fn zeros_like(model: &VelocityModel) -> Self {
        Self {
            w1: DMatrix::zeros(model.w1.nrows(), model.w1.ncols()),
            b1: DVector::zeros(model.b1.len()),
            w2: DMatrix::zeros(model.w2.nrows(), model.w2.ncols()),
            b2: DVector::zeros(model.b2.len()),
            w3: DMatrix::zeros(model.w3.nrows(), model.w3.ncols()),
            b3: DVector::zeros(model.b3.len()),
        }
    }

    /// Flat view in the same index order as [`VelocityModel::get_param`];
    /// used by the finite-difference oracles.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out =
            Vec::with_capacity(self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len());
        out.extend(self.w1.iter());
        out.extend(self.b1.iter());
        out.extend(self.w2.iter());
        out.extend(self.b2.iter());
        out.extend(self.w3.iter());
        out.extend(self.b3.iter());
        out
    }

    /// `buf <- momentum * buf + grads`, used by the optional momentum path.
    pub fn accumulate_momentum(&mut self, grads: &ModelGrads, momentum: f64) {
        self.w1 = &self.w1 * momentum + &grads.w1;
        self.b1 = &self.b1 * momentum + &grads.b1;
        self.w2 = &self.w2 * momentum + &grads.w2;
        self.b2 = &self.b2 * momentum + &grads.b2;
        self.w3 = &self.w3 * momentum + &grads.w3;
        self.b3 = &self.b3 * momentum + &grads.b3;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_final_layer_gives_zero_field() {
        let model = VelocityModel::new(2, 50, 7);
        let cloud = PointCloud::from_rows(&[vec![0.3, -0.7], vec![1.0, 2.0]]).unwrap();
        let field = model.eval(0.5, &cloud).unwrap();
        assert_eq!(field.values().amax(), 0.0);
    }

    #[test]
    fn default_configuration_layer_sizes() {
        let model = VelocityModel::new(2, 50, 0);
        assert_eq!(model.layer_sizes(), [3, 50, 50, 2]);
    }

    #[test]
    fn hand_set_single_unit_matches_manual_composition() {
        // one hidden unit per layer: v = w3 * tanh(w2 * tanh(w1 . [t,x] + b1) + b2) + b3
        let mut model = VelocityModel::new(1, 1, 0);
        model.w1[(0, 0)] = 0.3; // t weight
        model.w1[(0, 1)] = -0.8;
        model.b1[0] = 0.1;
        model.w2[(0, 0)] = 1.7;
        model.b2[0] = -0.2;
        model.w3[(0, 0)] = 2.5;
        model.b3[0] = 0.05;
        let (t, x) = (0.4, -1.3);
        let got = model.eval_point(t, &[x])[0];
        let h1 = (0.3 * t - 0.8 * x + 0.1).tanh();
        let h2 = (1.7 * h1 - 0.2).tanh();
        let expected = 2.5 * h2 + 0.05;
        assert_relative_eq!(got, expected, epsilon = 1e-14);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut model = VelocityModel::new(2, 5, 3);
        // make the final layer nonzero so the round trip is meaningful
        for k in 0..model.w3.len() {
            model.w3[k] = 0.1 * (k as f64 + 1.0);
        }
        let json = serde_json::to_string(&model.to_checkpoint()).unwrap();
        let restored =
            VelocityModel::from_checkpoint(&serde_json::from_str(&json).unwrap()).unwrap();
        let cloud = PointCloud::from_rows(&[vec![0.2, 0.4]]).unwrap();
        let a = model.eval(0.3, &cloud).unwrap();
        let b = restored.eval(0.3, &cloud).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn backprop_matches_finite_differences_through_one_eval() {
        // scalar probe: L = <c, v(t, x)> for fixed random c
        let mut model = VelocityModel::new(2, 4, 11);
        for k in 0..model.w3.len() {
            model.w3[k] = 0.05 * ((k % 7) as f64 - 3.0);
        }
        let x = [0.3, -0.9];
        let t = 0.6;
        let c = DVector::from_column_slice(&[0.8, -1.1]);

        let (_, cache) = model.forward_cached(t, &x);
        let mut grads = ModelGrads::zeros_like(&model);
        let x_adj = model.backprop(&cache, &c, &mut grads);
        let flat = grads.flatten();

        let h = 1e-6;
        for idx in (0..model.param_count()).step_by(3) {
            let orig = model.get_param(idx);
            model.set_param(idx, orig + h);
            let fp = c.dot(&DVector::from_column_slice(&model.eval_point(t, &x)));
            model.set_param(idx, orig - h);
            let fm = c.dot(&DVector::from_column_slice(&model.eval_point(t, &x)));
            model.set_param(idx, orig);
            let fd = (fp - fm) / (2.0 * h);
            assert_relative_eq!(flat[idx], fd, epsilon = 1e-7, max_relative = 1e-5);
        }

        // spatial adjoint
        for k in 0..2 {
            let mut xp = x;
            xp[k] += h;
            let mut xm = x;
            xm[k] -= h;
            let fp = c.dot(&DVector::from_column_slice(&model.eval_point(t, &xp)));
            let fm = c.dot(&DVector::from_column_slice(&model.eval_point(t, &xm)));
            let fd = (fp - fm) / (2.0 * h);
            assert_relative_eq!(x_adj[k], fd, epsilon = 1e-7, max_relative = 1e-5);
        }
    }
}
