//! Shared-parameter representation network.
//!
//! A dense network `y = tanh(…tanh(x W₁ + b₁)…) W_L + b_L` whose last layer
//! is linear. The same parameters encode both domains.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Matrix, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    layer_sizes: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Matrix>,
}

/// Parameters registered in a graph as trainable leaves.
#[derive(Debug, Clone)]
pub struct BoundNetwork {
    pub weights: Vec<Var>,
    pub biases: Vec<Var>,
}

/// Gradients in the same layout as [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Matrix>,
}

impl NetworkParams {
    /// Uniform weights in `±1/sqrt(fan_in)`, zero biases, deterministic in
    /// `seed`.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            weights.push(Matrix::from_fn(fan_in, fan_out, |_, _| {
                rand::Rng::random_range(&mut rng, -bound..=bound)
            }));
            biases.push(Matrix::zeros(1, fan_out));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// Assembles a network from explicit matrices, checking that the layers
    /// chain.
    pub fn from_parts(weights: Vec<Matrix>, biases: Vec<Matrix>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::Config(format!(
                "{} weight matrices and {} bias rows",
                weights.len(),
                biases.len()
            )));
        }
        let mut sizes = vec![weights[0].rows()];
        for (w, b) in weights.iter().zip(&biases) {
            if w.rows() != *sizes.last().unwrap() {
                return Err(Error::Shape {
                    op: "network layers",
                    lhs: (1, *sizes.last().unwrap()),
                    rhs: w.shape(),
                });
            }
            if b.shape() != (1, w.cols()) {
                return Err(Error::Shape {
                    op: "network bias",
                    lhs: w.shape(),
                    rhs: b.shape(),
                });
            }
            sizes.push(w.cols());
        }
        validate_sizes(&sizes)?;
        Ok(Self {
            layer_sizes: sizes,
            weights,
            biases,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Representation dimension n.
    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Matrix] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Matrix] {
        &mut self.biases
    }

    pub fn bind(&self, g: &mut Graph) -> BoundNetwork {
        BoundNetwork {
            weights: self.weights.iter().map(|w| g.param(w.clone())).collect(),
            biases: self.biases.iter().map(|b| g.param(b.clone())).collect(),
        }
    }

    /// Forward pass outside any training graph.
    pub fn encode_matrix(&self, x: &Matrix) -> Result<Matrix> {
        let mut g = Graph::new();
        let bound = BoundNetwork {
            weights: self.weights.iter().map(|w| g.constant(w.clone())).collect(),
            biases: self.biases.iter().map(|b| g.constant(b.clone())).collect(),
        };
        let xv = g.constant(x.clone());
        let y = encode(&mut g, &bound, xv)?;
        Ok(g.value(y).clone())
    }

    pub fn sgd_step(&mut self, grads: &NetworkGrads, lr: f64) -> Result<()> {
        if !(lr > 0.0) {
            return Err(Error::Config(format!("learning rate {lr} must be positive")));
        }
        if grads.weights.len() != self.weights.len() || grads.biases.len() != self.biases.len() {
            return Err(Error::Contract("gradient layer count differs from network".into()));
        }
        for (p, g) in self.weights.iter().zip(&grads.weights).chain(self.biases.iter().zip(&grads.biases)) {
            p.check_same_shape(g, "sgd_step")?;
        }
        for (p, g) in self.weights.iter_mut().zip(&grads.weights) {
            p.axpy(-lr, g);
        }
        for (p, g) in self.biases.iter_mut().zip(&grads.biases) {
            p.axpy(-lr, g);
        }
        Ok(())
    }
}

impl BoundNetwork {
    pub fn grads(&self, g: &Graph) -> NetworkGrads {
        NetworkGrads {
            weights: self.weights.iter().map(|&v| g.grad(v).clone()).collect(),
            biases: self.biases.iter().map(|&v| g.grad(v).clone()).collect(),
        }
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::Config(format!(
            "need at least two layer sizes, got {sizes:?}"
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::Config(format!("layer sizes must be positive: {sizes:?}")));
    }
    Ok(())
}

/// Runs the network on a `batch x input_dim` node.
pub fn encode(g: &mut Graph, net: &BoundNetwork, x: Var) -> Result<Var> {
    let expected = g.value(net.weights[0]).rows();
    if g.value(x).cols() != expected {
        return Err(Error::Shape {
            op: "encode",
            lhs: g.value(x).shape(),
            rhs: g.value(net.weights[0]).shape(),
        });
    }
    let last = net.weights.len() - 1;
    let mut h = x;
    for (i, (&w, &b)) in net.weights.iter().zip(&net.biases).enumerate() {
        let xw = g.matmul(h, w)?;
        h = g.add_row(xw, b)?;
        if i < last {
            h = g.tanh(h);
        }
    }
    Ok(h)
}

/// Exponential decay from `initial` to `final_lr` over the epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub initial: f64,
    #[serde(rename = "final")]
    pub final_lr: f64,
    pub total_epochs: usize,
}

impl LrSchedule {
    pub fn new(initial: f64, final_lr: f64, total_epochs: usize) -> Result<Self> {
        let s = Self {
            initial,
            final_lr,
            total_epochs,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.final_lr > 0.0 && self.initial >= self.final_lr && self.initial.is_finite()) {
            return Err(Error::Config(format!(
                "learning rates need initial >= final > 0, got {} and {}",
                self.initial, self.final_lr
            )));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> Result<f64> {
        if epoch >= self.total_epochs {
            return Err(Error::Range(format!(
                "epoch {epoch} outside a {}-epoch schedule",
                self.total_epochs
            )));
        }
        if self.total_epochs == 1 || epoch == 0 {
            return Ok(self.initial);
        }
        if epoch == self.total_epochs - 1 {
            return Ok(self.final_lr);
        }
        let frac = epoch as f64 / (self.total_epochs - 1) as f64;
        Ok(self.initial * (self.final_lr / self.initial).powf(frac))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = NetworkParams::init(&[8, 4], 7).unwrap();
        let b = NetworkParams::init(&[8, 4], 7).unwrap();
        assert_eq!(a, b);
        let bound = 1.0 / 8f64.sqrt();
        assert!(a.weights()[0].data().iter().all(|w| w.abs() <= bound));
        assert_ne!(a, NetworkParams::init(&[8, 4], 8).unwrap());
    }

    #[test]
    fn init_shapes() {
        let p = NetworkParams::init(&[8, 16, 4], 0).unwrap();
        let shapes: Vec<_> = p.weights().iter().map(Matrix::shape).collect();
        assert_eq!(shapes, vec![(8, 16), (16, 4)]);
        let bshapes: Vec<_> = p.biases().iter().map(Matrix::shape).collect();
        assert_eq!(bshapes, vec![(1, 16), (1, 4)]);
        assert!(p.biases().iter().all(|b| b.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn init_rejects_bad_sizes() {
        assert!(matches!(NetworkParams::init(&[], 0), Err(Error::Config(_))));
        assert!(matches!(NetworkParams::init(&[4], 0), Err(Error::Config(_))));
        assert!(matches!(NetworkParams::init(&[4, 0, 2], 0), Err(Error::Config(_))));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut p = NetworkParams::init(&[3, 5, 2], 1).unwrap();
        p.weights_mut().iter_mut().for_each(|w| *w = Matrix::zeros(w.rows(), w.cols()));
        let x = Matrix::from_rows(&[[1.0, -2.0, 0.5], [3.0, 0.0, 1.0]]);
        assert_eq!(p.encode_matrix(&x).unwrap(), Matrix::zeros(2, 2));
    }

    #[test]
    fn single_identity_layer_passes_input_through() {
        let p = NetworkParams::from_parts(vec![Matrix::identity(3)], vec![Matrix::zeros(1, 3)]).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 0.5]]);
        assert_eq!(p.encode_matrix(&x).unwrap(), x);
    }

    #[test]
    fn encode_width_mismatch() {
        let p = NetworkParams::init(&[3, 2], 1).unwrap();
        assert!(matches!(
            p.encode_matrix(&Matrix::zeros(1, 4)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn sgd_arithmetic() {
        let mut p = NetworkParams::from_parts(vec![Matrix::scalar(1.0)], vec![Matrix::scalar(0.0)]).unwrap();
        let grads = NetworkGrads {
            weights: vec![Matrix::scalar(0.25)],
            biases: vec![Matrix::scalar(0.0)],
        };
        p.sgd_step(&grads, 1.0).unwrap();
        assert_eq!(p.weights()[0].item(), 0.75);

        let before = p.clone();
        let zero = NetworkGrads {
            weights: vec![Matrix::scalar(0.0)],
            biases: vec![Matrix::scalar(0.0)],
        };
        p.sgd_step(&zero, 0.5).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn sgd_shape_mismatch() {
        let mut p = NetworkParams::init(&[2, 2], 0).unwrap();
        let grads = NetworkGrads {
            weights: vec![Matrix::zeros(3, 2)],
            biases: vec![Matrix::zeros(1, 2)],
        };
        assert!(matches!(p.sgd_step(&grads, 0.1), Err(Error::Shape { .. })));
        let ok = NetworkGrads {
            weights: vec![Matrix::zeros(2, 2)],
            biases: vec![Matrix::zeros(1, 2)],
        };
        assert!(p.sgd_step(&ok, 0.0).is_err());
    }

    #[test]
    fn lr_schedule_endpoints_and_midpoint() {
        let s = LrSchedule::new(1e-4, 1e-6, 11).unwrap();
        assert_eq!(s.lr_at(0).unwrap(), 1e-4);
        assert_eq!(s.lr_at(10).unwrap(), 1e-6);
        assert!((s.lr_at(5).unwrap() - 1e-5).abs() < 1e-18);
        assert!(matches!(s.lr_at(11), Err(Error::Range(_))));
        let one = LrSchedule::new(0.1, 0.01, 1).unwrap();
        assert_eq!(one.lr_at(0).unwrap(), 0.1);
        assert!(LrSchedule::new(1e-6, 1e-4, 3).is_err());
        assert!(LrSchedule::new(1e-4, 0.0, 3).is_err());
    }
}
