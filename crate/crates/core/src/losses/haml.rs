use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::Domain;
use crate::tensor::{Graph, Matrix, Var};

/// Scale, margins and domain weights of the angular margin loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HamlParams {
    /// Radius of the hypersphere the logits live on.
    pub scale: f64,
    pub margin_nir: f64,
    pub margin_vis: f64,
    pub weight_nir: f64,
    pub weight_vis: f64,
}

impl Default for HamlParams {
    fn default() -> Self {
        Self {
            scale: 16.0,
            margin_nir: 0.9,
            margin_vis: 0.9,
            weight_nir: 0.6,
            weight_vis: 0.4,
        }
    }
}

impl HamlParams {
    /// Zero margins and equal domain weights: a plain normalised softmax.
    pub fn plain_softmax(scale: f64) -> Self {
        Self {
            scale,
            margin_nir: 0.0,
            margin_vis: 0.0,
            weight_nir: 0.5,
            weight_vis: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!("HAML scale {} must be positive", self.scale)));
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        for m in [self.margin_nir, self.margin_vis] {
            if !(0.0..=half_pi).contains(&m) {
                return Err(Error::Config(format!("angular margin {m} outside [0, pi/2]")));
            }
        }
        if self.weight_nir < 0.0 || self.weight_vis < 0.0 || (self.weight_nir + self.weight_vis - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "domain weights {} and {} must be non-negative and sum to 1",
                self.weight_nir, self.weight_vis
            )));
        }
        Ok(())
    }

    pub fn margin(&self, d: Domain) -> f64 {
        match d {
            Domain::Nir => self.margin_nir,
            Domain::Vis => self.margin_vis,
        }
    }

    pub fn weight(&self, d: Domain) -> f64 {
        match d {
            Domain::Nir => self.weight_nir,
            Domain::Vis => self.weight_vis,
        }
    }
}

/// Class-weight matrix (`q x c`, unit columns) plus loss parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HamlHead {
    class_weights: Matrix,
    pub params: HamlParams,
}

impl HamlHead {
    pub fn new(class_weights: Matrix, params: HamlParams) -> Result<Self> {
        params.validate()?;
        if class_weights.cols() == 0 || class_weights.rows() == 0 {
            return Err(Error::Config("class-weight matrix needs at least one row and class".into()));
        }
        Ok(Self {
            class_weights,
            params,
        })
    }

    /// Gaussian columns normalised to unit length.
    pub fn init(dim: usize, classes: usize, params: HamlParams, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut head = Self::new(Matrix::random_normal(dim, classes, &mut rng), params)?;
        head.renormalize();
        Ok(head)
    }

    pub fn class_weights(&self) -> &Matrix {
        &self.class_weights
    }

    pub fn dim(&self) -> usize {
        self.class_weights.rows()
    }

    pub fn classes(&self) -> usize {
        self.class_weights.cols()
    }

    pub fn bind(&self, g: &mut Graph) -> Var {
        g.param(self.class_weights.clone())
    }

    /// Plain gradient step followed by column re-normalisation.
    pub fn sgd_step(&mut self, grad: &Matrix, lr: f64) -> Result<()> {
        self.class_weights.check_same_shape(grad, "haml sgd_step")?;
        self.class_weights.axpy(-lr, grad);
        self.renormalize();
        Ok(())
    }

    /// Scales every class column back to unit norm.
    pub fn renormalize(&mut self) {
        let (q, c) = self.class_weights.shape();
        for j in 0..c {
            // scaled first so huge entries do not overflow the sum of squares
            let big = (0..q).map(|i| self.class_weights[(i, j)].abs()).fold(0.0, f64::max);
            if big > 0.0 && big.is_finite() {
                for i in 0..q {
                    self.class_weights[(i, j)] /= big;
                }
            }
            let norm = (0..q).map(|i| self.class_weights[(i, j)].powi(2)).sum::<f64>().sqrt();
            if norm > 0.0 {
                for i in 0..q {
                    self.class_weights[(i, j)] /= norm;
                }
            }
        }
    }

    /// Replaces the class weights by `R · W` (e.g. when the space they live
    /// in is rotated by `R`), re-normalising afterwards.
    pub fn transform(&mut self, r: &Matrix) -> Result<()> {
        self.class_weights = r.matmul(&self.class_weights)?;
        self.renormalize();
        Ok(())
    }
}

/// Heterogeneous angular margin loss.
///
/// Logits are `s·cos θ_v` between the normalised sample and each normalised
/// class column; the target logit of a sample from domain `d` is replaced by
/// `s·cos(θ + m_d)` (or the fallback `s·(cos θ − m_d sin m_d)` once
/// `θ > π − m_d`). Per-sample cross-entropies are averaged within each
/// domain and the two means combined with weights `λ_N`, `λ_V`.
pub fn haml(
    g: &mut Graph,
    z: Var,
    class_weights: Var,
    identities: &[usize],
    domains: &[Domain],
    params: &HamlParams,
) -> Result<Var> {
    let b = g.value(z).rows();
    if identities.len() != b || domains.len() != b {
        return Err(Error::Contract(format!(
            "haml: {b} rows, {} labels, {} domains",
            identities.len(),
            domains.len()
        )));
    }
    let (zq, wq) = (g.value(z).cols(), g.value(class_weights).rows());
    if zq != wq {
        return Err(Error::Shape {
            op: "haml",
            lhs: g.value(z).shape(),
            rhs: g.value(class_weights).shape(),
        });
    }
    let classes = g.value(class_weights).cols();
    if let Some(&bad) = identities.iter().find(|&&c| c >= classes) {
        return Err(Error::Label { label: bad, classes });
    }
    if b == 0 {
        return Ok(g.constant(Matrix::scalar(0.0)));
    }

    let unit_z = g.row_l2_normalize(z)?;
    let wt = g.transpose(class_weights);
    let unit_wt = g.row_l2_normalize(wt)?;
    let unit_w = g.transpose(unit_wt);
    let cos = g.matmul(unit_z, unit_w)?;
    let margins: Vec<f64> = domains.iter().map(|&d| params.margin(d)).collect();
    let marg = g.arc_margin(cos, identities, &margins)?;
    let logits = g.scale(marg, params.scale);
    let ce = g.softmax_cross_entropy(logits, identities)?;

    let count = |d: Domain| domains.iter().filter(|&&x| x == d).count() as f64;
    let (n_nir, n_vis) = (count(Domain::Nir), count(Domain::Vis));
    let row_weights = Matrix::from_fn(b, 1, |r, _| match domains[r] {
        Domain::Nir => params.weight_nir / n_nir,
        Domain::Vis => params.weight_vis / n_vis,
    });
    let w = g.constant(row_weights);
    let weighted = g.mul(ce, w)?;
    Ok(g.sum(weighted))
}
