//! Metric-learning objectives on decorrelated representations.
//!
//! * [`qml`]: quadruplet margin loss over online-mined hard negatives.
//! * [`haml`]: additive angular margin softmax with per-domain margins and
//!   weights.
//! * [`mml`]: their weighted sum.

mod haml;
mod mining;
mod qml;

pub use haml::{haml, HamlHead, HamlParams};
pub use mining::{mine_quadruplets, Mining, QuadrupletTuple};
pub use qml::{qml, qml_from_cosines, QuadrupletCosines};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Var};

/// Margins and trade-off weights of the combined loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MmlConfig {
    /// Margin against cross-domain negatives.
    pub alpha1: f64,
    /// Margin against within-domain negatives.
    pub alpha2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for MmlConfig {
    fn default() -> Self {
        Self {
            alpha1: 0.2,
            alpha2: 0.2,
            lambda1: 10.0,
            lambda2: 1.0,
        }
    }
}

impl MmlConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha1, self.alpha2, self.lambda1, self.lambda2];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!(
                "loss margins and weights must be non-negative: {self:?}"
            )));
        }
        Ok(())
    }
}

/// `λ₁·qml + λ₂·haml`.
pub fn mml(g: &mut Graph, qml: Var, haml: Var, cfg: &MmlConfig) -> Result<Var> {
    for v in [qml, haml] {
        if g.value(v).shape() != (1, 1) {
            return Err(Error::Shape {
                op: "mml",
                lhs: g.value(v).shape(),
                rhs: (1, 1),
            });
        }
    }
    let a = g.scale(qml, cfg.lambda1);
    let b = g.scale(haml, cfg.lambda2);
    g.add(a, b)
}

/// Cosine similarity of two `1 x q` nodes as a `1 x 1` node.
/// Cosine distance is `1 −` this value.
pub fn cosine_similarity(g: &mut Graph, u: Var, v: Var) -> Result<Var> {
    let (us, vs) = (g.value(u).shape(), g.value(v).shape());
    if us.0 != 1 || us != vs {
        return Err(Error::Shape {
            op: "cosine_similarity",
            lhs: us,
            rhs: vs,
        });
    }
    let un = g.row_l2_normalize(u)?;
    let vn = g.row_l2_normalize(v)?;
    let prod = g.mul(un, vn)?;
    Ok(g.sum(prod))
}
