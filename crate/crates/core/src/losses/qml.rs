use crate::error::{Error, Result};
use crate::losses::QuadrupletTuple;
use crate::tensor::{Graph, Matrix, Var};

/// Per-tuple cosine columns (`t x 1` each) that enter the quadruplet loss.
#[derive(Debug, Clone, Copy)]
pub struct QuadrupletCosines {
    /// cos(NIR anchor, VIS anchor)
    pub positive: Var,
    /// cos(NIR anchor, VIS negative)
    pub nir_to_vis_neg: Var,
    /// cos(VIS anchor, VIS negative)
    pub vis_to_vis_neg: Var,
    /// cos(VIS anchor, NIR negative)
    pub vis_to_nir_neg: Var,
    /// cos(NIR anchor, NIR negative)
    pub nir_to_nir_neg: Var,
}

/// Quadruplet margin loss averaged over the tuples:
///
/// ```text
/// [α₁ + cos(Nⱼ,Vₗ) − cos(Nⱼ,Vⱼ)]₊ + [α₂ + cos(Vⱼ,Vₗ) − cos(Nⱼ,Vⱼ)]₊
/// + [α₁ + cos(Vⱼ,Nₖ) − cos(Vⱼ,Nⱼ)]₊ + [α₂ + cos(Nⱼ,Nₖ) − cos(Vⱼ,Nⱼ)]₊
/// ```
///
/// An empty tuple list gives an exact zero.
pub fn qml(g: &mut Graph, z: Var, tuples: &[QuadrupletTuple], alpha1: f64, alpha2: f64) -> Result<Var> {
    if tuples.is_empty() {
        return Ok(g.constant(Matrix::scalar(0.0)));
    }
    let unit = g.row_l2_normalize(z)?;
    let pick = |f: fn(&QuadrupletTuple) -> usize| tuples.iter().map(f).collect::<Vec<_>>();
    let an = g.gather_rows(unit, &pick(|t| t.anchor_nir))?;
    let av = g.gather_rows(unit, &pick(|t| t.anchor_vis))?;
    let nn = g.gather_rows(unit, &pick(|t| t.neg_nir))?;
    let nv = g.gather_rows(unit, &pick(|t| t.neg_vis))?;

    let mut rowdot = |a: Var, b: Var| -> Result<Var> {
        let p = g.mul(a, b)?;
        Ok(g.row_sum(p))
    };
    let cos = QuadrupletCosines {
        positive: rowdot(an, av)?,
        nir_to_vis_neg: rowdot(an, nv)?,
        vis_to_vis_neg: rowdot(av, nv)?,
        vis_to_nir_neg: rowdot(av, nn)?,
        nir_to_nir_neg: rowdot(an, nn)?,
    };
    qml_from_cosines(g, &cos, alpha1, alpha2)
}

/// The hinge-and-average stage of [`qml`], starting from cosine columns.
pub fn qml_from_cosines(g: &mut Graph, cos: &QuadrupletCosines, alpha1: f64, alpha2: f64) -> Result<Var> {
    let t = g.value(cos.positive).rows();
    for v in [
        cos.nir_to_vis_neg,
        cos.vis_to_vis_neg,
        cos.vis_to_nir_neg,
        cos.nir_to_nir_neg,
    ] {
        if g.value(v).shape() != (t, 1) {
            return Err(Error::Shape {
                op: "qml",
                lhs: (t, 1),
                rhs: g.value(v).shape(),
            });
        }
    }
    if t == 0 {
        return Ok(g.constant(Matrix::scalar(0.0)));
    }
    let mut hinge = |neg: Var, margin: f64| -> Result<Var> {
        let d = g.sub(neg, cos.positive)?;
        let shifted = g.add_scalar(d, margin);
        Ok(g.relu(shifted))
    };
    let h1 = hinge(cos.nir_to_vis_neg, alpha1)?;
    let h2 = hinge(cos.vis_to_vis_neg, alpha2)?;
    let h3 = hinge(cos.vis_to_nir_neg, alpha1)?;
    let h4 = hinge(cos.nir_to_nir_neg, alpha2)?;
    let s12 = g.add(h1, h2)?;
    let s34 = g.add(h3, h4)?;
    let all = g.add(s12, s34)?;
    let total = g.sum(all);
    Ok(g.scale(total, 1.0 / t as f64))
}
