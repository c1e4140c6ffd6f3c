use crate::error::{Error, Result};
use crate::tensor::graph::{Graph, Var};
use crate::tensor::matrix::Matrix;

/// Compares the reverse-mode gradient of a scalar function against central
/// differences `(f(θ+eps) − f(θ−eps)) / 2eps`, entry by entry.
///
/// `f` receives a fresh graph and one node per parameter and must return a
/// `1 x 1` node. Returns the largest `|analytic − numeric| / max(1, |analytic|)`
/// over every parameter entry.
pub fn finite_diff_check<F>(f: F, params: &[Matrix], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0 && eps <= 1e-3) {
        return Err(Error::Contract(format!("finite-difference eps {eps} not in (0, 1e-3]")));
    }

    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let out = f(&mut g, &vars)?;
    check_finite(g.value(out))?;
    g.backward(out)?;
    let analytic: Vec<Matrix> = vars.iter().map(|&v| g.grad(v).clone()).collect();

    let eval = |values: &[Matrix]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|p| g.constant(p.clone())).collect();
        let out = f(&mut g, &vars)?;
        check_finite(g.value(out))
    };

    let mut work: Vec<Matrix> = params.to_vec();
    let mut worst = 0.0f64;
    for (p, grad) in analytic.iter().enumerate() {
        for k in 0..grad.data().len() {
            let orig = work[p].data()[k];
            work[p].data_mut()[k] = orig + eps;
            let plus = eval(&work)?;
            work[p].data_mut()[k] = orig - eps;
            let minus = eval(&work)?;
            work[p].data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad.data()[k];
            let err = (a - numeric).abs() / a.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn check_finite(m: &Matrix) -> Result<f64> {
    if m.shape() != (1, 1) {
        return Err(Error::Shape {
            op: "finite_diff_check",
            lhs: m.shape(),
            rhs: (1, 1),
        });
    }
    let v = m.item();
    if !v.is_finite() {
        return Err(Error::Numeric(format!("function evaluated to {v}")));
    }
    Ok(v)
}
