//! Decorrelation layer.
//!
//! The projection `W` (n x q, orthonormal columns) maximises
//! `tr(Wᵀ C W)` where `C = (1/m) Σ_j y_j y_jᵀ / (y_jᵀ y_j)` is the second
//! moment of the unit-normalised representations. The maximiser is the
//! top-q eigenbasis of `C`, found here with cyclic Jacobi rotations.
//! Projecting onto it leaves the normalised second moment diagonal.

use crate::error::{Error, Result};
use crate::tensor::{Graph, Matrix, Var};

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-10;

/// Orthonormal projection plus the eigenvalues of its columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DecorrLayer {
    projection: Matrix,
    eigenvalues: Vec<f64>,
}

impl DecorrLayer {
    /// `W = I`, used when decorrelation is switched off. It carries no
    /// spectrum, so its eigenvalues are zero.
    pub fn identity(n: usize) -> Self {
        Self {
            projection: Matrix::identity(n),
            eigenvalues: vec![0.0; n],
        }
    }

    pub fn from_parts(projection: Matrix, eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.len() != projection.cols() {
            return Err(Error::ShapeMismatch {
                what: "decorrelation eigenvalue count",
                found: eigenvalues.len(),
                expected: projection.cols(),
            });
        }
        if projection.cols() > projection.rows() {
            return Err(Error::Config(format!(
                "projection {}x{} has more columns than rows",
                projection.rows(),
                projection.cols()
            )));
        }
        Ok(Self {
            projection,
            eigenvalues,
        })
    }

    pub fn projection(&self) -> &Matrix {
        &self.projection
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Input dimension n.
    pub fn input_dim(&self) -> usize {
        self.projection.rows()
    }

    /// Output dimension q.
    pub fn output_dim(&self) -> usize {
        self.projection.cols()
    }

    /// `max |WᵀW − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.projection.t_matmul(&self.projection).expect("square gram");
        gram.max_abs_diff(&Matrix::identity(self.output_dim()))
    }
}

/// Mean outer product of the unit-normalised rows of `y`.
pub fn normalized_second_moment(y: &Matrix) -> Result<Matrix> {
    if y.rows() == 0 {
        return Err(Error::Contract("second moment of an empty batch".into()));
    }
    let unit = y.normalize_rows("normalized_second_moment")?;
    let mut c = unit.t_matmul(&unit)?;
    let inv_m = 1.0 / y.rows() as f64;
    c.data_mut().iter_mut().for_each(|v| *v *= inv_m);
    // exact symmetry; t_matmul accumulates both triangles identically, this
    // just guards the invariant
    let n = c.rows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = avg;
            c[(j, i)] = avg;
        }
    }
    Ok(c)
}

/// Symmetric eigendecomposition `C = V diag(λ) Vᵀ`.
#[derive(Debug, Clone)]
pub struct Eigen {
    /// Descending.
    pub values: Vec<f64>,
    /// Column `i` pairs with `values[i]`.
    pub vectors: Matrix,
    pub sweeps: usize,
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Rotations sweep until the largest off-diagonal magnitude drops below
/// 1e-12 or 100 sweeps have run. Eigenvalues come back in descending order
/// (equal values keep their diagonal order); each eigenvector is signed so
/// that its largest-magnitude entry is non-negative.
pub fn jacobi_eigh(c: &Matrix) -> Result<Eigen> {
    if c.rows() != c.cols() {
        return Err(Error::Shape {
            op: "jacobi_eigh",
            lhs: c.shape(),
            rhs: (c.cols(), c.rows()),
        });
    }
    if !c.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::Contract("jacobi_eigh needs a symmetric matrix".into()));
    }
    let n = c.rows();
    let mut a = c.clone();
    let mut v = Matrix::identity(n);
    let mut sweeps = 0;

    while sweeps < JACOBI_MAX_SWEEPS && max_off_diagonal(&a) >= JACOBI_TOL {
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                rotate(&mut a, &mut v, p, q, cs, sn);
            }
        }
    }

    let diag: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal eigenvalues keep index order
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap_or(std::cmp::Ordering::Equal));

    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = v.column(src);
        let mut lead = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[lead].abs() {
                lead = i;
            }
        }
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for (i, x) in col.iter().enumerate() {
            vectors[(i, dst)] = sign * x;
        }
    }
    Ok(Eigen {
        values: order.iter().map(|&i| diag[i]).collect(),
        vectors,
        sweeps,
    })
}

fn max_off_diagonal(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut max = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            max = max.max(a[(i, j)].abs());
        }
    }
    max
}

/// Applies `A ← Jᵀ A J`, `V ← V J` for the plane rotation in (p, q).
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Fits the projection to a batch of representations (one per row).
pub fn fit_decorrelation(y: &Matrix, q: usize) -> Result<DecorrLayer> {
    let n = y.cols();
    if q == 0 || q > n {
        return Err(Error::Config(format!(
            "decorrelation dimension q={q} must be in 1..={n}"
        )));
    }
    let c = normalized_second_moment(y)?;
    let eig = jacobi_eigh(&c)?;
    let projection = Matrix::from_fn(n, q, |i, j| eig.vectors[(i, j)]);
    Ok(DecorrLayer {
        projection,
        eigenvalues: eig.values[..q].to_vec(),
    })
}

/// `z = y · W`, one sample per row.
pub fn project(layer: &DecorrLayer, y: &Matrix) -> Result<Matrix> {
    if y.cols() != layer.input_dim() {
        return Err(Error::Shape {
            op: "project",
            lhs: y.shape(),
            rhs: layer.projection.shape(),
        });
    }
    y.matmul(&layer.projection)
}

/// Graph version of [`project`]; the projection enters as a constant, so
/// gradients flow to `y` only.
pub fn project_var(g: &mut Graph, layer: &DecorrLayer, y: Var) -> Result<Var> {
    let cols = g.value(y).cols();
    if cols != layer.input_dim() {
        return Err(Error::Shape {
            op: "project",
            lhs: g.value(y).shape(),
            rhs: layer.projection.shape(),
        });
    }
    let w = g.constant(layer.projection.clone());
    g.matmul(y, w)
}

/// `tr(Wᵀ C W)`, the quantity the fit maximises.
pub fn captured_trace(c: &Matrix, w: &Matrix) -> Result<f64> {
    let cw = c.matmul(w)?;
    let wcw = w.t_matmul(&cw)?;
    Ok((0..wcw.rows()).map(|i| wcw[(i, i)]).sum())
}
