//! Dense matrices and a small reverse-mode autodiff engine.

mod check;
mod graph;
mod matrix;

pub use check::finite_diff_check;
pub use graph::{arc_margin_value, Graph, Var};
pub use matrix::{cosine, dot, Matrix, NORM_EPS};
