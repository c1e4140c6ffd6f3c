//! Fits the decorrelation projection to random representations and shows
//! that the projected second moment is diagonal, holds the top eigenvalues
//! and that a full-width projection keeps every cosine.
//!
//! `cargo run --example decorrelation`

use mmdl::decorr::{captured_trace, fit_decorrelation, jacobi_eigh, normalized_second_moment, project};
use mmdl::tensor::cosine;
use mmdl::{Matrix, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // correlated columns: random data through a random mixing
    let y = Matrix::random_normal(200, 16, &mut rng).matmul(&Matrix::random_normal(16, 16, &mut rng))?;
    let c = normalized_second_moment(&y)?;
    let eig = jacobi_eigh(&c)?;
    println!("jacobi: {} sweeps, top eigenvalues {:.4?}", eig.sweeps, &eig.values[..4]);

    for q in [4, 16] {
        let layer = fit_decorrelation(&y, q)?;
        // second moment of the projected unit-norm representations
        let z = project(&layer, &y.normalize_rows("example")?)?;
        let cz = z.t_matmul(&z)?.scale(1.0 / y.rows() as f64);
        let mut off: f64 = 0.0;
        let mut diag: f64 = 0.0;
        for i in 0..q {
            for j in 0..q {
                if i == j {
                    diag = diag.max((cz[(i, i)] - layer.eigenvalues()[i]).abs());
                } else {
                    off = off.max(cz[(i, j)].abs());
                }
            }
        }
        let best_random = (0..200)
            .map(|_| captured_trace(&c, &Matrix::random_orthonormal(16, q, &mut rng)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(f64::MIN, f64::max);
        println!(
            "q={q:>2}: off-diagonal {off:.1e}, diagonal vs eigenvalues {diag:.1e}, trace {:.4} (best of 200 random bases {best_random:.4}), orthonormality {:.1e}",
            captured_trace(&c, layer.projection())?,
            layer.orthonormality_error()
        );
    }

    let full = fit_decorrelation(&y, 16)?;
    let z = project(&full, &y)?;
    let mut worst: f64 = 0.0;
    for i in 0..y.rows() {
        for j in 0..i {
            worst = worst.max((cosine(y.row(i), y.row(j)) - cosine(z.row(i), z.row(j))).abs());
        }
    }
    println!("q=n keeps pairwise cosines within {worst:.1e}");
    Ok(())
}
