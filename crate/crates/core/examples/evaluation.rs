//! Identification and verification figures on a hand-built score matrix,
//! plus the ROC written as CSV.
//!
//! `cargo run --example evaluation [-- roc.csv]`

use mmdl::eval::{rank_k_accuracy, report_from_scores, roc_points, split_scores, vr_at_far, write_roc_csv, Protocol};
use mmdl::{Matrix, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    // probes 0..3 against gallery 0..3; probe 2 ties its own identity with
    // a lower-indexed impostor, which therefore ranks first
    let s = Matrix::from_rows(&[
        [0.9, 0.1, 0.2, 0.0],
        [0.3, 0.8, 0.1, 0.2],
        [0.1, 0.7, 0.7, 0.3],
        [0.6, 0.2, 0.1, 0.5],
    ]);
    let labels = [0, 1, 2, 3];
    for k in 1..=3 {
        println!("rank-{k}: {:.2}", rank_k_accuracy(&s, &labels, &labels, k)?);
    }
    let (genuine, impostor) = split_scores(&s, &labels, &labels)?;
    for far in [0.25, 1.0 / 12.0, 0.0] {
        let p = vr_at_far(&genuine, &impostor, far)?;
        println!("FAR {far:.3}: threshold {:.3}, VR {:.2}", p.threshold, p.vr);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noisy = Matrix::random_normal(20, 20, &mut rng);
    let ids: Vec<usize> = (0..20).collect();
    let report = report_from_scores(&noisy, &ids, &ids, &Protocol::default())?;
    println!("random 20x20 scores: rank-1 {:.2} (chance 0.05)", report.rank1);
    println!("{}", serde_json::to_string_pretty(&report).expect("report serialises"));

    if let Some(path) = std::env::args().nth(1) {
        let (g, i) = split_scores(&noisy, &ids, &ids)?;
        write_roc_csv(&roc_points(&g, &i), &path)?;
        println!("wrote {path}");
    }
    Ok(())
}
