//! Trains the four component variants on five generated splits and prints
//! median rank-1 and VR@FAR=0.1% per row.
//!
//! `cargo run --release --example ablation [-- out.csv]`

use std::time::Instant;

use mmdl::train::{run_ablation, TrainConfig};

fn main() -> mmdl::Result<()> {
    let cfg = TrainConfig::default();
    let start = Instant::now();
    let table = run_ablation(&cfg)?;
    println!("{:<18} {:>8} {:>10}   per-fold rank-1", "variant", "rank-1", "VR@0.1%");
    for row in &table.rows {
        let folds: Vec<String> = row.rank1_folds.iter().map(|r| format!("{r:.3}")).collect();
        println!(
            "{:<18} {:>8.4} {:>10.4}   {}",
            row.variant.name(),
            row.rank1_median,
            row.vr_median,
            folds.join(" ")
        );
    }
    println!("test split {}", &table.rows[0].test_fingerprint[..16]);
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    if let Some(path) = std::env::args().nth(1) {
        table.write_csv(&path)?;
        println!("wrote {path}");
    }
    Ok(())
}
