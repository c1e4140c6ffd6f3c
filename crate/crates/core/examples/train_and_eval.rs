//! One full training run on the default synthetic split: pretraining,
//! alternating fine-tuning and refits, a checkpoint round trip and the test
//! report.
//!
//! `cargo run --release --example train_and_eval [-- epochs]`

use mmdl::checkpoint::Checkpoint;
use mmdl::eval::evaluate;
use mmdl::train::{epoch_means, load_test_set, load_train_set, run_training, TrainConfig};
use mmdl::Result;

fn main() -> Result<()> {
    let mut cfg = TrainConfig::default();
    if let Some(e) = std::env::args().nth(1) {
        cfg.epochs = e.parse().map_err(|_| mmdl::Error::Config(format!("bad epoch count {e}")))?;
    }
    let train = load_train_set(&cfg)?;
    let test = load_test_set(&cfg)?;
    let out = run_training(&cfg, &train)?;

    let means = epoch_means(&out.log);
    for r in means.iter().step_by(10.max(means.len() / 5).max(1)) {
        println!("epoch {:>3}  lr {:.2e}  qml {:.4}  haml {:.4}  mml {:.4}", r.epoch, r.lr, r.l_qml, r.l_haml, r.l_mml);
    }
    if let (Some(first), Some(last)) = (means.first(), means.last()) {
        println!("mean MML: first epoch {:.4}, last epoch {:.4}", first.l_mml, last.l_mml);
    }
    let worst = out.orthonormality.iter().copied().fold(0.0, f64::max);
    println!("{} projection fits, worst orthonormality error {worst:.1e}", out.orthonormality.len());

    let bytes = out.checkpoint.to_bytes();
    let back = Checkpoint::from_bytes(&bytes, std::path::Path::new("<memory>"))?;
    println!("checkpoint {} bytes, round trip exact: {}", bytes.len(), back.to_bytes() == bytes);

    let report = evaluate(&back.network, &back.decorr, &test, &cfg.protocol)?;
    for r in &report.rank_k {
        println!("rank-{:<2} {:.4}", r.k, r.accuracy);
    }
    for p in &report.vr_at_far {
        println!("VR@FAR={:<6} {:.4}", p.far, p.vr);
    }
    Ok(())
}
