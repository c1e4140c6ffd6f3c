//! Quadruplet mining, the quadruplet margin loss, the angular margin loss
//! and their weighted sum on a tiny hand-made batch.
//!
//! `cargo run --example losses`

use mmdl::losses::{haml, mine_quadruplets, mml, qml, HamlParams, MmlConfig};
use mmdl::{Domain, Graph, Matrix, Result};

fn main() -> Result<()> {
    use Domain::{Nir, Vis};
    // two identities, one sample per domain each, on the unit circle
    let deg = |a: f64| [a.to_radians().cos(), a.to_radians().sin()];
    let z = Matrix::from_rows(&[deg(0.0), deg(20.0), deg(90.0), deg(60.0)]);
    let ids = [0, 0, 1, 1];
    let doms = [Nir, Vis, Nir, Vis];

    let mined = mine_quadruplets(&z, &ids, &doms)?;
    for t in &mined.tuples {
        println!("anchor N{} V{}  hardest negatives N{} V{}", t.anchor_nir, t.anchor_vis, t.neg_nir, t.neg_vis);
    }

    let mut g = Graph::new();
    let zv = g.constant(z.clone());
    let cfg = MmlConfig::default();
    let lq = qml(&mut g, zv, &mined.tuples, cfg.alpha1, cfg.alpha2)?;
    let w = g.constant(Matrix::from_rows(&[deg(10.0), deg(75.0)]).transpose());
    let params = HamlParams::default();
    let lh = haml(&mut g, zv, w, &ids, &doms, &params)?;
    let total = mml(&mut g, lq, lh, &cfg)?;
    println!(
        "QML {:.6}  HAML {:.6}  MML = {}*QML + {}*HAML = {:.6}",
        g.value(lq).item(),
        g.value(lh).item(),
        cfg.lambda1,
        cfg.lambda2,
        g.value(total).item()
    );

    // margins only ever make the loss larger
    for m in [0.0, 0.3, 0.6, 0.9] {
        let p = HamlParams { margin_nir: m, margin_vis: m, ..params };
        let mut g = Graph::new();
        let zv = g.constant(z.clone());
        let w = g.constant(Matrix::from_rows(&[deg(10.0), deg(75.0)]).transpose());
        let l = haml(&mut g, zv, w, &ids, &doms, &p)?;
        println!("margin {m:.1}: HAML {:.6}", g.value(l).item());
    }
    Ok(())
}
