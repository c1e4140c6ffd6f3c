//! Checks the tape gradients of the quadruplet, angular-margin and combined
//! losses against central differences, through the encoder and class head.
//!
//! `cargo run --release --example gradient_check`

use mmdl::decorr::{fit_decorrelation, project_var};
use mmdl::encoder::{encode, BoundNetwork, NetworkParams};
use mmdl::losses::{haml, mine_quadruplets, mml, qml, HamlParams, MmlConfig};
use mmdl::tensor::finite_diff_check;
use mmdl::{Domain, Graph, Matrix, Result, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (b, input, n, c) = (8, 10, 16, 4);
    let net = NetworkParams::init(&[input, 12, n], 3)?;
    let x = Matrix::random_normal(b, input, &mut rng);
    let head = Matrix::random_normal(n, c, &mut rng);
    let ids = [0, 0, 1, 1, 2, 2, 3, 3];
    let doms = [Domain::Nir, Domain::Vis, Domain::Nir, Domain::Vis, Domain::Vis, Domain::Nir, Domain::Nir, Domain::Vis];

    let decorr = fit_decorrelation(&net.encode_matrix(&Matrix::random_normal(64, input, &mut rng))?, n)?;
    let mined = mine_quadruplets(&decorr_embed(&net, &decorr, &x)?, &ids, &doms)?;
    println!("{} quadruplets mined from a batch of {b}", mined.tuples.len());

    let mut params: Vec<Matrix> = net.weights().to_vec();
    params.extend(net.biases().iter().cloned());
    params.push(head);
    let layers = net.weights().len();

    let forward = |which: &'static str| {
        let x = x.clone();
        let decorr = decorr.clone();
        let tuples = mined.tuples.clone();
        move |g: &mut Graph, p: &[Var]| -> Result<Var> {
            let bound = BoundNetwork {
                weights: p[..layers].to_vec(),
                biases: p[layers..2 * layers].to_vec(),
            };
            let xv = g.constant(x.clone());
            let y = encode(g, &bound, xv)?;
            let z = project_var(g, &decorr, y)?;
            let lq = qml(g, z, &tuples, 0.2, 0.2)?;
            let lh = haml(g, z, p[2 * layers], &ids, &doms, &HamlParams::default())?;
            Ok(match which {
                "qml" => lq,
                "haml" => lh,
                _ => mml(g, lq, lh, &MmlConfig::default())?,
            })
        }
    };
    for which in ["qml", "haml", "mml"] {
        let err = finite_diff_check(forward(which), &params, 1e-6)?;
        println!("{which:<5} max relative error {err:.2e}");
    }
    Ok(())
}

fn decorr_embed(net: &NetworkParams, d: &mmdl::decorr::DecorrLayer, x: &Matrix) -> Result<Matrix> {
    mmdl::decorr::project(d, &net.encode_matrix(x)?)
}
