use mmdl::checkpoint::Checkpoint;
use mmdl::decorr::{captured_trace, fit_decorrelation, normalized_second_moment};
use mmdl::eval::{rank_k_accuracy, split_scores, vr_at_far};
use mmdl::losses::{cosine_similarity, haml, HamlParams};
use mmdl::synth::{generate_split, read_dataset, write_dataset, SynthConfig};
use mmdl::tensor::finite_diff_check;
use mmdl::train::{run_training, TrainConfig};
use mmdl::{Domain, Graph, Matrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
    Matrix::random_normal(rows, cols, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn second_moment_ignores_row_scale(seed in any::<u64>(), scale in 1e-3f64..1e3, row in 0usize..30) {
        let y = random(30, 6, seed);
        let mut scaled = y.clone();
        scaled.row_mut(row).iter_mut().for_each(|v| *v *= scale);
        let a = normalized_second_moment(&y).unwrap();
        let b = normalized_second_moment(&scaled).unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-12);
        let trace: f64 = (0..6).map(|i| a[(i, i)]).sum();
        prop_assert!((trace - 1.0).abs() < 1e-12);
    }

    #[test]
    fn captured_trace_grows_with_q(seed in any::<u64>()) {
        let y = random(40, 8, seed);
        let c = normalized_second_moment(&y).unwrap();
        let mut last = 0.0;
        for q in 1..=8 {
            let t = captured_trace(&c, fit_decorrelation(&y, q).unwrap().projection()).unwrap();
            prop_assert!(t >= last - 1e-12);
            last = t;
        }
        prop_assert!((last - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rank_and_vr_are_monotone(seed in any::<u64>()) {
        let s = random(12, 12, seed);
        let labels: Vec<usize> = (0..12).map(|i| i % 4).collect();
        let mut prev = 0.0;
        for k in 1..=12 {
            let acc = rank_k_accuracy(&s, &labels, &labels, k).unwrap();
            prop_assert!(acc >= prev);
            prev = acc;
        }
        prop_assert_eq!(prev, 1.0);
        let (g, i) = split_scores(&s, &labels, &labels).unwrap();
        let mut prev = 0.0;
        for far in [0.0, 0.01, 0.05, 0.2, 0.5, 1.0] {
            let p = vr_at_far(&g, &i, far).unwrap();
            prop_assert!(p.vr >= prev);
            prev = p.vr;
        }
    }

    #[test]
    fn margins_never_lower_haml(seed in any::<u64>(), m in 0.0f64..1.5) {
        let z = random(6, 4, seed);
        let w = random(4, 3, seed ^ 1);
        let ids = [0, 1, 2, 0, 1, 2];
        let doms = [Domain::Nir, Domain::Nir, Domain::Nir, Domain::Vis, Domain::Vis, Domain::Vis];
        let value = |p: &HamlParams| {
            let mut g = Graph::new();
            let (zv, wv) = (g.constant(z.clone()), g.constant(w.clone()));
            let l = haml(&mut g, zv, wv, &ids, &doms, p).unwrap();
            g.value(l).item()
        };
        let plain = HamlParams { margin_nir: 0.0, margin_vis: 0.0, ..HamlParams::default() };
        let with = HamlParams { margin_nir: m, margin_vis: m, ..HamlParams::default() };
        prop_assert!(value(&with) >= value(&plain));
    }

    #[test]
    fn cosine_gradient_matches_differences(seed in any::<u64>()) {
        let params = [random(1, 5, seed), random(1, 5, seed ^ 7)];
        let err = finite_diff_check(
            |g, p| {
                let c = cosine_similarity(g, p[0], p[1])?;
                let t = g.tanh(c);
                Ok(g.sum(t))
            },
            &params,
            1e-6,
        )
        .unwrap();
        prop_assert!(err < 1e-7, "{err}");
    }
}

#[test]
fn dataset_csv_round_trips_exactly() {
    let cfg = SynthConfig { identities: 5, test_identities: 2, seed: 12, ..SynthConfig::default() };
    let (train, _) = generate_split(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_dataset(&train, &path).unwrap();
    assert_eq!(read_dataset(&path).unwrap(), train);
}

#[test]
fn checkpoint_round_trips_and_rejects_damage() {
    let cfg = TrainConfig {
        layer_sizes: Some(vec![32, 12, 8]),
        n: 8,
        q: 5,
        batch_size: 8,
        epochs: 1,
        pretrain_epochs: 1,
        synth: SynthConfig { identities: 6, test_identities: 2, samples_per_identity_per_domain: 3, ..SynthConfig::default() },
        ..TrainConfig::default()
    };
    let (train, _) = generate_split(&cfg.synth).unwrap();
    let ck = run_training(&cfg, &train).unwrap().checkpoint;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.to_bytes(), ck.to_bytes());
    assert_eq!((back.n(), back.q()), (8, 5));

    let bytes = ck.to_bytes();
    std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap_err().category().exit_code(), 3);
}
