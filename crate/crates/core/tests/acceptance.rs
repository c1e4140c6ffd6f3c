//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints its PASS/FAIL line, then exits non-zero if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use mmdl::decorr::{captured_trace, fit_decorrelation, jacobi_eigh, normalized_second_moment, project, project_var};
use mmdl::encoder::{encode, BoundNetwork, NetworkParams};
use mmdl::eval::{evaluate, next_up, rank_k_accuracy, similarity_matrix, split_scores, vr_at_far, Protocol};
use mmdl::losses::{haml, mine_quadruplets, mml, qml, HamlParams, MmlConfig, QuadrupletTuple};
use mmdl::synth::generate_split;
use mmdl::tensor::{cosine, finite_diff_check};
use mmdl::train::{epoch_means, run_ablation, run_training, TrainConfig, Variant};
use mmdl::{Domain, Graph, Matrix, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lib<T>(r: mmdl::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// 1

fn gradients() -> Result<String, String> {
    let start = Instant::now();
    let (b, input, n, c) = (8, 12, 16, 4);
    let ids = [0, 0, 1, 1, 2, 2, 3, 3];
    let doms = [Domain::Nir, Domain::Vis, Domain::Vis, Domain::Nir, Domain::Nir, Domain::Vis, Domain::Vis, Domain::Nir];
    let mut worst = [0.0f64; 3];
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = lib(NetworkParams::init(&[input, 16, n], seed))?;
        let x = Matrix::random_normal(b, input, &mut rng);
        let decorr = lib(fit_decorrelation(&lib(net.encode_matrix(&Matrix::random_normal(50, input, &mut rng)))?, n))?;
        let z0 = lib(project(&decorr, &lib(net.encode_matrix(&x))?))?;
        let tuples = lib(mine_quadruplets(&z0, &ids, &doms))?.tuples;
        ensure(!tuples.is_empty(), || "no quadruplets mined".into())?;

        let mut params: Vec<Matrix> = net.weights().to_vec();
        params.extend(net.biases().iter().cloned());
        params.push(Matrix::random_normal(n, c, &mut rng));
        let layers = net.weights().len();

        for (slot, which) in worst.iter_mut().zip(0..3) {
            let f = |g: &mut Graph, p: &[Var]| -> mmdl::Result<Var> {
                let bound = BoundNetwork {
                    weights: p[..layers].to_vec(),
                    biases: p[layers..2 * layers].to_vec(),
                };
                let xv = g.constant(x.clone());
                let y = encode(g, &bound, xv)?;
                let z = project_var(g, &decorr, y)?;
                let lq = qml(g, z, &tuples, 0.2, 0.2)?;
                let lh = haml(g, z, p[2 * layers], &ids, &doms, &HamlParams::default())?;
                match which {
                    0 => Ok(lq),
                    1 => Ok(lh),
                    _ => mml(g, lq, lh, &MmlConfig::default()),
                }
            };
            *slot = slot.max(lib(finite_diff_check(f, &params, 1e-6))?);
        }
    }
    let elapsed = start.elapsed();
    ensure(worst.iter().all(|&e| e < 1e-5), || format!("relative errors qml/haml/mml {worst:?}"))?;
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("max relative error qml {:.1e}, haml {:.1e}, mml {:.1e}", worst[0], worst[1], worst[2]))
}

// 2

fn eigensolver() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut res, mut rec, mut orth) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..100 {
        let n = 1 + k % 32;
        let a = Matrix::random_normal(n, n, &mut rng);
        let c = Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
        let eig = lib(jacobi_eigh(&c))?;
        let v = &eig.vectors;
        for (i, &lambda) in eig.values.iter().enumerate() {
            let col = Matrix::from_vec(n, 1, v.column(i)).unwrap();
            let cv = c.matmul(&col).unwrap();
            let r = cv.zip_map(&col.scale(lambda), "residual", |x, y| x - y).unwrap().frobenius_norm();
            res = res.max(r);
        }
        let vl = Matrix::from_fn(n, n, |i, j| v[(i, j)] * eig.values[j]);
        rec = rec.max(vl.matmul_t(v).unwrap().zip_map(&c, "rec", |x, y| x - y).unwrap().frobenius_norm());
        orth = orth.max(v.t_matmul(v).unwrap().max_abs_diff(&Matrix::identity(n)));
    }
    ensure(res < 1e-9 && rec < 1e-9 && orth < 1e-10, || {
        format!("residual {res:.1e}, reconstruction {rec:.1e}, orthonormality {orth:.1e}")
    })?;
    Ok(format!("100 matrices: residual {res:.1e}, reconstruction {rec:.1e}, orthonormality {orth:.1e}"))
}

// 3

fn decorrelation() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y = Matrix::random_normal(200, 16, &mut rng)
        .matmul(&Matrix::random_normal(16, 16, &mut rng))
        .unwrap();
    let c = lib(normalized_second_moment(&y))?;
    let unit = lib(y.normalize_rows("acceptance"))?;
    let (mut off, mut diag) = (0.0f64, 0.0f64);
    let mut beaten = 0;
    for q in [1, 4, 8, 12, 16] {
        let layer = lib(fit_decorrelation(&y, q))?;
        let z = lib(project(&layer, &unit))?;
        let cz = z.t_matmul(&z).unwrap().scale(1.0 / 200.0);
        for i in 0..q {
            for j in 0..q {
                if i == j {
                    diag = diag.max((cz[(i, i)] - layer.eigenvalues()[i]).abs());
                } else {
                    off = off.max(cz[(i, j)].abs());
                }
            }
        }
        if q < 16 {
            let fitted = lib(captured_trace(&c, layer.projection()))?;
            for _ in 0..1000 {
                let r = Matrix::random_orthonormal(16, q, &mut rng);
                if lib(captured_trace(&c, &r))? > fitted + 1e-12 {
                    beaten += 1;
                }
            }
        }
    }
    ensure(off < 1e-8 && diag < 1e-8 && beaten == 0, || {
        format!("off-diagonal {off:.1e}, diagonal {diag:.1e}, random bases beating the fit {beaten}")
    })?;
    Ok(format!("off-diagonal {off:.1e}, diagonal vs eigenvalues {diag:.1e}, 4000 random bases all below the fit"))
}

// 4

fn cosines() -> Result<String, String> {
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(40 + seed);
        let y = Matrix::random_normal(60, 16, &mut rng);
        let z = lib(project(&lib(fit_decorrelation(&y, 16))?, &y))?;
        for i in 0..y.rows() {
            for j in 0..i {
                worst = worst.max((cosine(y.row(i), y.row(j)) - cosine(z.row(i), z.row(j))).abs());
            }
        }
    }
    ensure(worst < 1e-10, || format!("cosine drift {worst:.1e}"))?;
    Ok(format!("max cosine drift {worst:.1e}"))
}

// 5

fn loss_oracles() -> Result<String, String> {
    let tuple = QuadrupletTuple { anchor_nir: 0, anchor_vis: 1, neg_nir: 2, neg_vis: 3 };
    let qml_of = |z: Matrix, a1: f64, a2: f64| -> Result<f64, String> {
        let mut g = Graph::new();
        let zv = g.constant(z);
        let l = lib(qml(&mut g, zv, &[tuple], a1, a2))?;
        Ok(g.value(l).item())
    };
    let hinge = |x: f64| x.max(0.0);
    // anchors orthogonal, negatives copy the anchors
    let v = qml_of(Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]]), 0.2, 0.3)?;
    let want = hinge(0.2 + 0.0 - 0.0) + hinge(0.3 + 1.0 - 0.0) + hinge(0.2 + 0.0 - 0.0) + hinge(0.3 + 1.0 - 0.0);
    ensure(v == want, || format!("qml {v} vs {want}"))?;
    // margins satisfied
    let v = qml_of(Matrix::from_rows(&[[1.0, 0.0], [2.0, 0.0], [0.0, 1.0], [0.0, 3.0]]), 0.2, 0.2)?;
    ensure(v == 0.0, || format!("satisfied qml {v}"))?;
    // axis-aligned mixture where each cosine is exact in binary
    let v = qml_of(Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]]), 0.5, 0.25)?;
    let want = hinge(0.5 + 0.0 - 1.0) + hinge(0.25 + 0.0 - 1.0) + hinge(0.5 - 1.0 - 1.0) + hinge(0.25 - 1.0 - 1.0);
    ensure(v == want, || format!("qml {v} vs {want}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z = Matrix::random_normal(10, 6, &mut rng);
    let w = Matrix::random_normal(6, 5, &mut rng);
    let ids: Vec<usize> = (0..10).map(|i| i % 5).collect();
    let doms: Vec<Domain> = (0..10).map(|i| if i < 5 { Domain::Nir } else { Domain::Vis }).collect();
    let p = HamlParams::plain_softmax(16.0);
    let mut g = Graph::new();
    let (zv, wv) = (g.constant(z.clone()), g.constant(w.clone()));
    let l = lib(haml(&mut g, zv, wv, &ids, &doms, &p))?;
    let got = g.value(l).item();
    let mut want = 0.0;
    for r in 0..10 {
        let logits: Vec<f64> = (0..5).map(|k| 16.0 * cosine(z.row(r), &w.column(k))).collect();
        let m = logits.iter().copied().fold(f64::MIN, f64::max);
        let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        want += (lse - logits[ids[r]]) / 10.0;
    }
    let softmax_gap = (got - want).abs();
    ensure(softmax_gap < 1e-12, || format!("plain softmax gap {softmax_gap:.1e}"))?;

    let mut g = Graph::new();
    let zv = g.constant(z);
    let one = g.constant(Matrix::random_normal(6, 1, &mut rng));
    let l = lib(haml(&mut g, zv, one, &[0; 10], &doms, &HamlParams::default()))?;
    let single = g.value(l).item();
    ensure(single == 0.0, || format!("single-class haml {single}"))?;
    Ok(format!("qml exact on 3 tuples, softmax gap {softmax_gap:.1e}, single class exactly 0"))
}

// 6

fn rank_brute(s: &Matrix, pl: &[usize], gl: &[usize], k: usize) -> f64 {
    let mut hits = 0;
    for p in 0..s.rows() {
        let mut order: Vec<usize> = (0..s.cols()).collect();
        order.sort_by(|&a, &b| s[(p, b)].total_cmp(&s[(p, a)]).then(a.cmp(&b)));
        if order[..k].iter().any(|&g| gl[g] == pl[p]) {
            hits += 1;
        }
    }
    hits as f64 / s.rows() as f64
}

fn vr_brute(genuine: &[f64], impostor: &[f64], far: f64) -> f64 {
    let max = impostor.iter().copied().fold(f64::MIN, f64::max);
    let mut candidates: Vec<f64> = impostor.to_vec();
    candidates.push(next_up(max));
    let rate = |t: f64, xs: &[f64]| xs.iter().filter(|&&x| x >= t).count() as f64 / xs.len() as f64;
    let t = candidates
        .into_iter()
        .filter(|&t| rate(t, impostor) <= far)
        .fold(f64::INFINITY, f64::min);
    rate(t, genuine)
}

fn metric_oracles() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    for _ in 0..100 {
        // coarse scores so ties are common
        let s = Matrix::from_fn(20, 20, |_, _| rng.random_range(0..8) as f64 / 8.0);
        let pl: Vec<usize> = (0..20).map(|_| rng.random_range(0..6)).collect();
        let gl: Vec<usize> = (0..20).map(|_| rng.random_range(0..6)).collect();
        for k in [1, 2, 5, 20] {
            if lib(rank_k_accuracy(&s, &pl, &gl, k))? != rank_brute(&s, &pl, &gl, k) {
                mismatches += 1;
            }
        }
        let (gen, imp) = lib(split_scores(&s, &pl, &gl))?;
        if gen.is_empty() || imp.is_empty() {
            continue;
        }
        for far in [0.0, 0.001, 0.01, 0.1, 0.3, 1.0] {
            if lib(vr_at_far(&gen, &imp, far))?.vr != vr_brute(&gen, &imp, far) {
                mismatches += 1;
            }
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} disagreements with brute force"))?;

    // chance level: 20 identities, random embeddings
    let ids: Vec<usize> = (0..20).flat_map(|i| [i; 4]).collect();
    let rates: Vec<f64> = (0..50)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
            let p = Matrix::random_normal(80, 16, &mut rng);
            let g = Matrix::random_normal(80, 16, &mut rng);
            rank_k_accuracy(&similarity_matrix(&p, &g).unwrap(), &ids, &ids, 1).unwrap()
        })
        .collect();
    let mean = rates.iter().sum::<f64>() / 50.0;
    let sd = (rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / 49.0).sqrt();
    let se = sd / 50f64.sqrt();
    ensure((mean - 0.05).abs() < 3.0 * se, || format!("chance rank-1 {mean:.4} (se {se:.4})"))?;
    Ok(format!("brute force agrees on 100 matrices; chance rank-1 {mean:.4} vs 0.05 (se {se:.4})"))
}

// 7

fn ablation_trend() -> Result<String, String> {
    let start = Instant::now();
    let table = lib(run_ablation(&TrainConfig::default()))?;
    let elapsed = start.elapsed();
    let row = |v| table.row(v).expect("all rows present");
    let vr: Vec<f64> = Variant::ALL.iter().map(|&v| row(v).vr_median).collect();
    let (base, full) = (row(Variant::Baseline), row(Variant::Full));
    let summary = format!(
        "VR@0.1% medians {:.4} / {:.4} / {:.4} / {:.4}; rank-1 baseline {:.4}, full {:.4}; {:.0}s",
        vr[0],
        vr[1],
        vr[2],
        vr[3],
        base.rank1_median,
        full.rank1_median,
        elapsed.as_secs_f64()
    );
    let monotone = vr.windows(2).all(|w| w[1] >= w[0]);
    let ok = monotone
        && full.rank1_median >= base.rank1_median
        && full.rank1_median >= 0.90
        && elapsed < Duration::from_secs(600);
    if ok {
        Ok(summary)
    } else {
        Err(summary)
    }
}

// 8

fn mechanics() -> Result<String, String> {
    let cfg = TrainConfig::default();
    let (train, test) = lib(generate_split(&cfg.synth))?;
    let a = lib(run_training(&cfg, &train))?;
    let means = epoch_means(&a.log);
    let (first, last) = (means[0].l_mml, means[means.len() - 1].l_mml);
    ensure(last < first, || format!("final epoch MML {last} not below first {first}"))?;
    let orth = a.orthonormality.iter().copied().fold(0.0, f64::max);
    ensure(a.orthonormality.len() == cfg.epochs + 1 && orth < 1e-8, || {
        format!("{} fits, orthonormality {orth:.1e}", a.orthonormality.len())
    })?;
    let b = lib(run_training(&cfg, &train))?;
    let report = |o: &mmdl::train::TrainOutcome| -> Result<String, String> {
        let r = lib(evaluate(&o.checkpoint.network, &o.checkpoint.decorr, &test, &Protocol::default()))?;
        Ok(serde_json::to_string(&r).unwrap())
    };
    ensure(a.checkpoint.to_bytes() == b.checkpoint.to_bytes(), || "checkpoints differ".into())?;
    ensure(report(&a)? == report(&b)?, || "reports differ".into())?;
    Ok(format!("MML {first:.3} -> {last:.3}; {} refits, orthonormality {orth:.1e}; repeat run bit-identical", cfg.epochs))
}

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("gradient correctness", gradients),
        ("eigensolver oracle", eigensolver),
        ("decorrelation invariant", decorrelation),
        ("cosine preservation", cosines),
        ("loss oracles", loss_oracles),
        ("metric oracles", metric_oracles),
        ("end-to-end trend", ablation_trend),
        ("training mechanics", mechanics),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
