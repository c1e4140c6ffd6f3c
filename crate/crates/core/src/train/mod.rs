//! The alternating optimisation loop: pretrain the encoder, fit the
//! decorrelation layer, then alternate gradient steps on the encoder and
//! class head with eigen-refits of the projection.

mod ablation;
mod config;
mod log;

pub use ablation::{run_ablation, test_fingerprint, AblationRow, AblationTable, Variant};
pub use config::{LrRange, Paths, Toggles, TrainConfig, DEFAULT_HIDDEN};
pub use log::{epoch_means, read_log, write_log, LogRecord};

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::decorr::{fit_decorrelation, project_var, DecorrLayer};
use crate::encoder::{encode, LrSchedule, NetworkParams};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, Protocol};
use crate::losses::{haml, mine_quadruplets, mml, qml, HamlHead, HamlParams};
use crate::synth::{generate_split, read_dataset, write_dataset, BatchSampler, Dataset, Domain, SynthConfig};
use crate::tensor::{Graph, Matrix, NORM_EPS};

// Independent RNG streams derived from the run seed.
const STREAM_PRETRAIN_HEAD: u64 = 1;
const STREAM_HEAD: u64 = 2;
const STREAM_PRETRAIN_ORDER: u64 = 3;
const STREAM_BATCHES: u64 = 4;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Per-batch records followed by one epoch-mean record (batch `None`)
    /// per fine-tuning epoch.
    pub log: Vec<LogRecord>,
    /// Column orthonormality error of `W^D` after the initial fit and after
    /// every refit.
    pub orthonormality: Vec<f64>,
}

/// Dense class indices `0..c` for arbitrary identity labels.
fn class_map(ds: &Dataset) -> BTreeMap<usize, usize> {
    ds.identity_set().into_iter().enumerate().map(|(i, id)| (id, i)).collect()
}

fn fit_or_identity(net: &NetworkParams, train: &Dataset, cfg: &TrainConfig) -> Result<DecorrLayer> {
    if !cfg.toggles.use_decorr {
        return Ok(DecorrLayer::identity(net.output_dim()));
    }
    let y = net.encode_matrix(&train.all_features())?;
    fit_decorrelation(&y, cfg.q)
}

/// A zero-norm representation of a training sample can only come from the
/// weights, so report it as divergence rather than bad data.
fn collapsed(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::Degenerate { .. } => Error::Diverged { epoch, batch, reason: "an embedding collapsed to zero" },
        e => e,
    }
}

/// Runs the full training procedure on an in-memory training set.
pub fn run_training(cfg: &TrainConfig, train: &Dataset) -> Result<TrainOutcome> {
    cfg.validate()?;
    let input_dim = train.feature_dim()?;
    let sizes = cfg.resolved_layer_sizes(input_dim)?;
    let sampler = BatchSampler::new(train);
    sampler.check(cfg.batch_size)?;
    let classes = class_map(train);
    let labels: Vec<usize> = train.samples.iter().map(|s| classes[&s.identity]).collect();

    let mut net = NetworkParams::init(&sizes, cfg.seed)?;
    pretrain(cfg, train, &labels, classes.len(), &mut net)?;

    let mut decorr = fit_or_identity(&net, train, cfg).map_err(|e| collapsed(e, cfg.pretrain_epochs, 0))?;
    let mut orthonormality = vec![decorr.orthonormality_error()];
    // Drawn in the representation frame and carried into the projected one,
    // so toggling decorrelation does not change the random initialisation.
    let mut head = HamlHead::init(net.output_dim(), classes.len(), cfg.haml, cfg.seed ^ STREAM_HEAD)?;
    head.transform(&decorr.projection().transpose())?;

    let mut log = Vec::new();
    if cfg.epochs > 0 {
        let schedule = LrSchedule::new(cfg.lr.initial, cfg.lr.final_lr, cfg.epochs)?;
        let batches = match cfg.batches_per_epoch {
            0 => train.len().div_ceil(cfg.batch_size),
            b => b,
        };
        let mut rng = rng_for(cfg.seed, STREAM_BATCHES);
        for epoch in 0..cfg.epochs {
            let lr = schedule.lr_at(epoch)?;
            let mut sums = [0.0; 3];
            for batch in 0..batches {
                let idx = sampler.sample(cfg.batch_size, &mut rng)?;
                let rec = finetune_step(cfg, train, &labels, &idx, &mut net, &decorr, &mut head, lr, epoch, batch)?;
                sums[0] += rec.l_qml;
                sums[1] += rec.l_haml;
                sums[2] += rec.l_mml;
                log.push(rec);
            }
            let k = batches as f64;
            log.push(LogRecord {
                epoch,
                batch: None,
                l_qml: sums[0] / k,
                l_haml: sums[1] / k,
                l_mml: sums[2] / k,
                lr,
            });
            if cfg.toggles.use_decorr {
                let refit = fit_or_identity(&net, train, cfg).map_err(|e| collapsed(e, epoch, batches - 1))?;
                // keep the class head aligned with the rotated basis
                let r = refit.projection().t_matmul(decorr.projection())?;
                head.transform(&r)?;
                orthonormality.push(refit.orthonormality_error());
                decorr = refit;
            }
        }
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint::new(net, decorr, head)?,
        log,
        orthonormality,
    })
}

/// Plain normalised softmax on the VIS samples only.
fn pretrain(cfg: &TrainConfig, train: &Dataset, labels: &[usize], classes: usize, net: &mut NetworkParams) -> Result<()> {
    if cfg.pretrain_epochs == 0 {
        return Ok(());
    }
    let params = HamlParams {
        weight_nir: 0.0,
        weight_vis: 1.0,
        ..HamlParams::plain_softmax(cfg.haml.scale)
    };
    let mut head = HamlHead::init(net.output_dim(), classes, params, cfg.seed ^ STREAM_PRETRAIN_HEAD)?;
    let mut order = train.indices_of(Domain::Vis);
    let mut rng = rng_for(cfg.seed, STREAM_PRETRAIN_ORDER);
    for epoch in 0..cfg.pretrain_epochs {
        order.shuffle(&mut rng);
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let mut g = Graph::new();
            let bound = net.bind(&mut g);
            let w = head.bind(&mut g);
            let x = g.constant(train.features(idx));
            let y = encode(&mut g, &bound, x)?;
            let ids: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let doms = vec![Domain::Vis; idx.len()];
            let loss = haml(&mut g, y, w, &ids, &doms, &params)?;
            if !g.value(loss).item().is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            g.backward(loss)?;
            net.sgd_step(&bound.grads(&g), cfg.pretrain_lr)?;
            head.sgd_step(g.grad(w), cfg.pretrain_lr)?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn finetune_step(
    cfg: &TrainConfig,
    train: &Dataset,
    labels: &[usize],
    idx: &[usize],
    net: &mut NetworkParams,
    decorr: &DecorrLayer,
    head: &mut HamlHead,
    lr: f64,
    epoch: usize,
    batch: usize,
) -> Result<LogRecord> {
    let mut g = Graph::new();
    let bound = net.bind(&mut g);
    let x = g.constant(train.features(idx));
    let y = encode(&mut g, &bound, x)?;
    let z = project_var(&mut g, decorr, y)?;
    let zv = g.value(z);
    if !zv.is_finite() {
        return Err(Error::Diverged { epoch, batch, reason: "non-finite embeddings" });
    }
    if (0..zv.rows()).any(|r| zv.row_norm(r) < NORM_EPS) {
        return Err(Error::Diverged { epoch, batch, reason: "an embedding collapsed to zero" });
    }
    let ids: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
    let doms: Vec<Domain> = idx.iter().map(|&i| train.samples[i].domain).collect();

    let l_qml = if cfg.toggles.use_qml {
        let mined = mine_quadruplets(g.value(z), &ids, &doms)?;
        qml(&mut g, z, &mined.tuples, cfg.mml.alpha1, cfg.mml.alpha2)?
    } else {
        g.constant(Matrix::scalar(0.0))
    };
    let w = cfg.toggles.use_haml.then(|| head.bind(&mut g));
    let l_haml = match w {
        Some(w) => haml(&mut g, z, w, &ids, &doms, &head.params)?,
        None => g.constant(Matrix::scalar(0.0)),
    };
    let total = mml(&mut g, l_qml, l_haml, &cfg.mml)?;
    let rec = LogRecord {
        epoch,
        batch: Some(batch),
        l_qml: g.value(l_qml).item(),
        l_haml: g.value(l_haml).item(),
        l_mml: g.value(total).item(),
        lr,
    };
    if !(rec.l_qml.is_finite() && rec.l_haml.is_finite() && rec.l_mml.is_finite()) {
        return Err(Error::NonFiniteLoss { epoch, batch });
    }
    g.backward(total)?;
    net.sgd_step(&bound.grads(&g), lr)?;
    if let Some(w) = w {
        head.sgd_step(g.grad(w), lr)?;
    }
    let finite = net.weights().iter().chain(net.biases()).all(Matrix::is_finite) && head.class_weights().is_finite();
    if !finite {
        return Err(Error::NonFiniteLoss { epoch, batch });
    }
    Ok(rec)
}

/// Training set from `paths.dataset`, or the generated split.
pub fn load_train_set(cfg: &TrainConfig) -> Result<Dataset> {
    match &cfg.paths.dataset {
        Some(p) => read_dataset(p),
        None => Ok(generate_split(&cfg.synth)?.0),
    }
}

/// Test set from `paths.test_dataset`, or the generated split.
pub fn load_test_set(cfg: &TrainConfig) -> Result<Dataset> {
    match &cfg.paths.test_dataset {
        Some(p) => read_dataset(p),
        None => Ok(generate_split(&cfg.synth)?.1),
    }
}

/// Writes `train.csv` and `test.csv` into `out_dir`.
pub fn gen_data(synth: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let out_dir = out_dir.as_ref();
    let (train, test) = generate_split(synth)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_dataset(&train, out_dir.join("train.csv"))?;
    write_dataset(&test, out_dir.join("test.csv"))?;
    Ok((train, test))
}

/// Loads a checkpoint, checks its widths against the expectation and scores
/// the test set.
pub fn run_eval(
    checkpoint: impl AsRef<Path>,
    test: &Dataset,
    protocol: &Protocol,
    expect_n: Option<usize>,
    expect_q: Option<usize>,
) -> Result<EvalReport> {
    let ck = Checkpoint::load(checkpoint)?;
    ck.expect_dims(Some(test.feature_dim()?), expect_n, expect_q)?;
    evaluate(&ck.network, &ck.decorr, test, protocol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TrainConfig {
        TrainConfig {
            layer_sizes: Some(vec![12, 16, 8]),
            n: 8,
            q: 6,
            batch_size: 8,
            epochs: 3,
            batches_per_epoch: 4,
            pretrain_epochs: 2,
            synth: SynthConfig {
                identities: 6,
                test_identities: 4,
                samples_per_identity_per_domain: 3,
                latent_dim: 4,
                input_dim: 12,
                ..SynthConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_leave_no_log() {
        let cfg = TrainConfig { epochs: 0, ..small() };
        let out = run_training(&cfg, &load_train_set(&cfg).unwrap()).unwrap();
        assert!(out.log.is_empty());
        assert_eq!(out.orthonormality.len(), 1);
        assert_eq!(out.checkpoint.q(), 6);
    }

    #[test]
    fn log_layout_and_determinism() {
        let cfg = small();
        let train = load_train_set(&cfg).unwrap();
        let a = run_training(&cfg, &train).unwrap();
        let b = run_training(&cfg, &train).unwrap();
        assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
        assert_eq!(a.log, b.log);
        assert_eq!(a.log.len(), 3 * 5);
        assert_eq!(a.log.iter().filter(|r| r.batch.is_none()).count(), 3);
        assert!(a.orthonormality.iter().all(|&e| e < 1e-8));
    }

    #[test]
    fn disabled_decorrelation_is_identity() {
        let mut cfg = small();
        cfg.toggles.use_decorr = false;
        let out = run_training(&cfg, &load_train_set(&cfg).unwrap()).unwrap();
        assert_eq!(out.checkpoint.decorr.projection(), &Matrix::identity(8));
    }

    #[test]
    fn disabled_terms_log_zero() {
        let mut cfg = small();
        cfg.toggles.use_qml = false;
        let out = run_training(&cfg, &load_train_set(&cfg).unwrap()).unwrap();
        assert!(out.log.iter().all(|r| r.l_qml == 0.0));
        cfg.toggles = Toggles {
            use_qml: true,
            use_haml: false,
            use_decorr: true,
        };
        let out = run_training(&cfg, &load_train_set(&cfg).unwrap()).unwrap();
        assert!(out.log.iter().all(|r| r.l_haml == 0.0));
    }

    #[test]
    fn invalid_config_fails_before_work() {
        let cfg = TrainConfig { q: 9, ..small() };
        let empty = Dataset { samples: Vec::new() };
        assert!(matches!(run_training(&cfg, &empty), Err(Error::Config(_))));
    }
}
