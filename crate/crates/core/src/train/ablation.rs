use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{run_training, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, Protocol};
use crate::losses::HamlParams;
use crate::synth::{generate_split, Dataset, SynthConfig};

/// False accept rate the ablation reports.
pub const ABLATION_FAR: f64 = 0.001;

/// The four rows, from plain softmax up to the full method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Plain normalised softmax fine-tuning, identity projection.
    Baseline,
    Haml,
    HamlQml,
    Full,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Baseline, Variant::Haml, Variant::HamlQml, Variant::Full];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Haml => "+haml",
            Variant::HamlQml => "+haml+qml",
            Variant::Full => "+haml+qml+decorr",
        }
    }

    /// (angular margins, quadruplet loss, decorrelation)
    pub fn components(self) -> (bool, bool, bool) {
        match self {
            Variant::Baseline => (false, false, false),
            Variant::Haml => (true, false, false),
            Variant::HamlQml => (true, true, false),
            Variant::Full => (true, true, true),
        }
    }

    /// `base` with only the toggles and margins changed.
    pub fn configure(self, base: &TrainConfig) -> TrainConfig {
        let (margins, use_qml, use_decorr) = self.components();
        let mut cfg = base.clone();
        cfg.toggles.use_haml = true;
        cfg.toggles.use_qml = use_qml;
        cfg.toggles.use_decorr = use_decorr;
        if !margins {
            cfg.haml = HamlParams::plain_softmax(base.haml.scale);
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub rank1_folds: Vec<f64>,
    pub vr_folds: Vec<f64>,
    pub rank1_median: f64,
    pub vr_median: f64,
    /// Digest of every fold's test split this row was scored on.
    pub test_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub far: f64,
    pub rows: Vec<AblationRow>,
}

/// SHA-256 over identities, domains and feature bits, as lowercase hex.
pub fn test_fingerprint(sets: &[&Dataset]) -> String {
    let mut h = Sha256::new();
    for ds in sets {
        h.update((ds.len() as u64).to_le_bytes());
        for s in &ds.samples {
            h.update((s.identity as u64).to_le_bytes());
            h.update([s.domain as u8]);
            for v in &s.features {
                h.update(v.to_le_bytes());
            }
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Trains and scores each variant on `cfg.folds` generated splits. Fold `k`
/// uses data seed `synth.seed + k` and training seed `seed + k` for every
/// row, so rows differ only in their toggles.
pub fn run_ablation(cfg: &TrainConfig) -> Result<AblationTable> {
    cfg.validate()?;
    let protocol = Protocol {
        ranks: vec![1],
        fars: vec![ABLATION_FAR],
    };
    let mut folds = Vec::with_capacity(cfg.folds);
    for k in 0..cfg.folds as u64 {
        let synth = SynthConfig {
            seed: cfg.synth.seed.wrapping_add(k),
            ..cfg.synth.clone()
        };
        folds.push(generate_split(&synth)?);
    }
    let tests: Vec<&Dataset> = folds.iter().map(|(_, t)| t).collect();
    let fingerprint = test_fingerprint(&tests);

    let mut rows = Vec::new();
    for variant in Variant::ALL {
        let mut rank1 = Vec::new();
        let mut vr = Vec::new();
        for (k, (train, test)) in folds.iter().enumerate() {
            let mut run = variant.configure(cfg);
            run.seed = cfg.seed.wrapping_add(k as u64);
            let out = run_training(&run, train)?;
            let report = evaluate(&out.checkpoint.network, &out.checkpoint.decorr, test, &protocol)?;
            rank1.push(report.rank1);
            vr.push(report.vr(ABLATION_FAR).ok_or_else(|| Error::Protocol("missing VR".into()))?);
        }
        rows.push(AblationRow {
            variant,
            rank1_median: median(&rank1),
            vr_median: median(&vr),
            rank1_folds: rank1,
            vr_folds: vr,
            test_fingerprint: fingerprint.clone(),
        });
    }
    Ok(AblationTable { far: ABLATION_FAR, rows })
}

impl AblationTable {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let csv_err = |e: csv::Error| Error::io(path, e.into());
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record([
            "variant",
            "haml_margins",
            "qml",
            "decorr",
            "rank1",
            "vr_at_far_0.001",
            "rank1_folds",
            "vr_folds",
            "test_fingerprint",
        ])
        .map_err(csv_err)?;
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        for r in &self.rows {
            let (m, q, d) = r.variant.components();
            w.write_record([
                r.variant.name().to_string(),
                m.to_string(),
                q.to_string(),
                d.to_string(),
                r.rank1_median.to_string(),
                r.vr_median.to_string(),
                join(&r.rank1_folds),
                join(&r.vr_folds),
                r.test_fingerprint.clone(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }
}
