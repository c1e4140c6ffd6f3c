//! Cross-domain matching protocol: NIR probes against a VIS gallery, scored
//! by cosine similarity.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decorr::{project, DecorrLayer};
use crate::encoder::NetworkParams;
use crate::error::{Error, Result};
use crate::synth::{Dataset, Domain};
use crate::tensor::Matrix;

/// Cosine similarity of every probe row against every gallery row.
pub fn similarity_matrix(probe: &Matrix, gallery: &Matrix) -> Result<Matrix> {
    if probe.cols() != gallery.cols() {
        return Err(Error::Shape {
            op: "similarity_matrix",
            lhs: probe.shape(),
            rhs: gallery.shape(),
        });
    }
    let p = probe.normalize_rows("similarity_matrix (probe)")?;
    let g = gallery.normalize_rows("similarity_matrix (gallery)")?;
    p.matmul_t(&g)
}

fn check_labels(s: &Matrix, probe_labels: &[usize], gallery_labels: &[usize]) -> Result<()> {
    if probe_labels.len() != s.rows() || gallery_labels.len() != s.cols() {
        return Err(Error::Contract(format!(
            "{}x{} score matrix with {} probe and {} gallery labels",
            s.rows(),
            s.cols(),
            probe_labels.len(),
            gallery_labels.len()
        )));
    }
    Ok(())
}

/// Fraction of probes whose `k` best gallery entries (descending score,
/// lower index first on ties) contain their identity.
pub fn rank_k_accuracy(s: &Matrix, probe_labels: &[usize], gallery_labels: &[usize], k: usize) -> Result<f64> {
    check_labels(s, probe_labels, gallery_labels)?;
    if k == 0 || k > s.cols() {
        return Err(Error::Range(format!("rank k={k} with a gallery of {}", s.cols())));
    }
    if s.rows() == 0 {
        return Err(Error::Protocol("no probes".into()));
    }
    let mut hits = 0usize;
    for (p, &label) in probe_labels.iter().enumerate() {
        let row = s.row(p);
        // position of a gallery item = how many items sort strictly before it
        let best = gallery_labels
            .iter()
            .enumerate()
            .filter(|&(_, &gl)| gl == label)
            .map(|(j, _)| {
                row.iter()
                    .enumerate()
                    .filter(|&(i, &v)| v > row[j] || (v == row[j] && i < j))
                    .count()
            })
            .min();
        if best.is_some_and(|pos| pos < k) {
            hits += 1;
        }
    }
    Ok(hits as f64 / s.rows() as f64)
}

/// Operating point on the ROC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationPoint {
    pub far: f64,
    pub vr: f64,
    pub threshold: f64,
}

/// Verification rate at a false accept rate.
///
/// The threshold is the smallest candidate `t` among the impostor scores and
/// the value just above the impostor maximum for which
/// `#{impostor ≥ t} / #impostor ≤ far`; the verification rate is then
/// `#{genuine ≥ t} / #genuine`.
pub fn vr_at_far(genuine: &[f64], impostor: &[f64], far: f64) -> Result<VerificationPoint> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::Contract("vr_at_far needs genuine and impostor scores".into()));
    }
    if !(0.0..=1.0).contains(&far) {
        return Err(Error::Range(format!("far {far} outside [0, 1]")));
    }
    let mut sorted = impostor.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len() as f64;

    // Walk down the distinct impostor values; accepting value v admits every
    // impostor >= v.
    let mut threshold = next_up(sorted[0]);
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        if j as f64 / n <= far {
            threshold = v;
            i = j;
        } else {
            break;
        }
    }
    let accepted = genuine.iter().filter(|&&g| g >= threshold).count();
    Ok(VerificationPoint {
        far,
        vr: accepted as f64 / genuine.len() as f64,
        threshold,
    })
}

/// Smallest float above `x`.
pub fn next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    if x > 0.0 {
        f64::from_bits(bits + 1)
    } else {
        f64::from_bits(bits - 1)
    }
}

/// One ROC point per distinct score threshold, ordered by increasing
/// threshold.
pub fn roc_points(genuine: &[f64], impostor: &[f64]) -> Vec<VerificationPoint> {
    let mut thresholds: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let mut g = genuine.to_vec();
    let mut im = impostor.to_vec();
    g.sort_by(f64::total_cmp);
    im.sort_by(f64::total_cmp);
    let above = |sorted: &[f64], t: f64| sorted.len() - sorted.partition_point(|&v| v < t);
    thresholds
        .into_iter()
        .map(|t| VerificationPoint {
            far: above(&im, t) as f64 / im.len().max(1) as f64,
            vr: above(&g, t) as f64 / g.len().max(1) as f64,
            threshold: t,
        })
        .collect()
}

pub fn write_roc_csv(points: &[VerificationPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("threshold,far,vr\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.far, p.vr));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// Which ranks and false accept rates to report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Protocol {
    pub ranks: Vec<usize>,
    pub fars: Vec<f64>,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            ranks: vec![1, 5, 10],
            fars: vec![0.1, 0.01, 0.001],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankAccuracy {
    pub k: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rank1: f64,
    pub rank_k: Vec<RankAccuracy>,
    pub vr_at_far: Vec<VerificationPoint>,
    pub genuine_count: usize,
    pub impostor_count: usize,
}

impl EvalReport {
    pub fn vr(&self, far: f64) -> Option<f64> {
        self.vr_at_far.iter().find(|p| p.far == far).map(|p| p.vr)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("report serialises");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

/// Genuine (same identity) and impostor scores from a score matrix.
pub fn split_scores(s: &Matrix, probe_labels: &[usize], gallery_labels: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_labels(s, probe_labels, gallery_labels)?;
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for (p, &pl) in probe_labels.iter().enumerate() {
        for (g, &gl) in gallery_labels.iter().enumerate() {
            if pl == gl {
                genuine.push(s[(p, g)]);
            } else {
                impostor.push(s[(p, g)]);
            }
        }
    }
    Ok((genuine, impostor))
}

/// Rank and verification figures for an existing score matrix.
pub fn report_from_scores(
    s: &Matrix,
    probe_labels: &[usize],
    gallery_labels: &[usize],
    protocol: &Protocol,
) -> Result<EvalReport> {
    let (genuine, impostor) = split_scores(s, probe_labels, gallery_labels)?;
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::Protocol(format!(
            "{} genuine and {} impostor pairs; both must be present",
            genuine.len(),
            impostor.len()
        )));
    }
    let mut ranks = protocol.ranks.clone();
    if !ranks.contains(&1) {
        ranks.push(1);
    }
    ranks.sort_unstable();
    ranks.dedup();
    ranks.retain(|&k| k >= 1 && k <= s.cols());
    let rank_k = ranks
        .iter()
        .map(|&k| {
            Ok(RankAccuracy {
                k,
                accuracy: rank_k_accuracy(s, probe_labels, gallery_labels, k)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let vr = protocol
        .fars
        .iter()
        .map(|&far| vr_at_far(&genuine, &impostor, far))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        rank1: rank_k[0].accuracy,
        rank_k,
        vr_at_far: vr,
        genuine_count: genuine.len(),
        impostor_count: impostor.len(),
    })
}

/// Embeds the test set and scores NIR probes against the VIS gallery.
pub fn evaluate(net: &NetworkParams, decorr: &DecorrLayer, test: &Dataset, protocol: &Protocol) -> Result<EvalReport> {
    let probes = test.indices_of(Domain::Nir);
    let gallery = test.indices_of(Domain::Vis);
    if probes.is_empty() || gallery.is_empty() {
        return Err(Error::Protocol(format!(
            "{} probe (NIR) and {} gallery (VIS) samples",
            probes.len(),
            gallery.len()
        )));
    }
    let embed = |idx: &[usize]| -> Result<Matrix> {
        let y = net.encode_matrix(&test.features(idx))?;
        project(decorr, &y)
    };
    let s = similarity_matrix(&embed(&probes)?, &embed(&gallery)?)?;
    let labels = |idx: &[usize]| idx.iter().map(|&i| test.samples[i].identity).collect::<Vec<_>>();
    report_from_scores(&s, &labels(&probes), &labels(&gallery), protocol)
}

/// Mean and sample standard deviation of one figure across folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        Self { mean, std: var.sqrt() }
    }
}

/// Multi-fold summary: rank-1 and every reported VR@FAR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub folds: usize,
    pub rank1: Spread,
    /// `(far, spread)` in protocol order.
    pub vr_at_far: Vec<(f64, Spread)>,
}

pub fn aggregate_folds(reports: &[EvalReport]) -> Result<FoldSummary> {
    let first = reports.first().ok_or_else(|| Error::Protocol("no folds to aggregate".into()))?;
    let fars: Vec<f64> = first.vr_at_far.iter().map(|p| p.far).collect();
    if reports.iter().any(|r| r.vr_at_far.iter().map(|p| p.far).ne(fars.iter().copied())) {
        return Err(Error::Protocol("folds report different FAR lists".into()));
    }
    let rank1: Vec<f64> = reports.iter().map(|r| r.rank1).collect();
    let vr_at_far = fars
        .iter()
        .enumerate()
        .map(|(i, &far)| (far, Spread::of(&reports.iter().map(|r| r.vr_at_far[i].vr).collect::<Vec<_>>())))
        .collect();
    Ok(FoldSummary {
        folds: reports.len(),
        rank1: Spread::of(&rank1),
        vr_at_far,
    })
}
