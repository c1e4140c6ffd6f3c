//! Binary checkpoints: one JSON header line, then every matrix as
//! little-endian `f64`s in header order. Values round-trip bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decorr::DecorrLayer;
use crate::encoder::NetworkParams;
use crate::error::{Error, Result};
use crate::losses::{HamlHead, HamlParams};
use crate::tensor::Matrix;

const MAGIC: &str = "mmdl-checkpoint-v1";

/// Everything needed to embed and score new samples, plus the class head so
/// training could resume.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: NetworkParams,
    pub decorr: DecorrLayer,
    pub head: HamlHead,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    layer_sizes: Vec<usize>,
    n: usize,
    q: usize,
    classes: usize,
    haml: HamlParams,
    matrices: Vec<Entry>,
    floats: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    name: String,
    rows: usize,
    cols: usize,
}

impl Checkpoint {
    pub fn new(network: NetworkParams, decorr: DecorrLayer, head: HamlHead) -> Result<Self> {
        if decorr.input_dim() != network.output_dim() {
            return Err(Error::ShapeMismatch {
                what: "decorrelation input width",
                found: decorr.input_dim(),
                expected: network.output_dim(),
            });
        }
        if head.dim() != decorr.output_dim() {
            return Err(Error::ShapeMismatch {
                what: "class-weight height",
                found: head.dim(),
                expected: decorr.output_dim(),
            });
        }
        Ok(Self { network, decorr, head })
    }

    /// Representation width `n`.
    pub fn n(&self) -> usize {
        self.network.output_dim()
    }

    /// Decorrelation width `q`.
    pub fn q(&self) -> usize {
        self.decorr.output_dim()
    }

    fn named(&self) -> Vec<(String, Matrix)> {
        let mut out = Vec::new();
        for (i, (w, b)) in self.network.weights().iter().zip(self.network.biases()).enumerate() {
            out.push((format!("weight{i}"), w.clone()));
            out.push((format!("bias{i}"), b.clone()));
        }
        let eig = self.decorr.eigenvalues().to_vec();
        out.push(("projection".into(), self.decorr.projection().clone()));
        out.push(("eigenvalues".into(), Matrix::from_vec(1, eig.len(), eig).expect("eigenvalue row")));
        out.push(("class_weights".into(), self.head.class_weights().clone()));
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let named = self.named();
        let header = Header {
            format: MAGIC.into(),
            layer_sizes: self.network.layer_sizes().to_vec(),
            n: self.n(),
            q: self.q(),
            classes: self.head.classes(),
            haml: self.head.params,
            matrices: named
                .iter()
                .map(|(name, m)| Entry {
                    name: name.clone(),
                    rows: m.rows(),
                    cols: m.cols(),
                })
                .collect(),
            floats: named.iter().map(|(_, m)| m.data().len()).sum(),
        };
        let mut bytes = serde_json::to_vec(&header).expect("header serialises");
        bytes.push(b'\n');
        for (_, m) in &named {
            for v in m.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        bytes
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Malformed {
            path: path.to_path_buf(),
            reason,
        };
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("no header line".into()))?;
        let header: Header =
            serde_json::from_slice(&bytes[..split]).map_err(|e| bad(format!("header: {e}")))?;
        if header.format != MAGIC {
            return Err(bad(format!("unknown format tag {:?}", header.format)));
        }
        let body = &bytes[split + 1..];
        let declared: usize = header.matrices.iter().map(|e| e.rows * e.cols).sum();
        if declared != header.floats || body.len() != header.floats * 8 {
            return Err(bad(format!(
                "expected {} values, found {} bytes of payload",
                header.floats,
                body.len()
            )));
        }

        let mut values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut take = |e: &Entry| -> Result<Matrix> {
            let data: Vec<f64> = values.by_ref().take(e.rows * e.cols).collect();
            Matrix::from_vec(e.rows, e.cols, data)
        };
        let layers = header.layer_sizes.len().saturating_sub(1);
        if header.matrices.len() != 2 * layers + 3 {
            return Err(bad(format!(
                "{} matrices listed for {layers} layers",
                header.matrices.len()
            )));
        }
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for pair in header.matrices[..2 * layers].chunks(2) {
            weights.push(take(&pair[0])?);
            biases.push(take(&pair[1])?);
        }
        let projection = take(&header.matrices[2 * layers])?;
        let eigenvalues = take(&header.matrices[2 * layers + 1])?.into_vec();
        let class_weights = take(&header.matrices[2 * layers + 2])?;

        let network = NetworkParams::from_parts(weights, biases)?;
        if network.layer_sizes() != header.layer_sizes.as_slice() {
            return Err(bad("layer sizes disagree with the stored weights".into()));
        }
        let decorr = DecorrLayer::from_parts(projection, eigenvalues)?;
        if decorr.output_dim() != header.q || network.output_dim() != header.n {
            return Err(bad("n or q disagree with the stored matrices".into()));
        }
        let head = HamlHead::new(class_weights, header.haml)?;
        Checkpoint::new(network, decorr, head)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Fails unless the stored widths match what the caller expects.
    pub fn expect_dims(&self, input_dim: Option<usize>, n: Option<usize>, q: Option<usize>) -> Result<()> {
        let checks = [
            ("input width", self.network.input_dim(), input_dim),
            ("representation width n", self.n(), n),
            ("decorrelation width q", self.q(), q),
        ];
        for (what, found, expected) in checks {
            if let Some(expected) = expected {
                if found != expected {
                    return Err(Error::ShapeMismatch { what, found, expected });
                }
            }
        }
        Ok(())
    }
}
