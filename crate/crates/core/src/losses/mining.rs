use crate::error::{Error, Result};
use crate::synth::Domain;
use crate::tensor::{dot, Matrix};

/// Batch indices of one mined quadruplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuadrupletTuple {
    pub anchor_nir: usize,
    pub anchor_vis: usize,
    /// Other-identity NIR sample closest to the VIS anchor.
    pub neg_nir: usize,
    /// Other-identity VIS sample closest to the NIR anchor.
    pub neg_vis: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mining {
    pub tuples: Vec<QuadrupletTuple>,
    /// Anchor pairs dropped because one domain had no other-identity sample.
    pub skipped: usize,
}

/// Hardest-negative quadruplet selection within a batch.
///
/// Every same-identity (NIR, VIS) pair becomes an anchor pair. Its NIR
/// negative is the other-identity NIR row with the highest cosine to the VIS
/// anchor, and its VIS negative the other-identity VIS row with the highest
/// cosine to the NIR anchor. Ties go to the lower batch index.
pub fn mine_quadruplets(z: &Matrix, identities: &[usize], domains: &[Domain]) -> Result<Mining> {
    if identities.len() != z.rows() || domains.len() != z.rows() {
        return Err(Error::Contract(format!(
            "mining: {} rows, {} identities, {} domains",
            z.rows(),
            identities.len(),
            domains.len()
        )));
    }
    let unit = z.normalize_rows("mine_quadruplets")?;

    let nir: Vec<usize> = (0..z.rows()).filter(|&i| domains[i] == Domain::Nir).collect();
    let vis: Vec<usize> = (0..z.rows()).filter(|&i| domains[i] == Domain::Vis).collect();

    let hardest = |anchor: usize, pool: &[usize]| -> Option<usize> {
        let id = identities[anchor];
        let mut best: Option<(usize, f64)> = None;
        for &c in pool {
            if identities[c] == id {
                continue;
            }
            let s = dot(unit.row(anchor), unit.row(c));
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((c, s));
            }
        }
        best.map(|(i, _)| i)
    };

    let mut out = Mining::default();
    for &n in &nir {
        for &v in &vis {
            if identities[n] != identities[v] {
                continue;
            }
            match (hardest(v, &nir), hardest(n, &vis)) {
                (Some(neg_nir), Some(neg_vis)) => out.tuples.push(QuadrupletTuple {
                    anchor_nir: n,
                    anchor_vis: v,
                    neg_nir,
                    neg_vis,
                }),
                _ => out.skipped += 1,
            }
        }
    }
    Ok(out)
}
