use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{float_repr, roc_summary, RocSummary};
use crate::{Error, Result};

/// One verification pair with its confidence. The pair confidence is the
/// minimum of the two image confidences and can only be set that way.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    image_a: u64,
    image_b: u64,
    similarity: f64,
    pair_confidence: f64,
    is_genuine: bool,
}

impl ScoredPair {
    /// Image ids are stored in ascending order.
    pub fn new(
        (image_a, confidence_a): (u64, f64),
        (image_b, confidence_b): (u64, f64),
        similarity: f64,
        is_genuine: bool,
    ) -> Self {
        ScoredPair {
            image_a: image_a.min(image_b),
            image_b: image_a.max(image_b),
            similarity,
            pair_confidence: confidence_a.min(confidence_b),
            is_genuine,
        }
    }

    pub fn image_ids(&self) -> (u64, u64) {
        (self.image_a, self.image_b)
    }

    pub fn similarity(&self) -> f64 {
        self.similarity
    }

    pub fn pair_confidence(&self) -> f64 {
        self.pair_confidence
    }

    pub fn is_genuine(&self) -> bool {
        self.is_genuine
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRejectRow {
    #[serde(with = "float_repr")]
    pub r: f64,
    pub n_retained: usize,
    pub n_genuine: usize,
    pub n_impostor: usize,
    /// `None` when the retained set has no genuine or no impostor pairs.
    pub roc: Option<RocSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRejectCurve {
    pub far_targets: Vec<f64>,
    pub rows: Vec<ErrorRejectRow>,
}

impl ErrorRejectCurve {
    pub fn row(&self, r: f64) -> Option<&ErrorRejectRow> {
        self.rows.iter().find(|row| (row.r - r).abs() < 1e-12)
    }

    /// TAR at `(r, far_target)`, if that grid point was computed.
    pub fn tar(&self, r: f64, far_target: f64) -> Option<f64> {
        self.row(r)?.roc.as_ref()?.tar_at(far_target)
    }

    /// The TAR series for one FAR target along the rejection grid.
    pub fn tar_series(&self, far_target: f64) -> Vec<Option<f64>> {
        self.rows
            .iter()
            .map(|row| row.roc.as_ref().and_then(|roc| roc.tar_at(far_target)))
            .collect()
    }
}

/// `0.00, 0.01, …, 0.40`.
pub fn default_r_grid() -> Vec<f64> {
    (0..=40).map(|i| i as f64 / 100.0).collect()
}

/// `ceil((1 − r)·n)`, evaluated with a `1e-9` guard so that values like
/// `0.93·100` are not rounded up past the exact product.
pub fn retained_count(r: f64, n: usize) -> usize {
    let raw = ((1.0 - r) * n as f64 - 1e-9).ceil();
    (raw.max(0.0) as usize).min(n)
}

/// For each rejection fraction `r`, drops the `r` least confident pairs
/// (ties broken by ascending image ids) and recomputes the operating points
/// on what remains.
pub fn error_vs_reject(
    pairs: &[ScoredPair],
    r_grid: &[f64],
    far_targets: &[f64],
) -> Result<ErrorRejectCurve> {
    if pairs.is_empty() {
        return Err(Error::Empty("scored pairs"));
    }
    if r_grid.is_empty() {
        return Err(Error::Empty("rejection grid"));
    }
    if r_grid.iter().any(|r| !(0.0..1.0).contains(r)) {
        return Err(Error::InvalidInput("rejection fractions must lie in [0, 1)".into()));
    }
    if r_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("rejection grid must be strictly increasing".into()));
    }
    if pairs.iter().any(|p| !p.pair_confidence.is_finite()) {
        return Err(Error::InvalidInput("non-finite pair confidence".into()));
    }

    let mut ranked: Vec<&ScoredPair> = pairs.iter().collect();
    ranked.sort_by(|a, b| {
        b.pair_confidence
            .total_cmp(&a.pair_confidence)
            .then(a.image_a.cmp(&b.image_a))
            .then(a.image_b.cmp(&b.image_b))
    });

    let rows = r_grid
        .par_iter()
        .map(|&r| {
            let n_retained = retained_count(r, ranked.len());
            let kept = &ranked[..n_retained];
            let genuine: Vec<f64> = kept.iter().filter(|p| p.is_genuine).map(|p| p.similarity).collect();
            let impostor: Vec<f64> = kept.iter().filter(|p| !p.is_genuine).map(|p| p.similarity).collect();
            let roc = if genuine.is_empty() || impostor.is_empty() {
                None
            } else {
                Some(roc_summary(&genuine, &impostor, far_targets)?)
            };
            Ok(ErrorRejectRow {
                r,
                n_retained,
                n_genuine: genuine.len(),
                n_impostor: impostor.len(),
                roc,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ErrorRejectCurve {
        far_targets: far_targets.to_vec(),
        rows,
    })
}
