use serde::{Deserialize, Serialize};

use super::{float_repr, ScoredPair};
use crate::{Error, Result};

pub const DEFAULT_BINS: usize = 100;

/// Where bin edges come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BinRange {
    /// `[min confidence, max confidence]` of the input.
    #[default]
    Observed,
    Fixed { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    #[serde(with = "float_repr")]
    pub lo: f64,
    #[serde(with = "float_repr")]
    pub hi: f64,
    pub count: usize,
    /// `None` for empty bins.
    pub mean_similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationBins {
    #[serde(with = "float_repr")]
    pub lo: f64,
    #[serde(with = "float_repr")]
    pub hi: f64,
    pub bins: Vec<Bin>,
    pub total: usize,
    /// Every confidence was identical, so everything sits in the first bin.
    pub degenerate: bool,
}

impl CorrelationBins {
    pub fn occupied(&self) -> impl Iterator<Item = &Bin> {
        self.bins.iter().filter(|b| b.count > 0)
    }

    /// Number of places where the mean similarity drops from one occupied
    /// bin to the next.
    pub fn monotone_violations(&self) -> usize {
        let means: Vec<f64> = self.occupied().filter_map(|b| b.mean_similarity).collect();
        means.windows(2).filter(|w| w[1] < w[0]).count()
    }
}

/// Uniform histogram of mated-pair confidences with the mean similarity of
/// each bin.
pub fn correlation_bins(mated: &[ScoredPair], n_bins: usize, range: BinRange) -> Result<CorrelationBins> {
    if mated.is_empty() {
        return Err(Error::Empty("mated pairs"));
    }
    if n_bins == 0 {
        return Err(Error::InvalidInput("bin count must be positive".into()));
    }
    if mated.iter().any(|p| !p.is_genuine()) {
        return Err(Error::InvalidInput("correlation bins take mated pairs only".into()));
    }
    if mated
        .iter()
        .any(|p| !p.pair_confidence().is_finite() || !p.similarity().is_finite())
    {
        return Err(Error::InvalidInput("non-finite confidence or similarity".into()));
    }

    let observed_lo = mated.iter().map(|p| p.pair_confidence()).fold(f64::INFINITY, f64::min);
    let observed_hi = mated.iter().map(|p| p.pair_confidence()).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = match range {
        BinRange::Observed => (observed_lo, observed_hi),
        BinRange::Fixed { lo, hi } => {
            if !(lo < hi) {
                return Err(Error::InvalidInput(format!("bin range [{lo}, {hi}] is empty")));
            }
            if observed_lo < lo || observed_hi > hi {
                return Err(Error::InvalidInput(format!(
                    "confidences span [{observed_lo}, {observed_hi}], outside [{lo}, {hi}]"
                )));
            }
            (lo, hi)
        }
    };
    let degenerate = observed_lo == observed_hi;
    let width = (hi - lo) / n_bins as f64;

    let mut counts = vec![0usize; n_bins];
    let mut sums = vec![0.0f64; n_bins];
    for p in mated {
        let idx = if width > 0.0 {
            (((p.pair_confidence() - lo) / width).floor() as usize).min(n_bins - 1)
        } else {
            0
        };
        counts[idx] += 1;
        sums[idx] += p.similarity();
    }

    let bins = (0..n_bins)
        .map(|i| Bin {
            lo: lo + width * i as f64,
            hi: if i + 1 == n_bins { hi } else { lo + width * (i + 1) as f64 },
            count: counts[i],
            mean_similarity: (counts[i] > 0).then(|| sums[i] / counts[i] as f64),
        })
        .collect();

    Ok(CorrelationBins {
        lo,
        hi,
        bins,
        total: mated.len(),
        degenerate,
    })
}
