use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ScoredPair;
use crate::confnet::{ConfidenceModel, FeatureTable};
use crate::embedsim::ImageRecord;
use crate::linalg::cosine_similarity;
use crate::pairgen::Recognizer;
use crate::rng::stream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Capped at the number of available same-identity pairs.
    pub genuine_pairs: usize,
    /// Capped at the number of available cross-identity pairs.
    pub impostor_pairs: usize,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            genuine_pairs: 10_000,
            impostor_pairs: 100_000,
            seed: 0,
        }
    }
}

/// Positions into a record slice, `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProtocolPair {
    pub a: usize,
    pub b: usize,
    pub genuine: bool,
}

fn ordered(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

/// Draws distinct genuine and impostor pairs uniformly without replacement,
/// or enumerates all of them when fewer exist than requested. The result is
/// sorted by `(a, b)`.
pub fn sample_protocol_pairs(records: &[ImageRecord], config: &ProtocolConfig) -> Result<Vec<ProtocolPair>> {
    let labels: Vec<u64> = records.iter().map(|r| r.identity_id).collect();
    sample_labelled_pairs(&labels, config)
}

/// [`sample_protocol_pairs`] over bare identity labels; a pair is genuine
/// when both labels agree.
pub fn sample_labelled_pairs(labels: &[u64], config: &ProtocolConfig) -> Result<Vec<ProtocolPair>> {
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate() {
        groups.entry(label).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "impostor sampling needs at least 2 identities, found {}",
            groups.len()
        )));
    }
    let group_of = labels;
    let n = labels.len();
    let total_pairs = n * (n - 1) / 2;
    let group_list: Vec<&Vec<usize>> = groups.values().collect();
    let genuine_total: usize = group_list.iter().map(|g| g.len() * (g.len() - 1) / 2).sum();
    let impostor_total = total_pairs - genuine_total;

    let mut out = Vec::new();

    if config.genuine_pairs >= genuine_total {
        for g in &group_list {
            for (x, &i) in g.iter().enumerate() {
                for &j in &g[x + 1..] {
                    out.push(ProtocolPair { a: i, b: j, genuine: true });
                }
            }
        }
    } else {
        // pair index → (group, pair within group) via cumulative offsets
        let mut offsets = Vec::with_capacity(group_list.len());
        let mut acc = 0usize;
        for g in &group_list {
            offsets.push(acc);
            acc += g.len() * (g.len() - 1) / 2;
        }
        let mut rng = stream(config.seed, "protocol-genuine");
        let mut seen = HashSet::with_capacity(config.genuine_pairs);
        while seen.len() < config.genuine_pairs {
            let t = rng.random_range(0..genuine_total);
            let gi = offsets.partition_point(|&o| o <= t) - 1;
            let g = group_list[gi];
            let x = rng.random_range(0..g.len());
            let mut y = rng.random_range(0..g.len() - 1);
            if y >= x {
                y += 1;
            }
            // t picks the group with the right weight; (x, y) is uniform within it
            seen.insert(ordered(g[x], g[y]));
        }
        out.extend(seen.into_iter().map(|(a, b)| ProtocolPair { a, b, genuine: true }));
    }

    if config.impostor_pairs >= impostor_total {
        for i in 0..n {
            for j in i + 1..n {
                if group_of[i] != group_of[j] {
                    out.push(ProtocolPair { a: i, b: j, genuine: false });
                }
            }
        }
    } else {
        let mut rng = stream(config.seed, "protocol-impostor");
        let mut seen = HashSet::with_capacity(config.impostor_pairs);
        while seen.len() < config.impostor_pairs {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if group_of[i] != group_of[j] {
                seen.insert(ordered(i, j));
            }
        }
        out.extend(seen.into_iter().map(|(a, b)| ProtocolPair { a, b, genuine: false }));
    }

    out.sort_unstable();
    Ok(out)
}

/// Scores sampled pairs: similarity is the cosine of recognizer projections,
/// pair confidence the minimum of the two per-record confidences.
pub fn score_protocol(
    records: &[ImageRecord],
    pairs: &[ProtocolPair],
    recognizer: &Recognizer,
    confidences: &[f64],
) -> Result<Vec<ScoredPair>> {
    if confidences.len() != records.len() {
        return Err(Error::DimensionMismatch {
            expected: records.len(),
            got: confidences.len(),
        });
    }
    let projected = records
        .par_iter()
        .map(|r| recognizer.project(&r.embedding))
        .collect::<Result<Vec<_>>>()?;
    pairs
        .par_iter()
        .map(|p| {
            let (ra, rb) = (&records[p.a], &records[p.b]);
            let similarity = cosine_similarity(&projected[p.a], &projected[p.b])?;
            Ok(ScoredPair::new(
                (ra.image_id, confidences[p.a]),
                (rb.image_id, confidences[p.b]),
                similarity,
                p.genuine,
            ))
        })
        .collect()
}

/// Per-record confidences from a trained model.
pub fn model_confidences(model: &ConfidenceModel, records: &[ImageRecord], with_degradations: bool) -> Result<Vec<f64>> {
    records
        .par_iter()
        .map(|r| model.forward(&FeatureTable::input_for(r, with_degradations)))
        .collect()
}

/// Samples the still-image protocol over `records` and scores it with the
/// model's confidences.
pub fn build_covariate_protocol(
    records: &[ImageRecord],
    recognizer: &Recognizer,
    model: &ConfidenceModel,
    with_degradations: bool,
    config: &ProtocolConfig,
) -> Result<Vec<ScoredPair>> {
    let pairs = sample_protocol_pairs(records, config)?;
    let confidences = model_confidences(model, records, with_degradations)?;
    score_protocol(records, &pairs, recognizer, &confidences)
}
