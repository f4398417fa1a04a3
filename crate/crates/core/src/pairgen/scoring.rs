use std::collections::BTreeMap;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_recognizer, FoldRecords, FoldSplit, Recognizer};
use crate::embedsim::ImageRecord;
use crate::linalg::cosine_similarity;
use crate::rng::indexed_stream;
use crate::{Error, Result};

/// A scored mated pair; `image_a < image_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub image_a: u64,
    pub image_b: u64,
    pub identity: u64,
    /// Verification score `y`.
    pub y: f64,
    /// Fold of the identity (the recognizer came from the other one).
    pub fold: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairConfig {
    /// Per-identity cap on scored pairs; `None` scores all `n(n−1)/2`.
    pub max_pairs_per_identity: Option<usize>,
    /// Clamp `y` into `[0, 1]`.
    pub clamp: bool,
    /// Seed for choosing pairs when the cap bites.
    pub seed: u64,
}

impl Default for PairConfig {
    fn default() -> Self {
        PairConfig {
            max_pairs_per_identity: Some(500),
            clamp: true,
            seed: 0,
        }
    }
}

fn identity_pairs(
    recognizer: &Recognizer,
    identity: u64,
    members: &[&ImageRecord],
    fold: u8,
    config: &PairConfig,
) -> Result<Vec<PairSample>> {
    let mut members = members.to_vec();
    members.sort_by_key(|r| r.image_id);
    let projected = members
        .iter()
        .map(|r| recognizer.project(&r.embedding))
        .collect::<Result<Vec<_>>>()?;

    let n = members.len();
    let mut index_pairs: Vec<(usize, usize)> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            index_pairs.push((i, j));
        }
    }
    if let Some(cap) = config.max_pairs_per_identity {
        if index_pairs.len() > cap {
            let mut rng = indexed_stream(config.seed, "pair-budget", identity);
            let mut keep: Vec<usize> = sample(&mut rng, index_pairs.len(), cap).into_vec();
            keep.sort_unstable();
            index_pairs = keep.into_iter().map(|k| index_pairs[k]).collect();
        }
    }

    index_pairs
        .into_iter()
        .map(|(i, j)| {
            let cos = cosine_similarity(&projected[i], &projected[j])?;
            Ok(PairSample {
                image_a: members[i].image_id,
                image_b: members[j].image_id,
                identity,
                y: if config.clamp { cos.clamp(0.0, 1.0) } else { cos },
                fold,
            })
        })
        .collect()
}

/// Scores the mated pairs of `fold` with a recognizer fitted on the other
/// fold. Output is sorted by identity, then image ids.
pub fn score_mated_pairs(
    recognizer: &Recognizer,
    fold: &FoldRecords<'_>,
    config: &PairConfig,
) -> Result<Vec<PairSample>> {
    if recognizer.fold == fold.fold {
        return Err(Error::FoldMismatch {
            fitted: recognizer.fold,
            scored: fold.fold,
        });
    }
    let mut by_identity: BTreeMap<u64, Vec<&ImageRecord>> = BTreeMap::new();
    for r in &fold.records {
        by_identity.entry(r.identity_id).or_default().push(r);
    }
    let groups: Vec<(u64, Vec<&ImageRecord>)> = by_identity.into_iter().collect();
    let scored = groups
        .par_iter()
        .map(|(identity, members)| identity_pairs(recognizer, *identity, members, fold.fold, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(scored.into_iter().flatten().collect())
}

/// Runs both directions of the fold protocol. Returns the merged pairs in
/// canonical order and the recognizers fitted on fold 0 and fold 1.
pub fn score_all_folds(
    records: &[ImageRecord],
    split: &FoldSplit,
    rank: usize,
    config: &PairConfig,
) -> Result<(Vec<PairSample>, [Recognizer; 2])> {
    let fold0 = split.records(0, records);
    let fold1 = split.records(1, records);
    let rec0 = fit_recognizer(&fold0, rank)?;
    let rec1 = fit_recognizer(&fold1, rank)?;
    let mut pairs = score_mated_pairs(&rec0, &fold1, config)?;
    pairs.extend(score_mated_pairs(&rec1, &fold0, config)?);
    pairs.sort_by_key(|p| (p.identity, p.image_a, p.image_b));
    Ok((pairs, [rec0, rec1]))
}
