use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::embedsim::ImageRecord;
use crate::rng::stream;
use crate::{Error, Result};

/// Balanced partition of identity ids into fold 0 (`fold_a`) and fold 1
/// (`fold_b`), each sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_a: Vec<u64>,
    pub fold_b: Vec<u64>,
}

/// Seeded random balanced split. `fold_a` gets `⌊n/2⌋` identities.
pub fn split_folds(identities: &[u64], seed: u64) -> Result<FoldSplit> {
    let mut ids = identities.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "fold split needs at least 2 identities, got {}",
            ids.len()
        )));
    }
    ids.shuffle(&mut stream(seed, "folds"));
    let half = ids.len() / 2;
    let mut fold_a = ids[..half].to_vec();
    let mut fold_b = ids[half..].to_vec();
    fold_a.sort_unstable();
    fold_b.sort_unstable();
    Ok(FoldSplit { fold_a, fold_b })
}

impl FoldSplit {
    pub fn fold_of(&self, identity: u64) -> Option<u8> {
        if self.fold_a.binary_search(&identity).is_ok() {
            Some(0)
        } else if self.fold_b.binary_search(&identity).is_ok() {
            Some(1)
        } else {
            None
        }
    }

    pub fn ids(&self, fold: u8) -> &[u64] {
        if fold == 0 {
            &self.fold_a
        } else {
            &self.fold_b
        }
    }

    /// Records belonging to identities of `fold`, in input order.
    pub fn records<'a>(&self, fold: u8, records: &'a [ImageRecord]) -> FoldRecords<'a> {
        FoldRecords {
            fold,
            records: records
                .iter()
                .filter(|r| self.fold_of(r.identity_id) == Some(fold))
                .collect(),
        }
    }
}

/// The records of a single fold, tagged with the fold id.
#[derive(Debug, Clone)]
pub struct FoldRecords<'a> {
    pub fold: u8,
    pub records: Vec<&'a ImageRecord>,
}
