//! Two-fold generation of mated-pair verification scores.
//!
//! Identities are split into two halves. A recognizer (a rank-`k` subspace
//! estimate) is fitted on the embeddings of one half and used to score every
//! mated pair of the other half; then the roles are swapped, so each pair is
//! scored by a recognizer that never saw its identity.

mod folds;
mod io;
mod recognizer;
mod scoring;

pub use folds::{split_folds, FoldRecords, FoldSplit};
pub use io::{read_pairs, write_pairs};
pub use recognizer::{fit_recognizer, Recognizer, MAX_ITERATIONS, SUBSPACE_TOLERANCE};
pub use scoring::{score_all_folds, score_mated_pairs, PairConfig, PairSample};

pub use crate::linalg::cosine_similarity;
