//! In-memory pipeline stages. The commands wrap these with artifact I/O.

use serde::{Deserialize, Serialize};

use super::{BinPairs, RunConfig};
use crate::confnet::{train, ConfidenceModel, FeatureTable, TrainReport};
use crate::embedsim::{generate_world, ImageRecord, World};
use crate::fusion::{generate_sets, set_pairs, set_verification, FaceSet, SyntheticSet, Weighting};
use crate::metrics::{
    correlation_bins, error_vs_reject, model_confidences, sample_protocol_pairs, score_protocol,
    CorrelationBins, ErrorRejectCurve, ProtocolConfig, ProtocolPair, RocSummary, ScoredPair,
};
use crate::pairgen::{fit_recognizer, score_all_folds, split_folds, FoldRecords, FoldSplit, PairSample, Recognizer};
use crate::stats::spearman;
use crate::Result;

/// Identities below this id are development identities; the rest are held out.
pub fn first_holdout_identity(config: &RunConfig) -> u64 {
    (config.world.num_identities - config.protocol.holdout_identities) as u64
}

pub fn development_records(config: &RunConfig, records: &[ImageRecord]) -> Vec<ImageRecord> {
    let cut = first_holdout_identity(config);
    records.iter().filter(|r| r.identity_id < cut).cloned().collect()
}

pub fn holdout_records(config: &RunConfig, records: &[ImageRecord]) -> Vec<ImageRecord> {
    let cut = first_holdout_identity(config);
    records.iter().filter(|r| r.identity_id >= cut).cloned().collect()
}

pub fn simulate(config: &RunConfig) -> Result<World> {
    config.validate()?;
    generate_world(&config.world_config())
}

/// Two-fold cross scoring of the development identities.
pub fn pairscore(config: &RunConfig, records: &[ImageRecord]) -> Result<(FoldSplit, Vec<PairSample>)> {
    let dev = development_records(config, records);
    let ids: Vec<u64> = (0..first_holdout_identity(config)).collect();
    let split = split_folds(&ids, config.resolved().folds)?;
    let (pairs, _) = score_all_folds(&dev, &split, config.world.identity_dim, &config.pair_config())?;
    Ok((split, pairs))
}

pub fn train_model(
    config: &RunConfig,
    records: &[ImageRecord],
    pairs: &[PairSample],
) -> Result<(ConfidenceModel, TrainReport)> {
    let dev = development_records(config, records);
    let features = FeatureTable::from_records(&dev, config.model.degradation_features);
    let model = ConfidenceModel::xavier(&config.layer_sizes(), config.resolved().init)?;
    train(model, pairs, &features, &config.train_config())
}

/// The recognizer used for every evaluation: fitted on all development
/// records.
pub fn evaluation_recognizer(config: &RunConfig, records: &[ImageRecord]) -> Result<Recognizer> {
    let dev = development_records(config, records);
    let fold = FoldRecords {
        fold: 0,
        records: dev.iter().collect(),
    };
    fit_recognizer(&fold, config.world.identity_dim)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateEval {
    pub learned: ErrorRejectCurve,
    /// Same pairs, with latent quality as the confidence.
    pub oracle: ErrorRejectCurve,
    pub bins: CorrelationBins,
    pub oracle_bins: CorrelationBins,
    /// Spearman correlation of the model output with latent quality over
    /// held-out records.
    pub spearman_quality: f64,
    pub n_records: usize,
}

/// Everything the covariate protocol computes, with the scored pairs kept
/// for export.
pub struct CovariateRun {
    pub eval: CovariateEval,
    pub holdout: Vec<ImageRecord>,
    pub confidences: Vec<f64>,
    pub pairs: Vec<ProtocolPair>,
    pub scored: Vec<ScoredPair>,
}

pub fn eval_covariate(
    config: &RunConfig,
    records: &[ImageRecord],
    recognizer: &Recognizer,
    model: &ConfidenceModel,
) -> Result<CovariateRun> {
    let holdout = holdout_records(config, records);
    let pairs = sample_protocol_pairs(&holdout, &config.protocol_config())?;
    let confidences = model_confidences(model, &holdout, config.model.degradation_features)?;
    let quality: Vec<f64> = holdout.iter().map(|r| r.quality).collect();

    let scored = score_protocol(&holdout, &pairs, recognizer, &confidences)?;
    let oracle_scored = score_protocol(&holdout, &pairs, recognizer, &quality)?;

    let grid = config.eval.r_grid();
    let learned = error_vs_reject(&scored, &grid, &config.eval.far_targets)?;
    let oracle = error_vs_reject(&oracle_scored, &grid, &config.eval.far_targets)?;

    let (mated, oracle_mated) = match config.eval.bin_pairs {
        BinPairs::Protocol => (
            scored.iter().filter(|p| p.is_genuine()).cloned().collect(),
            oracle_scored.iter().filter(|p| p.is_genuine()).cloned().collect(),
        ),
        BinPairs::All => {
            let all = ProtocolConfig {
                genuine_pairs: usize::MAX,
                impostor_pairs: 0,
                seed: 0,
            };
            let mated_pairs = sample_protocol_pairs(&holdout, &all)?;
            (
                score_protocol(&holdout, &mated_pairs, recognizer, &confidences)?,
                score_protocol(&holdout, &mated_pairs, recognizer, &quality)?,
            )
        }
    };
    let bins = correlation_bins(&mated, config.eval.bins, config.eval.bin_range)?;
    let oracle_bins = correlation_bins(&oracle_mated, config.eval.bins, config.eval.bin_range)?;

    Ok(CovariateRun {
        eval: CovariateEval {
            learned,
            oracle,
            bins,
            oracle_bins,
            spearman_quality: spearman(&confidences, &quality),
            n_records: holdout.len(),
        },
        holdout,
        confidences,
        pairs,
        scored,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionEval {
    pub uniform: RocSummary,
    pub learned: RocSummary,
    /// Weights from the projection-norm oracle.
    pub oracle: RocSummary,
    pub n_sets: usize,
    pub n_members: usize,
}

pub struct FusionRun {
    pub eval: FusionEval,
    pub sets: Vec<SyntheticSet>,
    /// Sets carrying model confidences.
    pub learned_sets: Vec<FaceSet>,
}

/// Set members get image ids after every world record.
pub fn eval_fusion(
    config: &RunConfig,
    world: &World,
    recognizer: &Recognizer,
    model: &ConfidenceModel,
) -> Result<FusionRun> {
    let set_config = config.set_config();
    let ids: Vec<u64> = (first_holdout_identity(config)..config.world.num_identities as u64).collect();
    let first_image = world.records.iter().map(|r| r.image_id + 1).max().unwrap_or(0);
    let sets = generate_sets(world, &ids, &set_config, first_image)?;
    let pairs = set_pairs(&sets, &set_config)?;

    let mut learned_sets = Vec::with_capacity(sets.len());
    let mut oracle_sets = Vec::with_capacity(sets.len());
    for s in &sets {
        let learned = model_confidences(model, &s.records, config.model.degradation_features)?;
        let oracle = s
            .records
            .iter()
            .map(|r| world.oracle(&r.embedding))
            .collect::<Result<Vec<_>>>()?;
        learned_sets.push(FaceSet::from_records(s.set_id, &s.records, learned)?);
        oracle_sets.push(FaceSet::from_records(s.set_id, &s.records, oracle)?);
    }

    let far = &config.eval.far_targets;
    let eval = FusionEval {
        uniform: set_verification(&learned_sets, &pairs, recognizer, Weighting::Uniform, far)?,
        learned: set_verification(&learned_sets, &pairs, recognizer, Weighting::Confidence, far)?,
        oracle: set_verification(&oracle_sets, &pairs, recognizer, Weighting::Confidence, far)?,
        n_sets: sets.len(),
        n_members: sets.iter().map(|s| s.records.len()).sum(),
    };
    Ok(FusionRun {
        eval,
        sets,
        learned_sets,
    })
}
