//! End-to-end orchestration: run configuration, in-memory stages and the
//! artifact-writing commands.

pub mod commands;
mod config;
mod stages;

pub use commands::{run_all, run_command, Command, RankedExport, RunManifest};
pub use config::{BinPairs, EvalConfig, ModelConfig, ProtocolSection, RankConfig, ResolvedSeeds, RunConfig};
pub use stages::{
    development_records, eval_covariate, eval_fusion, evaluation_recognizer, first_holdout_identity,
    holdout_records, pairscore, simulate, train_model, CovariateEval, CovariateRun, FusionEval, FusionRun,
};
