//! Flat `section.key = value` run configuration.
//!
//! Lines starting with `#` or `;` are comments. A `[section]` header may be
//! used to shorten the keys that follow it. Unknown keys are errors.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::confnet::TrainConfig;
use crate::embedsim::{DegradationMode, QualityDistribution, WorldConfig};
use crate::fusion::SetConfig;
use crate::metrics::{BinRange, ProtocolConfig, DEFAULT_BINS, DEFAULT_FAR_TARGETS};
use crate::pairgen::PairConfig;
use crate::rng::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    /// Append one 0/1 input per degradation kind to the embedding.
    pub degradation_features: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: vec![128, 128],
            degradation_features: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSection {
    /// The last `holdout_identities` identities never reach pair scoring or
    /// training; every evaluation uses them.
    pub holdout_identities: usize,
    pub genuine_pairs: usize,
    pub impostor_pairs: usize,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            holdout_identities: 400,
            genuine_pairs: 10_000,
            impostor_pairs: 100_000,
        }
    }
}

/// Which mated pairs feed the confidence/similarity bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinPairs {
    /// Every held-out same-identity pair.
    All,
    /// The genuine pairs sampled for the rejection protocol.
    Protocol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub r_step: f64,
    pub r_max: f64,
    pub far_targets: Vec<f64>,
    pub bins: usize,
    pub bin_range: BinRange,
    pub bin_pairs: BinPairs,
    /// Rejection rates shown in the report tables.
    pub report_r: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            r_step: 0.01,
            r_max: 0.4,
            far_targets: DEFAULT_FAR_TARGETS.to_vec(),
            bins: DEFAULT_BINS,
            bin_range: BinRange::Observed,
            bin_pairs: BinPairs::All,
            report_r: vec![0.0, 0.1, 0.2, 0.3, 0.4],
        }
    }
}

impl EvalConfig {
    /// `0, step, 2·step, …` up to `r_max`, each rounded to 12 decimals so
    /// grid values print cleanly.
    pub fn r_grid(&self) -> Vec<f64> {
        let n = (self.r_max / self.r_step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| ((i as f64 * self.r_step) * 1e12).round() / 1e12)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankConfig {
    /// Rank-fraction boundaries between the low/mid and mid/high buckets.
    pub low_boundary: f64,
    pub high_boundary: f64,
    pub samples_per_bucket: usize,
}

impl Default for RankConfig {
    fn default() -> Self {
        RankConfig {
            low_boundary: 1.0 / 3.0,
            high_boundary: 2.0 / 3.0,
            samples_per_bucket: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Every stage seed is derived from this one.
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub world: WorldConfig,
    pub pairs: PairConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub protocol: ProtocolSection,
    pub eval: EvalConfig,
    pub sets: SetConfig,
    pub rank: RankConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output: None,
            world: WorldConfig::default(),
            pairs: PairConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig {
                initial_lr: 1.0,
                batches_per_epoch: Some(250),
                ..TrainConfig::default()
            },
            protocol: ProtocolSection::default(),
            eval: EvalConfig::default(),
            sets: SetConfig::default(),
            rank: RankConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

fn mixture_field(quality: &mut QualityDistribution, key: &str, value: f64) -> Result<()> {
    if let QualityDistribution::Fixed(_) = quality {
        *quality = QualityDistribution::default();
    }
    if let QualityDistribution::Mixture {
        high_weight,
        high_alpha,
        high_beta,
        low_alpha,
        low_beta,
    } = quality
    {
        let slot = match key {
            "world.quality_high_weight" => high_weight,
            "world.quality_high_alpha" => high_alpha,
            "world.quality_high_beta" => high_beta,
            "world.quality_low_alpha" => low_alpha,
            _ => low_beta,
        };
        *slot = value;
    }
    Ok(())
}

impl RunConfig {
    pub fn from_ini(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        config.apply_ini(text)?;
        Ok(config)
    }

    pub fn apply_ini(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            self.set(&full, value.trim())?;
        }
        Ok(())
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let (key, value) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override {:?} is not key=value", o.as_ref())))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let w = &mut self.world;
        match key {
            "seed" => self.seed = parse(key, value)?,
            "output" => self.output = (!value.is_empty()).then(|| PathBuf::from(value)),

            "world.ambient_dim" => w.ambient_dim = parse(key, value)?,
            "world.identity_dim" => w.identity_dim = parse(key, value)?,
            "world.num_identities" => w.num_identities = parse(key, value)?,
            "world.images_per_identity" => w.images_per_identity = parse(key, value)?,
            "world.quality" => {
                w.quality = match value {
                    "mixture" => QualityDistribution::default(),
                    other => match other.strip_prefix("fixed:") {
                        Some(q) => QualityDistribution::Fixed(parse(key, q)?),
                        None => {
                            return Err(Error::InvalidConfig(format!(
                                "{key}: expected `mixture` or `fixed:<q>`, got {value:?}"
                            )))
                        }
                    },
                }
            }
            "world.quality_high_weight"
            | "world.quality_high_alpha"
            | "world.quality_high_beta"
            | "world.quality_low_alpha"
            | "world.quality_low_beta" => mixture_field(&mut w.quality, key, parse(key, value)?)?,
            "world.degradation_probability" => w.degradation_probability = parse(key, value)?,
            "world.noise_scale" => w.noise_scale = parse(key, value)?,
            "world.decrement_iso_noise" => w.decrements.iso_noise = parse(key, value)?,
            "world.decrement_coord_mask" => w.decrements.coord_mask = parse(key, value)?,
            "world.decrement_heavy_tail" => w.decrements.heavy_tail = parse(key, value)?,
            "world.mask_fraction" => w.mask_fraction = parse(key, value)?,
            "world.degradation_mode" => {
                w.degradation_mode = match value {
                    "augment" => DegradationMode::Augment,
                    "replace" => DegradationMode::Replace,
                    _ => {
                        return Err(Error::InvalidConfig(format!(
                            "{key}: expected augment or replace, got {value:?}"
                        )))
                    }
                }
            }

            "pairs.max_pairs_per_identity" => {
                self.pairs.max_pairs_per_identity = match value {
                    "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "pairs.clamp" => self.pairs.clamp = parse_bool(key, value)?,

            "model.hidden" => self.model.hidden = parse_list(key, value)?,
            "model.degradation_features" => self.model.degradation_features = parse_bool(key, value)?,

            "train.batch_size" => self.train.batch_size = parse(key, value)?,
            "train.initial_lr" => self.train.initial_lr = parse(key, value)?,
            "train.decay_factor" => self.train.decay_factor = parse(key, value)?,
            "train.max_decays" => self.train.max_decays = parse(key, value)?,
            "train.patience" => self.train.patience = parse(key, value)?,
            "train.rel_tol" => self.train.rel_tol = parse(key, value)?,
            "train.max_epochs" => self.train.max_epochs = parse(key, value)?,
            "train.batches_per_epoch" => {
                self.train.batches_per_epoch = match value {
                    "all" => None,
                    v => Some(parse(key, v)?),
                }
            }

            "protocol.holdout_identities" => self.protocol.holdout_identities = parse(key, value)?,
            "protocol.genuine_pairs" => self.protocol.genuine_pairs = parse(key, value)?,
            "protocol.impostor_pairs" => self.protocol.impostor_pairs = parse(key, value)?,

            "eval.r_step" => self.eval.r_step = parse(key, value)?,
            "eval.r_max" => self.eval.r_max = parse(key, value)?,
            "eval.far_targets" => self.eval.far_targets = parse_list(key, value)?,
            "eval.bins" => self.eval.bins = parse(key, value)?,
            "eval.bin_range" => {
                self.eval.bin_range = match value {
                    "observed" => BinRange::Observed,
                    "unit" => BinRange::Fixed { lo: 0.0, hi: 1.0 },
                    _ => {
                        return Err(Error::InvalidConfig(format!(
                            "{key}: expected observed or unit, got {value:?}"
                        )))
                    }
                }
            }
            "eval.bin_pairs" => {
                self.eval.bin_pairs = match value {
                    "all" => BinPairs::All,
                    "protocol" => BinPairs::Protocol,
                    _ => {
                        return Err(Error::InvalidConfig(format!(
                            "{key}: expected all or protocol, got {value:?}"
                        )))
                    }
                }
            }
            "eval.report_r" => self.eval.report_r = parse_list(key, value)?,

            "sets.sets_per_identity" => self.sets.sets_per_identity = parse(key, value)?,
            "sets.min_size" => self.sets.min_size = parse(key, value)?,
            "sets.max_size" => self.sets.max_size = parse(key, value)?,
            "sets.low_quality_fraction" => self.sets.low_quality_fraction = parse(key, value)?,
            "sets.low_quality_max" => self.sets.low_quality_max = parse(key, value)?,
            "sets.impostor_pairs" => self.sets.impostor_pairs = parse(key, value)?,

            "rank.low_boundary" => self.rank.low_boundary = parse(key, value)?,
            "rank.high_boundary" => self.rank.high_boundary = parse(key, value)?,
            "rank.samples_per_bucket" => self.rank.samples_per_bucket = parse(key, value)?,

            _ => return Err(Error::InvalidConfig(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order. Parsing the
    /// rendered text gives back the same configuration.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let w = &self.world;
        let mut out = vec![
            ("seed", self.seed.to_string()),
            (
                "output",
                self.output.as_ref().map_or(String::new(), |p| p.display().to_string()),
            ),
            ("world.ambient_dim", w.ambient_dim.to_string()),
            ("world.identity_dim", w.identity_dim.to_string()),
            ("world.num_identities", w.num_identities.to_string()),
            ("world.images_per_identity", w.images_per_identity.to_string()),
        ];
        match w.quality {
            QualityDistribution::Fixed(q) => out.push(("world.quality", format!("fixed:{q}"))),
            QualityDistribution::Mixture {
                high_weight,
                high_alpha,
                high_beta,
                low_alpha,
                low_beta,
            } => out.extend([
                ("world.quality", "mixture".to_string()),
                ("world.quality_high_weight", high_weight.to_string()),
                ("world.quality_high_alpha", high_alpha.to_string()),
                ("world.quality_high_beta", high_beta.to_string()),
                ("world.quality_low_alpha", low_alpha.to_string()),
                ("world.quality_low_beta", low_beta.to_string()),
            ]),
        }
        out.extend([
            ("world.degradation_probability", w.degradation_probability.to_string()),
            ("world.noise_scale", w.noise_scale.to_string()),
            ("world.decrement_iso_noise", w.decrements.iso_noise.to_string()),
            ("world.decrement_coord_mask", w.decrements.coord_mask.to_string()),
            ("world.decrement_heavy_tail", w.decrements.heavy_tail.to_string()),
            ("world.mask_fraction", w.mask_fraction.to_string()),
            (
                "world.degradation_mode",
                match w.degradation_mode {
                    DegradationMode::Augment => "augment",
                    DegradationMode::Replace => "replace",
                }
                .to_string(),
            ),
            (
                "pairs.max_pairs_per_identity",
                self.pairs
                    .max_pairs_per_identity
                    .map_or("none".to_string(), |n| n.to_string()),
            ),
            ("pairs.clamp", self.pairs.clamp.to_string()),
            ("model.hidden", join(&self.model.hidden)),
            ("model.degradation_features", self.model.degradation_features.to_string()),
            ("train.batch_size", self.train.batch_size.to_string()),
            ("train.initial_lr", self.train.initial_lr.to_string()),
            ("train.decay_factor", self.train.decay_factor.to_string()),
            ("train.max_decays", self.train.max_decays.to_string()),
            ("train.patience", self.train.patience.to_string()),
            ("train.rel_tol", self.train.rel_tol.to_string()),
            ("train.max_epochs", self.train.max_epochs.to_string()),
            (
                "train.batches_per_epoch",
                self.train
                    .batches_per_epoch
                    .map_or("all".to_string(), |n| n.to_string()),
            ),
            ("protocol.holdout_identities", self.protocol.holdout_identities.to_string()),
            ("protocol.genuine_pairs", self.protocol.genuine_pairs.to_string()),
            ("protocol.impostor_pairs", self.protocol.impostor_pairs.to_string()),
            ("eval.r_step", self.eval.r_step.to_string()),
            ("eval.r_max", self.eval.r_max.to_string()),
            ("eval.far_targets", join(&self.eval.far_targets)),
            ("eval.bins", self.eval.bins.to_string()),
            (
                "eval.bin_range",
                match self.eval.bin_range {
                    BinRange::Observed => "observed",
                    BinRange::Fixed { .. } => "unit",
                }
                .to_string(),
            ),
            (
                "eval.bin_pairs",
                match self.eval.bin_pairs {
                    BinPairs::All => "all",
                    BinPairs::Protocol => "protocol",
                }
                .to_string(),
            ),
            ("eval.report_r", join(&self.eval.report_r)),
            ("sets.sets_per_identity", self.sets.sets_per_identity.to_string()),
            ("sets.min_size", self.sets.min_size.to_string()),
            ("sets.max_size", self.sets.max_size.to_string()),
            ("sets.low_quality_fraction", self.sets.low_quality_fraction.to_string()),
            ("sets.low_quality_max", self.sets.low_quality_max.to_string()),
            ("sets.impostor_pairs", self.sets.impostor_pairs.to_string()),
            ("rank.low_boundary", self.rank.low_boundary.to_string()),
            ("rank.high_boundary", self.rank.high_boundary.to_string()),
            ("rank.samples_per_bucket", self.rank.samples_per_bucket.to_string()),
        ]);
        out
    }

    pub fn to_ini(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// The configuration as the pipeline stages see it: every stage seed
    /// filled in from [`RunConfig::seed`].
    pub fn resolved(&self) -> ResolvedSeeds {
        ResolvedSeeds {
            world: derive_seed(self.seed, "world"),
            folds: derive_seed(self.seed, "folds"),
            pairs: derive_seed(self.seed, "pairs"),
            init: derive_seed(self.seed, "init"),
            train: derive_seed(self.seed, "train"),
            protocol: derive_seed(self.seed, "protocol"),
            sets: derive_seed(self.seed, "sets"),
        }
    }

    pub fn world_config(&self) -> WorldConfig {
        WorldConfig {
            rng_seed: self.resolved().world,
            ..self.world.clone()
        }
    }

    pub fn pair_config(&self) -> PairConfig {
        PairConfig {
            seed: self.resolved().pairs,
            ..self.pairs
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.resolved().train,
            ..self.train.clone()
        }
    }

    pub fn protocol_config(&self) -> ProtocolConfig {
        ProtocolConfig {
            genuine_pairs: self.protocol.genuine_pairs,
            impostor_pairs: self.protocol.impostor_pairs,
            seed: self.resolved().protocol,
        }
    }

    pub fn set_config(&self) -> SetConfig {
        SetConfig {
            seed: self.resolved().sets,
            ..self.sets
        }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let input = self.world.ambient_dim
            + if self.model.degradation_features {
                crate::embedsim::DegradationKind::ALL.len()
            } else {
                0
            };
        let mut sizes = vec![input];
        sizes.extend(&self.model.hidden);
        sizes.push(1);
        sizes
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        self.world_config().validate()?;
        self.train_config().validate()?;
        self.sets.validate()?;
        let n = self.world.num_identities;
        let h = self.protocol.holdout_identities;
        if h < 2 || h >= n {
            return bad(format!("protocol.holdout_identities {h} must lie in [2, {n})"));
        }
        if n - h < 2 {
            return bad("at least 2 development identities are needed".into());
        }
        if self.model.hidden.contains(&0) {
            return bad("model.hidden sizes must be positive".into());
        }
        if !(self.eval.r_step > 0.0) || !(0.0..1.0).contains(&self.eval.r_max) {
            return bad("eval.r_step must be positive and eval.r_max in [0, 1)".into());
        }
        if self.eval.far_targets.is_empty() || self.eval.far_targets.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return bad("eval.far_targets must be a nonempty list in [0, 1]".into());
        }
        if self.eval.bins == 0 {
            return bad("eval.bins must be positive".into());
        }
        if self.eval.report_r.iter().any(|r| !(0.0..1.0).contains(r)) {
            return bad("eval.report_r values must lie in [0, 1)".into());
        }
        let rk = &self.rank;
        if !(0.0 < rk.low_boundary && rk.low_boundary < rk.high_boundary && rk.high_boundary < 1.0) {
            return bad("rank boundaries must satisfy 0 < low < high < 1".into());
        }
        Ok(())
    }
}

/// Stage seeds derived from the global seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedSeeds {
    pub world: u64,
    pub folds: u64,
    pub pairs: u64,
    pub init: u64,
    pub train: u64,
    pub protocol: u64,
    pub sets: u64,
}
