//! Artifact-writing commands. Every command reads its prerequisites from the
//! run directory, writes its outputs there and finishes with a
//! `manifest_<command>.json` holding the config snapshot and SHA-256
//! checksums of everything read and written.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::stages::{self, CovariateEval, FusionEval};
use super::RunConfig;
use crate::confnet::{read_checkpoint, write_checkpoint, ConfidenceModel, ModelSidecar};
use crate::embedsim::{read_identities, read_store, write_identities, write_store, ImageRecord, World};
use crate::fusion::{descriptor_records, write_set_manifest};
use crate::metrics::{model_confidences, write_curve_csv, CorrelationBins, CurveCsvRow, ErrorRejectCurve};
use crate::pairgen::{read_pairs, write_pairs, FoldSplit};
use crate::{Error, Result};

pub const WORLD: &str = "world.pceb";
pub const IDENTITIES: &str = "identities.csv";
pub const FOLDS: &str = "folds.json";
pub const PAIRS: &str = "pairs.csv";
pub const MODEL: &str = "model.pcnm";
pub const MODEL_SIDECAR: &str = "model.json";
pub const COVARIATE_CURVE: &str = "covariate_curve.csv";
pub const ORACLE_CURVE: &str = "covariate_curve_oracle.csv";
pub const COVARIATE_BINS: &str = "covariate_bins.csv";
pub const ORACLE_BINS: &str = "covariate_bins_oracle.csv";
pub const COVARIATE: &str = "covariate.json";
pub const SETS: &str = "sets.csv";
pub const FUSED: &str = "fused.pceb";
pub const FUSION: &str = "fusion.json";
pub const RANKED: &str = "ranked.csv";
pub const RANK_BUCKETS: &str = "rank_buckets.json";
pub const REPORT: &str = "report.txt";
pub const REJECTION_TABLE: &str = "table_rejection.csv";
pub const FUSION_TABLE: &str = "table_fusion.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Command {
    Simulate,
    Pairscore,
    Train,
    EvalCovariate,
    EvalFusion,
    Rank,
    Report,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Simulate,
        Command::Pairscore,
        Command::Train,
        Command::EvalCovariate,
        Command::EvalFusion,
        Command::Rank,
        Command::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Pairscore => "pairscore",
            Command::Train => "train",
            Command::EvalCovariate => "eval-covariate",
            Command::EvalFusion => "eval-fusion",
            Command::Rank => "rank",
            Command::Report => "report",
        }
    }

    pub fn manifest_name(self) -> String {
        format!("manifest_{}.json", self.name().replace('-', "_"))
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown command {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Every config key except the output directory.
    pub config: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads and writes artifacts in one run directory, recording checksums.
struct Run<'a> {
    config: &'a RunConfig,
    dir: &'a Path,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl<'a> Run<'a> {
    fn new(config: &'a RunConfig, dir: &'a Path) -> Self {
        Run {
            config,
            dir,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn read(&mut self, name: &str) -> Result<Vec<u8>> {
        let path = self.path(name);
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            ErrorKind::NotFound => Error::MissingArtifact(path.clone()),
            _ => Error::Io(e),
        })?;
        self.inputs.insert(name.to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    fn exists(&self, name: &str) -> bool {
        self.path(name).is_file()
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.path(name), bytes)?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    fn finish(self, command: Command) -> Result<RunManifest> {
        let mut snapshot = self.config.clone();
        snapshot.output = None;
        let manifest = RunManifest {
            command: command.name().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.config.seed,
            config: snapshot
                .entries()
                .into_iter()
                .filter(|(k, _)| *k != "output")
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            inputs: self.inputs,
            outputs: self.outputs,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(self.dir.join(command.manifest_name()), bytes)?;
        Ok(manifest)
    }

    fn load_records(&mut self) -> Result<Vec<ImageRecord>> {
        let bytes = self.read(WORLD)?;
        let (dim, records) = read_store(bytes.as_slice())?;
        if dim != self.config.world.ambient_dim {
            return Err(Error::InvalidConfig(format!(
                "{WORLD} has d = {dim}, config says {}",
                self.config.world.ambient_dim
            )));
        }
        Ok(records)
    }

    fn load_world(&mut self) -> Result<World> {
        let records = self.load_records()?;
        let latents = read_identities(self.read(IDENTITIES)?.as_slice())?;
        World::from_parts(&self.config.world_config(), latents, records)
    }

    fn load_model(&mut self) -> Result<ConfidenceModel> {
        let model = read_checkpoint(self.read(MODEL)?.as_slice())?;
        let expected = self.config.layer_sizes();
        if model.layer_sizes() != expected {
            return Err(Error::InvalidConfig(format!(
                "{MODEL} has layers {:?}, config says {expected:?}",
                model.layer_sizes()
            )));
        }
        Ok(model)
    }
}

/// Runs one command against `dir`, creating it if needed.
pub fn run_command(command: Command, config: &RunConfig, dir: &Path) -> Result<RunManifest> {
    config.validate()?;
    fs::create_dir_all(dir)?;
    let mut run = Run::new(config, dir);
    match command {
        Command::Simulate => simulate(&mut run)?,
        Command::Pairscore => pairscore(&mut run)?,
        Command::Train => train(&mut run)?,
        Command::EvalCovariate => eval_covariate(&mut run)?,
        Command::EvalFusion => eval_fusion(&mut run)?,
        Command::Rank => rank(&mut run)?,
        Command::Report => report(&mut run)?,
    }
    run.finish(command)
}

/// simulate → pairscore → train → eval-covariate → eval-fusion → rank → report.
pub fn run_all(config: &RunConfig, dir: &Path) -> Result<Vec<RunManifest>> {
    Command::ALL.iter().map(|&c| run_command(c, config, dir)).collect()
}

fn simulate(run: &mut Run<'_>) -> Result<()> {
    let world = stages::simulate(run.config)?;
    let mut store = Vec::new();
    write_store(&mut store, world.config.ambient_dim, &world.records)?;
    run.write(WORLD, &store)?;
    let mut ids = Vec::new();
    write_identities(&mut ids, &world.identities)?;
    run.write(IDENTITIES, &ids)
}

fn pairscore(run: &mut Run<'_>) -> Result<()> {
    let records = run.load_records()?;
    let (split, pairs): (FoldSplit, _) = stages::pairscore(run.config, &records)?;
    run.write_json(FOLDS, &split)?;
    let mut bytes = Vec::new();
    write_pairs(&mut bytes, &pairs)?;
    run.write(PAIRS, &bytes)
}

fn train(run: &mut Run<'_>) -> Result<()> {
    let records = run.load_records()?;
    let pairs = read_pairs(run.read(PAIRS)?.as_slice())?;
    let (model, report) = stages::train_model(run.config, &records, &pairs)?;
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &model)?;
    run.write(MODEL, &bytes)?;
    let sidecar = ModelSidecar {
        layer_sizes: model.layer_sizes(),
        degradation_features: run.config.model.degradation_features,
        train_config: run.config.train_config(),
        final_loss: report.final_loss(),
        report,
    };
    run.write_json(MODEL_SIDECAR, &sidecar)
}

fn curve_bytes(curve: &ErrorRejectCurve) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    write_curve_csv(&mut bytes, &CurveCsvRow::from_curve(curve))?;
    Ok(bytes)
}

fn bins_bytes(bins: &CorrelationBins) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bin", "lo", "hi", "count", "mean_similarity"])?;
    for (i, b) in bins.bins.iter().enumerate() {
        w.write_record([
            i.to_string(),
            b.lo.to_string(),
            b.hi.to_string(),
            b.count.to_string(),
            b.mean_similarity.map_or(String::new(), |m| m.to_string()),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn eval_covariate(run: &mut Run<'_>) -> Result<()> {
    let records = run.load_records()?;
    let model = run.load_model()?;
    run.read(MODEL_SIDECAR)?;
    let recognizer = stages::evaluation_recognizer(run.config, &records)?;
    let result = stages::eval_covariate(run.config, &records, &recognizer, &model)?;
    let eval = &result.eval;
    run.write(COVARIATE_CURVE, &curve_bytes(&eval.learned)?)?;
    run.write(ORACLE_CURVE, &curve_bytes(&eval.oracle)?)?;
    run.write(COVARIATE_BINS, &bins_bytes(&eval.bins)?)?;
    run.write(ORACLE_BINS, &bins_bytes(&eval.oracle_bins)?)?;
    run.write_json(COVARIATE, eval)
}

fn eval_fusion(run: &mut Run<'_>) -> Result<()> {
    let world = run.load_world()?;
    let model = run.load_model()?;
    let recognizer = stages::evaluation_recognizer(run.config, &world.records)?;
    let result = stages::eval_fusion(run.config, &world, &recognizer, &model)?;
    let mut manifest = Vec::new();
    write_set_manifest(&mut manifest, &result.sets)?;
    run.write(SETS, &manifest)?;
    let descriptors = descriptor_records(&result.learned_sets, crate::fusion::Weighting::Confidence)?;
    let mut store = Vec::new();
    write_store(&mut store, run.config.world.ambient_dim, &descriptors)?;
    run.write(FUSED, &store)?;
    run.write_json(FUSION, &result.eval)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankBucket {
    pub name: String,
    /// Half-open rank range `[start, end)` in the ascending ranking.
    pub start: usize,
    pub end: usize,
    pub min_confidence: Option<f64>,
    pub max_confidence: Option<f64>,
    pub mean_quality: Option<f64>,
    /// Evenly spaced image ids from the bucket.
    pub samples: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedExport {
    pub n_images: usize,
    pub low_boundary: f64,
    pub high_boundary: f64,
    pub buckets: Vec<RankBucket>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRow {
    pub rank: usize,
    pub image_id: u64,
    pub identity: u64,
    pub confidence: f64,
    pub quality: f64,
}

/// Held-out images sorted by confidence ascending (ties by image id) and
/// split into low/mid/high rank buckets.
pub fn ranked_export(
    records: &[ImageRecord],
    confidences: &[f64],
    config: &super::RankConfig,
) -> (Vec<RankedRow>, RankedExport) {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        confidences[a]
            .total_cmp(&confidences[b])
            .then(records[a].image_id.cmp(&records[b].image_id))
    });
    let rows: Vec<RankedRow> = order
        .iter()
        .enumerate()
        .map(|(rank, &i)| RankedRow {
            rank,
            image_id: records[i].image_id,
            identity: records[i].identity_id,
            confidence: confidences[i],
            quality: records[i].quality,
        })
        .collect();

    let n = rows.len();
    let cut = |f: f64| ((f * n as f64).round() as usize).min(n);
    let edges = [0, cut(config.low_boundary), cut(config.high_boundary), n];
    let buckets = ["low", "mid", "high"]
        .iter()
        .enumerate()
        .map(|(b, name)| {
            let slice = &rows[edges[b]..edges[b + 1]];
            let k = config.samples_per_bucket.min(slice.len());
            let samples = (0..k)
                .map(|j| slice[if k == 1 { 0 } else { j * (slice.len() - 1) / (k - 1) }].image_id)
                .collect();
            RankBucket {
                name: name.to_string(),
                start: edges[b],
                end: edges[b + 1],
                min_confidence: slice.first().map(|r| r.confidence),
                max_confidence: slice.last().map(|r| r.confidence),
                mean_quality: (!slice.is_empty())
                    .then(|| slice.iter().map(|r| r.quality).sum::<f64>() / slice.len() as f64),
                samples,
            }
        })
        .collect();
    (
        rows,
        RankedExport {
            n_images: n,
            low_boundary: config.low_boundary,
            high_boundary: config.high_boundary,
            buckets,
        },
    )
}

fn rank(run: &mut Run<'_>) -> Result<()> {
    let records = run.load_records()?;
    let model = run.load_model()?;
    let holdout = stages::holdout_records(run.config, &records);
    let confidences = model_confidences(&model, &holdout, run.config.model.degradation_features)?;
    let (rows, export) = ranked_export(&holdout, &confidences, &run.config.rank);
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    run.write(RANKED, &bytes)?;
    run.write_json(RANK_BUCKETS, &export)
}

fn fmt_tar(v: Option<f64>) -> String {
    v.map_or("n/a".to_string(), |t| format!("{t:.4}"))
}

fn report(run: &mut Run<'_>) -> Result<()> {
    let covariate: CovariateEval = serde_json::from_slice(&run.read(COVARIATE)?)?;
    let fusion: Option<FusionEval> = if run.exists(FUSION) {
        Some(serde_json::from_slice(&run.read(FUSION)?)?)
    } else {
        None
    };
    let ranked: Option<RankedExport> = if run.exists(RANK_BUCKETS) {
        Some(serde_json::from_slice(&run.read(RANK_BUCKETS)?)?)
    } else {
        None
    };
    let eval = &run.config.eval;

    let mut text = String::new();
    let mut table = csv::Writer::from_writer(Vec::new());
    table.write_record(["far_target", "r", "tar_oracle", "tar_learned", "n_retained"])?;
    writeln!(text, "Error versus reject, held-out still images").unwrap();
    writeln!(
        text,
        "{} records, Spearman(confidence, quality) = {:.4}",
        covariate.n_records, covariate.spearman_quality
    )
    .unwrap();
    for &far in &eval.far_targets {
        writeln!(text, "\nTAR @ FAR = {far:e}").unwrap();
        writeln!(text, "{:>6}  {:>10}  {:>10}  {:>10}", "r", "oracle", "learned", "retained").unwrap();
        for &r in &eval.report_r {
            let oracle = covariate.oracle.tar(r, far);
            let learned = covariate.learned.tar(r, far);
            let retained = covariate.learned.row(r).map(|row| row.n_retained);
            writeln!(
                text,
                "{r:>6.2}  {:>10}  {:>10}  {:>10}",
                fmt_tar(oracle),
                fmt_tar(learned),
                retained.map_or("n/a".to_string(), |n| n.to_string())
            )
            .unwrap();
            table.write_record([
                far.to_string(),
                r.to_string(),
                oracle.map_or(String::new(), |t| t.to_string()),
                learned.map_or(String::new(), |t| t.to_string()),
                retained.map_or(String::new(), |n| n.to_string()),
            ])?;
        }
    }
    writeln!(
        text,
        "\nConfidence/similarity bins: {} occupied, {} decreases (oracle: {} occupied, {} decreases)",
        covariate.bins.occupied().count(),
        covariate.bins.monotone_violations(),
        covariate.oracle_bins.occupied().count(),
        covariate.oracle_bins.monotone_violations()
    )
    .unwrap();
    let bytes = table.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    run.write(REJECTION_TABLE, &bytes)?;

    if let Some(fusion) = &fusion {
        let mut table = csv::Writer::from_writer(Vec::new());
        table.write_record(["far_target", "tar_uniform", "tar_learned", "tar_oracle"])?;
        writeln!(text, "\nSet-to-set verification, {} sets", fusion.n_sets).unwrap();
        writeln!(text, "{:>8}  {:>10}  {:>10}  {:>10}", "FAR", "uniform", "learned", "oracle").unwrap();
        for (i, &far) in eval.far_targets.iter().enumerate() {
            let tars = [&fusion.uniform, &fusion.learned, &fusion.oracle].map(|s| s.points[i].tar);
            writeln!(
                text,
                "{far:>8.0e}  {:>10.4}  {:>10.4}  {:>10.4}",
                tars[0], tars[1], tars[2]
            )
            .unwrap();
            table.write_record([
                far.to_string(),
                tars[0].to_string(),
                tars[1].to_string(),
                tars[2].to_string(),
            ])?;
        }
        let bytes = table.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        run.write(FUSION_TABLE, &bytes)?;
    }

    if let Some(ranked) = &ranked {
        writeln!(text, "\nConfidence ranking, {} held-out images", ranked.n_images).unwrap();
        for b in &ranked.buckets {
            writeln!(
                text,
                "{:>5}: ranks {}..{}, confidence {} to {}, mean quality {}",
                b.name,
                b.start,
                b.end,
                fmt_tar(b.min_confidence),
                fmt_tar(b.max_confidence),
                fmt_tar(b.mean_quality)
            )
            .unwrap();
        }
    }
    run.write(REPORT, text.as_bytes())
}
