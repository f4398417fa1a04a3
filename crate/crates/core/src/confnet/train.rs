use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{ConfidenceModel, FeatureTable, Gradient, Scratch};
use crate::pairgen::PairSample;
use crate::rng::stream;
use crate::{Error, Result};

/// Samples per parallel gradient chunk. Fixed so that the reduction order,
/// and therefore the result, does not depend on the thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub initial_lr: f64,
    /// The learning rate is divided by this on each plateau.
    pub decay_factor: f64,
    pub max_decays: usize,
    /// Epochs without a relative improvement of at least `rel_tol` before a
    /// plateau is declared.
    pub patience: usize,
    pub rel_tol: f64,
    pub max_epochs: usize,
    /// Batches per epoch; `None` means `ceil(pairs / batch_size)`.
    pub batches_per_epoch: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            initial_lr: 0.1,
            decay_factor: 10.0,
            max_decays: 2,
            patience: 3,
            rel_tol: 1e-3,
            max_epochs: 40,
            batches_per_epoch: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return bad("initial_lr must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor.is_finite()) {
            return bad("decay_factor must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be positive");
        }
        if !(0.0..1.0).contains(&self.rel_tol) {
            return bad("rel_tol must be in [0, 1)");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if self.batches_per_epoch == Some(0) {
            return bad("batches_per_epoch must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// Plateau after the last allowed decay.
    Plateau,
    MaxEpochs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrEvent {
    /// Zero-based epoch after which the rate changed.
    pub epoch: usize,
    pub lr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub lr_events: Vec<LrEvent>,
    pub final_lr: f64,
    pub stop_reason: StopReason,
    pub theta_checksum: String,
    /// Not serialized and ignored by `==`, so reports stay reproducible.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl PartialEq for TrainReport {
    fn eq(&self, other: &Self) -> bool {
        self.epoch_losses == other.epoch_losses
            && self.lr_events == other.lr_events
            && self.final_lr == other.final_lr
            && self.stop_reason == other.stop_reason
            && self.theta_checksum == other.theta_checksum
    }
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

/// Pairs resolved to feature rows, grouped by identity for balanced sampling.
struct Corpus {
    items: Vec<(usize, usize, f64)>,
    by_identity: Vec<Vec<usize>>,
}

impl Corpus {
    fn build(pairs: &[PairSample], features: &FeatureTable) -> Result<Self> {
        let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        let mut items = Vec::with_capacity(pairs.len());
        for (i, p) in pairs.iter().enumerate() {
            let lookup = |id: u64| {
                features
                    .position(id)
                    .ok_or_else(|| Error::format("pair corpus", format!("image {id} has no features")))
            };
            items.push((lookup(p.image_a)?, lookup(p.image_b)?, p.y));
            groups.entry(p.identity).or_default().push(i);
        }
        Ok(Corpus {
            items,
            by_identity: groups.into_values().collect(),
        })
    }

    /// Identity uniformly, then a pair uniformly within it.
    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let group = &self.by_identity[rng.random_range(0..self.by_identity.len())];
        group[rng.random_range(0..group.len())]
    }
}

/// Mini-batch SGD on the loser-takes-all loss with identity-balanced
/// batches and plateau learning-rate decay.
pub fn train(
    model: ConfidenceModel,
    pairs: &[PairSample],
    features: &FeatureTable,
    config: &TrainConfig,
) -> Result<(ConfidenceModel, TrainReport)> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    if features.dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: features.dim(),
        });
    }
    let started = Instant::now();
    let corpus = Corpus::build(pairs, features)?;
    let batches = config
        .batches_per_epoch
        .unwrap_or_else(|| pairs.len().div_ceil(config.batch_size));

    let mut model = model;
    let mut rng = stream(config.seed, "batches");
    let mut lr = config.initial_lr;
    let mut best = f64::INFINITY;
    let (mut stale, mut decays) = (0, 0);
    let mut epoch_losses = Vec::new();
    let mut lr_events = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 0..config.max_epochs {
        let mut epoch_sum = 0.0;
        for batch in 0..batches {
            let picks: Vec<usize> = (0..config.batch_size).map(|_| corpus.sample(&mut rng)).collect();
            let partials = picks
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut grad = Gradient::zeros_like(&model);
                    let mut scratch = Scratch::default();
                    let mut sum = 0.0;
                    for &i in chunk {
                        let (a, b, y) = corpus.items[i];
                        let l = model.accumulate_pair(features.row(a), features.row(b), y, &mut grad, &mut scratch);
                        if !l.is_finite() {
                            return Err(Error::NonFinite {
                                epoch,
                                batch,
                                detail: format!("pair {i} loss {l}"),
                            });
                        }
                        sum += l;
                    }
                    Ok((grad, sum))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut parts = partials.into_iter();
            let (mut grad, mut batch_sum) = parts.next().expect("batch_size > 0");
            for (g, s) in parts {
                grad.add(&g);
                batch_sum += s;
            }
            grad.scale(1.0 / config.batch_size as f64);
            model.apply_gradient(&grad, lr);
            epoch_sum += batch_sum;
        }
        let mean = epoch_sum / (batches * config.batch_size) as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                batch: batches,
                detail: format!("epoch mean loss {mean}"),
            });
        }
        epoch_losses.push(mean);

        if mean < best * (1.0 - config.rel_tol) {
            best = mean;
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= config.patience {
            if decays < config.max_decays {
                decays += 1;
                stale = 0;
                lr /= config.decay_factor;
                lr_events.push(LrEvent { epoch, lr });
            } else {
                stop_reason = StopReason::Plateau;
                break;
            }
        }
    }

    let report = TrainReport {
        epoch_losses,
        lr_events,
        final_lr: lr,
        stop_reason,
        theta_checksum: model.checksum(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}
