//! Synthetic identity world with quality-degraded embeddings.
//!
//! Identities are unit prototypes `μ = normalize(A·z)` on a fixed
//! `k`-dimensional subspace `span(A)` of `R^d`. An observation of quality `q`
//! is `normalize(μ + τ(q)·η)` with `τ(q) = τ_max·(1 − q)` and full-dimensional
//! noise `η`, so low quality shows up as energy outside `span(A)`. The
//! projection norm `‖Aᵀe‖` is the recognizability oracle.

mod degrade;
mod io;
mod world;

pub use degrade::{apply_degradation, DegradationKind, DegradationModel, DegradationSet, Decrements};
pub use io::{read_identities, read_store, write_identities, write_store, STORE_MAGIC, STORE_VERSION};
pub use world::{generate_world, identity_basis, observe, World};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::linalg::{norm, project};
use crate::{Error, Result};

/// Tolerance on `‖e‖ = 1` accepted by [`oracle_confidence`].
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Distribution of the latent quality `q` of a fresh observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum QualityDistribution {
    /// Two-component Beta mixture: a high-quality mode with weight
    /// `high_weight` and a low-quality mode with the remaining weight.
    Mixture {
        high_weight: f64,
        high_alpha: f64,
        high_beta: f64,
        low_alpha: f64,
        low_beta: f64,
    },
    /// Every observation has the same quality.
    Fixed(f64),
}

impl Default for QualityDistribution {
    fn default() -> Self {
        QualityDistribution::Mixture {
            high_weight: 0.7,
            high_alpha: 8.0,
            high_beta: 2.0,
            low_alpha: 2.0,
            low_beta: 5.0,
        }
    }
}

impl QualityDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            QualityDistribution::Fixed(q) if !(0.0..=1.0).contains(&q) => Err(
                Error::InvalidConfig(format!("fixed quality {q} outside [0, 1]")),
            ),
            QualityDistribution::Fixed(_) => Ok(()),
            QualityDistribution::Mixture {
                high_weight,
                high_alpha,
                high_beta,
                low_alpha,
                low_beta,
            } => {
                if !(0.0..=1.0).contains(&high_weight) {
                    return Err(Error::InvalidConfig(format!(
                        "mixture weight {high_weight} outside [0, 1]"
                    )));
                }
                for s in [high_alpha, high_beta, low_alpha, low_beta] {
                    if !(s > 0.0 && s.is_finite()) {
                        return Err(Error::InvalidConfig(format!(
                            "beta shape parameter {s} must be positive"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            QualityDistribution::Fixed(q) => q,
            QualityDistribution::Mixture {
                high_weight,
                high_alpha,
                high_beta,
                low_alpha,
                low_beta,
            } => {
                let (a, b) = if rng.random::<f64>() < high_weight {
                    (high_alpha, high_beta)
                } else {
                    (low_alpha, low_beta)
                };
                // shapes were validated positive
                Beta::new(a, b).expect("valid beta shapes").sample(rng)
            }
        }
    }
}

/// Whether a degraded observation replaces its clean original or is added
/// next to it as an extra record of the same identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DegradationMode {
    #[default]
    Augment,
    Replace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    /// `d`
    pub ambient_dim: usize,
    /// `k`, strictly less than `d`
    pub identity_dim: usize,
    pub num_identities: usize,
    /// Base observations per identity. In [`DegradationMode::Augment`]
    /// degraded copies come on top of these.
    pub images_per_identity: usize,
    pub quality: QualityDistribution,
    /// Probability that an observation receives at least one degradation.
    pub degradation_probability: f64,
    /// `τ_max`
    pub noise_scale: f64,
    pub decrements: Decrements,
    /// Fraction of coordinates zeroed by `coord_mask`.
    pub mask_fraction: f64,
    pub degradation_mode: DegradationMode,
    pub rng_seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            ambient_dim: 64,
            identity_dim: 8,
            num_identities: 1000,
            images_per_identity: 12,
            quality: QualityDistribution::default(),
            degradation_probability: 0.2,
            noise_scale: 2.5,
            decrements: Decrements::default(),
            mask_fraction: 0.35,
            degradation_mode: DegradationMode::Augment,
            rng_seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.identity_dim == 0 || self.identity_dim >= self.ambient_dim {
            return bad(format!(
                "identity_dim {} must satisfy 0 < k < d = {}",
                self.identity_dim, self.ambient_dim
            ));
        }
        if self.num_identities == 0 || self.images_per_identity == 0 {
            return bad("identity and image counts must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.degradation_probability) {
            return bad(format!(
                "degradation_probability {} outside [0, 1]",
                self.degradation_probability
            ));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad(format!("noise_scale {} must be >= 0", self.noise_scale));
        }
        if !(0.0..1.0).contains(&self.mask_fraction) {
            return bad(format!("mask_fraction {} outside [0, 1)", self.mask_fraction));
        }
        self.decrements.validate()?;
        self.quality.validate()
    }

    /// `τ(q) = τ_max·(1 − q)`
    pub fn noise_level(&self, quality: f64) -> f64 {
        self.noise_scale * (1.0 - quality)
    }

    pub fn degradation_model(&self) -> DegradationModel {
        DegradationModel {
            decrements: self.decrements,
            noise_scale: self.noise_scale,
            mask_fraction: self.mask_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identity {
    pub id: u64,
    /// Latent coordinates `z` in the identity subspace.
    pub latent: Vec<f64>,
    /// `normalize(A·z)`
    pub prototype: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: u64,
    pub identity_id: u64,
    /// Latent quality `q` in `[0, 1]`, after degradation decrements.
    pub quality: f64,
    pub degradations: DegradationSet,
    pub embedding: Vec<f64>,
}

/// Recognizability oracle: `‖Aᵀe‖`, the norm of the projection of a unit
/// embedding onto the identity subspace.
pub fn oracle_confidence(embedding: &[f64], basis: &DMatrix<f64>) -> Result<f64> {
    if embedding.len() != basis.nrows() {
        return Err(Error::DimensionMismatch {
            expected: basis.nrows(),
            got: embedding.len(),
        });
    }
    let n = norm(embedding);
    if (n - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::NonUnitEmbedding { norm: n });
    }
    Ok(norm(&project(basis, embedding)).min(1.0))
}
