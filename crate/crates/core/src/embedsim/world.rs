use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{
    apply_degradation, oracle_confidence, DegradationMode, DegradationSet,
    Identity, ImageRecord, WorldConfig,
};
use crate::linalg::normalized;
use crate::rng::{indexed_stream, stream};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    /// Orthonormal `d × k` identity basis `A`.
    pub basis: DMatrix<f64>,
    pub identities: Vec<Identity>,
    /// Sorted by identity, then generation order; `image_id` is the index.
    pub records: Vec<ImageRecord>,
}

impl World {
    pub fn oracle(&self, embedding: &[f64]) -> Result<f64> {
        oracle_confidence(embedding, &self.basis)
    }

    pub fn identity(&self, id: u64) -> Option<&Identity> {
        self.identities.get(id as usize).filter(|i| i.id == id)
    }

    /// Rebuilds a world from stored latents and records. The basis and the
    /// prototypes are recomputed from the config seed.
    pub fn from_parts(
        config: &WorldConfig,
        latents: Vec<(u64, Vec<f64>)>,
        records: Vec<ImageRecord>,
    ) -> Result<World> {
        config.validate()?;
        let basis = identity_basis(config.ambient_dim, config.identity_dim, config.rng_seed);
        let identities = latents
            .into_iter()
            .map(|(id, latent)| {
                if latent.len() != config.identity_dim {
                    return Err(Error::DimensionMismatch {
                        expected: config.identity_dim,
                        got: latent.len(),
                    });
                }
                let raw = &basis * DVector::from_column_slice(&latent);
                let prototype = normalized(raw.as_slice())?;
                Ok(Identity { id, latent, prototype })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(World {
            config: config.clone(),
            basis,
            identities,
            records,
        })
    }
}

/// The fixed identity basis drawn from `seed`: Gaussian `d × k`, then
/// orthonormalized by QR.
pub fn identity_basis(d: usize, k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream(seed, "basis");
    let raw = DMatrix::from_fn(d, k, |_, _| StandardNormal.sample(&mut rng));
    raw.qr().q()
}

fn make_identity(config: &WorldConfig, basis: &DMatrix<f64>, id: u64) -> Result<Identity> {
    let mut rng = indexed_stream(config.rng_seed, "identity", id);
    let latent: Vec<f64> = (0..config.identity_dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let raw = basis * DVector::from_column_slice(&latent);
    let prototype = normalized(raw.as_slice())?;
    Ok(Identity {
        id,
        latent,
        prototype,
    })
}

/// One clean observation `normalize(μ + τ(q)·η)` with `η ~ N(0, I/d)`.
///
/// When `τ(q) = 0` the prototype is returned bit-for-bit.
pub fn observe<R: Rng + ?Sized>(
    identity: &Identity,
    quality: f64,
    config: &WorldConfig,
    rng: &mut R,
) -> Result<ImageRecord> {
    let d = identity.prototype.len();
    let tau = config.noise_level(quality);
    let scale = tau / (d as f64).sqrt();
    let noise: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect();
    let embedding = if tau == 0.0 {
        identity.prototype.clone()
    } else {
        let raw: Vec<f64> = identity
            .prototype
            .iter()
            .zip(&noise)
            .map(|(m, n)| m + scale * n)
            .collect();
        normalized(&raw)?
    };
    Ok(ImageRecord {
        image_id: 0,
        identity_id: identity.id,
        quality,
        degradations: DegradationSet::EMPTY,
        embedding,
    })
}

fn identity_images(config: &WorldConfig, identity: &Identity) -> Result<Vec<ImageRecord>> {
    let mut rng = indexed_stream(config.rng_seed, "images", identity.id);
    let model = config.degradation_model();
    let mut out = Vec::with_capacity(config.images_per_identity);
    for _ in 0..config.images_per_identity {
        let q = config.quality.sample(&mut rng);
        let clean = observe(identity, q, config, &mut rng)?;
        if rng.random::<f64>() < config.degradation_probability {
            // uniform over the seven nonempty subsets
            let picked = DegradationSet::from_bits(rng.random_range(1..8u32))?;
            let mut degraded = clean.clone();
            for kind in picked.kinds() {
                degraded = apply_degradation(&degraded, kind, &model, &mut rng)?;
            }
            if config.degradation_mode == DegradationMode::Augment {
                out.push(clean);
            }
            out.push(degraded);
        } else {
            out.push(clean);
        }
    }
    Ok(out)
}

/// Builds the whole world. Identities are generated in parallel from
/// per-identity seeds, so the result does not depend on the thread count.
pub fn generate_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let basis = identity_basis(config.ambient_dim, config.identity_dim, config.rng_seed);
    let identities = (0..config.num_identities as u64)
        .into_par_iter()
        .map(|id| make_identity(config, &basis, id))
        .collect::<Result<Vec<_>>>()?;
    let per_identity = identities
        .par_iter()
        .map(|identity| identity_images(config, identity))
        .collect::<Result<Vec<_>>>()?;
    let mut records: Vec<ImageRecord> = per_identity.into_iter().flatten().collect();
    for (i, r) in records.iter_mut().enumerate() {
        r.image_id = i as u64;
    }
    Ok(World {
        config: config.clone(),
        basis,
        identities,
        records,
    })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedsim::QualityDistribution;
    use crate::linalg::{cosine_similarity, norm};
    use crate::stats::spearman;

    fn small(config: WorldConfig) -> WorldConfig {
        WorldConfig {
            num_identities: 30,
            images_per_identity: 5,
            ..config
        }
    }

    #[test]
    fn same_config_same_world() {
        let config = small(WorldConfig::default());
        let a = generate_world(&config).unwrap();
        let b = generate_world(&config).unwrap();
        assert_eq!(a.basis, b.basis);
        assert_eq!(a.identities, b.identities);
        assert_eq!(a.records, b.records);
        let other = generate_world(&WorldConfig { rng_seed: 1, ..config }).unwrap();
        assert_ne!(a.records, other.records);
    }

    #[test]
    fn unit_norms_and_prototypes_in_span() {
        let world = generate_world(&small(WorldConfig::default())).unwrap();
        for r in &world.records {
            assert!((norm(&r.embedding) - 1.0).abs() < 1e-12);
        }
        for i in &world.identities {
            assert!((norm(&i.prototype) - 1.0).abs() < 1e-12);
            assert!((world.oracle(&i.prototype).unwrap() - 1.0).abs() < 1e-12);
        }
        // augment mode keeps every clean observation
        assert!(world.records.len() >= 30 * 5);
    }

    #[test]
    fn perfect_quality_reproduces_prototypes() {
        let config = small(WorldConfig {
            quality: QualityDistribution::Fixed(1.0),
            degradation_probability: 0.0,
            ..WorldConfig::default()
        });
        let world = generate_world(&config).unwrap();
        assert_eq!(world.records.len(), 150);
        for r in &world.records {
            assert_eq!(r.embedding, world.identity(r.identity_id).unwrap().prototype);
        }
        for a in &world.records[..5] {
            for b in &world.records[..5] {
                assert_eq!(cosine_similarity(&a.embedding, &b.embedding).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn zero_noise_scale_ignores_quality() {
        let config = small(WorldConfig {
            noise_scale: 0.0,
            degradation_probability: 0.0,
            ..WorldConfig::default()
        });
        let world = generate_world(&config).unwrap();
        assert!(world.records.iter().any(|r| r.quality < 0.5));
        for r in &world.records {
            assert_eq!(r.embedding, world.identity(r.identity_id).unwrap().prototype);
        }
    }

    #[test]
    fn low_quality_cohort_is_less_recognizable() {
        let world = generate_world(&WorldConfig::default()).unwrap();
        let cohort = |keep: &dyn Fn(f64) -> bool| {
            let v: Vec<f64> = world
                .records
                .iter()
                .filter(|r| keep(r.quality))
                .map(|r| world.oracle(&r.embedding).unwrap())
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let low = cohort(&|q| q < 0.3);
        let high = cohort(&|q| q > 0.7);
        assert!(low < high);
        assert!((low - 0.5049735864574313).abs() < 1e-12, "{low}");
        assert!((high - 0.9332157809359446).abs() < 1e-12, "{high}");

        assert!(world.records.len() >= 10_000);
        let q: Vec<f64> = world.records.iter().map(|r| r.quality).collect();
        let oracle: Vec<f64> = world.records.iter().map(|r| world.oracle(&r.embedding).unwrap()).collect();
        let rho = spearman(&q, &oracle);
        assert!(rho >= 0.9, "{rho}");
    }

    #[test]
    fn rebuilt_from_parts() {
        let config = small(WorldConfig::default());
        let world = generate_world(&config).unwrap();
        let latents = world.identities.iter().map(|i| (i.id, i.latent.clone())).collect();
        let rebuilt = World::from_parts(&config, latents, world.records.clone()).unwrap();
        assert_eq!(rebuilt.basis, world.basis);
        assert_eq!(rebuilt.identities, world.identities);
        assert!(World::from_parts(&config, vec![(0, vec![1.0])], vec![]).is_err());
    }

    #[test]
    fn rejects_bad_dimensions() {
        let config = WorldConfig {
            identity_dim: 64,
            ..WorldConfig::default()
        };
        assert!(matches!(generate_world(&config), Err(Error::InvalidConfig(_))));
    }
}
