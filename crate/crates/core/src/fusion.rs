//! Set-to-set verification with confidence-weighted descriptor fusion.
//!
//! A set descriptor is `v = Σ sᵢ·vᵢ / Σ sᵢ`. It is not renormalized; the
//! downstream cosine is scale-invariant.

use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedsim::{observe, DegradationSet, ImageRecord, World, UNIT_TOLERANCE};
use crate::linalg::{cosine_similarity, norm};
use crate::metrics::{roc_summary, sample_labelled_pairs, ProtocolConfig, ProtocolPair, RocSummary};
use crate::pairgen::Recognizer;
use crate::rng::indexed_stream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Every member weighs 1: plain feature averaging.
    Uniform,
    Confidence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceSet {
    pub set_id: u64,
    pub identity_id: u64,
    pub members: Vec<u64>,
    pub embeddings: Vec<Vec<f64>>,
    pub confidences: Vec<f64>,
}

impl FaceSet {
    pub fn new(
        set_id: u64,
        identity_id: u64,
        members: Vec<u64>,
        embeddings: Vec<Vec<f64>>,
        confidences: Vec<f64>,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Empty("face set"));
        }
        if embeddings.len() != members.len() || confidences.len() != members.len() {
            return Err(Error::InvalidInput(format!(
                "set {set_id}: {} members, {} embeddings, {} confidences",
                members.len(),
                embeddings.len(),
                confidences.len()
            )));
        }
        let dim = embeddings[0].len();
        for e in &embeddings {
            if e.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: e.len(),
                });
            }
            let n = norm(e);
            if (n - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::NonUnitEmbedding { norm: n });
            }
        }
        if confidences.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::InvalidInput(format!("set {set_id}: confidence outside [0, 1]")));
        }
        Ok(FaceSet {
            set_id,
            identity_id,
            members,
            embeddings,
            confidences,
        })
    }

    /// Members taken from records, one confidence per record.
    pub fn from_records(set_id: u64, records: &[ImageRecord], confidences: Vec<f64>) -> Result<Self> {
        let identity_id = records.first().ok_or(Error::Empty("face set"))?.identity_id;
        if records.iter().any(|r| r.identity_id != identity_id) {
            return Err(Error::InvalidInput(format!("set {set_id} mixes identities")));
        }
        FaceSet::new(
            set_id,
            identity_id,
            records.iter().map(|r| r.image_id).collect(),
            records.iter().map(|r| r.embedding.clone()).collect(),
            confidences,
        )
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings[0].len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetDescriptor {
    pub vector: Vec<f64>,
    /// `Σ sᵢ` under the weighting used.
    pub weight_sum: f64,
}

/// `v = Σ sᵢ·vᵢ / Σ sᵢ`. The weights are normalized before summing so a
/// single member is reproduced exactly.
pub fn fuse(set: &FaceSet, weighting: Weighting) -> Result<SetDescriptor> {
    let uniform;
    let weights: &[f64] = match weighting {
        Weighting::Uniform => {
            uniform = vec![1.0; set.len()];
            &uniform
        }
        Weighting::Confidence => &set.confidences,
    };
    let weight_sum: f64 = weights.iter().sum();
    if !(weight_sum > 0.0) {
        return Err(Error::InvalidInput(format!(
            "set {}: confidences sum to {weight_sum}",
            set.set_id
        )));
    }
    let mut vector = vec![0.0; set.dim()];
    for (w, e) in weights.iter().zip(&set.embeddings) {
        let w = w / weight_sum;
        for (acc, x) in vector.iter_mut().zip(e) {
            *acc += w * x;
        }
    }
    Ok(SetDescriptor { vector, weight_sum })
}

/// Cosine of recognizer-projected fused descriptors for each set pair,
/// summarized at the given FAR targets.
pub fn set_verification(
    sets: &[FaceSet],
    pairs: &[ProtocolPair],
    recognizer: &Recognizer,
    weighting: Weighting,
    far_targets: &[f64],
) -> Result<RocSummary> {
    if pairs.is_empty() {
        return Err(Error::Empty("set pairs"));
    }
    let projected = sets
        .par_iter()
        .map(|s| recognizer.project(&fuse(s, weighting)?.vector))
        .collect::<Result<Vec<_>>>()?;
    let scores = pairs
        .par_iter()
        .map(|p| Ok((p.genuine, cosine_similarity(&projected[p.a], &projected[p.b])?)))
        .collect::<Result<Vec<_>>>()?;
    let genuine: Vec<f64> = scores.iter().filter(|(g, _)| *g).map(|(_, s)| *s).collect();
    let impostor: Vec<f64> = scores.iter().filter(|(g, _)| !*g).map(|(_, s)| *s).collect();
    roc_summary(&genuine, &impostor, far_targets)
}

/// Composition of the synthetic set benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetConfig {
    pub sets_per_identity: usize,
    /// Set sizes are uniform on `min_size..=max_size`.
    pub min_size: usize,
    pub max_size: usize,
    /// `ceil(fraction·n)` members get quality uniform on `[0, low_quality_max)`.
    pub low_quality_fraction: f64,
    pub low_quality_max: f64,
    /// Cap on sampled impostor set pairs; all genuine set pairs are used.
    pub impostor_pairs: usize,
    pub seed: u64,
}

impl Default for SetConfig {
    fn default() -> Self {
        SetConfig {
            sets_per_identity: 4,
            min_size: 2,
            max_size: 16,
            low_quality_fraction: 0.3,
            low_quality_max: 0.2,
            impostor_pairs: 100_000,
            seed: 0,
        }
    }
}

impl SetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("sets: {m}")));
        if self.sets_per_identity == 0 {
            return bad("sets_per_identity must be positive");
        }
        if self.min_size == 0 || self.min_size > self.max_size {
            return bad("need 1 <= min_size <= max_size");
        }
        if !(0.0..=1.0).contains(&self.low_quality_fraction) {
            return bad("low_quality_fraction must lie in [0, 1]");
        }
        if !(self.low_quality_max > 0.0 && self.low_quality_max <= 1.0) {
            return bad("low_quality_max must lie in (0, 1]");
        }
        Ok(())
    }
}

/// A generated set before confidences are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub set_id: u64,
    pub identity_id: u64,
    pub records: Vec<ImageRecord>,
}

/// Fresh clean observations of the given identities, grouped into sets.
/// Image ids continue from `first_image_id`; set ids count from 0 in
/// identity order.
pub fn generate_sets(
    world: &World,
    identity_ids: &[u64],
    config: &SetConfig,
    first_image_id: u64,
) -> Result<Vec<SyntheticSet>> {
    config.validate()?;
    let per_identity = identity_ids
        .par_iter()
        .map(|&id| {
            let identity = world
                .identity(id)
                .ok_or_else(|| Error::InvalidInput(format!("unknown identity {id}")))?;
            let mut rng = indexed_stream(config.seed, "sets", id);
            let mut sets = Vec::with_capacity(config.sets_per_identity);
            for _ in 0..config.sets_per_identity {
                let size = rng.random_range(config.min_size..=config.max_size);
                let low = ((config.low_quality_fraction * size as f64) - 1e-9).ceil().max(0.0) as usize;
                let mut members = Vec::with_capacity(size);
                for m in 0..size {
                    let q = if m < low {
                        rng.random_range(0.0..config.low_quality_max)
                    } else {
                        world.config.quality.sample(&mut rng)
                    };
                    members.push(observe(identity, q, &world.config, &mut rng)?);
                }
                sets.push(members);
            }
            Ok(sets)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::new();
    let mut next_image = first_image_id;
    for (sets, &identity_id) in per_identity.into_iter().zip(identity_ids) {
        for mut records in sets {
            for r in &mut records {
                r.image_id = next_image;
                r.degradations = DegradationSet::EMPTY;
                next_image += 1;
            }
            out.push(SyntheticSet {
                set_id: out.len() as u64,
                identity_id,
                records,
            });
        }
    }
    Ok(out)
}

/// All genuine set pairs plus up to `config.impostor_pairs` impostor pairs.
pub fn set_pairs(sets: &[SyntheticSet], config: &SetConfig) -> Result<Vec<ProtocolPair>> {
    let labels: Vec<u64> = sets.iter().map(|s| s.identity_id).collect();
    sample_labelled_pairs(
        &labels,
        &ProtocolConfig {
            genuine_pairs: usize::MAX,
            impostor_pairs: config.impostor_pairs,
            seed: config.seed,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub set_id: u64,
    pub identity: u64,
    pub image_id: u64,
}

pub fn write_set_manifest<W: Write>(writer: W, sets: &[SyntheticSet]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(["set_id", "identity", "image_id"])?;
    for s in sets {
        for r in &s.records {
            w.serialize(ManifestRow {
                set_id: s.set_id,
                identity: s.identity_id,
                image_id: r.image_id,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_set_manifest<R: Read>(reader: R) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| Ok(row?)).collect()
}

/// Fused descriptors as store records: `image_id` holds the set id and the
/// quality slot holds the weight sum.
pub fn descriptor_records(sets: &[FaceSet], weighting: Weighting) -> Result<Vec<ImageRecord>> {
    sets.iter()
        .map(|s| {
            let d = fuse(s, weighting)?;
            Ok(ImageRecord {
                image_id: s.set_id,
                identity_id: s.identity_id,
                quality: d.weight_sum,
                degradations: DegradationSet::EMPTY,
                embedding: d.vector,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedsim::{generate_world, oracle_confidence, WorldConfig};
    use crate::linalg::normalized;
    use crate::rng::stream;
    use rand::seq::SliceRandom;
    use rand_distr::{Distribution, StandardNormal};

    fn random_unit<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect();
        normalized(&v).unwrap()
    }

    fn random_set<R: Rng>(rng: &mut R, n: usize, d: usize) -> FaceSet {
        let embeddings: Vec<_> = (0..n).map(|_| random_unit(rng, d)).collect();
        let confidences: Vec<_> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        FaceSet::new(0, 0, (0..n as u64).collect(), embeddings, confidences).unwrap()
    }

    #[test]
    fn equal_weights_give_the_mean() {
        let mut rng = stream(1, "t");
        let mut set = random_set(&mut rng, 5, 6);
        set.confidences = vec![0.3; 5];
        let fused = fuse(&set, Weighting::Confidence).unwrap();
        let uniform = fuse(&set, Weighting::Uniform).unwrap();
        for i in 0..6 {
            let mean = set.embeddings.iter().map(|e| e[i]).sum::<f64>() / 5.0;
            assert!((fused.vector[i] - mean).abs() < 1e-15);
            assert!((uniform.vector[i] - mean).abs() < 1e-15);
        }
        assert_eq!(uniform.weight_sum, 5.0);
    }

    #[test]
    fn dominant_weight() {
        let mut rng = stream(2, "t");
        let mut set = random_set(&mut rng, 3, 4);
        for eps in [1e-3, 1e-6, 1e-9] {
            set.confidences = vec![1.0, eps, eps];
            let v = fuse(&set, Weighting::Confidence).unwrap().vector;
            let gap = v.iter().zip(&set.embeddings[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(gap <= 4.0 * eps);
        }
    }

    #[test]
    fn weight_scaling_invariance() {
        let mut rng = stream(3, "t");
        let set = random_set(&mut rng, 7, 8);
        let base = fuse(&set, Weighting::Confidence).unwrap().vector;
        for c in [0.5, 0.01, 0.9] {
            let mut scaled = set.clone();
            scaled.confidences.iter_mut().for_each(|s| *s *= c);
            let v = fuse(&scaled, Weighting::Confidence).unwrap().vector;
            for (a, b) in base.iter().zip(&v) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singleton_and_identical_copies() {
        let mut rng = stream(4, "t");
        let e = random_unit(&mut rng, 5);
        let single = FaceSet::new(0, 0, vec![0], vec![e.clone()], vec![0.37]).unwrap();
        for w in [Weighting::Uniform, Weighting::Confidence] {
            assert_eq!(fuse(&single, w).unwrap().vector, e);
        }
        let copies = FaceSet::new(1, 0, vec![0, 1, 2, 3], vec![e.clone(); 4], vec![0.1, 0.2, 0.5, 0.25]).unwrap();
        for w in [Weighting::Uniform, Weighting::Confidence] {
            let v = fuse(&copies, w).unwrap().vector;
            for (a, b) in v.iter().zip(&e) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn permutation_invariance_and_hull() {
        let mut rng = stream(5, "t");
        for _ in 0..50 {
            let n = rng.random_range(1..10);
            let set = random_set(&mut rng, n, 6);
            let base = fuse(&set, Weighting::Confidence).unwrap().vector;
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let permuted = FaceSet::new(
                0,
                0,
                order.iter().map(|&i| set.members[i]).collect(),
                order.iter().map(|&i| set.embeddings[i].clone()).collect(),
                order.iter().map(|&i| set.confidences[i]).collect(),
            )
            .unwrap();
            let v = fuse(&permuted, Weighting::Confidence).unwrap().vector;
            for (i, (a, b)) in base.iter().zip(&v).enumerate() {
                assert!((a - b).abs() < 1e-12);
                // a convex combination stays within each coordinate's range
                let lo = set.embeddings.iter().map(|e| e[i]).fold(f64::INFINITY, f64::min);
                let hi = set.embeddings.iter().map(|e| e[i]).fold(f64::NEG_INFINITY, f64::max);
                assert!(a >= &(lo - 1e-12) && a <= &(hi + 1e-12));
            }
        }
    }

    #[test]
    fn zero_weight_sum_is_an_error() {
        let mut rng = stream(6, "t");
        let mut set = random_set(&mut rng, 3, 4);
        set.confidences = vec![0.0; 3];
        assert!(fuse(&set, Weighting::Confidence).is_err());
        assert!(fuse(&set, Weighting::Uniform).is_ok());
    }

    #[test]
    fn construction_checks() {
        assert!(FaceSet::new(0, 0, vec![], vec![], vec![]).is_err());
        assert!(FaceSet::new(0, 0, vec![0], vec![vec![2.0, 0.0]], vec![0.5]).is_err());
        assert!(FaceSet::new(0, 0, vec![0], vec![vec![1.0, 0.0]], vec![1.5]).is_err());
    }

    #[test]
    fn oracle_weighting_moves_towards_the_prototype() {
        let config = WorldConfig {
            num_identities: 50,
            images_per_identity: 1,
            ..WorldConfig::default()
        };
        let world = generate_world(&config).unwrap();
        let ids: Vec<u64> = (0..50).collect();
        let sets = generate_sets(&world, &ids, &SetConfig::default(), 1_000_000).unwrap();
        let mut better = 0;
        let mut eligible = 0;
        for s in &sets {
            if !s.records.iter().any(|r| r.quality < 0.2) {
                continue;
            }
            eligible += 1;
            let conf: Vec<f64> = s.records.iter().map(|r| world.oracle(&r.embedding).unwrap()).collect();
            let set = FaceSet::from_records(s.set_id, &s.records, conf).unwrap();
            let proto = &world.identity(s.identity_id).unwrap().prototype;
            let weighted = cosine_similarity(&fuse(&set, Weighting::Confidence).unwrap().vector, proto).unwrap();
            let uniform = cosine_similarity(&fuse(&set, Weighting::Uniform).unwrap().vector, proto).unwrap();
            if weighted >= uniform {
                better += 1;
            }
        }
        assert_eq!(eligible, sets.len());
        assert!(better as f64 >= 0.95 * eligible as f64, "{better}/{eligible}");
        // oracle confidences of clean members are never out of range
        let r = &sets[0].records[0];
        assert!(oracle_confidence(&r.embedding, &world.basis).unwrap() <= 1.0);
    }

    #[test]
    fn generated_sets_have_the_declared_shape() {
        let config = WorldConfig {
            num_identities: 10,
            images_per_identity: 1,
            ..WorldConfig::default()
        };
        let world = generate_world(&config).unwrap();
        let ids: Vec<u64> = (5..10).collect();
        let set_config = SetConfig::default();
        let sets = generate_sets(&world, &ids, &set_config, 100).unwrap();
        assert_eq!(sets.len(), 20);
        let mut next = 100;
        for (i, s) in sets.iter().enumerate() {
            assert_eq!(s.set_id, i as u64);
            assert!((2..=16).contains(&s.records.len()));
            let low = s.records.iter().filter(|r| r.quality < 0.2).count();
            assert!(low as f64 >= 0.3 * s.records.len() as f64);
            for r in &s.records {
                assert_eq!(r.image_id, next);
                assert_eq!(r.identity_id, s.identity_id);
                next += 1;
            }
        }
        assert_eq!(sets, generate_sets(&world, &ids, &set_config, 100).unwrap());
        let pairs = set_pairs(&sets, &set_config).unwrap();
        assert_eq!(pairs.iter().filter(|p| p.genuine).count(), 5 * 6);
        assert_eq!(pairs.iter().filter(|p| !p.genuine).count(), 190 - 30);
    }

    #[test]
    fn manifest_round_trip() {
        let config = WorldConfig {
            num_identities: 3,
            images_per_identity: 1,
            ..WorldConfig::default()
        };
        let world = generate_world(&config).unwrap();
        let sets = generate_sets(&world, &[0, 1, 2], &SetConfig::default(), 0).unwrap();
        let mut first = Vec::new();
        write_set_manifest(&mut first, &sets).unwrap();
        let rows = read_set_manifest(first.as_slice()).unwrap();
        assert_eq!(rows.len(), sets.iter().map(|s| s.records.len()).sum::<usize>());
        assert!(String::from_utf8(first).unwrap().starts_with("set_id,identity,image_id\n"));
    }
}
