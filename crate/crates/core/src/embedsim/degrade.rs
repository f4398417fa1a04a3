//! Embedding-space degradations standing in for blur and compression.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use super::ImageRecord;
use crate::linalg::normalize_in_place;
use crate::{Error, Result};

/// Degrees of freedom of the heavy-tailed noise.
const TAIL_DOF: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DegradationKind {
    /// Extra isotropic Gaussian noise.
    IsoNoise,
    /// A random subset of coordinates is zeroed.
    CoordMask,
    /// Extra Student-t noise (3 degrees of freedom).
    HeavyTail,
}

impl DegradationKind {
    pub const ALL: [DegradationKind; 3] = [
        DegradationKind::IsoNoise,
        DegradationKind::CoordMask,
        DegradationKind::HeavyTail,
    ];

    pub fn bit(self) -> u32 {
        match self {
            DegradationKind::IsoNoise => 1,
            DegradationKind::CoordMask => 2,
            DegradationKind::HeavyTail => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DegradationKind::IsoNoise => "iso_noise",
            DegradationKind::CoordMask => "coord_mask",
            DegradationKind::HeavyTail => "heavy_tail",
        }
    }
}

impl fmt::Display for DegradationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DegradationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DegradationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownDegradation(s.to_string()))
    }
}

/// Set of applied degradations, stored as the on-disk bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct DegradationSet(u32);

impl DegradationSet {
    pub const EMPTY: DegradationSet = DegradationSet(0);

    pub fn from_bits(bits: u32) -> Result<Self> {
        if bits & !0b111 != 0 {
            return Err(Error::format("degradation bitmask", format!("{bits:#x}")));
        }
        Ok(DegradationSet(bits))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn contains(self, kind: DegradationKind) -> bool {
        self.0 & kind.bit() != 0
    }

    pub fn with(self, kind: DegradationKind) -> Self {
        DegradationSet(self.0 | kind.bit())
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn kinds(self) -> impl Iterator<Item = DegradationKind> {
        DegradationKind::ALL.into_iter().filter(move |k| self.contains(*k))
    }
}

/// Quality decrement per degradation kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decrements {
    pub iso_noise: f64,
    pub coord_mask: f64,
    pub heavy_tail: f64,
}

impl Default for Decrements {
    fn default() -> Self {
        Decrements {
            iso_noise: 0.2,
            coord_mask: 0.3,
            heavy_tail: 0.25,
        }
    }
}

impl Decrements {
    pub fn get(&self, kind: DegradationKind) -> f64 {
        match kind {
            DegradationKind::IsoNoise => self.iso_noise,
            DegradationKind::CoordMask => self.coord_mask,
            DegradationKind::HeavyTail => self.heavy_tail,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for kind in DegradationKind::ALL {
            let v = self.get(kind);
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!(
                    "decrement for {kind} is {v}, expected [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Everything [`apply_degradation`] needs from the world configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationModel {
    pub decrements: Decrements,
    /// `τ_max`
    pub noise_scale: f64,
    pub mask_fraction: f64,
}

/// Returns a degraded copy of `record`.
///
/// The quality drops by the kind's decrement (floored at 0). Noise kinds add
/// just enough fresh noise for the total noise variance to match the new
/// quality, i.e. a standard deviation of `τ_max·sqrt((1−q')² − (1−q)²)`, with
/// per-coordinate variance `1/d` before scaling. `coord_mask` zeroes
/// `round(mask_fraction·d)` coordinates. The result is renormalized.
pub fn apply_degradation<R: Rng + ?Sized>(
    record: &ImageRecord,
    kind: DegradationKind,
    model: &DegradationModel,
    rng: &mut R,
) -> Result<ImageRecord> {
    let d = record.embedding.len();
    let q_old = record.quality;
    let q_new = (q_old - model.decrements.get(kind)).max(0.0);
    let mut e = record.embedding.clone();

    match kind {
        DegradationKind::IsoNoise | DegradationKind::HeavyTail => {
            let extra = ((1.0 - q_new).powi(2) - (1.0 - q_old).powi(2)).max(0.0);
            let sigma = model.noise_scale * extra.sqrt() / (d as f64).sqrt();
            if kind == DegradationKind::IsoNoise {
                for x in e.iter_mut() {
                    let g: f64 = StandardNormal.sample(rng);
                    *x += sigma * g;
                }
            } else {
                let t = StudentT::new(TAIL_DOF).expect("positive dof");
                // unit variance: Var[t_ν] = ν/(ν−2)
                let unit = ((TAIL_DOF - 2.0) / TAIL_DOF).sqrt();
                for x in e.iter_mut() {
                    *x += sigma * unit * t.sample(rng);
                }
            }
        }
        DegradationKind::CoordMask => {
            let count = (model.mask_fraction * d as f64).round() as usize;
            for i in sample(rng, d, count.min(d)).iter() {
                e[i] = 0.0;
            }
        }
    }
    normalize_in_place(&mut e)?;

    Ok(ImageRecord {
        image_id: record.image_id,
        identity_id: record.identity_id,
        quality: q_new,
        degradations: record.degradations.with(kind),
        embedding: e,
    })
}
