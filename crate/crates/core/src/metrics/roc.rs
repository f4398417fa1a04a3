use serde::{Deserialize, Serialize};

use super::float_repr;
use crate::{Error, Result};

pub const DEFAULT_FAR_TARGETS: [f64; 5] = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2];

/// Guards `floor(far·N)` against representation error (e.g. `0.29·100`).
const COUNT_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    #[serde(with = "float_repr")]
    pub far_target: f64,
    /// Accept iff `score > threshold`; `-inf` accepts everything.
    #[serde(with = "float_repr")]
    pub threshold: f64,
    #[serde(with = "float_repr")]
    pub achieved_far: f64,
    #[serde(with = "float_repr")]
    pub tar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    pub points: Vec<OperatingPoint>,
    pub n_genuine: usize,
    pub n_impostor: usize,
}

impl RocSummary {
    pub fn tar_at(&self, far_target: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.far_target == far_target)
            .map(|p| p.tar)
    }
}

fn check_scores(scores: &[f64], what: &'static str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Empty(what));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite {what}")));
    }
    Ok(())
}

fn check_far(far_target: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&far_target) {
        return Err(Error::InvalidInput(format!("FAR target {far_target} outside [0, 1]")));
    }
    Ok(())
}

/// Genuine ascending, impostor descending.
struct Sorted {
    genuine_asc: Vec<f64>,
    impostor_desc: Vec<f64>,
}

impl Sorted {
    fn new(genuine: &[f64], impostor: &[f64]) -> Self {
        let mut genuine_asc = genuine.to_vec();
        genuine_asc.sort_by(f64::total_cmp);
        let mut impostor_desc = impostor.to_vec();
        impostor_desc.sort_by(|a, b| b.total_cmp(a));
        Sorted {
            genuine_asc,
            impostor_desc,
        }
    }

    fn point(&self, far_target: f64) -> OperatingPoint {
        let n_imp = self.impostor_desc.len();
        let n_gen = self.genuine_asc.len();
        let allowed = (far_target * n_imp as f64 + COUNT_GUARD).floor() as usize;
        if allowed >= n_imp {
            return OperatingPoint {
                far_target,
                threshold: f64::NEG_INFINITY,
                achieved_far: 1.0,
                tar: 1.0,
            };
        }
        let threshold = self.impostor_desc[allowed];
        let false_accepts = self.impostor_desc.partition_point(|&s| s > threshold);
        let true_accepts = n_gen - self.genuine_asc.partition_point(|&s| s <= threshold);
        OperatingPoint {
            far_target,
            threshold,
            achieved_far: false_accepts as f64 / n_imp as f64,
            tar: true_accepts as f64 / n_gen as f64,
        }
    }
}

/// TAR at the `(k+1)`-th largest impostor score, `k = ⌊far·N_imp⌋`, with
/// strict acceptance `score > t`. The achieved FAR never exceeds the target,
/// ties included.
pub fn tar_at_far(genuine: &[f64], impostor: &[f64], far_target: f64) -> Result<OperatingPoint> {
    check_scores(genuine, "genuine scores")?;
    check_scores(impostor, "impostor scores")?;
    check_far(far_target)?;
    Ok(Sorted::new(genuine, impostor).point(far_target))
}

/// One operating point per FAR target, in the given order.
pub fn roc_summary(genuine: &[f64], impostor: &[f64], far_targets: &[f64]) -> Result<RocSummary> {
    check_scores(genuine, "genuine scores")?;
    check_scores(impostor, "impostor scores")?;
    for &f in far_targets {
        check_far(f)?;
    }
    let sorted = Sorted::new(genuine, impostor);
    Ok(RocSummary {
        points: far_targets.iter().map(|&f| sorted.point(f)).collect(),
        n_genuine: genuine.len(),
        n_impostor: impostor.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GEN: [f64; 3] = [0.9, 0.8, 0.3];
    const IMP: [f64; 3] = [0.4, 0.2, 0.1];

    #[test]
    fn one_third_far() {
        let p = tar_at_far(&GEN, &IMP, 1.0 / 3.0).unwrap();
        assert_eq!(p.threshold, 0.2);
        assert_eq!(p.achieved_far, 1.0 / 3.0);
        assert_eq!(p.tar, 1.0);
    }

    #[test]
    fn zero_far() {
        let p = tar_at_far(&GEN, &IMP, 0.0).unwrap();
        assert_eq!(p.threshold, 0.4);
        assert_eq!(p.achieved_far, 0.0);
        assert_eq!(p.tar, 2.0 / 3.0);
    }

    #[test]
    fn full_far_accepts_everything() {
        let p = tar_at_far(&[0.1, -5.0], &[0.9, 0.95], 1.0).unwrap();
        assert_eq!(p.threshold, f64::NEG_INFINITY);
        assert_eq!(p.tar, 1.0);
    }

    #[test]
    fn ties_never_exceed_the_target() {
        let imp = [0.5; 10];
        let p = tar_at_far(&[0.5, 0.6], &imp, 0.3).unwrap();
        assert_eq!(p.threshold, 0.5);
        assert_eq!(p.achieved_far, 0.0);
        assert_eq!(p.tar, 0.5);
    }

    #[test]
    fn errors() {
        assert!(matches!(tar_at_far(&[], &IMP, 0.1), Err(Error::Empty(_))));
        assert!(matches!(tar_at_far(&GEN, &[], 0.1), Err(Error::Empty(_))));
        assert!(tar_at_far(&GEN, &IMP, 1.5).is_err());
        assert!(tar_at_far(&[f64::NAN], &IMP, 0.1).is_err());
    }

    #[test]
    fn summary_is_monotone_in_far() {
        let genuine: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
        let impostor: Vec<f64> = (0..500).map(|i| (i as f64 * 0.11).cos() - 0.3).collect();
        let s = roc_summary(&genuine, &impostor, &DEFAULT_FAR_TARGETS).unwrap();
        for w in s.points.windows(2) {
            assert!(w[0].tar <= w[1].tar);
            assert!(w[0].achieved_far <= w[0].far_target);
        }
        assert_eq!(s.tar_at(1e-2), Some(s.points[4].tar));
    }

    /// Smallest candidate threshold (−∞ or an impostor score) whose false
    /// accepts stay within the target, found by trying every candidate.
    fn sweep(genuine: &[f64], impostor: &[f64], far: f64) -> (f64, f64, f64) {
        let n = impostor.len() as f64;
        let above = |xs: &[f64], t: f64| xs.iter().filter(|&&x| x > t).count() as f64;
        let mut best = f64::INFINITY;
        for t in std::iter::once(f64::NEG_INFINITY).chain(impostor.iter().cloned()) {
            if above(impostor, t) <= far * n + 1e-9 && t < best {
                best = t;
            }
        }
        (best, above(impostor, best) / n, above(genuine, best) / genuine.len() as f64)
    }

    fn scores(max: usize) -> impl Strategy<Value = Vec<f64>> {
        // a coarse grid makes ties common
        prop::collection::vec((0u32..60).prop_map(|i| i as f64 / 20.0), 1..max)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn matches_the_exhaustive_sweep(
            genuine in scores(500),
            impostor in scores(500),
            far in prop_oneof![Just(0.0), Just(1e-3), Just(1e-2), Just(0.1), 0.0f64..=1.0],
        ) {
            let p = tar_at_far(&genuine, &impostor, far).unwrap();
            let (t, achieved, tar) = sweep(&genuine, &impostor, far);
            prop_assert_eq!(p.threshold, t);
            prop_assert_eq!(p.achieved_far, achieved);
            prop_assert_eq!(p.tar, tar);
            let s = roc_summary(&genuine, &impostor, &DEFAULT_FAR_TARGETS).unwrap();
            for w in s.points.windows(2) {
                prop_assert!(w[0].tar <= w[1].tar);
            }
        }
    }
}
