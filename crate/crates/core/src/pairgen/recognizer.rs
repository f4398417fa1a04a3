use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use super::FoldRecords;
use crate::linalg::project;
use crate::rng::stream;
use crate::{Error, Result};

/// Stop when the Frobenius change of the iterate drops below this.
pub const SUBSPACE_TOLERANCE: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 500;
/// Ritz values below this fraction of the largest count as zero.
const RANK_TOLERANCE: f64 = 1e-12;

/// Rank-`k` subspace recognizer fitted on one fold.
#[derive(Debug, Clone)]
pub struct Recognizer {
    /// Orthonormal `d × k` basis `Â`.
    pub basis: DMatrix<f64>,
    pub fold: u8,
    /// Ritz values `diag(ÂᵀMÂ)` of the fold's second-moment matrix, descending.
    pub eigenvalues: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl Recognizer {
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// `Âᵀe`
    pub fn project(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        if embedding.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: embedding.len(),
            });
        }
        Ok(project(&self.basis, embedding))
    }
}

/// Fits `Â` as the top-`k` eigenspace of `M = (1/n) Σ e eᵀ` by orthogonal
/// iteration (`Q ← qr(M·Q)`), from a fixed seeded start.
pub fn fit_recognizer(fold: &FoldRecords<'_>, k: usize) -> Result<Recognizer> {
    let n = fold.records.len();
    if k == 0 {
        return Err(Error::InvalidConfig("recognizer rank must be positive".into()));
    }
    if n < k {
        return Err(Error::RankDeficient {
            requested: k,
            found: n,
        });
    }
    let d = fold.records[0].embedding.len();
    if k > d {
        return Err(Error::RankDeficient {
            requested: k,
            found: d,
        });
    }

    let mut moment = DMatrix::<f64>::zeros(d, d);
    for r in &fold.records {
        if r.embedding.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: r.embedding.len(),
            });
        }
        let e = nalgebra::DVector::from_column_slice(&r.embedding);
        moment.ger(1.0, &e, &e, 1.0);
    }
    moment /= n as f64;

    let mut rng = stream(0x5EED, "recognizer-start");
    let start = DMatrix::from_fn(d, k, |_, _| StandardNormal.sample(&mut rng));
    let mut q = start.qr().q();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let next = (&moment * &q).qr().q();
        // residual of `next` outside span(q)
        let change = (&next - &q * (q.transpose() * &next)).norm();
        q = next;
        if change < SUBSPACE_TOLERANCE {
            converged = true;
            break;
        }
    }

    let ritz = q.transpose() * &moment * &q;
    let mut eigenvalues: Vec<f64> = ritz.diagonal().iter().cloned().collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let top = eigenvalues[0].max(0.0);
    let found = eigenvalues
        .iter()
        .filter(|&&l| l > RANK_TOLERANCE * top && top > 0.0)
        .count();
    if found < k {
        return Err(Error::RankDeficient { requested: k, found });
    }

    Ok(Recognizer {
        basis: q,
        fold: fold.fold,
        eigenvalues,
        iterations,
        converged,
    })
}
