//! Dense vector helpers shared by the embedding, scoring and fusion code.

use nalgebra::DMatrix;

use crate::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Scale `v` to unit length in place.
pub fn normalize_in_place(v: &mut [f64]) -> Result<()> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(())
}

pub fn normalized(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    normalize_in_place(&mut out)?;
    Ok(out)
}

/// `u·v / (‖u‖‖v‖)`, clamped into `[-1, 1]` against rounding.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// `Bᵀx` for a `d × k` basis stored as a column-major `DMatrix`.
pub fn project(basis: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    basis
        .column_iter()
        .map(|col| dot(col.as_slice(), x))
        .collect()
}

/// Largest principal angle (radians) between the column spans of two
/// orthonormal bases of equal rank.
///
/// Computed as `asin ‖(I − AAᵀ)B‖₂`, which keeps full precision for tiny
/// angles where `acos(σ_min(AᵀB))` would lose it.
pub fn largest_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let residual = b - a * (a.transpose() * b);
    let sigma_max = residual
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max);
    sigma_max.min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        let u = [0.3, -1.2, 2.0];
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        assert_eq!(cosine_similarity(&u, &u).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&u, &neg).unwrap(), -1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn cosine_rejects_zero_and_mismatched() {
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroVector)
        ));
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn principal_angle_of_rotated_line() {
        let theta = 0.3_f64;
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let b = DMatrix::from_column_slice(2, 1, &[theta.cos(), theta.sin()]);
        assert!((largest_principal_angle(&a, &b) - theta).abs() < 1e-12);
        assert!(largest_principal_angle(&a, &a) < 1e-15);
    }
}
