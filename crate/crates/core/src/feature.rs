//! The generic lane feature `[x, y, theta, c, Sigma]` every input source is
//! converted into and the fusion stage emits.

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose2;

/// Covariances whose condition number exceeds this are rejected at ingest.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneFeature {
    pub pose: Pose2,
    pub confidence: f64,
    /// Over `(x, y, theta)`.
    pub covariance: Matrix3<f64>,
}

impl LaneFeature {
    pub fn new(pose: Pose2, confidence: f64, covariance: Matrix3<f64>) -> Self {
        Self {
            pose,
            confidence,
            covariance,
        }
    }

    /// Diagonal covariance from per-axis standard deviations.
    pub fn with_sigmas(pose: Pose2, confidence: f64, sx: f64, sy: f64, stheta: f64) -> Self {
        Self::new(
            pose,
            confidence,
            Matrix3::from_diagonal(&nalgebra::Vector3::new(sx * sx, sy * sy, stheta * stheta)),
        )
    }

    /// Checks finiteness, the confidence range and that the covariance is a
    /// symmetric positive semi-definite matrix.
    pub fn validate(&self) -> Result<()> {
        if !self.pose.is_finite() {
            return Err(Error::InvalidArgument("non-finite feature pose".into()));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::InvalidArgument(format!(
                "confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        check_psd(&self.covariance)
    }

    /// `Sigma^-1`, refusing singular or badly conditioned covariances.
    pub fn information(&self) -> Result<Matrix3<f64>> {
        information_from_covariance(&self.covariance)
    }
}

pub(crate) fn check_psd(cov: &Matrix3<f64>) -> Result<()> {
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::BadCovariance("non-finite entry".into()));
    }
    let scale = cov.abs().max().max(f64::MIN_POSITIVE);
    if (cov - cov.transpose()).abs().max() > 1e-9 * scale {
        return Err(Error::BadCovariance("not symmetric".into()));
    }
    let eig = SymmetricEigen::new(*cov);
    if eig.eigenvalues.min() < -1e-12 * scale {
        return Err(Error::BadCovariance(format!(
            "negative eigenvalue {}",
            eig.eigenvalues.min()
        )));
    }
    Ok(())
}

/// Inverts a covariance into an information matrix. The matrix must be
/// positive definite with condition number at most [`MAX_CONDITION`].
pub fn information_from_covariance(cov: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    check_psd(cov)?;
    let eig = SymmetricEigen::new(*cov);
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if lo <= 0.0 {
        return Err(Error::BadCovariance("singular".into()));
    }
    if hi / lo > MAX_CONDITION {
        return Err(Error::BadCovariance(format!(
            "condition number {:.3e} too large",
            hi / lo
        )));
    }
    let inv = eig.eigenvectors
        * Matrix3::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v))
        * eig.eigenvectors.transpose();
    Ok((inv + inv.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_information() {
        let f = LaneFeature::with_sigmas(Pose2::IDENTITY, 0.5, 0.5, 0.1, 0.01);
        let info = f.information().unwrap();
        assert!((info[(0, 0)] - 4.0).abs() < 1e-9);
        assert!((info[(1, 1)] - 100.0).abs() < 1e-9);
        assert!((info[(2, 2)] - 1e4).abs() < 1e-6);
    }

    #[test]
    fn rejects_invalid() {
        let mut f = LaneFeature::with_sigmas(Pose2::IDENTITY, 1.2, 0.5, 0.1, 0.01);
        assert!(f.validate().is_err());
        f.confidence = 1.0;
        assert!(f.validate().is_ok());
        f.covariance[(0, 1)] = 0.3;
        assert!(matches!(f.validate(), Err(Error::BadCovariance(_))));
        f.covariance[(1, 0)] = 0.3;
        f.covariance[(0, 0)] = 0.01; // now indefinite
        assert!(f.validate().is_err());
    }

    #[test]
    fn rejects_near_singular() {
        let f = LaneFeature::with_sigmas(Pose2::IDENTITY, 1.0, 1.0, 1.0, 1e-7);
        assert!(f.validate().is_ok());
        assert!(f.information().is_err());
        let g = LaneFeature::with_sigmas(Pose2::IDENTITY, 1.0, 1.0, 1.0, 0.0);
        assert!(g.information().is_err());
    }
}
