//! Robust heading regression for the road course shared by all lanes.

use nalgebra::{Matrix3, Vector3, Vector4};

use crate::config::LaneModelConfig;
use crate::error::{Error, Result};
use crate::feature::LaneFeature;
use crate::geometry::Pose2;

/// Course parameters common to every lane, `theta(x) = theta0 + c0 x + c1 x^2 / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseClothoid {
    pub theta0: f64,
    pub c0: f64,
    pub c1: f64,
    /// Parameter covariance of `[theta0, c0, c1]`.
    pub covariance: Matrix3<f64>,
    /// Indices into the fitted feature slice.
    pub inliers: Vec<usize>,
    pub outliers: Vec<usize>,
}

impl BaseClothoid {
    /// Lateral course relative to the offset: `theta0 x + c0 x^2/2 + c1 x^3/6`.
    pub fn course(&self, x: f64) -> f64 {
        x * (self.theta0 + x * (self.c0 / 2.0 + x * self.c1 / 6.0))
    }

    pub fn heading(&self, x: f64) -> f64 {
        self.theta0 + x * (self.c0 + x * self.c1 / 2.0)
    }

    /// Lateral distance at `x` between the course and its normal offset by
    /// one metre, to second order in the heading.
    pub fn normal_stretch(&self, x: f64) -> f64 {
        let h = self.heading(x);
        1.0 + h * h / 2.0
    }

    /// Normal offset of feature position `(x, y)` from the course, or the
    /// plain lateral offset when `parallel` is false.
    pub fn offset_of(&self, x: f64, y: f64, parallel: bool) -> f64 {
        let lat = y - self.course(x);
        if parallel {
            lat / self.normal_stretch(x)
        } else {
            lat
        }
    }

    /// `[y0, theta0, c0, c1]` of the boundary at normal offset `d`. Without
    /// `parallel` every boundary shares the course parameters.
    pub fn lane_params(&self, d: f64, parallel: bool) -> Vector4<f64> {
        let (t, c0, c1) = (self.theta0, self.c0, self.c1);
        if !parallel {
            return Vector4::new(d, t, c0, c1);
        }
        Vector4::new(
            d * (1.0 + t * t / 2.0),
            t + d * t * c0,
            c0 + d * (c0 * c0 + t * c1),
            c1 + 3.0 * d * c0 * c1,
        )
    }

    /// The same course seen from the ego pose after moving by `motion`
    /// (small-angle approximation); the feature partition is cleared.
    pub fn propagated(&self, motion: &Pose2) -> BaseClothoid {
        let dx = motion.x;
        BaseClothoid {
            theta0: self.heading(dx) - motion.theta,
            c0: self.c0 + self.c1 * dx,
            c1: self.c1,
            covariance: self.covariance,
            inliers: Vec::new(),
            outliers: Vec::new(),
        }
    }
}

struct WeightedFit {
    params: Vector3<f64>,
    covariance: Matrix3<f64>,
}

fn regressors(x: f64) -> Vector3<f64> {
    Vector3::new(1.0, x, x * x / 2.0)
}

fn weighted_fit(features: &[LaneFeature], idx: &[usize]) -> Option<WeightedFit> {
    let wsum: f64 = idx.iter().map(|&i| features[i].confidence).sum();
    if idx.len() < 3 || wsum <= 0.0 {
        return None;
    }
    let wmean = wsum / idx.len() as f64;
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for &i in idx {
        let f = &features[i];
        let a = regressors(f.pose.x);
        let w = f.confidence / wmean;
        ata += a * a.transpose() * w;
        atb += a * (w * f.pose.theta);
    }
    // columns of very different scale; solve in the normalised basis
    let d = Matrix3::from_diagonal(&ata.diagonal().map(|v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 }));
    let scaled = d * ata * d;
    let inv = scaled.try_inverse()?;
    let ata_inv = d * inv * d;
    let params = ata_inv * atb;
    let dof = idx.len().saturating_sub(3).max(1) as f64;
    let rss: f64 = idx
        .iter()
        .map(|&i| {
            let f = &features[i];
            let r = f.pose.theta - regressors(f.pose.x).dot(&params);
            f.confidence / wmean * r * r
        })
        .sum();
    Some(WeightedFit {
        params,
        covariance: ata_inv * (rss / dof),
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Confidence-weighted least squares of feature headings against
/// `[1, x, x^2/2]`, with iterative trimming of features whose robust
/// standardised residual exceeds the configured threshold.
pub fn fit_base_clothoid(features: &[LaneFeature], cfg: &LaneModelConfig) -> Result<BaseClothoid> {
    let n = features.len();
    if n < cfg.min_fit_features.max(3) {
        return Err(Error::NoFit(format!("{n} features, need {}", cfg.min_fit_features.max(3))));
    }
    let (lo, hi) = features.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
        (lo.min(f.pose.x), hi.max(f.pose.x))
    });
    if hi - lo < cfg.min_fit_span {
        return Err(Error::NoFit(format!("x span {:.1} m below {} m", hi - lo, cfg.min_fit_span)));
    }
    let mut inliers: Vec<usize> = (0..n).collect();
    let mut fit = weighted_fit(features, &inliers).ok_or_else(|| Error::NoFit("degenerate design".into()))?;
    for _ in 0..cfg.max_trim_iterations {
        let resid: Vec<f64> = features
            .iter()
            .map(|f| f.pose.theta - regressors(f.pose.x).dot(&fit.params))
            .collect();
        let mut r_in: Vec<f64> = inliers.iter().map(|&i| resid[i]).collect();
        let med = median(&mut r_in);
        let mut dev: Vec<f64> = r_in.iter().map(|r| (r - med).abs()).collect();
        let scale = (1.4826 * median(&mut dev)).max(cfg.residual_scale_floor);
        let next: Vec<usize> = (0..n)
            .filter(|&i| ((resid[i] - med) / scale).abs() <= cfg.outlier_threshold)
            .collect();
        if next == inliers {
            break;
        }
        if (n - next.len()) as f64 > cfg.max_outlier_fraction * n as f64 {
            return Err(Error::NoFit(format!(
                "{} of {n} features flagged as outliers",
                n - next.len()
            )));
        }
        fit = weighted_fit(features, &next).ok_or_else(|| Error::NoFit("degenerate design after trimming".into()))?;
        inliers = next;
    }
    let outliers = (0..n).filter(|i| inliers.binary_search(i).is_err()).collect();
    Ok(BaseClothoid {
        theta0: fit.params[0],
        c0: fit.params[1],
        c1: fit.params[2],
        covariance: fit.covariance,
        inliers,
        outliers,
    })
}
