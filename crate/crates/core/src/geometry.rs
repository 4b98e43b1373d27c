//! Planar poses in the vehicle coordinate system (x forward, y left) and the
//! ego-motion model used for odometry.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite angle {a}")));
    }
    Ok(wrap(a))
}

/// Infallible variant for internal use; NaN stays NaN.
#[inline]
pub(crate) fn wrap(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// A 2-D pose `[x, y, theta]`, heading kept in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 {
        x: 0.0,
        y: 0.0,
        theta: 0.0,
    };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap(theta),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    /// `self ⊕ other`: `other` (given in the frame of `self`) expressed in the
    /// frame `self` is expressed in.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )
    }

    /// `self⁻¹ ⊕ other`, the pose of `other` seen from `self`.
    pub fn between(&self, other: &Pose2) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        Pose2::new(c * dx + s * dy, -s * dx + c * dy, other.theta - self.theta)
    }

    pub fn inverse(&self) -> Pose2 {
        self.between(&Pose2::IDENTITY)
    }

    /// Maps a point from this pose's local frame into the parent frame.
    pub fn transform_point(&self, px: f64, py: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (self.x + c * px - s * py, self.y + s * px + c * py)
    }

    /// Maps a point from the parent frame into this pose's local frame.
    pub fn inverse_transform_point(&self, px: f64, py: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        let dx = px - self.x;
        let dy = py - self.y;
        (c * dx + s * dy, -s * dx + c * dy)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }
}

/// Free-function forms matching the operation names used across the crate.
pub fn pose_compose(a: &Pose2, b: &Pose2) -> Pose2 {
    a.compose(b)
}

pub fn pose_between(a: &Pose2, b: &Pose2) -> Pose2 {
    a.between(b)
}

/// Ego control input `u = [yaw_rate, speed]` applied for `dt` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlVector {
    pub yaw_rate: f64,
    pub speed: f64,
    pub dt: f64,
}

impl ControlVector {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "speed must be >= 0, got {}",
                self.speed
            )));
        }
        if !self.yaw_rate.is_finite() {
            return Err(Error::InvalidArgument("non-finite yaw rate".into()));
        }
        Ok(())
    }

    /// Pose of the new vehicle frame in the old one under a constant turn
    /// rate and velocity model.
    pub fn motion_delta(&self) -> Pose2 {
        let dtheta = self.yaw_rate * self.dt;
        let dist = self.speed * self.dt;
        if dtheta.abs() < 1e-9 {
            // second-order expansion avoids 0/0
            return Pose2::new(dist * (1.0 - dtheta * dtheta / 6.0), dist * dtheta / 2.0, dtheta);
        }
        let r = self.speed / self.yaw_rate;
        Pose2::new(r * dtheta.sin(), r * (1.0 - dtheta.cos()), dtheta)
    }

    /// Control vector whose constant-turn-rate arc ends at the position of
    /// `delta` with its heading change. Exact when `delta` lies on such an arc.
    pub fn from_motion_delta(delta: &Pose2, dt: f64) -> ControlVector {
        let dtheta = delta.theta;
        let chord = delta.x.hypot(delta.y);
        let half = dtheta / 2.0;
        let arc = if half.abs() < 1e-9 {
            chord * (1.0 + half * half / 6.0)
        } else {
            chord * half / half.sin()
        };
        ControlVector {
            yaw_rate: dtheta / dt,
            speed: arc / dt,
            dt,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-12;

    fn close(a: &Pose2, b: &Pose2, tol: f64) -> bool {
        (a.x - b.x).abs() < tol && (a.y - b.y).abs() < tol && wrap(a.theta - b.theta).abs() < tol
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_angle(0.0).unwrap(), 0.0);
        assert!((normalize_angle(3.0 * PI).unwrap() - PI).abs() < EPS);
        assert_eq!(normalize_angle(-PI).unwrap(), PI);
        assert!(normalize_angle(f64::NAN).is_err());
        assert!(normalize_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn compose_examples() {
        let p = Pose2::IDENTITY.compose(&Pose2::new(5.0, 1.0, 0.1));
        assert!(close(&p, &Pose2::new(5.0, 1.0, 0.1), EPS));
        let q = Pose2::new(1.0, 0.0, PI / 2.0).compose(&Pose2::new(1.0, 0.0, 0.0));
        assert!(close(&q, &Pose2::new(1.0, 1.0, PI / 2.0), EPS));
    }

    #[test]
    fn between_examples() {
        let z = Pose2::IDENTITY.between(&Pose2::new(2.0, 3.0, 0.2));
        assert!(close(&z, &Pose2::new(2.0, 3.0, 0.2), EPS));
        let p = Pose2::new(-4.0, 7.5, 2.9);
        assert!(close(&p.between(&p), &Pose2::IDENTITY, EPS));
    }

    #[test]
    fn straight_motion_delta() {
        let u = ControlVector {
            yaw_rate: 0.0,
            speed: 30.0,
            dt: 0.1,
        };
        let d = u.motion_delta();
        assert!(close(&d, &Pose2::new(3.0, 0.0, 0.0), EPS));
    }

    #[test]
    fn turning_motion_delta_stays_on_arc() {
        let u = ControlVector {
            yaw_rate: 0.2,
            speed: 20.0,
            dt: 0.5,
        };
        let d = u.motion_delta();
        // radius 100 m circle centred at (0, 100)
        assert!(((d.x).powi(2) + (d.y - 100.0).powi(2)).sqrt() - 100.0 < 1e-9);
        assert!((d.theta - 0.1).abs() < EPS);
        let back = ControlVector::from_motion_delta(&d, 0.5);
        assert!((back.speed - 20.0).abs() < 1e-9);
        assert!((back.yaw_rate - 0.2).abs() < 1e-12);
    }

    #[test]
    fn control_validation() {
        let mut u = ControlVector {
            yaw_rate: 0.0,
            speed: 1.0,
            dt: 0.0,
        };
        assert!(u.validate().is_err());
        u.dt = 0.1;
        u.speed = -1.0;
        assert!(u.validate().is_err());
    }
}
