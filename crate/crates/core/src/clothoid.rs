//! Third-order polynomial clothoid approximation
//! `y(x) = y0 + theta0 x + c0 x^2/2 + c1 x^3/6`, valid for small headings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest initial heading for which the polynomial form is accepted (15 deg).
pub const MAX_HEADING: f64 = 15.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clothoid {
    pub y0: f64,
    pub theta0: f64,
    pub c0: f64,
    pub c1: f64,
    pub x_min: f64,
    pub x_max: f64,
}

impl Clothoid {
    pub fn new(y0: f64, theta0: f64, c0: f64, c1: f64, x_min: f64, x_max: f64) -> Result<Self> {
        let c = Self {
            y0,
            theta0,
            c0,
            c1,
            x_min,
            x_max,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.y0, self.theta0, self.c0, self.c1, self.x_min, self.x_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("non-finite clothoid parameter".into()));
        }
        if self.x_min >= self.x_max {
            return Err(Error::InvalidArgument(format!(
                "empty validity interval [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        if self.theta0.abs() > MAX_HEADING {
            return Err(Error::InvalidArgument(format!(
                "heading {} rad exceeds the small-angle bound",
                self.theta0
            )));
        }
        Ok(())
    }

    fn check(&self, x: f64) -> Result<()> {
        if x < self.x_min || x > self.x_max || x.is_nan() {
            return Err(Error::OutOfRange {
                x,
                min: self.x_min,
                max: self.x_max,
            });
        }
        Ok(())
    }

    /// Lateral offset at `x`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(self.y_at(x))
    }

    /// Heading (first derivative) at `x`.
    pub fn heading(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(self.heading_at(x))
    }

    /// Polynomial value without the interval check.
    #[inline]
    pub fn y_at(&self, x: f64) -> f64 {
        self.y0 + x * (self.theta0 + x * (self.c0 / 2.0 + x * self.c1 / 6.0))
    }

    #[inline]
    pub fn heading_at(&self, x: f64) -> f64 {
        self.theta0 + x * (self.c0 + x * self.c1 / 2.0)
    }
}

pub fn clothoid_eval(c: &Clothoid, x: f64) -> Result<f64> {
    c.eval(x)
}

pub fn clothoid_heading(c: &Clothoid, x: f64) -> Result<f64> {
    c.heading(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cl(y0: f64, theta0: f64, c0: f64, c1: f64) -> Clothoid {
        Clothoid::new(y0, theta0, c0, c1, 0.0, 200.0).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(cl(0.0, 0.0, 0.0, 0.0).eval(50.0).unwrap(), 0.0);
        assert_eq!(cl(1.75, 0.0, 0.0, 0.0).eval(100.0).unwrap(), 1.75);
        assert!((cl(0.0, 0.01, 1e-4, 0.0).eval(100.0).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn heading_examples() {
        assert_eq!(cl(0.0, 0.0, 0.0, 0.0).heading(73.0).unwrap(), 0.0);
        assert!((cl(0.0, 0.0, 1e-3, 0.0).heading(50.0).unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn heading_matches_finite_difference() {
        let c = cl(0.3, 0.02, -4e-4, 3e-6);
        let h = 1e-4;
        for &x in &[1.0, 10.0, 55.0, 120.0] {
            let fd = (c.eval(x + h).unwrap() - c.eval(x - h).unwrap()) / (2.0 * h);
            let an = c.heading(x).unwrap();
            assert!((fd - an).abs() < 1e-6, "x={x}: {fd} vs {an}");
        }
    }

    #[test]
    fn out_of_range() {
        let c = Clothoid::new(0.0, 0.0, 0.0, 0.0, 0.0, 90.0).unwrap();
        assert!(matches!(c.eval(90.5), Err(Error::OutOfRange { .. })));
        assert!(matches!(c.heading(-0.1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(Clothoid::new(0.0, 0.0, 0.0, 0.0, 5.0, 5.0).is_err());
        assert!(Clothoid::new(0.0, 0.3, 0.0, 0.0, 0.0, 5.0).is_err());
        assert!(Clothoid::new(0.0, 0.26, 0.0, 0.0, 0.0, 5.0).is_ok());
    }
}
