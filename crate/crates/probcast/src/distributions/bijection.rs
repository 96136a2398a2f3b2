//! Monotonically increasing bijections for transformed distributions.
//!
//! `forward` maps base space to data space; a transformed distribution
//! samples `forward(x)` with `x` drawn from its base. Decreasing maps are
//! rejected at construction. `Log` is the λ = 0 case of `BoxCox`: data is
//! the exponential of the base variable (the log-transform of the data
//! lands in the base domain).

use crate::error::{Error, Result};
use crate::transform::{boxcox_forward, boxcox_inverse};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bijection {
    /// `forward(x) = a·x + b` with `a > 0`.
    Affine { a: f64, b: f64 },
    /// `forward(x) = exp(x)`; inverse is the log-transform of the data.
    Log,
    /// `forward(x) = (λx + 1)^(1/λ)`; inverse is the Box-Cox transform.
    BoxCox { lambda: f64 },
}

impl Bijection {
    pub fn affine(a: f64, b: f64) -> Result<Self> {
        if a == 0.0 || !a.is_finite() {
            return Err(Error::validation("affine bijection requires finite non-zero slope"));
        }
        if a < 0.0 {
            return Err(Error::validation("decreasing bijections are not supported (slope must be > 0)"));
        }
        if !b.is_finite() {
            return Err(Error::validation("affine bijection requires finite offset"));
        }
        Ok(Bijection::Affine { a, b })
    }

    pub fn boxcox(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(Error::validation("box-cox bijection requires finite lambda"));
        }
        Ok(Bijection::BoxCox { lambda })
    }

    /// Base space → data space.
    pub fn forward(&self, x: f64) -> Result<f64> {
        match self {
            Bijection::Affine { a, b } => Ok(a * x + b),
            Bijection::Log => Ok(x.exp()),
            Bijection::BoxCox { lambda } => boxcox_inverse(x, *lambda),
        }
    }

    /// Data space → base space.
    pub fn inverse(&self, z: f64) -> Result<f64> {
        match self {
            Bijection::Affine { a, b } => Ok((z - b) / a),
            Bijection::Log => {
                if z <= 0.0 {
                    Err(Error::domain(format!("log bijection inverse requires positive input, got {z}")))
                } else {
                    Ok(z.ln())
                }
            }
            Bijection::BoxCox { lambda } => boxcox_forward(z, *lambda),
        }
    }

    /// `ln d forward / dx` at `x`.
    pub fn log_deriv_forward(&self, x: f64) -> Result<f64> {
        match self {
            Bijection::Affine { a, .. } => Ok(a.ln()),
            Bijection::Log => Ok(x),
            Bijection::BoxCox { lambda } => {
                // d/dx (λx+1)^(1/λ) = (λx+1)^(1/λ - 1)
                let base = lambda * x + 1.0;
                if *lambda == 0.0 {
                    Ok(x)
                } else if base <= 0.0 {
                    Err(Error::domain(format!("box-cox derivative undefined at {x} for lambda={lambda}")))
                } else {
                    Ok((1.0 / lambda - 1.0) * base.ln())
                }
            }
        }
    }

    /// Data-space interval this bijection maps onto. Box-Cox maps onto the
    /// positive half-line for every λ.
    pub fn range(&self) -> (f64, f64) {
        match self {
            Bijection::Affine { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Bijection::Log | Bijection::BoxCox { .. } => (0.0, f64::INFINITY),
        }
    }
}
