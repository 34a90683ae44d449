use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("Renyi order must be a finite real > 1, got {0}")]
pub struct InvalidOrder(pub f64);

/// Order λ > 1 of a Rényi divergence.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RenyiOrder(f64);

impl RenyiOrder {
    /// λ = 1.1, the order used for all reported privacy numbers.
    pub const DEFAULT: RenyiOrder = RenyiOrder(1.1);

    pub fn new(lambda: f64) -> Result<Self, InvalidOrder> {
        if lambda.is_finite() && lambda > 1.0 {
            Ok(Self(lambda))
        } else {
            Err(InvalidOrder(lambda))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `sqrt((λ − 1) / λ)`, the ratio below which a posterior standard
    /// deviation makes the divergence undefined.
    pub fn sigma_floor_ratio(self) -> f64 {
        ((self.0 - 1.0) / self.0).sqrt()
    }
}

impl Default for RenyiOrder {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl TryFrom<f64> for RenyiOrder {
    type Error = InvalidOrder;

    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<RenyiOrder> for f64 {
    fn from(o: RenyiOrder) -> f64 {
        o.0
    }
}

impl FromStr for RenyiOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: f64 = s.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
        Self::new(v).map_err(|e| e.to_string())
    }
}

impl fmt::Display for RenyiOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}
