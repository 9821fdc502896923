//! Self-contained special functions and small dense linear algebra.
//!
//! Everything in here is a pure function of its inputs and safe to call
//! from any number of threads.

mod linalg;
mod special;

pub use linalg::{cholesky_solve, Cholesky, SmallMatrix};
pub use special::{
    chisq_cdf, chisq_quantile, f_cdf, f_sf, ln_gamma, reg_inc_beta, reg_lower_gamma,
};

use crate::error::{Error, Result};

/// A probability value, guaranteed to lie in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const ONE: Probability = Probability(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Domain(format!("probability out of range: {value}")));
        }
        Ok(Probability(value))
    }

    /// Clamps small floating-point overshoot back into `[0, 1]`.
    ///
    /// Panics on NaN or values far outside the unit interval; producers are
    /// expected to be at most an epsilon off.
    pub fn clamped(value: f64) -> Self {
        assert!(
            value.is_finite() && (-1e-9..=1.0 + 1e-9).contains(&value),
            "value {value} is not a probability"
        );
        Probability(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

impl std::fmt::Display for Probability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}
