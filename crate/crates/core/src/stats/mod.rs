//! Statistical primitives for certification: the normal quantile, the
//! Clopper-Pearson lower bound, and counter-based random streams.

mod binomial;
mod normal;
mod seed;

pub use binomial::{binomial_test_half, log_binomial_upper_tail, lower_conf_bound};
pub use normal::{normal_cdf, normal_pdf, normal_quantile};
pub use seed::{fill_normal, sample_standard_normal, standard_normal, DrawRng, SeedSpec};

use crate::{Error, Real, Result};

/// Failure probability and sample sizes of a certification run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceParams<T> {
    /// Probability that a returned certificate is wrong.
    pub alpha: T,
    /// Draws used to select the candidate class.
    pub n0: u64,
    /// Draws used to estimate its probability.
    pub n: u64,
}

impl<T: Real> ConfidenceParams<T> {
    pub fn new(alpha: T, n0: u64, n: u64) -> Result<Self> {
        let params = Self { alpha, n0, n };
        params.validate()?;
        Ok(params)
    }

    /// Rejects out-of-domain values. `n0 > n` is allowed but unusual.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero() && self.alpha < T::one()) {
            return Err(Error::config(format!("alpha must be in (0,1), got {}", self.alpha)));
        }
        if self.n0 == 0 || self.n == 0 {
            return Err(Error::config("n0 and n must be positive"));
        }
        Ok(())
    }

    /// True when the selection sample is larger than the estimation sample.
    pub fn selection_exceeds_estimation(&self) -> bool {
        self.n0 > self.n
    }

    pub fn confidence(&self) -> T {
        T::one() - self.alpha
    }
}

impl Default for ConfidenceParams<f64> {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            n0: 100,
            n: 2000,
        }
    }
}
