//! Certified ℓ₂ robustness through diffusion purification and local smoothing.
//!
//! The crate runs the whole certification pipeline on an analytic testbed: a
//! labeled isotropic Gaussian mixture stands in for the image distribution, its
//! closed-form score stands in for a trained noise predictor, and its Bayes
//! posterior stands in for a smoothed classifier. Every stage can therefore be
//! checked against an exact oracle.
//!
//! * [`stats`]: normal quantile, Clopper-Pearson bound, counter-based seeding.
//! * [`schedule`]: DDPM β/ᾱ tables, VP-SDE coefficients, timestep matching.
//! * [`mixture`]: the Gaussian-mixture world (score, posterior mean, Bayes rule).
//! * [`denoise`]: one-shot denoising and an Euler–Maruyama reverse-SDE sampler.
//! * [`classify`]: soft classifiers, including a Gaussian-augmented MLP.
//! * [`certify`]: purify-then-locally-smooth classification and certification.
//! * [`theory`]: Monte-Carlo validators for the proximity and one-shot bounds.
//!
//! All numerical code is generic over [`Real`]; the `*64` aliases below are the
//! instantiations used by the harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod classify;
pub mod denoise;
mod error;
pub mod mixture;
mod num;
pub mod schedule;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
pub use num::Real;

pub type DiffusionSchedule64 = schedule::DiffusionSchedule<f64>;
pub type SdeCoefficients64 = schedule::SdeCoefficients<f64>;
pub type MixtureWorld64 = mixture::MixtureWorld<f64>;
pub type LabeledSample64 = mixture::LabeledSample<f64>;
pub type Mlp64 = classify::Mlp<f64>;
pub type DiffSmoothConfig64 = certify::DiffSmoothConfig<f64>;
pub type CertificationRecord64 = certify::CertificationRecord<f64>;
pub type TheoremReport64 = theory::TheoremReport<f64>;

pub type DiffusionSchedule32 = schedule::DiffusionSchedule<f32>;
pub type MixtureWorld32 = mixture::MixtureWorld<f32>;
