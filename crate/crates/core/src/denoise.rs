//! One-shot DDPM denoising and an Euler–Maruyama reverse-SDE sampler.

use crate::mixture::MixtureWorld;
use crate::num::norm;
use crate::schedule::{DiffusionSchedule, SdeCoefficients};
use crate::stats::{fill_normal, SeedSpec};
use crate::{Error, Real, Result};

/// Predicts the noise ε contained in `x_t` at discrete step `t`.
pub trait NoisePredictor<T>: Send + Sync {
    fn predict(&self, x_t: &[T], t: usize) -> Vec<T>;
}

impl<T, F> NoisePredictor<T> for F
where
    F: Fn(&[T], usize) -> Vec<T> + Send + Sync,
{
    fn predict(&self, x_t: &[T], t: usize) -> Vec<T> {
        self(x_t, t)
    }
}

/// `ε̂(x_t, t) = −√(1−ᾱ_t) ∇log p_t(x_t)`, the minimiser of the denoising loss.
#[derive(Debug, Clone)]
pub struct ExactNoisePredictor<T> {
    world: MixtureWorld<T>,
    schedule: DiffusionSchedule<T>,
}

pub fn exact_noise_predictor<T: Real>(
    world: &MixtureWorld<T>,
    schedule: &DiffusionSchedule<T>,
) -> ExactNoisePredictor<T> {
    ExactNoisePredictor {
        world: world.clone(),
        schedule: schedule.clone(),
    }
}

impl<T: Real> NoisePredictor<T> for ExactNoisePredictor<T> {
    fn predict(&self, x_t: &[T], t: usize) -> Vec<T> {
        let ab = self.schedule.alpha_bar(t);
        let mut score = vec![T::zero(); x_t.len()];
        self.world.score_into(x_t, ab, &mut score);
        let k = -(T::one() - ab).sqrt();
        score.iter_mut().for_each(|s| *s = *s * k);
        score
    }
}

/// Always predicts zero noise.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoisePredictor;

impl<T: Real> NoisePredictor<T> for ZeroNoisePredictor {
    fn predict(&self, x_t: &[T], _t: usize) -> Vec<T> {
        vec![T::zero(); x_t.len()]
    }
}

/// Another predictor plus `lambda·z`, where `z ~ N(0, I)` is a deterministic
/// function of `(seed, x_t, t)`; models a trained network with residual error.
#[derive(Debug, Clone)]
pub struct PerturbedNoisePredictor<T, P> {
    inner: P,
    lambda: T,
    seed: SeedSpec,
}

impl<T: Real, P: NoisePredictor<T>> PerturbedNoisePredictor<T, P> {
    pub fn new(inner: P, lambda: T, seed: SeedSpec) -> Result<Self> {
        if !(lambda >= T::zero()) {
            return Err(Error::config(format!(
                "predictor noise lambda must be >= 0, got {lambda}"
            )));
        }
        Ok(Self { inner, lambda, seed })
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    fn perturbation(&self, x_t: &[T], t: usize) -> Vec<T> {
        let mut key = self.seed.fork(t as u64);
        for &v in x_t {
            key = key.fork(v.to_f64().unwrap_or(f64::NAN).to_bits());
        }
        let mut z = vec![T::zero(); x_t.len()];
        fill_normal(&mut key.rng(0), T::one(), &mut z);
        z
    }
}

impl<T: Real, P: NoisePredictor<T>> NoisePredictor<T> for PerturbedNoisePredictor<T, P> {
    fn predict(&self, x_t: &[T], t: usize) -> Vec<T> {
        let mut eps = self.inner.predict(x_t, t);
        if self.lambda > T::zero() {
            for (e, z) in eps.iter_mut().zip(self.perturbation(x_t, t)) {
                *e = *e + self.lambda * z;
            }
        }
        eps
    }
}

/// `x̂₀ = (x_t − √(1−ᾱ_t)·ε̂(x_t, t)) / √ᾱ_t`.
pub fn one_shot_denoise<T: Real, P: NoisePredictor<T> + ?Sized>(
    predictor: &P,
    x_t: &[T],
    t: usize,
    schedule: &DiffusionSchedule<T>,
) -> Result<Vec<T>> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::domain(format!("timestep {t} outside 1..={}", schedule.steps())));
    }
    Ok(denoise_at(predictor, x_t, t, schedule.alpha_bar(t)))
}

/// Unchecked form used once the timestep has been validated.
pub(crate) fn denoise_at<T: Real, P: NoisePredictor<T> + ?Sized>(
    predictor: &P,
    x_t: &[T],
    t: usize,
    alpha_bar: T,
) -> Vec<T> {
    let eps = predictor.predict(x_t, t);
    assert_eq!(eps.len(), x_t.len(), "noise predictor changed the dimension");
    let noise = (T::one() - alpha_bar).sqrt();
    let signal = alpha_bar.sqrt();
    x_t.iter().zip(eps).map(|(&x, e)| (x - noise * e) / signal).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReverseSdeConfig<T> {
    pub num_steps: usize,
    pub t_start: T,
    pub seed: SeedSpec,
}

impl<T: Real> ReverseSdeConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.num_steps == 0 {
            return Err(Error::config("reverse SDE needs num_steps >= 1"));
        }
        if !(self.t_start > T::zero() && self.t_start <= T::one()) {
            return Err(Error::config(format!("t_start must be in (0,1], got {}", self.t_start)));
        }
        Ok(())
    }
}

/// Terminal state of a reverse trajectory and the largest score norm met on it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReverseSdeOutcome<T> {
    pub terminal: Vec<T>,
    pub max_score_norm: T,
}

/// Integrates the reverse VP-SDE from `t_start` to 0 with the exact mixture
/// score. `noise(k, z)` must fill `z` with the standard normals of step `k`.
pub fn reverse_sde_with_noise<T: Real>(
    world: &MixtureWorld<T>,
    sde: &SdeCoefficients<T>,
    x_start: &[T],
    t_start: T,
    num_steps: usize,
    mut noise: impl FnMut(usize, &mut [T]),
) -> Result<ReverseSdeOutcome<T>> {
    if x_start.len() != world.dim() {
        return Err(Error::domain("start point dimension does not match the world"));
    }
    let dt = t_start / T::of_usize(num_steps);
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let mut x = x_start.to_vec();
    let mut score = vec![T::zero(); x.len()];
    let mut z = vec![T::zero(); x.len()];
    let mut max_score_norm = T::zero();
    for k in 0..num_steps {
        let t = t_start - T::of_usize(k) * dt;
        let gamma = sde.gamma(t);
        world.score_into(&x, sde.alpha_bar(t), &mut score);
        max_score_norm = max_score_norm.max(norm(&score));
        noise(k, &mut z);
        let diffusion = (gamma * dt).sqrt();
        for ((xi, &si), &zi) in x.iter_mut().zip(&score).zip(&z) {
            *xi = *xi + dt * half * gamma * (*xi + two * si) + diffusion * zi;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationDiverged { step: k });
        }
    }
    Ok(ReverseSdeOutcome {
        terminal: x,
        max_score_norm,
    })
}

/// Reverse-SDE sample with the trajectory's own random stream.
pub fn reverse_sde_trace<T: Real>(
    world: &MixtureWorld<T>,
    sde: &SdeCoefficients<T>,
    x_start: &[T],
    config: &ReverseSdeConfig<T>,
) -> Result<ReverseSdeOutcome<T>> {
    config.validate()?;
    let mut rng = config.seed.rng(0);
    reverse_sde_with_noise(world, sde, x_start, config.t_start, config.num_steps, |_, z| {
        fill_normal(&mut rng, T::one(), z)
    })
}

/// Euler–Maruyama solution of the reverse SDE at t = 0.
pub fn reverse_sde_sample<T: Real>(
    world: &MixtureWorld<T>,
    sde: &SdeCoefficients<T>,
    x_start: &[T],
    config: &ReverseSdeConfig<T>,
) -> Result<Vec<T>> {
    reverse_sde_trace(world, sde, x_start, config).map(|o| o.terminal)
}
