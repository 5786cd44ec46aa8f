//! DDPM noise schedules and their continuous VP-SDE counterpart.

use crate::{Error, Real, Result};

/// Discrete variance schedule with tables indexed `0..=T`; index 0 holds the
/// empty-product convention `β₀ = 0`, `α₀ = ᾱ₀ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule<T> {
    steps: usize,
    beta: Vec<T>,
    alpha: Vec<T>,
    alpha_bar: Vec<T>,
    /// Continuous-limit rate at t = 0, `T·β₁`.
    pub beta_min: T,
    /// Continuous-limit rate at t = 1, `T·β_T`.
    pub beta_max: T,
}

/// A matched diffusion step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timestep<T> {
    pub t: usize,
    pub alpha_bar: T,
}

/// Running product in double-word arithmetic: `hi + lo` carries roughly twice
/// the working precision, so a thousand factors lose nothing visible.
fn cumulative_product<T: Real>(factors: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(factors.len() + 1);
    out.push(T::one());
    let (mut hi, mut lo) = (T::one(), T::zero());
    for &a in factors {
        let p = hi * a;
        let err = hi.mul_add(a, -p);
        lo = lo.mul_add(a, err);
        hi = p + lo;
        lo = lo - (hi - p);
        out.push(hi + lo);
    }
    out
}

impl<T: Real> DiffusionSchedule<T> {
    /// Builds a schedule from β₁..β_T.
    pub fn from_betas(betas: Vec<T>) -> Result<Self> {
        if betas.len() < 2 {
            return Err(Error::config(format!(
                "schedule needs T >= 2 steps, got {}",
                betas.len()
            )));
        }
        if let Some((i, b)) = betas
            .iter()
            .enumerate()
            .find(|(_, &b)| !(b > T::zero() && b < T::one()))
        {
            return Err(Error::config(format!("beta_{} = {b} must lie in (0,1)", i + 1)));
        }
        let steps = betas.len();
        let alphas: Vec<T> = betas.iter().map(|&b| T::one() - b).collect();
        let alpha_bar = cumulative_product(&alphas);
        let n = T::of_usize(steps);
        let beta_min = n * betas[0];
        let beta_max = n * betas[steps - 1];
        let mut beta = Vec::with_capacity(steps + 1);
        beta.push(T::zero());
        beta.extend(betas);
        let mut alpha = Vec::with_capacity(steps + 1);
        alpha.push(T::one());
        alpha.extend(alphas);
        let schedule = Self {
            steps,
            beta,
            alpha,
            alpha_bar,
            beta_min,
            beta_max,
        };
        if schedule.alpha_bar.windows(2).any(|w| !(w[1] < w[0])) || schedule.alpha_bar[steps] <= T::zero() {
            return Err(Error::config(
                "cumulative alpha_bar must be positive and strictly decreasing",
            ));
        }
        Ok(schedule)
    }

    /// β linearly interpolated from `beta1` to `beta_t` over `steps` steps.
    pub fn linear(steps: usize, beta1: T, beta_t: T) -> Result<Self> {
        if steps < 2 {
            return Err(Error::config(format!("schedule needs T >= 2 steps, got {steps}")));
        }
        if !(beta1 > T::zero() && beta1 <= beta_t && beta_t < T::one()) {
            return Err(Error::config(format!(
                "need 0 < beta1 <= betaT < 1, got beta1 = {beta1}, betaT = {beta_t}"
            )));
        }
        let span = beta_t - beta1;
        let denom = T::of_usize(steps - 1);
        let betas = (0..steps).map(|i| beta1 + span * T::of_usize(i) / denom).collect();
        Self::from_betas(betas)
    }

    /// Number of diffusion steps T.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn beta(&self, t: usize) -> T {
        self.beta[t]
    }

    pub fn alpha(&self, t: usize) -> T {
        self.alpha[t]
    }

    pub fn alpha_bar(&self, t: usize) -> T {
        self.alpha_bar[t]
    }

    pub fn alpha_bars(&self) -> &[T] {
        &self.alpha_bar
    }

    /// (1−ᾱ_t)/ᾱ_t, the noise variance of `x_t / √ᾱ_t` around `x_0`.
    pub fn variance_ratio(&self, t: usize) -> T {
        (T::one() - self.alpha_bar[t]) / self.alpha_bar[t]
    }

    /// Largest σ any step can match.
    pub fn max_sigma(&self) -> T {
        self.variance_ratio(self.steps).sqrt()
    }

    /// Smallest `t ≥ 1` with `(1−ᾱ_t)/ᾱ_t ≥ variance`.
    pub fn compute_timestep_for_variance(&self, variance: T) -> Result<Timestep<T>> {
        if !(variance > T::zero()) {
            return Err(Error::domain(format!(
                "noise variance must be positive, got {variance}"
            )));
        }
        if variance > self.variance_ratio(self.steps) {
            return Err(Error::UnreachableNoise {
                sigma: variance.sqrt().to_f64().unwrap_or(f64::NAN),
                max_sigma: self.max_sigma().to_f64().unwrap_or(f64::NAN),
            });
        }
        // Ratios increase strictly with t, so the exit state of the linear
        // scan is a partition point.
        let (mut lo, mut hi) = (1, self.steps);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if self.variance_ratio(mid) < variance {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let t = lo;
        Ok(Timestep {
            t,
            alpha_bar: self.alpha_bar[t],
        })
    }

    /// Matches a smoothing level σ to a diffusion step.
    pub fn compute_timestep(&self, sigma: T) -> Result<Timestep<T>> {
        if !(sigma > T::zero()) {
            return Err(Error::domain(format!("sigma must be positive, got {sigma}")));
        }
        self.compute_timestep_for_variance(sigma * sigma).map_err(|e| match e {
            Error::UnreachableNoise { max_sigma, .. } => Error::UnreachableNoise {
                sigma: sigma.to_f64().unwrap_or(f64::NAN),
                max_sigma,
            },
            other => other,
        })
    }

    /// Continuous coefficients whose `ᾱ(t/T)` reproduces the discrete ᾱ_t.
    pub fn continuous(&self) -> SdeCoefficients<T> {
        let n = T::of_usize(self.steps);
        let rates: Vec<T> = self.alpha[1..].iter().map(|&a| -a.ln() * n).collect();
        let mut cumulative = Vec::with_capacity(self.steps + 1);
        cumulative.push(T::zero());
        let mut acc = T::zero();
        for &a in &self.alpha[1..] {
            acc = acc - a.ln();
            cumulative.push(acc);
        }
        SdeCoefficients {
            profile: GammaProfile::Piecewise { rates, cumulative },
        }
    }
}

impl DiffusionSchedule<f64> {
    /// Linear β from 1e-4 to 0.02 over 1000 steps.
    pub fn default_linear() -> Self {
        Self::linear(1000, 1e-4, 0.02).expect("valid default schedule")
    }
}

#[derive(Debug, Clone, PartialEq)]
enum GammaProfile<T> {
    /// γ constant on `((j−1)/T, j/T]`; `cumulative[j]` is ∫₀^{j/T} γ.
    Piecewise {
        rates: Vec<T>,
        cumulative: Vec<T>,
    },
    Constant(T),
    Linear {
        start: T,
        end: T,
    },
}

/// VP-SDE coefficients on `t ∈ [0, 1]`: drift `−½γ(t)x`, diffusion `√γ(t)`,
/// `τ(t) = ∫₀ᵗ ½γ` and `ᾱ(t) = e^{−2τ(t)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeCoefficients<T> {
    profile: GammaProfile<T>,
}

impl<T: Real> SdeCoefficients<T> {
    /// Constant rate; `gamma = 0` gives the identity flow.
    pub fn constant(gamma: T) -> Result<Self> {
        if !(gamma >= T::zero()) || !gamma.is_finite() {
            return Err(Error::config(format!(
                "gamma must be finite and non-negative, got {gamma}"
            )));
        }
        Ok(Self {
            profile: GammaProfile::Constant(gamma),
        })
    }

    /// `γ(t) = start + (end − start)·t`, the usual VP-SDE parameterisation.
    pub fn linear(start: T, end: T) -> Result<Self> {
        if !(start > T::zero() && end > T::zero()) {
            return Err(Error::config("linear gamma endpoints must be positive"));
        }
        Ok(Self {
            profile: GammaProfile::Linear { start, end },
        })
    }

    pub fn gamma(&self, t: T) -> T {
        match &self.profile {
            GammaProfile::Piecewise { rates, .. } => rates[segment(rates.len(), t)],
            GammaProfile::Constant(g) => *g,
            GammaProfile::Linear { start, end } => *start + (*end - *start) * t,
        }
    }

    /// ∫₀ᵗ γ(s) ds.
    pub fn integral(&self, t: T) -> T {
        match &self.profile {
            GammaProfile::Piecewise { rates, cumulative } => {
                let n = rates.len();
                let j = segment(n, t);
                let left = T::of_usize(j) / T::of_usize(n);
                cumulative[j] + rates[j] * (t - left).max(T::zero())
            }
            GammaProfile::Constant(g) => *g * t,
            GammaProfile::Linear { start, end } => *start * t + (*end - *start) * t * t / T::lit(2.0),
        }
    }

    pub fn tau(&self, t: T) -> T {
        self.integral(t) / T::lit(2.0)
    }

    pub fn alpha_bar(&self, t: T) -> T {
        (-self.integral(t)).exp()
    }

    /// Time at which `ᾱ(t)` equals `alpha_bar`, by bisection.
    pub fn time_for_alpha_bar(&self, alpha_bar: T) -> Result<T> {
        if !(alpha_bar > T::zero() && alpha_bar <= T::one()) {
            return Err(Error::domain(format!("alpha_bar must be in (0,1], got {alpha_bar}")));
        }
        let target = -alpha_bar.ln();
        if target > self.integral(T::one()) {
            return Err(Error::domain(format!(
                "alpha_bar = {alpha_bar} is not reached on [0,1]"
            )));
        }
        let (mut lo, mut hi) = (T::zero(), T::one());
        for _ in 0..200 {
            let mid = (lo + hi) / T::lit(2.0);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.integral(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }
}

/// Segment index `⌈tT⌉ − 1`, clamped to `[0, T−1]`.
fn segment<T: Real>(n: usize, t: T) -> usize {
    let scaled = (t * T::of_usize(n)).ceil();
    let j = scaled.to_usize().unwrap_or(0);
    j.clamp(1, n) - 1
}
