//! Monte-Carlo checks of the two purification guarantees: reverse-SDE
//! samples stay close to the clean point with high probability, and the
//! one-shot denoiser's distance to the conditional mean is controlled by the
//! denoising loss.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::denoise::{denoise_at, reverse_sde_with_noise, NoisePredictor};
use crate::mixture::MixtureWorld;
use crate::num::{dist_sq, norm};
use crate::schedule::{DiffusionSchedule, SdeCoefficients};
use crate::stats::{fill_normal, SeedSpec};
use crate::{Error, Real, Result};

/// `√(d + 2√(d ln(1/η)) + 2 ln(1/η))`, the radius a standard normal
/// d-vector exceeds with probability at most `η`.
pub fn c_eta<T: Real>(d: usize, eta: T) -> Result<T> {
    if d == 0 {
        return Err(Error::domain("dimension must be >= 1"));
    }
    if !(eta > T::zero() && eta < T::one()) {
        return Err(Error::domain(format!("eta must be in (0,1), got {eta}")));
    }
    let d = T::of_usize(d);
    let l = -eta.ln();
    let two = T::lit(2.0);
    Ok((d + two * (d * l).sqrt() + two * l).sqrt())
}

/// `distance + √(e^{2τ} − 1)·C_η + τ·C`.
pub fn theorem1_bound<T: Real>(distance: T, tau: T, d: usize, eta: T, c: T) -> Result<T> {
    let spread = (T::lit(2.0) * tau).exp_m1().max(T::zero()).sqrt();
    Ok(distance + spread * c_eta(d, eta)? + tau * c)
}

/// Trial outcome for the per-trial CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome<T> {
    pub trial: u64,
    pub distance: T,
    pub bound: T,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport<T> {
    /// 1 or 2.
    pub theorem: u8,
    /// Right-hand side of the inequality, averaged over trials when it varies.
    pub bound_value: T,
    pub empirical_violation_rate: T,
    pub trials: u64,
    pub violations: u64,
    /// Mean of `bound − distance`.
    pub mean_slack: T,
    /// Twice the largest score norm met on the integrated trajectories.
    pub effective_c: Option<T>,
    /// Mean Monte-Carlo standard error of the loss estimates.
    pub loss_standard_error: Option<T>,
    pub outcomes: Vec<TrialOutcome<T>>,
}

impl<T: Real> TheoremReport<T> {
    fn from_outcomes(theorem: u8, outcomes: Vec<TrialOutcome<T>>) -> Self {
        let n = outcomes.len() as u64;
        let nf = T::of_usize(outcomes.len().max(1));
        let violations = outcomes.iter().filter(|o| o.violated).count() as u64;
        let bound_value = outcomes.iter().map(|o| o.bound).sum::<T>() / nf;
        let mean_slack = outcomes.iter().map(|o| o.bound - o.distance).sum::<T>() / nf;
        Self {
            theorem,
            bound_value,
            empirical_violation_rate: T::lit(violations as f64) / nf,
            trials: n,
            violations,
            mean_slack,
            effective_c: None,
            loss_standard_error: None,
            outcomes,
        }
    }

    /// Count-weighted combination of two runs of the same theorem.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.theorem != other.theorem {
            return Err(Error::domain("cannot merge reports of different theorems"));
        }
        let (a, b) = (T::lit(self.trials as f64), T::lit(other.trials as f64));
        let total = a + b;
        let avg = |x: T, y: T| {
            if total > T::zero() {
                (a * x + b * y) / total
            } else {
                T::zero()
            }
        };
        let opt_max = |x: Option<T>, y: Option<T>| match (x, y) {
            (Some(x), Some(y)) => Some(x.max(y)),
            (x, y) => x.or(y),
        };
        let opt_avg = |x: Option<T>, y: Option<T>| match (x, y) {
            (Some(x), Some(y)) => Some(avg(x, y)),
            (x, y) => x.or(y),
        };
        let trials = self.trials + other.trials;
        let violations = self.violations + other.violations;
        let mut outcomes = self.outcomes.clone();
        outcomes.extend_from_slice(&other.outcomes);
        Ok(Self {
            theorem: self.theorem,
            bound_value: avg(self.bound_value, other.bound_value),
            empirical_violation_rate: if trials > 0 {
                T::lit(violations as f64 / trials as f64)
            } else {
                T::zero()
            },
            trials,
            violations,
            mean_slack: avg(self.mean_slack, other.mean_slack),
            effective_c: opt_max(self.effective_c, other.effective_c),
            loss_standard_error: opt_avg(self.loss_standard_error, other.loss_standard_error),
            outcomes,
        })
    }

    /// `key = value` lines.
    pub fn to_key_value(&self) -> String {
        let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
        let mut s = String::new();
        let _ = writeln!(s, "theorem = {}", self.theorem);
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "violations = {}", self.violations);
        let _ = writeln!(s, "empirical_violation_rate = {:?}", f(self.empirical_violation_rate));
        let _ = writeln!(s, "bound_value = {:?}", f(self.bound_value));
        let _ = writeln!(s, "mean_slack = {:?}", f(self.mean_slack));
        match self.effective_c {
            Some(c) => {
                let _ = writeln!(s, "effective_C = {:?}", f(c));
                // The score is unbounded on ℝ^d; the check holds only where trajectories went.
                s.push_str("effective_C_scope = visited_region\n");
            }
            None => s.push_str("effective_C = none\n"),
        }
        if let Some(se) = self.loss_standard_error {
            let _ = writeln!(s, "loss_standard_error = {:?}", f(se));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("trial,distance,bound,violated\n");
        for o in &self.outcomes {
            let _ = writeln!(
                s,
                "{},{:?},{:?},{}",
                o.trial,
                o.distance.to_f64().unwrap_or(f64::NAN),
                o.bound.to_f64().unwrap_or(f64::NAN),
                u8::from(o.violated)
            );
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem1Config<T> {
    /// Failure probability budget.
    pub eta: T,
    /// Start time of the reverse process.
    pub t_star: T,
    /// Norm of the perturbation added to the clean point.
    pub delta_norm: T,
    pub trials: u64,
    pub sde_steps: usize,
    pub seed: SeedSpec,
}

impl<T: Real> Theorem1Config<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > T::zero() && self.eta < T::one()) {
            return Err(Error::config(format!("eta must be in (0,1), got {}", self.eta)));
        }
        if !(self.t_star > T::zero() && self.t_star <= T::one()) {
            return Err(Error::config(format!("t_star must be in (0,1], got {}", self.t_star)));
        }
        if !(self.delta_norm >= T::zero()) || !self.delta_norm.is_finite() {
            return Err(Error::config(format!(
                "delta_norm must be >= 0, got {}",
                self.delta_norm
            )));
        }
        if self.trials == 0 || self.sde_steps == 0 {
            return Err(Error::config("trials and sde_steps must be positive"));
        }
        Ok(())
    }
}

/// Per trial: draw `x₀`, perturb it by `delta_norm` in a uniform direction,
/// scale by `√ᾱ(t*)`, integrate the reverse SDE to 0 and compare
/// `‖x̂₀ − x₀‖` against the bound.
pub fn validate_theorem1<T: Real>(
    world: &MixtureWorld<T>,
    sde: &SdeCoefficients<T>,
    cfg: &Theorem1Config<T>,
) -> Result<TheoremReport<T>> {
    cfg.validate()?;
    let d = world.dim();
    let root = sde.alpha_bar(cfg.t_star).sqrt();
    let runs: Vec<(T, T)> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let x0 = world.sample_one(&cfg.seed.fork(0), trial).x;
            let mut dir = vec![T::zero(); d];
            let mut rng = cfg.seed.fork(1).rng(trial);
            loop {
                fill_normal(&mut rng, T::one(), &mut dir);
                if norm(&dir) > T::zero() {
                    break;
                }
            }
            let scale = cfg.delta_norm / norm(&dir);
            let x_start: Vec<T> = x0.iter().zip(&dir).map(|(&x, &u)| root * (x + scale * u)).collect();
            let mut noise = cfg.seed.fork(2).rng(trial);
            let out = reverse_sde_with_noise(world, sde, &x_start, cfg.t_star, cfg.sde_steps, |_, z| {
                fill_normal(&mut noise, T::one(), z)
            })
            .map_err(|e| match e {
                Error::IntegrationDiverged { step } => {
                    Error::domain(format!("reverse SDE diverged in trial {trial} at step {step}"))
                }
                other => other,
            })?;
            Ok((dist_sq(&out.terminal, &x0).sqrt(), out.max_score_norm))
        })
        .collect::<Result<_>>()?;

    let c = T::lit(2.0) * runs.iter().map(|r| r.1).fold(T::zero(), T::max);
    let bound = theorem1_bound(cfg.delta_norm, sde.tau(cfg.t_star), d, cfg.eta, c)?;
    let outcomes = runs
        .iter()
        .enumerate()
        .map(|(i, &(distance, _))| TrialOutcome {
            trial: i as u64,
            distance,
            bound,
            violated: distance > bound,
        })
        .collect();
    let mut report = TheoremReport::from_outcomes(1, outcomes);
    report.effective_c = Some(c);
    Ok(report)
}

/// How a one-shot trial is judged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Theorem2Check<T> {
    /// The predictor is the exact one: the output must equal the conditional
    /// mean within this tolerance.
    Exact(T),
    /// Imperfect predictor: distance ≤ K·ℓ̂ + 3·K·se(ℓ̂).
    Bound,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem2Config<T> {
    pub check: Theorem2Check<T>,
    pub trials: u64,
    /// Posterior draws per trial for the loss estimate.
    pub conditional_draws: usize,
    /// Steps are drawn uniformly among those whose noise level
    /// `√((1−ᾱ_t)/ᾱ_t)` lies in this range.
    pub sigma_range: (T, T),
    pub seed: SeedSpec,
}

impl<T: Real> Theorem2Config<T> {
    /// Exact check for `lambda = 0`, bound check otherwise.
    pub fn for_lambda(lambda: T, trials: u64, seed: SeedSpec) -> Self {
        let check = if lambda == T::zero() {
            Theorem2Check::Exact(T::lit(1e-9))
        } else {
            Theorem2Check::Bound
        };
        Self {
            check,
            trials,
            conditional_draws: 512,
            sigma_range: (T::lit(0.1), T::one()),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.conditional_draws < 2 {
            return Err(Error::config(
                "the one-shot bound check needs trials >= 1 and conditional_draws >= 2",
            ));
        }
        let (lo, hi) = self.sigma_range;
        if !(lo > T::zero() && lo <= hi) {
            return Err(Error::config(format!("bad sigma_range ({lo}, {hi})")));
        }
        Ok(())
    }
}

/// `2σ_t²α_t(1−ᾱ_t)^{3/2} / (β_t²√ᾱ_t)` with `σ_t² = (1−α_t)/α_t`.
pub fn theorem2_constant<T: Real>(schedule: &DiffusionSchedule<T>, t: usize) -> T {
    let (a, ab, b) = (schedule.alpha(t), schedule.alpha_bar(t), schedule.beta(t));
    let sigma2 = (T::one() - a) / a;
    T::lit(2.0) * sigma2 * a * (T::one() - ab).powf(T::lit(1.5)) / (b * b * ab.sqrt())
}

/// Weight `β_t² / (2σ_t²α_t(1−ᾱ_t))` of the noise-prediction loss.
pub fn loss_weight<T: Real>(schedule: &DiffusionSchedule<T>, t: usize) -> T {
    let (a, ab, b) = (schedule.alpha(t), schedule.alpha_bar(t), schedule.beta(t));
    let sigma2 = (T::one() - a) / a;
    b * b / (T::lit(2.0) * sigma2 * a * (T::one() - ab))
}

/// Steps whose noise level falls in `[lo, hi]`.
fn step_range<T: Real>(schedule: &DiffusionSchedule<T>, (lo, hi): (T, T)) -> Result<(usize, usize)> {
    let first = schedule.compute_timestep(lo)?.t;
    let mut last = first;
    while last < schedule.steps() && schedule.variance_ratio(last + 1).sqrt() <= hi {
        last += 1;
    }
    Ok((first, last))
}

/// Per trial: draw a step and `x_t` from the forward marginal, denoise in one
/// shot and measure the distance to the closed-form `E[x₀ | x_t]`. The loss
/// `ℓ_t(x_t)` is estimated from exact posterior draws of `x₀`.
pub fn validate_theorem2<T: Real, P: NoisePredictor<T> + ?Sized>(
    world: &MixtureWorld<T>,
    schedule: &DiffusionSchedule<T>,
    predictor: &P,
    cfg: &Theorem2Config<T>,
) -> Result<TheoremReport<T>> {
    cfg.validate()?;
    let (first, last) = step_range(schedule, cfg.sigma_range)?;
    let d = world.dim();
    let rows: Vec<(TrialOutcome<T>, T)> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = cfg.seed.rng(trial);
            let t = first + (rand::Rng::random_range(&mut rng, 0..=(last - first)));
            let ab = schedule.alpha_bar(t);
            let (root, noise) = (ab.sqrt(), (T::one() - ab).sqrt());
            let x0 = world.sample_one(&cfg.seed.fork(0), trial).x;
            let mut eps = vec![T::zero(); d];
            fill_normal(&mut rng, T::one(), &mut eps);
            let x_t: Vec<T> = x0.iter().zip(&eps).map(|(&x, &e)| root * x + noise * e).collect();

            let x_hat = denoise_at(predictor, &x_t, t, ab);
            let mean = world.posterior_mean(&x_t, ab)?;
            let distance = dist_sq(&x_hat, &mean).sqrt();

            let eps_hat = predictor.predict(&x_t, t);
            let w = loss_weight(schedule, t);
            let mut post = cfg.seed.fork(1).rng(trial);
            let losses: Vec<T> = (0..cfg.conditional_draws)
                .map(|_| {
                    let x0s = world.sample_posterior(&x_t, ab, &mut post)?;
                    let sq = x_t
                        .iter()
                        .zip(&x0s)
                        .zip(&eps_hat)
                        .map(|((&xt, &x0), &e)| {
                            let diff = (xt - root * x0) / noise - e;
                            diff * diff
                        })
                        .sum::<T>();
                    Ok(w * sq)
                })
                .collect::<Result<_>>()?;
            let m = T::of_usize(losses.len());
            let loss = losses.iter().copied().sum::<T>() / m;
            let var = losses.iter().map(|&l| (l - loss) * (l - loss)).sum::<T>() / (m - T::one());
            let se = (var / m).sqrt();
            let k = theorem2_constant(schedule, t);
            let bound = k * loss;
            let violated = match cfg.check {
                Theorem2Check::Exact(tol) => !(distance <= tol),
                Theorem2Check::Bound => !(distance <= bound + T::lit(3.0) * k * se),
            };
            Ok((
                TrialOutcome {
                    trial,
                    distance,
                    bound,
                    violated,
                },
                se,
            ))
        })
        .collect::<Result<_>>()?;
    let se_mean = rows.iter().map(|r| r.1).sum::<T>() / T::of_usize(rows.len());
    let mut report = TheoremReport::from_outcomes(2, rows.into_iter().map(|r| r.0).collect());
    report.loss_standard_error = Some(se_mean);
    Ok(report)
}
