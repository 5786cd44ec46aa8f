//! Labeled isotropic Gaussian mixture with closed-form noised marginals.
//!
//! Under the forward process `x_t = √ᾱ x₀ + √(1−ᾱ) ε` each component
//! `N(μ_k, s_k² I)` stays Gaussian with mean `√ᾱ μ_k` and variance
//! `v_k = ᾱ s_k² + 1 − ᾱ`, so the score, the posterior mean and the Bayes
//! classifier all reduce to log-space responsibilities.

mod format;

use rand::Rng;

use crate::num::{dist_sq, norm_sq, softmax_in_place};
use crate::stats::{standard_normal, SeedSpec};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Component<T> {
    pub weight: T,
    pub mean: Vec<T>,
    pub scale: T,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample<T> {
    pub x: Vec<T>,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureWorld<T> {
    dim: usize,
    components: Vec<Component<T>>,
    num_labels: usize,
    log_weights: Vec<T>,
}

impl<T: Real> MixtureWorld<T> {
    pub fn new(dim: usize, components: Vec<Component<T>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("world dimension must be at least 1"));
        }
        if components.is_empty() {
            return Err(Error::config("world needs at least one component"));
        }
        for (k, c) in components.iter().enumerate() {
            if c.mean.len() != dim {
                return Err(Error::config(format!(
                    "component {k} has a {}-dimensional mean, expected {dim}",
                    c.mean.len()
                )));
            }
            if !(c.weight > T::zero()) {
                return Err(Error::config(format!(
                    "component {k} has non-positive weight {}",
                    c.weight
                )));
            }
            if !(c.scale > T::zero()) || !c.scale.is_finite() {
                return Err(Error::config(format!(
                    "component {k} has non-positive scale {}",
                    c.scale
                )));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::config(format!("component {k} has a non-finite mean")));
            }
        }
        let total: T = components.iter().map(|c| c.weight).sum();
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
        if (total - T::one()).abs() > tol {
            return Err(Error::config(format!("component weights sum to {total}, not 1")));
        }
        let mut labels: Vec<usize> = components.iter().map(|c| c.label).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() < 2 {
            return Err(Error::config("world needs at least two distinct labels"));
        }
        let num_labels = labels[labels.len() - 1] + 1;
        let log_weights = components.iter().map(|c| c.weight.ln()).collect();
        Ok(Self {
            dim,
            components,
            num_labels,
            log_weights,
        })
    }

    /// Four equal-weight components at (±2, ±2) with scale 0.5, one label each.
    pub fn canonical() -> Self {
        let centers = [(2.0, 2.0), (-2.0, 2.0), (-2.0, -2.0), (2.0, -2.0)];
        let components = centers
            .iter()
            .enumerate()
            .map(|(label, &(a, b))| Component {
                weight: T::lit(0.25),
                mean: vec![T::lit(a), T::lit(b)],
                scale: T::lit(0.5),
                label,
            })
            .collect();
        Self::new(2, components).expect("canonical world is valid")
    }

    /// Two classes at `(±offset, 0)` with a common scale.
    pub fn two_class(offset: T, scale: T) -> Result<Self> {
        let components = [(offset, 0usize), (-offset, 1usize)]
            .iter()
            .map(|&(a, label)| Component {
                weight: T::lit(0.5),
                mean: vec![a, T::zero()],
                scale,
                label,
            })
            .collect();
        Self::new(2, components)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Component<T>] {
        &self.components
    }

    /// Size of the label set `{0, …, max label}`.
    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    /// E‖x‖² = Σ w_k (‖μ_k‖² + d s_k²).
    pub fn second_moment(&self) -> T {
        let d = T::of_usize(self.dim);
        self.components
            .iter()
            .map(|c| c.weight * (norm_sq(&c.mean) + d * c.scale * c.scale))
            .sum()
    }

    /// Marginal variance of component `k` at signal level ᾱ, with `extra`
    /// added to the clean component variance.
    #[inline]
    fn variance(&self, k: usize, alpha_bar: T, extra: T) -> T {
        let s = self.components[k].scale;
        alpha_bar * (s * s + extra) + T::one() - alpha_bar
    }

    /// Writes `log w_k + log N(x; √ᾱ μ_k, v_k I)` into `out`.
    fn log_joint(&self, x: &[T], alpha_bar: T, extra: T, out: &mut [T]) {
        let root = alpha_bar.sqrt();
        let half_d = T::of_usize(self.dim) / T::lit(2.0);
        let two = T::lit(2.0);
        for (k, c) in self.components.iter().enumerate() {
            let v = self.variance(k, alpha_bar, extra);
            let mut sq = T::zero();
            for (&xi, &mi) in x.iter().zip(&c.mean) {
                let d = xi - root * mi;
                sq = sq + d * d;
            }
            out[k] = self.log_weights[k] - half_d * (T::TAU() * v).ln() - sq / (two * v);
        }
    }

    /// Posterior component probabilities r_k(x) at signal level ᾱ, and log p_t(x).
    pub fn responsibilities(&self, x: &[T], alpha_bar: T) -> (Vec<T>, T) {
        let mut r = vec![T::zero(); self.components.len()];
        self.log_joint(x, alpha_bar, T::zero(), &mut r);
        let log_norm = softmax_in_place(&mut r);
        (r, log_norm)
    }

    fn check_point(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::domain(format!(
                "point has dimension {}, world has {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// log p_t(x) for the noised marginal at signal level ᾱ.
    pub fn log_density_t(&self, x: &[T], alpha_bar: T) -> Result<T> {
        check_alpha_bar_closed(alpha_bar)?;
        self.check_point(x)?;
        Ok(self.responsibilities(x, alpha_bar).1)
    }

    /// ∇ log p_t(x) = Σ_k r_k(x)(√ᾱ μ_k − x)/v_k.
    pub fn score_t(&self, x: &[T], alpha_bar: T) -> Result<Vec<T>> {
        check_alpha_bar_closed(alpha_bar)?;
        self.check_point(x)?;
        let mut out = vec![T::zero(); self.dim];
        self.score_into(x, alpha_bar, &mut out);
        Ok(out)
    }

    /// Unchecked score for inner loops.
    pub(crate) fn score_into(&self, x: &[T], alpha_bar: T, out: &mut [T]) {
        let (r, _) = self.responsibilities(x, alpha_bar);
        let root = alpha_bar.sqrt();
        out.iter_mut().for_each(|o| *o = T::zero());
        for (k, c) in self.components.iter().enumerate() {
            let w = r[k] / self.variance(k, alpha_bar, T::zero());
            for ((o, &xi), &mi) in out.iter_mut().zip(x).zip(&c.mean) {
                *o = *o + w * (root * mi - xi);
            }
        }
    }

    /// E[x₀ | x_t] in closed form.
    pub fn posterior_mean(&self, x_t: &[T], alpha_bar: T) -> Result<Vec<T>> {
        check_alpha_bar_open(alpha_bar)?;
        self.check_point(x_t)?;
        let (r, _) = self.responsibilities(x_t, alpha_bar);
        let root = alpha_bar.sqrt();
        let noise = T::one() - alpha_bar;
        let mut out = vec![T::zero(); self.dim];
        for (k, c) in self.components.iter().enumerate() {
            let s2 = c.scale * c.scale;
            let w = r[k] / self.variance(k, alpha_bar, T::zero());
            for ((o, &xi), &mi) in out.iter_mut().zip(x_t).zip(&c.mean) {
                *o = *o + w * (s2 * root * xi + noise * mi);
            }
        }
        Ok(out)
    }

    /// Draws x₀ from p(x₀ | x_t): a component by responsibility, then its
    /// Gaussian posterior.
    pub fn sample_posterior<R: Rng + ?Sized>(&self, x_t: &[T], alpha_bar: T, rng: &mut R) -> Result<Vec<T>> {
        check_alpha_bar_open(alpha_bar)?;
        self.check_point(x_t)?;
        let (r, _) = self.responsibilities(x_t, alpha_bar);
        let k = pick(&r, T::lit(rng.random::<f64>()));
        let c = &self.components[k];
        let s2 = c.scale * c.scale;
        let v = self.variance(k, alpha_bar, T::zero());
        let root = alpha_bar.sqrt();
        let noise = T::one() - alpha_bar;
        let sd = (s2 * noise / v).sqrt();
        Ok(x_t
            .iter()
            .zip(&c.mean)
            .map(|(&xi, &mi)| (s2 * root * xi + noise * mi) / v + sd * standard_normal::<T, R>(rng))
            .collect())
    }

    /// P[y | x] for data whose components are inflated by `sigma_train²`.
    fn label_posterior(&self, x: &[T], sigma_train: T, out: &mut [T]) {
        let mut logs = vec![T::zero(); self.components.len()];
        self.log_joint(x, T::one(), sigma_train * sigma_train, &mut logs);
        softmax_in_place(&mut logs);
        out.iter_mut().for_each(|o| *o = T::zero());
        for (c, r) in self.components.iter().zip(logs) {
            out[c.label] = out[c.label] + r;
        }
    }

    /// Bayes posterior over labels under the clean mixture.
    pub fn bayes_soft_classifier(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.num_labels];
        self.label_posterior(x, T::zero(), &mut out);
        out
    }

    /// Bayes posterior over labels for Gaussian-augmented data, i.e. every
    /// component variance inflated to `s_k² + sigma_train²`.
    pub fn bayes_smoothed_soft_classifier(&self, x: &[T], sigma_train: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.num_labels];
        self.label_posterior(x, sigma_train, &mut out);
        out
    }

    pub(crate) fn bayes_smoothed_into(&self, x: &[T], sigma_train: T, out: &mut [T]) {
        self.label_posterior(x, sigma_train, out);
    }

    /// Draw `i` uses generator `i` of `seed`.
    pub fn sample_one(&self, seed: &SeedSpec, index: u64) -> LabeledSample<T> {
        let mut rng = seed.rng(index);
        let weights: Vec<T> = self.components.iter().map(|c| c.weight).collect();
        let k = pick(&weights, T::lit(rng.random::<f64>()));
        let c = &self.components[k];
        let x = c
            .mean
            .iter()
            .map(|&m| m + c.scale * standard_normal::<T, _>(&mut rng))
            .collect();
        LabeledSample { x, y: c.label }
    }

    /// `count` i.i.d. labeled draws.
    pub fn sample(&self, seed: &SeedSpec, count: usize) -> Vec<LabeledSample<T>> {
        (0..count as u64).map(|i| self.sample_one(seed, i)).collect()
    }

    /// Index of the component nearest to `x` (used by tests and reports).
    pub fn nearest_component(&self, x: &[T]) -> usize {
        let mut best = (0, T::infinity());
        for (k, c) in self.components.iter().enumerate() {
            let d = dist_sq(x, &c.mean);
            if d < best.1 {
                best = (k, d);
            }
        }
        best.0
    }
}

/// Inverse-CDF pick from unnormalized non-negative weights.
fn pick<T: Real>(weights: &[T], u: T) -> usize {
    let total: T = weights.iter().copied().sum();
    let mut acc = T::zero();
    let target = u * total;
    for (k, &w) in weights.iter().enumerate() {
        acc = acc + w;
        if target < acc {
            return k;
        }
    }
    weights
        .iter()
        .rposition(|&w| w > T::zero())
        .unwrap_or(weights.len() - 1)
}

fn check_alpha_bar_closed<T: Real>(alpha_bar: T) -> Result<()> {
    if alpha_bar > T::zero() && alpha_bar <= T::one() {
        Ok(())
    } else {
        Err(Error::domain(format!("alpha_bar must be in (0,1], got {alpha_bar}")))
    }
}

fn check_alpha_bar_open<T: Real>(alpha_bar: T) -> Result<()> {
    if alpha_bar > T::zero() && alpha_bar < T::one() {
        Ok(())
    } else {
        Err(Error::domain(format!("alpha_bar must be in (0,1), got {alpha_bar}")))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn single_standard() -> MixtureWorld<f64> {
        let c = |label| Component {
            weight: 0.5,
            mean: vec![0.0, 0.0],
            scale: 1.0,
            label,
        };
        MixtureWorld::new(2, vec![c(0), c(1)]).unwrap()
    }

    /// Random world in `dim` dimensions with `k` components and scales ≥ 0.3.
    pub(crate) fn random_world(seed: u64, dim: usize, k: usize) -> MixtureWorld<f64> {
        let mut rng = SeedSpec::new(seed, 99).rng(0);
        let raw: Vec<f64> = (0..k).map(|_| 0.2 + rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let mut comps: Vec<Component<f64>> = raw
            .iter()
            .enumerate()
            .map(|(i, w)| Component {
                weight: w / total,
                mean: (0..dim).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect(),
                scale: 0.3 + rng.random::<f64>(),
                label: i % 3,
            })
            .collect();
        let sum: f64 = comps.iter().map(|c| c.weight).sum();
        comps[0].weight += 1.0 - sum;
        MixtureWorld::new(dim, comps).unwrap()
    }

    #[test]
    fn construction_errors() {
        let c = |w, label| Component {
            weight: w,
            mean: vec![0.0],
            scale: 1.0,
            label,
        };
        assert!(MixtureWorld::new(1, vec![c(0.5, 0), c(0.5, 0)]).is_err());
        assert!(MixtureWorld::new(1, vec![c(0.5, 0), c(0.6, 1)]).is_err());
        assert!(MixtureWorld::new(2, vec![c(0.5, 0), c(0.5, 1)]).is_err());
        let mut bad = c(0.5, 1);
        bad.scale = 0.0;
        assert!(MixtureWorld::new(1, vec![c(0.5, 0), bad]).is_err());
    }

    #[test]
    fn second_moment_is_finite() {
        let w = MixtureWorld::<f64>::canonical();
        assert!((w.second_moment() - (8.0 + 2.0 * 0.25)).abs() < 1e-12);
    }

    #[test]
    fn sampling_moments() {
        let w = single_standard();
        let draws = w.sample(&SeedSpec::new(5, 0), 100_000);
        for j in 0..2 {
            let mean = draws.iter().map(|s| s.x[j]).sum::<f64>() / draws.len() as f64;
            assert!(mean.abs() < 0.013, "coordinate {j}: {mean}");
        }
        assert!(w.sample(&SeedSpec::new(5, 0), 0).is_empty());
    }

    #[test]
    fn sampling_label_frequencies() {
        let w = MixtureWorld::<f64>::canonical();
        let draws = w.sample(&SeedSpec::new(6, 0), 100_000);
        for label in 0..4 {
            let f = draws.iter().filter(|s| s.y == label).count() as f64 / 1e5;
            assert!((f - 0.25).abs() < 0.006, "label {label}: {f}");
        }
        // Labels are those of the generating component.
        let near = draws
            .iter()
            .filter(|s| w.components()[w.nearest_component(&s.x)].label == s.y)
            .count();
        assert!(near as f64 / 1e5 > 0.99);
    }

    #[test]
    fn standard_normal_score_is_minus_x() {
        let w = single_standard();
        for ab in [0.01, 0.3, 0.9, 1.0] {
            let s = w.score_t(&[0.7, -1.3], ab).unwrap();
            assert!((s[0] + 0.7).abs() < 1e-14 && (s[1] - 1.3).abs() < 1e-14);
        }
    }

    #[test]
    fn symmetric_score_vanishes_at_origin() {
        let w = MixtureWorld::<f64>::two_class(1.5, 0.4).unwrap();
        let s = w.score_t(&[0.0, 0.0], 0.6).unwrap();
        assert!(s.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn score_matches_finite_differences() {
        let h = 1e-5;
        for seed in 0..20 {
            let w = random_world(seed, 3, 4);
            let mut rng = SeedSpec::new(seed, 1).rng(0);
            let x: Vec<f64> = (0..3).map(|_| 3.0 * rng.random::<f64>() - 1.5).collect();
            let ab = 0.05 + 0.9 * rng.random::<f64>();
            let s = w.score_t(&x, ab).unwrap();
            for j in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (w.log_density_t(&xp, ab).unwrap() - w.log_density_t(&xm, ab).unwrap()) / (2.0 * h);
                let rel = (fd - s[j]).abs() / s[j].abs().max(1.0);
                assert!(rel < 1e-5, "seed {seed} coord {j}: {fd} vs {}", s[j]);
            }
        }
    }

    #[test]
    fn score_is_curl_free() {
        let h = 1e-5;
        for seed in 0..10 {
            let w = random_world(seed, 2, 3);
            let x = [0.3, -0.4];
            let ab = 0.5;
            let d = |i: usize, j: usize| {
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                (w.score_t(&xp, ab).unwrap()[i] - w.score_t(&xm, ab).unwrap()[i]) / (2.0 * h)
            };
            assert!((d(0, 1) - d(1, 0)).abs() < 1e-4, "seed {seed}");
        }
    }

    #[test]
    fn gaussian_posterior_mean_closed_form() {
        let w = single_standard();
        let m = w.posterior_mean(&[1.0, 0.0], 0.5).unwrap();
        assert!((m[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12, "{}", m[0]);
        assert_eq!(m[1], 0.0);
    }

    #[test]
    fn posterior_mean_without_noise_is_identity() {
        let w = MixtureWorld::<f64>::canonical();
        let x = [1.1, -0.3];
        let m = w.posterior_mean(&x, 1.0 - 1e-8).unwrap();
        assert!((m[0] - x[0]).abs() < 1e-3 && (m[1] - x[1]).abs() < 1e-3);
        assert!(w.posterior_mean(&x, 1.0).is_err());
        assert!(w.posterior_mean(&x, 0.0).is_err());
        assert!(w.score_t(&x, 1.5).is_err());
    }

    #[test]
    fn posterior_mean_matches_grid_quadrature() {
        let w = random_world(11, 2, 3);
        let ab = 0.5f64;
        let x_t = [0.4, -0.2];
        let n = 400;
        let (lo, hi) = (-8.0, 8.0);
        let h = (hi - lo) / n as f64;
        let noise = 1.0 - ab;
        let (mut z, mut mx, mut my) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let x = [lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h];
                let prior = w.log_density_t(&x, 1.0).unwrap().exp();
                let d2 = (x_t[0] - ab.sqrt() * x[0]).powi(2) + (x_t[1] - ab.sqrt() * x[1]).powi(2);
                let lik = (-d2 / (2.0 * noise)).exp();
                z += prior * lik;
                mx += x[0] * prior * lik;
                my += x[1] * prior * lik;
            }
        }
        let m = w.posterior_mean(&x_t, ab).unwrap();
        assert!(
            (m[0] - mx / z).abs() < 1e-3 && (m[1] - my / z).abs() < 1e-3,
            "{m:?} vs {} {}",
            mx / z,
            my / z
        );
    }

    #[test]
    fn tweedie_consistency() {
        for trial in 0..200u64 {
            let w = random_world(trial, 1 + (trial % 4) as usize, 2 + (trial % 3) as usize);
            let mut rng = SeedSpec::new(trial, 2).rng(0);
            let x: Vec<f64> = (0..w.dim()).map(|_| 6.0 * rng.random::<f64>() - 3.0).collect();
            let ab = 0.01 + 0.98 * rng.random::<f64>();
            let pm = w.posterior_mean(&x, ab).unwrap();
            let s = w.score_t(&x, ab).unwrap();
            for j in 0..w.dim() {
                let tweedie = (x[j] + (1.0 - ab) * s[j]) / ab.sqrt();
                assert!((pm[j] - tweedie).abs() < 1e-9, "trial {trial}");
            }
        }
    }

    #[test]
    fn far_points_do_not_overflow() {
        let c = |m: f64, label| Component {
            weight: 0.5,
            mean: vec![m, m],
            scale: 0.1,
            label,
        };
        let w = MixtureWorld::new(2, vec![c(1.0, 0), c(-1.0, 1)]).unwrap();
        for x in [[1e3, 0.0], [-1e3, 1e3], [707.0, -707.0]] {
            for ab in [1e-4, 0.5, 0.999999, 1.0] {
                assert!(w.score_t(&x, ab).unwrap().iter().all(|v| v.is_finite()));
                if ab < 1.0 {
                    assert!(w.posterior_mean(&x, ab).unwrap().iter().all(|v| v.is_finite()));
                }
            }
            let p = w.bayes_soft_classifier(&x);
            assert!(p.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn isolated_component_is_confident() {
        let w = MixtureWorld::<f64>::canonical();
        for (k, c) in w.components().iter().enumerate() {
            let p = w.bayes_soft_classifier(&c.mean);
            assert!(p[c.label] >= 0.999, "component {k}");
        }
    }

    #[test]
    fn equidistant_point_is_even() {
        let w = MixtureWorld::<f64>::two_class(2.0, 0.5).unwrap();
        let p = w.bayes_soft_classifier(&[0.0, 0.7]);
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn classifier_outputs_are_normalized() {
        let w = random_world(3, 2, 5);
        let mut rng = SeedSpec::new(3, 3).rng(0);
        for _ in 0..1000 {
            let x = [10.0 * rng.random::<f64>() - 5.0, 10.0 * rng.random::<f64>() - 5.0];
            let p = w.bayes_soft_classifier(&x);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let q = w.bayes_smoothed_soft_classifier(&x, 0.7);
            assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_augmentation_is_clean_bayes() {
        let w = random_world(4, 2, 4);
        let x = [0.3, 0.9];
        let a = w.bayes_soft_classifier(&x);
        let b = w.bayes_smoothed_soft_classifier(&x, 0.0);
        assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-12));
    }

    #[test]
    fn huge_augmentation_recovers_priors() {
        let w = random_world(5, 2, 4);
        let p = w.bayes_smoothed_soft_classifier(&[1.0, -2.0], 1e6);
        let mut prior = vec![0.0; w.num_labels()];
        for c in w.components() {
            prior[c.label] += c.weight;
        }
        assert!(p.iter().zip(&prior).all(|(a, b)| (a - b).abs() < 1e-3));
    }

    #[test]
    fn augmented_bayes_rule_matches_monte_carlo() {
        // p(x | k) for augmented data is E_z[N(x; z, σ²I)] with z ~ N(μ_k, s_k² I).
        let w = MixtureWorld::<f64>::canonical();
        let sigma = 0.6;
        let x = [0.4, 1.1];
        let draws = 100_000;
        let seed = SeedSpec::new(8, 8);
        let mut joint = vec![0.0; w.num_labels()];
        for (k, c) in w.components().iter().enumerate() {
            let stream = seed.fork(k as u64);
            let mut acc = 0.0;
            for i in 0..draws {
                let mut rng = stream.rng(i);
                let mut d2 = 0.0;
                for (xj, mj) in x.iter().zip(&c.mean) {
                    let z = mj + c.scale * standard_normal::<f64, _>(&mut rng);
                    d2 += (xj - z).powi(2);
                }
                acc += (-d2 / (2.0 * sigma * sigma)).exp();
            }
            joint[c.label] += c.weight * acc / draws as f64;
        }
        let total: f64 = joint.iter().sum();
        let exact = w.bayes_smoothed_soft_classifier(&x, sigma);
        for (e, j) in exact.iter().zip(&joint) {
            assert!((e - j / total).abs() < 0.01, "{e} vs {}", j / total);
        }
    }

    #[test]
    fn posterior_samples_have_posterior_mean() {
        let w = MixtureWorld::<f64>::canonical();
        let x_t = [0.5, 1.2];
        let ab = 0.6;
        let seed = SeedSpec::new(12, 0);
        let n = 40_000;
        let mut acc = [0.0, 0.0];
        for i in 0..n {
            let s = w.sample_posterior(&x_t, ab, &mut seed.rng(i)).unwrap();
            acc[0] += s[0];
            acc[1] += s[1];
        }
        let pm = w.posterior_mean(&x_t, ab).unwrap();
        for j in 0..2 {
            assert!((acc[j] / n as f64 - pm[j]).abs() < 0.03);
        }
    }

    #[test]
    fn single_precision_world() {
        let w = MixtureWorld::<f32>::canonical();
        let m = w.posterior_mean(&[1.0, 1.0], 0.5).unwrap();
        let w64 = MixtureWorld::<f64>::canonical();
        let m64 = w64.posterior_mean(&[1.0, 1.0], 0.5).unwrap();
        assert!((m[0] as f64 - m64[0]).abs() < 1e-5);
    }
}
