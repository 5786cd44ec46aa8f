use crate::{Error, Real, Result};

/// ln C(n, j) for j = k..=n, built by the multiplicative recurrence.
fn log_binomial_coefficients<T: Real>(k: u64, n: u64) -> Vec<T> {
    let mut first = T::zero();
    for i in 1..=k {
        first = first + (T::lit((n - k + i) as f64) / T::lit(i as f64)).ln();
    }
    let mut out = Vec::with_capacity((n - k + 1) as usize);
    out.push(first);
    let mut cur = first;
    for j in k..n {
        cur = cur + T::lit((n - j) as f64).ln() - T::lit((j + 1) as f64).ln();
        out.push(cur);
    }
    out
}

/// ln P[Binomial(n, p) ≥ k] from precomputed coefficients.
fn log_upper_tail_with<T: Real>(log_coeffs: &[T], k: u64, n: u64, p: T) -> T {
    if k == 0 || p >= T::one() {
        return T::zero();
    }
    if p <= T::zero() {
        return T::neg_infinity();
    }
    let lp = p.ln();
    let lq = (-p).ln_1p();
    let term = |idx: usize| {
        let j = k + idx as u64;
        log_coeffs[idx] + T::lit(j as f64) * lp + T::lit((n - j) as f64) * lq
    };
    let max = (0..log_coeffs.len()).map(term).fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    let sum = (0..log_coeffs.len()).map(|i| (term(i) - max).exp()).sum::<T>();
    max + sum.ln()
}

/// ln P[Binomial(n, p) ≥ k], summed in log space.
pub fn log_binomial_upper_tail<T: Real>(k: u64, n: u64, p: T) -> Result<T> {
    if k > n {
        return Err(Error::domain(format!("k = {k} exceeds n = {n}")));
    }
    if !(p >= T::zero() && p <= T::one()) {
        return Err(Error::domain(format!("p = {p} outside [0,1]")));
    }
    if k == 0 {
        return Ok(T::zero());
    }
    Ok(log_upper_tail_with(&log_binomial_coefficients(k, n), k, n, p))
}

/// One-sided Clopper-Pearson lower confidence bound.
///
/// Returns the largest `p` with `P[Binomial(n, p) ≥ k] ≤ 1 − conf`, found by
/// bisection down to adjacent floating-point values; the lower end of the
/// final bracket is returned so the bound never overshoots.
pub fn lower_conf_bound<T: Real>(k: u64, n: u64, conf: T) -> Result<T> {
    if n == 0 {
        return Err(Error::domain("lower_conf_bound needs n >= 1"));
    }
    if k > n {
        return Err(Error::domain(format!("k = {k} exceeds n = {n}")));
    }
    if !(conf > T::zero() && conf < T::one()) {
        return Err(Error::domain(format!("confidence {conf} outside (0,1)")));
    }
    if k == 0 {
        return Ok(T::zero());
    }
    let log_alpha = (T::one() - conf).ln();
    let coeffs = log_binomial_coefficients::<T>(k, n);
    let (mut lo, mut hi) = (T::zero(), T::one());
    for _ in 0..2000 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if log_upper_tail_with(&coeffs, k, n, mid) <= log_alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Two-sided exact binomial test of `p = 1/2`; returns the p-value.
pub fn binomial_test_half<T: Real>(k: u64, n: u64) -> Result<T> {
    if k > n {
        return Err(Error::domain(format!("k = {k} exceeds n = {n}")));
    }
    if n == 0 {
        return Ok(T::one());
    }
    let extreme = k.max(n - k);
    if 2 * extreme == n {
        return Ok(T::one());
    }
    let tail = log_binomial_upper_tail(extreme, n, T::lit(0.5))?.exp();
    Ok((tail * T::lit(2.0)).min(T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use statrs::distribution::{Beta, ContinuousCDF};

    use crate::stats::SeedSpec;

    #[test]
    fn no_successes_is_vacuous() {
        assert_eq!(lower_conf_bound(0, 100, 0.999f64).unwrap(), 0.0);
    }

    #[test]
    fn all_successes_matches_closed_form() {
        let closed = 0.001f64.powf(0.01);
        assert!((closed - 0.93325).abs() < 1e-4);
        let got = lower_conf_bound(100, 100, 0.999f64).unwrap();
        assert!((got - closed).abs() < 1e-12, "{got} vs {closed}");
    }

    #[test]
    fn matches_beta_quantile_oracle() {
        // Beta(k, n-k+1) alpha-quantile via the regularized incomplete beta.
        for &(k, n, conf) in &[
            (80u64, 100u64, 0.95f64),
            (1, 10, 0.9),
            (57, 60, 0.999),
            (1500, 2000, 0.999),
        ] {
            let oracle = Beta::new(k as f64, (n - k + 1) as f64).unwrap().inverse_cdf(1.0 - conf);
            let got = lower_conf_bound(k, n, conf).unwrap();
            assert!((got - oracle).abs() < 1e-6, "({k},{n},{conf}): {got} vs {oracle}");
        }
    }

    #[test]
    fn tail_matches_direct_sum() {
        let (k, n, p) = (7u64, 20u64, 0.3f64);
        let mut direct = 0.0;
        for j in k..=n {
            let c = (1..=j).fold(1.0, |acc, i| acc * (n - j + i) as f64 / i as f64);
            direct += c * p.powi(j as i32) * (1.0 - p).powi((n - j) as i32);
        }
        let got = log_binomial_upper_tail(k, n, p).unwrap().exp();
        assert!((got - direct).abs() < 1e-14);
    }

    #[test]
    fn domain_errors() {
        assert!(lower_conf_bound(5, 4, 0.9f64).is_err());
        assert!(lower_conf_bound(0, 0, 0.9f64).is_err());
        assert!(lower_conf_bound(1, 2, 1.0f64).is_err());
    }

    #[test]
    fn monotone_over_grid() {
        for &n in &[1u64, 10, 100] {
            for &c in &[0.9f64, 0.99, 0.999] {
                let mut prev = -1.0;
                for k in 0..=n {
                    let b = lower_conf_bound(k, n, c).unwrap();
                    assert!(b >= prev, "k-monotone at ({k},{n},{c})");
                    prev = b;
                }
            }
            for k in 0..=n {
                let b90 = lower_conf_bound(k, n, 0.9f64).unwrap();
                let b99 = lower_conf_bound(k, n, 0.99f64).unwrap();
                let b999 = lower_conf_bound(k, n, 0.999f64).unwrap();
                assert!(b90 >= b99 && b99 >= b999);
            }
        }
    }

    #[test]
    fn coverage() {
        let seed = SeedSpec::new(77, 0);
        for (pi, &p) in [0.6f64, 0.9].iter().enumerate() {
            let stream = seed.fork(pi as u64);
            let mut covered = 0;
            for trial in 0..2000u64 {
                let mut rng = stream.rng(trial);
                let k = (0..200).filter(|_| rng.random::<f64>() < p).count() as u64;
                if lower_conf_bound(k, 200, 0.95).unwrap() <= p {
                    covered += 1;
                }
            }
            assert!(covered as f64 / 2000.0 >= 0.93, "p={p}: {covered}");
        }
    }

    #[test]
    fn binomial_test_edges() {
        assert_eq!(binomial_test_half::<f64>(50, 100).unwrap(), 1.0);
        assert!(binomial_test_half::<f64>(100, 100).unwrap() < 1e-20);
        // 2 * P[X >= 8 | n = 10] = 2 * 56 / 1024
        let p = binomial_test_half::<f64>(8, 10).unwrap();
        assert!((p - 112.0 / 1024.0).abs() < 1e-14);
        assert_eq!(binomial_test_half::<f64>(2, 10).unwrap(), p);
    }

    proptest! {
        #[test]
        fn bound_is_the_tail_crossing(n in 1u64..400, frac in 0.0f64..1.0, conf in 0.5f64..0.9999) {
            let k = ((n as f64) * frac).round() as u64;
            prop_assume!(k >= 1);
            let b = lower_conf_bound(k, n, conf).unwrap();
            let alpha = 1.0 - conf;
            let at = log_binomial_upper_tail(k, n, b).unwrap().exp();
            prop_assert!(at <= alpha * (1.0 + 1e-9));
            let above = log_binomial_upper_tail(k, n, (b + 1e-9).min(1.0)).unwrap().exp();
            prop_assert!(above >= alpha * (1.0 - 1e-6));
        }
    }
}
