use crate::{Error, Real, Result};

/// Standard normal CDF Φ(x), evaluated through `erfc` so both tails keep
/// relative accuracy.
pub fn normal_cdf<T: Real>(x: T) -> T {
    T::lit(0.5) * (-x / T::SQRT_2()).erfc()
}

/// Standard normal density.
pub fn normal_pdf<T: Real>(x: T) -> T {
    (-(x * x) / T::lit(2.0)).exp() / (T::TAU()).sqrt()
}

// Acklam's rational approximation (relative error < 1.2e-9 before refinement).
#[allow(clippy::excessive_precision)]
const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_690e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_671_010_422_868,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const P_LOW: f64 = 0.02425;

fn horner<T: Real>(coeffs: &[f64], x: T) -> T {
    coeffs.iter().fold(T::zero(), |acc, &c| acc * x + T::lit(c))
}

/// Lower-half quantile, `p <= 0.5`.
fn lower_quantile<T: Real>(p: T) -> T {
    let x = if p < T::lit(P_LOW) {
        let q = (T::lit(-2.0) * p.ln()).sqrt();
        horner(&C, q) / (horner(&D, q) * q + T::one())
    } else {
        let q = p - T::lit(0.5);
        let r = q * q;
        horner(&A, r) * q / (horner(&B, r) * r + T::one())
    };
    // One Halley step against the erfc-based CDF.
    let e = normal_cdf(x) - p;
    let u = e * T::TAU().sqrt() * (x * x / T::lit(2.0)).exp();
    x - u / (T::one() + x * u / T::lit(2.0))
}

/// Inverse standard normal CDF Φ⁻¹(p).
///
/// Upper-half arguments are reflected, so `normal_quantile(1 - p)` is exactly
/// `-normal_quantile(p)` whenever `1 - p` is representable.
pub fn normal_quantile<T: Real>(p: T) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::domain(format!("normal_quantile needs p in (0,1), got {p}")));
    }
    let half = T::lit(0.5);
    if p == half {
        return Ok(T::zero());
    }
    if p < half {
        Ok(lower_quantile(p))
    } else {
        Ok(-lower_quantile(T::one() - p))
    }
}
