//! Gaussian kernel: densities, CDFs, log-tails, quantiles and the density-ratio
//! monotonicity regions that seed every root finder in [`crate::rayleigh`].
//!
//! Tail probabilities are evaluated through `erfc` and, past the point where
//! `erfc` underflows, through a continued fraction for the Mills ratio, so the
//! log-domain variants stay finite for arguments far beyond ±38.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this standardized argument `erfc` loses the lower tail to underflow.
const MILLS_SWITCH: f64 = 35.0;

/// Mean/variance pair of a normal distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussParams {
    pub mu: f64,
    pub v: f64,
}

impl GaussParams {
    pub fn new(mu: f64, v: f64) -> Result<Self> {
        if !(v > 0.0) || !v.is_finite() || !mu.is_finite() {
            return Err(Error::Domain(format!(
                "normal parameters need finite mean and positive variance, got ({mu}, {v})"
            )));
        }
        Ok(Self { mu, v })
    }

    pub const fn standard() -> Self {
        Self { mu: 0.0, v: 1.0 }
    }

    #[inline]
    pub fn sd(&self) -> f64 {
        self.v.sqrt()
    }

    #[inline]
    fn standardize(&self, x: f64) -> f64 {
        (x - self.mu) / self.sd()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        std_cdf(self.standardize(x))
    }

    /// Upper tail `1 - cdf(x)` without cancellation.
    pub fn sf(&self, x: f64) -> f64 {
        std_sf(self.standardize(x))
    }

    pub fn ln_cdf(&self, x: f64) -> f64 {
        ln_std_cdf(self.standardize(x))
    }

    pub fn ln_sf(&self, x: f64) -> f64 {
        ln_std_cdf(-self.standardize(x))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let z = self.standardize(x);
        -0.5 * z * z - LN_SQRT_2PI - 0.5 * self.v.ln()
    }
}

/// Standard normal CDF.
pub fn std_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal upper tail.
pub fn std_sf(z: f64) -> f64 {
    std_cdf(-z)
}

/// Standard normal density.
pub fn std_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

/// Mills ratio `(1 - Φ(t)) / N(t)` for large positive `t`, by backward
/// evaluation of its continued fraction `1/(t+1/(t+2/(t+3/(t+…))))`.
fn mills_ratio(t: f64) -> f64 {
    let mut acc = t;
    for k in (1..=80).rev() {
        acc = t + k as f64 / acc;
    }
    1.0 / acc
}

/// `ln Φ(z)`, finite for every finite `z`.
pub fn ln_std_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z == f64::INFINITY {
        return 0.0;
    }
    if z == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if z < -MILLS_SWITCH {
        let t = -z;
        return -0.5 * t * t - LN_SQRT_2PI + mills_ratio(t).ln();
    }
    if z > 0.0 {
        (-std_sf(z)).ln_1p()
    } else {
        std_cdf(z).ln()
    }
}

/// `ln(Φ(t)/N(t))`. The quadratic parts of `ln Φ` and `ln N` cancel here,
/// which matters when two such terms are compared far in the tail.
pub fn ln_lower_mills(t: f64) -> f64 {
    if t < -MILLS_SWITCH {
        return mills_ratio(-t).ln();
    }
    ln_std_cdf(t) + 0.5 * t * t + LN_SQRT_2PI
}

/// Normal CDF `Φ_{μ,v}(x)`.
pub fn phi_cdf(x: f64, g: GaussParams) -> f64 {
    g.cdf(x)
}

/// Normal quantile: the `x` with `Φ_{μ,v}(x) = p`.
///
/// A rational first guess is refined by Halley steps against the
/// `erfc`-based CDF, working on whichever tail is smaller.
pub fn phi_quantile(p: f64, g: GaussParams) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0,1), got {p}")));
    }
    Ok(g.mu + g.sd() * std_quantile(p))
}

fn std_quantile(p: f64) -> f64 {
    if p > 0.5 {
        return -std_quantile_lower(1.0 - p);
    }
    std_quantile_lower(p)
}

// Lower-half quantile, p <= 0.5.
fn std_quantile_lower(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
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
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];

    let mut x = if p < 0.024_25 {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };

    for _ in 0..3 {
        let e = std_cdf(x) - p;
        // u = e / N(x), evaluated through the log density to survive deep tails
        let u = e * (0.5 * x * x + LN_SQRT_2PI).exp();
        if !u.is_finite() {
            break;
        }
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// `N(x) / N_{μ,v}(x)` computed as `exp(ln N − ln N_{μ,v})`.
///
/// Overflow saturates to `f64::INFINITY`.
pub fn density_ratio(x: f64, g: GaussParams) -> f64 {
    ln_density_ratio(x, g).exp()
}

pub fn ln_density_ratio(x: f64, g: GaussParams) -> f64 {
    // ((1-v)x² - 2μx + μ²)/(2v): the two quadratic terms cancel when v ≈ 1
    let quad = (1.0 - g.v) * x * x - 2.0 * g.mu * x + g.mu * g.mu;
    0.5 * quad / g.v + 0.5 * g.v.ln()
}

/// Interval on which `N / N_{μ,v}` is strictly decreasing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MonotoneRegion {
    Empty,
    Whole,
    /// `(t, ∞)`
    Above(f64),
    /// `(−∞, t)`
    Below(f64),
}

impl MonotoneRegion {
    pub fn contains(&self, x: f64) -> bool {
        match *self {
            MonotoneRegion::Empty => false,
            MonotoneRegion::Whole => true,
            MonotoneRegion::Above(t) => x > t,
            MonotoneRegion::Below(t) => x < t,
        }
    }
}

pub fn monotone_region(g: GaussParams) -> MonotoneRegion {
    if g.v == 1.0 {
        if g.mu > 0.0 {
            MonotoneRegion::Whole
        } else {
            MonotoneRegion::Empty
        }
    } else if g.v > 1.0 {
        MonotoneRegion::Above(g.mu / (1.0 - g.v))
    } else {
        MonotoneRegion::Below(g.mu / (1.0 - g.v))
    }
}

/// `∫ √N_{μ,v}(x) dx` over `[a, b]`, used for piecewise-linear profiles.
pub fn sqrt_density_integral(a: f64, b: f64, g: GaussParams) -> f64 {
    // √N_{μ,v} = (2πv)^{-1/4} exp(-(x-μ)²/(4v)), a Gaussian kernel of variance 2v.
    let wide = GaussParams { mu: g.mu, v: 2.0 * g.v };
    let scale = (2.0 * PI * g.v).powf(-0.25) * (4.0 * PI * g.v).sqrt();
    scale * (wide.cdf(b) - wide.cdf(a))
}
