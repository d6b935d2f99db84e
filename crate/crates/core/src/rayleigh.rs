//! The Rayleigh-normal family `Z_v`.
//!
//! `Z_v(μ) = 1 − sup_A ℱ(A′, N_{μ,v})²`, the supremum running over smooth
//! nondecreasing `A` with `Φ ≤ A ≤ 1`. The supremum has a closed form built
//! from one root of a tail-balance equation: `β_{μ,v}` below the minimum of
//! `N/N_{μ,v}` when `v < 1`, `α_{μ,v}` above its maximum when `v > 1`. At
//! `v = 1` the family is the Rayleigh CDF with scale `√2`, and `Z_0 := Φ`.
//!
//! Roots are found by bracketed bisection on a log-domain form of the
//! zero-point function, which keeps the sign test meaningful where the tails
//! themselves underflow.

use crate::error::{Error, Result};
use crate::normal::{ln_density_ratio, ln_lower_mills, GaussParams};
use crate::quadrature;

/// `|v − 1|` below which the Rayleigh branch is used.
pub const RAYLEIGH_BAND: f64 = 1e-6;

/// Standardized `|μ|` beyond which `Z_v` is clamped to 0 or 1.
pub const TAIL_CLAMP: f64 = 40.0;

const MAX_BRACKET_STEPS: usize = 200;

/// Which closed form applies for a given `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Branch {
    /// `v = 0`, defined as `Φ`.
    Normal,
    /// `v < 1` with root `β_{μ,v}`.
    Below { beta: f64 },
    /// `v = 1` (within [`RAYLEIGH_BAND`]).
    Rayleigh,
    /// `v > 1` with root `α_{μ,v}`.
    Above { alpha: f64 },
}

/// Parameters `(μ, v)` with the branch root cached at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RNParams {
    pub mu: f64,
    pub v: f64,
    pub branch: Branch,
}

impl RNParams {
    pub fn new(mu: f64, v: f64) -> Result<Self> {
        if !mu.is_finite() || !v.is_finite() || v < 0.0 {
            return Err(Error::Domain(format!("Rayleigh-normal needs finite μ and v ≥ 0, got ({mu}, {v})")));
        }
        let branch = if v == 0.0 {
            Branch::Normal
        } else if (v - 1.0).abs() < RAYLEIGH_BAND {
            Branch::Rayleigh
        } else if v < 1.0 {
            Branch::Below { beta: beta_root(mu, v)? }
        } else {
            Branch::Above { alpha: alpha_root(mu, v)? }
        };
        Ok(Self { mu, v, branch })
    }

    /// The cached root, if this branch has one.
    pub fn cached_root(&self) -> Option<f64> {
        match self.branch {
            Branch::Below { beta } => Some(beta),
            Branch::Above { alpha } => Some(alpha),
            _ => None,
        }
    }

    /// Closed-form value of `sup_A ℱ(A′, N_{μ,v})`.
    pub fn optimal_fidelity(&self) -> f64 {
        let (mu, v) = (self.mu, self.v);
        match self.branch {
            Branch::Normal => (1.0 - crate::normal::std_cdf(mu)).max(0.0).sqrt(),
            Branch::Rayleigh => {
                if mu > 0.0 {
                    (-mu * mu / 8.0).exp()
                } else {
                    1.0
                }
            }
            Branch::Below { beta } => {
                let g = GaussParams { mu, v };
                let std = GaussParams::standard();
                let tail = (0.5 * (std.ln_sf(beta) + g.ln_sf(beta))).exp();
                tail + i_term(mu, v, beta)
            }
            Branch::Above { alpha } => {
                let g = GaussParams { mu, v };
                let std = GaussParams::standard();
                let head = (0.5 * (std.ln_cdf(alpha) + g.ln_cdf(alpha))).exp();
                head + i_term_upper(mu, v, alpha)
            }
        }
    }

    /// `Z_v(μ)`.
    pub fn z_cdf(&self) -> f64 {
        let scaled = if self.v > 1.0 { self.mu / self.v.sqrt() } else { self.mu };
        if scaled > TAIL_CLAMP {
            return 1.0;
        }
        if scaled < -TAIL_CLAMP {
            return 0.0;
        }
        match self.branch {
            Branch::Normal => crate::normal::std_cdf(self.mu),
            Branch::Rayleigh => rayleigh_sqrt2_cdf(self.mu),
            _ => {
                let f = self.optimal_fidelity();
                (1.0 - f * f).clamp(0.0, 1.0)
            }
        }
    }
}

/// Rayleigh CDF with scale `√2`: `1 − e^{−x²/4}` for `x > 0`.
pub fn rayleigh_sqrt2_cdf(x: f64) -> f64 {
    if x > 0.0 {
        -(-x * x / 4.0).exp_m1()
    } else {
        0.0
    }
}

/// Log-domain zero-point function for `β`: positive left of the root,
/// negative between the root and `μ/(1−v)`.
///
/// Writing each tail as density times Mills ratio cancels the quadratic
/// exponents exactly: `½ ln v + ln R(−z) − ln R(−x)` with `z = (x−μ)/√v`
/// and `R = Φ/N`.
fn beta_sign_fn(x: f64, g: GaussParams) -> f64 {
    let z = (x - g.mu) / g.sd();
    0.5 * g.v.ln() + ln_lower_mills(-z) - ln_lower_mills(-x)
}

/// Log-domain zero-point function for `α`: positive between `μ/(1−v)` and
/// the root, negative beyond.
fn alpha_sign_fn(x: f64, g: GaussParams) -> f64 {
    let z = (x - g.mu) / g.sd();
    0.5 * g.v.ln() + ln_lower_mills(z) - ln_lower_mills(x)
}

/// Bisection on a sign change; `lo` has sign `lo_positive`.
fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, lo_positive: bool) -> f64 {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo.min(hi) || mid >= lo.max(hi) {
            break;
        }
        let fm = f(mid);
        if (fm > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The unique solution `β_{μ,v} < μ/(1−v)` of
/// `N(x)/N_{μ,v}(x) = (1−Φ(x))/(1−Φ_{μ,v}(x))` for `0 < v < 1`.
pub fn beta_root(mu: f64, v: f64) -> Result<f64> {
    if !(v > 0.0 && v < 1.0) || !mu.is_finite() {
        return Err(Error::Domain(format!("β root needs 0 < v < 1, got v = {v}")));
    }
    let g = GaussParams { mu, v };
    let pivot = mu / (1.0 - v);
    let f = |x| beta_sign_fn(x, g);
    if f(pivot).is_nan() {
        return Err(Error::RootBracket(format!("β zero-point function undefined at μ/(1−v) for (μ,v)=({mu},{v})")));
    }
    let mut step = 1.0;
    let mut lo = pivot - step;
    let mut found = false;
    for _ in 0..MAX_BRACKET_STEPS {
        let val = f(lo);
        if val > 0.0 {
            found = true;
            break;
        }
        if val.is_nan() {
            break;
        }
        step *= 2.0;
        lo = pivot - step;
    }
    if !found {
        return Err(Error::RootBracket(format!("no sign change below μ/(1−v) for (μ,v)=({mu},{v})")));
    }
    Ok(bisect(f, lo, pivot, true))
}

/// The unique solution `α_{μ,v} > μ/(1−v)` of
/// `N(x)/N_{μ,v}(x) = Φ(x)/Φ_{μ,v}(x)` for `v > 1`.
pub fn alpha_root(mu: f64, v: f64) -> Result<f64> {
    if !(v > 1.0) || !v.is_finite() || !mu.is_finite() {
        return Err(Error::Domain(format!("α root needs v > 1, got v = {v}")));
    }
    let g = GaussParams { mu, v };
    let pivot = mu / (1.0 - v);
    let f = |x| alpha_sign_fn(x, g);
    if f(pivot).is_nan() {
        return Err(Error::RootBracket(format!("α zero-point function undefined at μ/(1−v) for (μ,v)=({mu},{v})")));
    }
    let mut step = 1.0;
    let mut hi = pivot + step;
    let mut found = false;
    for _ in 0..MAX_BRACKET_STEPS {
        let val = f(hi);
        if val < 0.0 {
            found = true;
            break;
        }
        if val.is_nan() {
            break;
        }
        step *= 2.0;
        hi = pivot + step;
    }
    if !found {
        return Err(Error::RootBracket(format!("no sign change above μ/(1−v) for (μ,v)=({mu},{v})")));
    }
    Ok(bisect(f, pivot, hi, true))
}

/// Residual of the `β` equation in the linear form
/// `(1−Φ_{μ,v}(x)) − (1−Φ(x)) N_{μ,v}(x)/N(x)`.
pub fn beta_residual(mu: f64, v: f64, x: f64) -> f64 {
    let g = GaussParams { mu, v };
    let std = GaussParams::standard();
    g.sf(x) - std.sf(x) * (-ln_density_ratio(x, g)).exp()
}

/// Residual of the `α` equation in the linear form
/// `(N(x)/N_{μ,v}(x)) Φ_{μ,v}(x) − Φ(x)`.
pub fn alpha_residual(mu: f64, v: f64, x: f64) -> f64 {
    let g = GaussParams { mu, v };
    let std = GaussParams::standard();
    ln_density_ratio(x, g).exp() * g.cdf(x) - std.cdf(x)
}

fn i_prefactor(mu: f64, v: f64) -> f64 {
    (2.0 * v.sqrt() / (1.0 + v)).sqrt() * (-mu * mu / (4.0 * (1.0 + v))).exp()
}

fn i_kernel(mu: f64, v: f64) -> GaussParams {
    GaussParams { mu: mu / (1.0 + v), v: 2.0 * v / (1.0 + v) }
}

/// `I_{μ,v}(x) = ∫_{−∞}^x √(N(t) N_{μ,v}(t)) dt`; pass `f64::INFINITY` for
/// the full integral.
pub fn i_term(mu: f64, v: f64, x: f64) -> f64 {
    if x == f64::INFINITY {
        return i_prefactor(mu, v);
    }
    i_prefactor(mu, v) * i_kernel(mu, v).cdf(x)
}

/// `I_{μ,v}(∞) − I_{μ,v}(x)` without cancellation.
pub fn i_term_upper(mu: f64, v: f64, x: f64) -> f64 {
    i_prefactor(mu, v) * i_kernel(mu, v).sf(x)
}

/// `Z_v(μ)`.
pub fn z_cdf(mu: f64, v: f64) -> Result<f64> {
    Ok(RNParams::new(mu, v)?.z_cdf())
}

/// `Z_v^{-1}(p)` by bisection over `μ`.
pub fn z_quantile(p: f64, v: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0,1), got {p}")));
    }
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Domain(format!("v must be finite and ≥ 0, got {v}")));
    }
    if v == 0.0 {
        return crate::normal::phi_quantile(p, GaussParams::standard());
    }
    if (v - 1.0).abs() < RAYLEIGH_BAND {
        return Ok((-4.0 * (-p).ln_1p()).sqrt());
    }
    let z = |mu: f64| z_cdf(mu, v);
    let scale = v.sqrt().max(1.0);
    let mut lo = -scale;
    let mut hi = scale;
    let mut guard = 0;
    while z(lo)? > p {
        lo *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(Error::RootBracket(format!("Z_v quantile lower bracket for p={p}")));
        }
    }
    guard = 0;
    while z(hi)? < p {
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(Error::RootBracket(format!("Z_v quantile upper bracket for p={p}")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if z(mid)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A nondecreasing profile `A` whose derivative can be integrated against
/// a Gaussian density.
pub trait Profile {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
    /// Points where the derivative may jump.
    fn breakpoints(&self) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    /// `A = Φ`.
    Standard,
    /// `A = Φ_{μ,1}`.
    Shifted,
    /// `A = scale·Φ_{μ,v}` left of `alpha`, `Φ` right of it.
    LeftScaled { alpha: f64, scale: f64 },
    /// `A = Φ` left of `beta`, `1 − scale·(1 − Φ_{μ,v})` right of it.
    RightScaled { beta: f64, scale: f64 },
}

/// The maximizer `A_{μ,v}` of the variational problem defining `Z_v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerFunction {
    pub params: RNParams,
    shape: Shape,
}

pub fn optimizer_function(params: RNParams) -> Result<OptimizerFunction> {
    let (mu, v) = (params.mu, params.v);
    let g = GaussParams { mu, v: v.max(f64::MIN_POSITIVE) };
    let std = GaussParams::standard();
    let shape = match params.branch {
        Branch::Normal => {
            return Err(Error::Domain("optimizer function needs v > 0".into()));
        }
        Branch::Rayleigh => {
            if mu < 0.0 {
                Shape::Shifted
            } else {
                Shape::Standard
            }
        }
        Branch::Above { alpha } => Shape::LeftScaled {
            alpha,
            scale: (std.ln_cdf(alpha) - g.ln_cdf(alpha)).exp(),
        },
        Branch::Below { beta } => Shape::RightScaled {
            beta,
            scale: (std.ln_sf(beta) - g.ln_sf(beta)).exp(),
        },
    };
    Ok(OptimizerFunction { params, shape })
}

impl OptimizerFunction {
    fn gauss(&self) -> GaussParams {
        GaussParams { mu: self.params.mu, v: self.params.v }
    }
}

impl Profile for OptimizerFunction {
    fn value(&self, x: f64) -> f64 {
        let std = GaussParams::standard();
        let g = self.gauss();
        match self.shape {
            Shape::Standard => std.cdf(x),
            Shape::Shifted => GaussParams { mu: self.params.mu, v: 1.0 }.cdf(x),
            Shape::LeftScaled { alpha, scale } => {
                if x <= alpha {
                    scale * g.cdf(x)
                } else {
                    std.cdf(x)
                }
            }
            Shape::RightScaled { beta, scale } => {
                if x <= beta {
                    std.cdf(x)
                } else {
                    1.0 - scale * g.sf(x)
                }
            }
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        let std = GaussParams::standard();
        let g = self.gauss();
        match self.shape {
            Shape::Standard => std.pdf(x),
            Shape::Shifted => GaussParams { mu: self.params.mu, v: 1.0 }.pdf(x),
            Shape::LeftScaled { alpha, scale } => {
                if x <= alpha {
                    scale * g.pdf(x)
                } else {
                    std.pdf(x)
                }
            }
            Shape::RightScaled { beta, scale } => {
                if x <= beta {
                    std.pdf(x)
                } else {
                    scale * g.pdf(x)
                }
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self.shape {
            Shape::LeftScaled { alpha, .. } => vec![alpha],
            Shape::RightScaled { beta, .. } => vec![beta],
            _ => Vec::new(),
        }
    }
}

/// `ℱ(A′, N_{μ,v}) = ∫ √(A′(x) N_{μ,v}(x)) dx` by adaptive quadrature,
/// split at the profile's breakpoints.
///
/// The integration window is `μ ± 40√v`; outside it `√N_{μ,v}` is below
/// `e^{-400}`.
pub fn continuous_fidelity<A: Profile + ?Sized>(a: &A, g: GaussParams) -> Result<f64> {
    let half = 40.0 * g.sd();
    let (lo, hi) = (g.mu - half, g.mu + half);
    let mut breaks = vec![lo];
    let mut inner: Vec<f64> = a.breakpoints().into_iter().filter(|b| *b > lo && *b < hi).collect();
    inner.sort_by(f64::total_cmp);
    breaks.extend(inner);
    breaks.push(hi);
    let integrand = |x: f64| {
        let d = a.derivative(x);
        if d <= 0.0 {
            0.0
        } else {
            (0.5 * (d.ln() + g.ln_pdf(x))).exp()
        }
    };
    quadrature::integrate_split(integrand, &breaks, 1e-11)
}

/// Checks `Φ ≤ A ≤ 1` and monotonicity of a profile on a grid.
pub fn is_feasible_on_grid<A: Profile + ?Sized>(a: &A, grid: &[f64], tol: f64) -> bool {
    let std = GaussParams::standard();
    let mut prev = f64::NEG_INFINITY;
    for &x in grid {
        let y = a.value(x);
        if y < std.cdf(x) - tol || y > 1.0 + tol || y < prev - tol {
            return false;
        }
        prev = y;
    }
    true
}
