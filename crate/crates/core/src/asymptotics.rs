//! Second-order expansions of the maximum convertible copy number and the
//! harness that compares exact finite-`n` fidelities with their limits.
//!
//! Entropies and varentropies are in bits. The only natural logarithm is the
//! `ln(1/ν)` in the Rayleigh quantile `R_{√2}^{-1}(1−ν²) = √(8 ln(1/ν))`.

use rayon::prelude::*;
use serde::Serialize;

use crate::conversion::maj_fidelity;
use crate::distributions::{tensor_power_blocks, FiniteDistribution};
use crate::error::{Error, Result};
use crate::normal::{phi_quantile, std_cdf, GaussParams};
use crate::rayleigh::{z_cdf, z_quantile};

/// Varentropy at or below this counts as uniform.
pub const UNIFORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateConstants {
    pub h_p: f64,
    pub h_q: f64,
    pub v_p: f64,
    pub v_q: f64,
    /// `H(Q)/√V(P)`; `None` when `P` is uniform.
    pub d: Option<f64>,
    /// `(H(P)/V(P)) / (H(Q)/V(Q))`; zero when only `Q` is uniform, `None`
    /// when `P` is uniform.
    pub c: Option<f64>,
    pub p_uniform: bool,
    pub q_uniform: bool,
}

pub fn rate_constants(p: &FiniteDistribution, q: &FiniteDistribution) -> RateConstants {
    let (h_p, h_q) = (p.entropy(), q.entropy());
    let (v_p, v_q) = (p.varentropy(), q.varentropy());
    let p_uniform = v_p <= UNIFORM_TOL;
    let q_uniform = v_q <= UNIFORM_TOL;
    let d = (!p_uniform).then(|| h_q / v_p.sqrt());
    let c = match (p_uniform, q_uniform) {
        (true, _) => None,
        (false, true) => Some(0.0),
        (false, false) => Some((h_p / v_p) / (h_q / v_q)),
    };
    RateConstants { h_p, h_q, v_p, v_q, d, c, p_uniform, q_uniform }
}

/// Which closed form of the second-order term applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionBranch {
    General,
    /// `Q = P`: Rayleigh quantile.
    Clone,
    /// `Q` uniform: `Z_0 = Φ`.
    TargetUniform,
    /// `P` uniform: reflected form.
    SourceUniform,
    /// Both uniform with equal entropy: exactly `n`.
    BothUniformEqual,
    /// Both uniform, unequal entropy: no second-order term.
    BothUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Expansion {
    pub first_order: f64,
    /// Coefficient of `√n`.
    pub second_order: f64,
    pub value: f64,
    pub branch: ExpansionBranch,
}

fn same_distribution(p: &FiniteDistribution, q: &FiniteDistribution) -> bool {
    p.support() == q.support() && p.sorted().iter().zip(q.sorted()).all(|(a, b)| (a - b).abs() <= 1e-12)
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > 0.0 && nu < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("ν must lie in (0,1), got {nu}")))
    }
}

/// Coefficient of `√n` in `L_n(P, Q | ν)`.
pub fn second_order_coefficient(p: &FiniteDistribution, q: &FiniteDistribution, nu: f64) -> Result<(f64, ExpansionBranch)> {
    check_nu(nu)?;
    let k = rate_constants(p, q);
    let level = 1.0 - nu * nu;
    let std = GaussParams::standard();
    Ok(match (k.p_uniform, k.q_uniform) {
        (true, true) => {
            if (k.h_p - k.h_q).abs() <= 1e-12 * k.h_q {
                (0.0, ExpansionBranch::BothUniformEqual)
            } else {
                (0.0, ExpansionBranch::BothUniform)
            }
        }
        (false, true) => (k.v_p.sqrt() / k.h_q * phi_quantile(level, std)?, ExpansionBranch::TargetUniform),
        (true, false) => (
            (k.v_q * k.h_p / k.h_q.powi(3)).sqrt() * phi_quantile(level, std)?,
            ExpansionBranch::SourceUniform,
        ),
        (false, false) if same_distribution(p, q) => {
            ((8.0 * k.v_p * (1.0 / nu).ln()).sqrt() / k.h_p, ExpansionBranch::Clone)
        }
        (false, false) => {
            let c = k.c.expect("both non-uniform");
            let d = k.d.expect("P non-uniform");
            (z_quantile(level, c)? / d, ExpansionBranch::General)
        }
    })
}

/// `(H(P)/H(Q))^{3/2} Z_{C_{Q,P}}^{-1}(1−ν²) / D_{Q,P}`, the reflected form
/// of the general coefficient.
pub fn reflected_coefficient(p: &FiniteDistribution, q: &FiniteDistribution, nu: f64) -> Result<f64> {
    check_nu(nu)?;
    let k = rate_constants(q, p);
    let (c, d) = match (k.c, k.d) {
        (Some(c), Some(d)) => (c, d),
        _ => return Err(Error::Domain("reflected form needs a non-uniform target".into())),
    };
    Ok((k.h_q / k.h_p).powf(1.5) * z_quantile(1.0 - nu * nu, c)? / d)
}

/// The second-order approximation of `L_n(P, Q | ν)`.
pub fn second_order_expansion(p: &FiniteDistribution, q: &FiniteDistribution, nu: f64, n: u64) -> Result<Expansion> {
    let (coef, branch) = second_order_coefficient(p, q, nu)?;
    let nf = n as f64;
    let first = if branch == ExpansionBranch::BothUniformEqual { nf } else { p.entropy() / q.entropy() * nf };
    Ok(Expansion { first_order: first, second_order: coef, value: first + coef * nf.sqrt(), branch })
}

/// `H(P)/H(Q)·n + coefficient·√n`.
pub fn second_order_l(p: &FiniteDistribution, q: &FiniteDistribution, nu: f64, n: u64) -> Result<f64> {
    Ok(second_order_expansion(p, q, nu, n)?.value)
}

/// `lim_n F^M(P^n → Q^{H(P)/H(Q)·n + b√n})`.
pub fn limit_fidelity(p: &FiniteDistribution, q: &FiniteDistribution, b: f64) -> Result<f64> {
    let k = rate_constants(p, q);
    let out = match (k.p_uniform, k.q_uniform) {
        (true, true) => {
            if b <= 0.0 {
                1.0
            } else {
                0.0
            }
        }
        (false, true) => std_cdf(-b * k.h_q / k.v_p.sqrt()).sqrt(),
        (true, false) => std_cdf(-(k.h_q.powi(3) / (k.v_q * k.h_p)).sqrt() * b).sqrt(),
        (false, false) => {
            let c = k.c.expect("both non-uniform");
            let d = k.d.expect("P non-uniform");
            (1.0 - z_cdf(b * d, c)?).max(0.0).sqrt()
        }
    };
    Ok(out)
}

/// Copy count `⌊H(P)/H(Q)·n + b√n⌋` used by the harness.
pub fn harness_copies(p: &FiniteDistribution, q: &FiniteDistribution, b: f64, n: u64) -> u64 {
    let nf = n as f64;
    let ratio = if same_distribution(p, q) { 1.0 } else { p.entropy() / q.entropy() };
    (ratio * nf + b * nf.sqrt()).floor().max(0.0) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarnessRow {
    pub n: u64,
    pub l_used: u64,
    pub exact_fidelity: f64,
    pub limit_fidelity: f64,
    pub gap: f64,
}

/// Exact `F^M(P^n → Q^L)` against its limit for each `n`, rows evaluated in
/// parallel.
pub fn convergence_harness(p: &FiniteDistribution, q: &FiniteDistribution, b: f64, n_grid: &[u64]) -> Result<Vec<HarnessRow>> {
    let limit = limit_fidelity(p, q, b)?;
    n_grid
        .par_iter()
        .map(|&n| {
            if n == 0 {
                return Err(Error::Domain("harness n must be positive".into()));
            }
            let l = harness_copies(p, q, b, n);
            let exact = if l == 0 {
                1.0
            } else {
                let pn = tensor_power_blocks(p, n as usize)?;
                let ql = tensor_power_blocks(q, l as usize)?;
                maj_fidelity(&pn, &ql)?.0
            };
            Ok(HarnessRow { n, l_used: l, exact_fidelity: exact, limit_fidelity: limit, gap: (exact - limit).abs() })
        })
        .collect()
}
