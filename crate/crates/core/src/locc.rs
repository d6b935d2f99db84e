//! Bipartite pure states, reduced to their squared Schmidt coefficients, and
//! LOCC conversion counts through the majorization engine.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::asymptotics::second_order_l;
use crate::conversion::{max_convertible_m, max_convertible_scan, maj_fidelity_powers};
use crate::distributions::FiniteDistribution;
use crate::error::{Error, Result};

/// Squared singular values at or below this fraction of the norm are zero.
const RANK_TOL: f64 = 1e-24;

#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteState {
    coeffs: DMatrix<Complex64>,
    schmidt_sq: FiniteDistribution,
    entropy: f64,
    varentropy: f64,
}

#[derive(Serialize, Deserialize)]
struct StateJson {
    rows: usize,
    cols: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl BipartiteState {
    /// Normalizes the coefficient matrix and takes its Schmidt spectrum.
    pub fn schmidt(coeffs: DMatrix<Complex64>) -> Result<Self> {
        if coeffs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("non-finite amplitude".into()));
        }
        let norm_sq: f64 = coeffs.iter().map(|z| z.norm_sqr()).sum();
        if norm_sq == 0.0 {
            return Err(Error::InvalidState("zero coefficient matrix".into()));
        }
        let coeffs = coeffs.unscale(norm_sq.sqrt());
        let sv = coeffs.clone().svd(false, false).singular_values;
        let sq: Vec<f64> = sv.iter().map(|s| s * s).filter(|&x| x > RANK_TOL).collect();
        if sq.len() < 2 {
            return Err(Error::ProductState);
        }
        let schmidt_sq = FiniteDistribution::new(&sq)?;
        let entropy = schmidt_sq.entropy();
        let varentropy = schmidt_sq.varentropy();
        Ok(Self { coeffs, schmidt_sq, entropy, varentropy })
    }

    /// `Σ_i √p_i |i⟩|i⟩`.
    pub fn from_schmidt(p: &[f64]) -> Result<Self> {
        let d = p.len();
        let mut m = DMatrix::zeros(d, d);
        for (i, &x) in p.iter().enumerate() {
            if !(x >= 0.0) {
                return Err(Error::InvalidState(format!("negative Schmidt weight {x}")));
            }
            m[(i, i)] = Complex64::new(x.sqrt(), 0.0);
        }
        Self::schmidt(m)
    }

    /// `ψ_m^max`.
    pub fn maximal(m: usize) -> Result<Self> {
        Self::from_schmidt(&vec![1.0; m])
    }

    pub fn epr() -> Self {
        Self::maximal(2).expect("rank 2")
    }

    pub fn from_parts(rows: usize, cols: usize, re: &[f64], im: &[f64]) -> Result<Self> {
        if rows == 0 || cols == 0 || re.len() != rows * cols || im.len() != rows * cols {
            return Err(Error::InvalidState(format!(
                "expected {rows}x{cols} amplitudes, got {} real and {} imaginary",
                re.len(),
                im.len()
            )));
        }
        let m = DMatrix::from_fn(rows, cols, |i, j| Complex64::new(re[i * cols + j], im[i * cols + j]));
        Self::schmidt(m)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let j: StateJson = serde_json::from_str(s).map_err(|e| Error::InvalidState(e.to_string()))?;
        Self::from_parts(j.rows, j.cols, &j.re, &j.im)
    }

    /// Row-major JSON of the normalized coefficients.
    pub fn to_json_string(&self) -> String {
        let (rows, cols) = self.coeffs.shape();
        let mut re = Vec::with_capacity(rows * cols);
        let mut im = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                re.push(self.coeffs[(i, j)].re);
                im.push(self.coeffs[(i, j)].im);
            }
        }
        serde_json::to_string(&StateJson { rows, cols, re, im }).expect("finite floats serialize")
    }

    pub fn coeffs(&self) -> &DMatrix<Complex64> {
        &self.coeffs
    }

    pub fn schmidt_sq(&self) -> &FiniteDistribution {
        &self.schmidt_sq
    }

    /// Entanglement entropy in bits.
    pub fn entropy(&self) -> f64 {
        self.entropy
    }

    pub fn varentropy(&self) -> f64 {
        self.varentropy
    }

    pub fn is_maximal(&self) -> bool {
        self.schmidt_sq.is_uniform()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CopyMode {
    Exact,
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Copies {
    Exact(u64),
    Asymptotic(f64),
}

impl Copies {
    pub fn as_f64(self) -> f64 {
        match self {
            Copies::Exact(l) => l as f64,
            Copies::Asymptotic(x) => x,
        }
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > 0.0 && nu < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("ν must lie in (0,1), got {nu}")))
    }
}

/// Optimal LOCC fidelity of `ψ^{⊗n} → φ^{⊗L}`.
pub fn locc_fidelity(psi: &BipartiteState, phi: &BipartiteState, n: usize, l: usize) -> Result<f64> {
    maj_fidelity_powers(&psi.schmidt_sq, n, &phi.schmidt_sq, l)
}

/// `L_n(ψ, φ | ν)`, exactly or by the second-order expansion.
pub fn locc_max_copies(psi: &BipartiteState, phi: &BipartiteState, nu: f64, n: usize, mode: CopyMode) -> Result<Copies> {
    check_nu(nu)?;
    match mode {
        CopyMode::Exact => Ok(Copies::Exact(max_convertible_m(&psi.schmidt_sq, &phi.schmidt_sq, n, nu)?)),
        CopyMode::Asymptotic => Ok(Copies::Asymptotic(second_order_l(&psi.schmidt_sq, &phi.schmidt_sq, nu, n as u64)?)),
    }
}

/// `⌊n + 2 log_m(1/ν)⌋` for an `m`-level maximal state.
fn maximal_clone_count(m: usize, nu: f64, n: usize) -> u64 {
    let extra = 2.0 * (1.0 / nu).ln() / (m as f64).ln();
    n as u64 + (extra + 1e-12).floor() as u64
}

/// Copies of `ψ` obtainable from `ψ^{⊗n}` with fidelity at least `ν`.
pub fn clone_copies(psi: &BipartiteState, nu: f64, n: usize, mode: CopyMode) -> Result<Copies> {
    check_nu(nu)?;
    match mode {
        CopyMode::Exact if psi.is_maximal() => Ok(Copies::Exact(maximal_clone_count(psi.schmidt_sq.support(), nu, n))),
        CopyMode::Exact => Ok(Copies::Exact(max_convertible_m(&psi.schmidt_sq, &psi.schmidt_sq, n, nu)?)),
        CopyMode::Asymptotic => {
            let nf = n as f64;
            Ok(Copies::Asymptotic(nf + (8.0 * psi.varentropy * (1.0 / nu).ln()).sqrt() / psi.entropy * nf.sqrt()))
        }
    }
}

/// `1/2` for non-maximal states, `0` for maximal ones.
pub fn replication_rate(psi: &BipartiteState, _nu: f64) -> f64 {
    if psi.varentropy > 1e-12 {
        0.5
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationEstimate {
    pub rate: f64,
    /// `(n, L_n)` from the exact engine.
    pub points: Vec<(u64, u64)>,
    /// Least-squares slope of `ln(L_n − n)` against `ln n`.
    pub exponent: f64,
}

/// Theoretical rate with the empirical exponent over `n_grid`.
pub fn replication_estimate(psi: &BipartiteState, nu: f64, n_grid: &[usize]) -> Result<ReplicationEstimate> {
    check_nu(nu)?;
    let mut points = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let l = max_convertible_scan(&psi.schmidt_sq, &psi.schmidt_sq, n, nu)?.l;
        points.push((n as u64, l));
    }
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|(n, l)| l > n)
        .map(|&(n, l)| ((n as f64).ln(), ((l - n) as f64).ln()))
        .collect();
    if xy.len() < 2 {
        return Err(Error::Solver("fewer than two grid points with L_n > n".into()));
    }
    let k = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / k;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(ReplicationEstimate { rate: replication_rate(psi, nu), points, exponent: sxy / sxx })
}
