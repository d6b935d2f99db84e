//! Finite distributions and log-domain block representations of i.i.d. powers.
//!
//! A [`BlockDistribution`] lists the distinct atom values of a distribution
//! in decreasing order together with how many atoms share each value. For
//! `P^n` the blocks are the type classes, so `(0.6, 0.4)^6400` needs 6401
//! blocks while the number of atoms is `2^6400`. Values and multiplicities
//! are kept as natural logarithms; when a multiplicity fits in 53 bits it is
//! also kept exactly so small cases stay bit-exact.

use std::f64::consts::LN_2;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default maximum number of blocks produced by [`tensor_power_blocks`].
pub const DEFAULT_BLOCK_CAP: usize = 2_000_000;

/// Environment variable overriding [`DEFAULT_BLOCK_CAP`].
pub const BLOCK_CAP_ENV: &str = "RNC_BLOCK_CAP";

const MAX_EXACT: u64 = 1 << 53;
const TIE_TOL: f64 = 1e-12;

/// Block cap in effect for this process: `RNC_BLOCK_CAP` if set and valid,
/// otherwise [`DEFAULT_BLOCK_CAP`]. Read once.
pub fn block_cap() -> usize {
    static CAP: OnceLock<usize> = OnceLock::new();
    *CAP.get_or_init(|| {
        std::env::var(BLOCK_CAP_ENV)
            .ok()
            .and_then(|s| s.trim().parse::<usize>().ok())
            .filter(|&c| c > 0)
            .unwrap_or(DEFAULT_BLOCK_CAP)
    })
}

/// Compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// A probability vector with at least two atoms of positive mass.
///
/// `probs` keeps the input order (zeros dropped); `sorted` is the
/// decreasing rearrangement.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDistribution {
    probs: Vec<f64>,
    sorted: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DistributionJson {
    p: Vec<f64>,
}

impl FiniteDistribution {
    /// Equivalent to [`normalize_and_sort`].
    pub fn new(raw: &[f64]) -> Result<Self> {
        normalize_and_sort(raw)
    }

    /// The uniform distribution `U_m`, `m ≥ 2`.
    pub fn uniform(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidDistribution(format!("uniform needs m ≥ 2, got {m}")));
        }
        let p = vec![1.0 / m as f64; m];
        Ok(Self { probs: p.clone(), sorted: p })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Atoms in decreasing order.
    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn support(&self) -> usize {
        self.sorted.len()
    }

    /// True when all atoms are equal to relative tolerance `1e-12`.
    pub fn is_uniform(&self) -> bool {
        let hi = self.sorted[0];
        let lo = *self.sorted.last().expect("support ≥ 2");
        (hi - lo) <= 1e-12 * hi
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        entropy(self)
    }

    /// Varentropy in bits².
    pub fn varentropy(&self) -> f64 {
        varentropy(self)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let d: DistributionJson = serde_json::from_str(s)
            .map_err(|e| Error::InvalidDistribution(format!("malformed distribution JSON: {e}")))?;
        Self::new(&d.p)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&DistributionJson { p: self.probs.clone() }).expect("finite floats serialize")
    }
}

/// Normalizes `raw`, drops zero atoms and builds the sorted view.
pub fn normalize_and_sort(raw: &[f64]) -> Result<FiniteDistribution> {
    if let Some(x) = raw.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidDistribution(format!("entries must be finite and nonnegative, found {x}")));
    }
    let positive: Vec<f64> = raw.iter().copied().filter(|&x| x > 0.0).collect();
    if positive.len() < 2 {
        return Err(Error::InvalidDistribution(format!(
            "need at least 2 positive entries, found {}",
            positive.len()
        )));
    }
    let mut acc = Neumaier::default();
    for &x in &positive {
        acc.add(x);
    }
    let total = acc.value();
    let probs: Vec<f64> = positive.iter().map(|x| x / total).collect();
    let mut sorted = probs.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(FiniteDistribution { probs, sorted })
}

/// `H(P) = −Σ P(x) log₂ P(x)`.
pub fn entropy(p: &FiniteDistribution) -> f64 {
    let mut acc = Neumaier::default();
    for &x in &p.sorted {
        acc.add(-x * x.log2());
    }
    acc.value()
}

/// `V(P) = Σ P(x) (−log₂ P(x) − H(P))²`.
pub fn varentropy(p: &FiniteDistribution) -> f64 {
    let h = entropy(p);
    let mut acc = Neumaier::default();
    for &x in &p.sorted {
        let d = -x.log2() - h;
        acc.add(x * d * d);
    }
    acc.value().max(0.0)
}

/// `F(P, Q) = Σ √(P(y) Q(y))` over a common index set; the shorter vector is
/// padded with zeros.
pub fn fidelity(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = Neumaier::default();
    for (a, b) in p.iter().zip(q) {
        acc.add((a * b).sqrt());
    }
    acc.value()
}

/// Hellinger distance `√(1 − F)`.
pub fn hellinger(p: &[f64], q: &[f64]) -> f64 {
    (1.0 - fidelity(p, q)).max(0.0).sqrt()
}

/// A run of atoms sharing one value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub log_value: f64,
    pub log_multiplicity: f64,
    /// The atom value; exact when produced from exactly representable factors.
    pub value: f64,
    /// The multiplicity when it is an integer below `2^53`.
    pub exact_count: Option<u64>,
}

impl Block {
    /// Total mass of the block.
    pub fn mass(&self) -> f64 {
        match self.exact_count {
            Some(c) if self.value > 0.0 && self.value.is_normal() => c as f64 * self.value,
            _ => (self.log_multiplicity + self.log_value).exp(),
        }
    }
}

/// Blocks sorted by strictly decreasing value.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDistribution {
    blocks: Vec<Block>,
}

impl BlockDistribution {
    /// Builds blocks from arbitrary positive atoms (already normalized to
    /// total 1 within `1e-9`). Equal atoms are merged.
    pub fn from_atoms(atoms: &[f64]) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidDistribution("no atoms".into()));
        }
        if let Some(x) = atoms.iter().find(|x| !x.is_finite() || **x <= 0.0) {
            return Err(Error::InvalidDistribution(format!("atoms must be positive, found {x}")));
        }
        let raw = atoms
            .iter()
            .map(|&x| Block { log_value: x.ln(), log_multiplicity: 0.0, value: x, exact_count: Some(1) })
            .collect();
        Self::from_unsorted(raw)
    }

    /// Sorts, merges ties and validates total mass.
    pub fn from_unsorted(mut raw: Vec<Block>) -> Result<Self> {
        raw.sort_by(|a, b| b.log_value.total_cmp(&a.log_value));
        let mut blocks: Vec<Block> = Vec::with_capacity(raw.len());
        for b in raw {
            match blocks.last_mut() {
                Some(last) if (last.log_value - b.log_value).abs() < TIE_TOL * last.log_value.abs().max(1.0) => {
                    last.log_multiplicity = log_add_exp(last.log_multiplicity, b.log_multiplicity);
                    last.exact_count = match (last.exact_count, b.exact_count) {
                        (Some(x), Some(y)) if x + y <= MAX_EXACT => Some(x + y),
                        _ => None,
                    };
                }
                _ => blocks.push(b),
            }
        }
        let out = Self { blocks };
        let total = out.total_mass();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!("block masses sum to {total}, not 1")));
        }
        Ok(out)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        let mut acc = Neumaier::default();
        for b in &self.blocks {
            acc.add(b.mass());
        }
        acc.value()
    }

    /// All atoms in decreasing order; refused beyond the block cap.
    pub fn expand(&self) -> Result<Vec<f64>> {
        match self.exact_atom_count() {
            Some(c) if c as usize <= block_cap() => {}
            _ => return Err(Error::ResourceLimit("too many atoms to expand".into())),
        }
        let mut out = Vec::new();
        for b in &self.blocks {
            let v = if b.value > 0.0 { b.value } else { b.log_value.exp() };
            out.extend(std::iter::repeat_n(v, b.exact_count.expect("counted above") as usize));
        }
        Ok(out)
    }

    /// Natural log of the number of atoms.
    pub fn log_atom_count(&self) -> f64 {
        self.blocks.iter().fold(f64::NEG_INFINITY, |acc, b| log_add_exp(acc, b.log_multiplicity))
    }

    /// Exact atom count if it stays below `2^53`.
    pub fn exact_atom_count(&self) -> Option<u64> {
        let mut total: u64 = 0;
        for b in &self.blocks {
            total = total.checked_add(b.exact_count?)?;
            if total > MAX_EXACT {
                return None;
            }
        }
        Some(total)
    }

    /// True when there is a single block.
    pub fn is_uniform(&self) -> bool {
        self.blocks.len() == 1
    }

    /// Entropy in bits.
    pub fn entropy(&self) -> f64 {
        let mut acc = Neumaier::default();
        for b in &self.blocks {
            acc.add(-b.mass() * b.log_value / LN_2);
        }
        acc.value()
    }

    /// Varentropy in bits².
    pub fn varentropy(&self) -> f64 {
        let h = self.entropy();
        let mut acc = Neumaier::default();
        for b in &self.blocks {
            let d = -b.log_value / LN_2 - h;
            acc.add(b.mass() * d * d);
        }
        acc.value().max(0.0)
    }

    /// Mass of the `count` largest atoms; whole atoms only. Counts past the
    /// number of atoms give 1.
    pub fn prefix_mass(&self, count: f64) -> f64 {
        if !(count >= 1.0) {
            return 0.0;
        }
        if count == f64::INFINITY {
            return 1.0;
        }
        let mut remaining = count.floor();
        let mut acc = Neumaier::default();
        for b in &self.blocks {
            let m = b.exact_count.map(|c| c as f64).unwrap_or_else(|| b.log_multiplicity.exp());
            if remaining < m {
                acc.add(remaining * b.log_value.exp());
                return acc.value().min(1.0);
            }
            acc.add(b.mass());
            remaining -= m;
        }
        1.0
    }

    /// Mass of the `exp(ln_count)` largest atoms, for counts beyond `f64`.
    pub fn prefix_mass_ln(&self, ln_count: f64) -> f64 {
        if ln_count < 700.0 {
            return self.prefix_mass(ln_count.exp());
        }
        let mut cum_ln = f64::NEG_INFINITY;
        let mut acc = Neumaier::default();
        for b in &self.blocks {
            let next = log_add_exp(cum_ln, b.log_multiplicity);
            if next <= ln_count {
                acc.add(b.mass());
                cum_ln = next;
            } else {
                let inside = (ln_count + b.log_value).exp() - (cum_ln + b.log_value).exp();
                acc.add(inside.max(0.0));
                return acc.value().min(1.0);
            }
        }
        1.0
    }

    /// CSV with header `log_value,log_multiplicity`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("log_value,log_multiplicity\n");
        for b in &self.blocks {
            out.push_str(&format!("{:e},{:e}\n", b.log_value, b.log_multiplicity));
        }
        out
    }

    pub fn from_csv(s: &str) -> Result<Self> {
        let mut lines = s.lines();
        match lines.next() {
            Some(h) if h.trim() == "log_value,log_multiplicity" => {}
            other => {
                return Err(Error::InvalidDistribution(format!("unexpected block CSV header {other:?}")));
            }
        }
        let mut raw = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split(',');
            let parse = |f: Option<&str>| -> Result<f64> {
                f.and_then(|x| x.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidDistribution(format!("bad block CSV row {}", i + 2)))
            };
            let lv = parse(it.next())?;
            let lm = parse(it.next())?;
            let rounded = lm.exp().round();
            let exact = if lm < 36.0 && (rounded.ln() - lm).abs() < 1e-9 { Some(rounded as u64) } else { None };
            raw.push(Block { log_value: lv, log_multiplicity: lm, value: lv.exp(), exact_count: exact });
        }
        Self::from_unsorted(raw)
    }
}

impl From<&FiniteDistribution> for BlockDistribution {
    fn from(p: &FiniteDistribution) -> Self {
        BlockDistribution::from_atoms(&p.sorted).expect("validated distribution")
    }
}

/// `ln k!` for `k = 0..=n`.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = Neumaier::default();
    out.push(0.0);
    for k in 1..=n {
        acc.add((k as f64).ln());
        out.push(acc.value());
    }
    out
}

fn binomial_u128(n: u64, k: u64) -> Option<u128> {
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(r)
}

fn n_compositions(n: usize, parts: usize) -> Option<u128> {
    binomial_u128((n + parts - 1) as u64, (parts - 1) as u64)
}

/// Blocks of `P^n` with the process-wide cap from [`block_cap`].
pub fn tensor_power_blocks(p: &FiniteDistribution, n: usize) -> Result<BlockDistribution> {
    tensor_power_blocks_with_cap(p, n, block_cap())
}

/// Blocks of `P^n`: one per type class (merged further when products tie).
pub fn tensor_power_blocks_with_cap(p: &FiniteDistribution, n: usize, cap: usize) -> Result<BlockDistribution> {
    if n == 0 {
        return Err(Error::Domain("tensor power needs n ≥ 1".into()));
    }
    // group equal atoms: (value, how many atoms carry it)
    let mut groups: Vec<(f64, u64)> = Vec::new();
    for &x in p.sorted() {
        match groups.last_mut() {
            Some(g) if (g.0 - x).abs() <= 1e-15 * g.0 => g.1 += 1,
            _ => groups.push((x, 1)),
        }
    }
    let r = groups.len();
    let count = n_compositions(n, r).unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(Error::ResourceLimit(format!(
            "P^{n} has {count} type classes, above the block cap {cap} (set {BLOCK_CAP_ENV} to raise it)"
        )));
    }
    let lnf = ln_factorials(n);
    let ln_vals: Vec<f64> = groups.iter().map(|g| g.0.ln()).collect();
    let ln_counts: Vec<f64> = groups.iter().map(|g| (g.1 as f64).ln()).collect();

    let mut raw = Vec::with_capacity(count as usize);
    let mut k = vec![0usize; r];
    for_each_composition(&mut k, 0, n, &mut |k| {
        let mut lv = 0.0;
        let mut lm = lnf[n];
        let mut value = 1.0;
        for j in 0..r {
            lv += k[j] as f64 * ln_vals[j];
            lm += k[j] as f64 * ln_counts[j] - lnf[k[j]];
            value *= groups[j].0.powi(k[j] as i32);
        }
        let exact = exact_multiplicity(k, &groups);
        raw.push(Block { log_value: lv, log_multiplicity: lm, value, exact_count: exact });
    });
    BlockDistribution::from_unsorted(raw)
}

fn exact_multiplicity(k: &[usize], groups: &[(f64, u64)]) -> Option<u64> {
    let mut total: u64 = 0;
    let mut out: u128 = 1;
    for (j, &kj) in k.iter().enumerate() {
        total += kj as u64;
        out = out.checked_mul(binomial_u128(total, kj as u64)?)?;
        out = out.checked_mul((groups[j].1 as u128).checked_pow(kj as u32)?)?;
        if out > MAX_EXACT as u128 {
            return None;
        }
    }
    Some(out as u64)
}

/// Calls `f` on every weak composition of `left` into `k[pos..]`.
fn for_each_composition<F: FnMut(&[usize])>(k: &mut [usize], pos: usize, left: usize, f: &mut F) {
    if pos + 1 == k.len() {
        k[pos] = left;
        f(k);
        return;
    }
    for take in 0..=left {
        k[pos] = take;
        for_each_composition(k, pos + 1, left - take, f);
    }
}
