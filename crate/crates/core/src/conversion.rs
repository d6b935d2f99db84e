//! Optimal conversion fidelities between finite distributions and i.i.d.
//! powers.
//!
//! The majorization fidelity `F^M(P→Q) = max {F(P′, Q↓) : P ≺ P′}` is the sum
//! of `√(ΔQ·ΔP)` over the segments of the upper concave envelope of the
//! curve `k ↦ (Σ_{i≤k} Q↓(i), Σ_{i≤k} P↓(i))`. On each segment the optimal
//! `P′` is `Q↓` times the segment slope, so slopes are the (non-increasing)
//! proportionality scales. Inside a block both curves are linear in `k`,
//! which means only block boundaries can be vertices; the engine therefore
//! never touches individual atoms and handles `2^6400`-atom powers directly.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::distributions::{log_add_exp, tensor_power_blocks, BlockDistribution, FiniteDistribution, Neumaier};
use crate::error::{Error, Result};

/// Relative slack when comparing a fidelity against a threshold `ν`.
pub const THRESHOLD_SLACK: f64 = 1e-12;

const MAX_EXACT: u64 = 1 << 53;

/// A position along the sorted atom axis: the number of atoms before it.
#[derive(Debug, Clone, Copy)]
struct Pos {
    ln: f64,
    exact: Option<u64>,
}

impl Pos {
    const ZERO: Pos = Pos { ln: f64::NEG_INFINITY, exact: Some(0) };

    fn compare(&self, other: &Pos) -> Ordering {
        if let (Some(a), Some(b)) = (self.exact, other.exact) {
            return a.cmp(&b);
        }
        let tol = 1e-13 * self.ln.abs().max(other.ln.abs()).max(1.0);
        if (self.ln - other.ln).abs() <= tol {
            Ordering::Equal
        } else {
            self.ln.total_cmp(&other.ln)
        }
    }

    fn count(&self) -> f64 {
        match self.exact {
            Some(c) => c as f64,
            None => self.ln.exp(),
        }
    }
}

/// Block boundaries with cumulative masses, normalized to end at exactly 1.
struct Cumulative {
    starts: Vec<Pos>,
    ends: Vec<Pos>,
    before: Vec<f64>,
    after: Vec<f64>,
    log_value: Vec<f64>,
    value: Vec<f64>,
    scale: f64,
}

impl Cumulative {
    fn new(b: &BlockDistribution) -> Self {
        let n = b.len();
        let mut out = Cumulative {
            starts: Vec::with_capacity(n),
            ends: Vec::with_capacity(n),
            before: Vec::with_capacity(n),
            after: Vec::with_capacity(n),
            log_value: Vec::with_capacity(n),
            value: Vec::with_capacity(n),
            scale: 1.0,
        };
        let mut pos = Pos::ZERO;
        let mut acc = Neumaier::default();
        for blk in b.blocks() {
            let exact = match (pos.exact, blk.exact_count) {
                (Some(a), Some(c)) if a + c <= MAX_EXACT => Some(a + c),
                _ => None,
            };
            let end = Pos { ln: log_add_exp(pos.ln, blk.log_multiplicity), exact };
            out.starts.push(pos);
            out.ends.push(end);
            out.before.push(acc.value());
            acc.add(blk.mass());
            out.after.push(acc.value());
            out.log_value.push(blk.log_value);
            out.value.push(blk.value);
            pos = end;
        }
        let total = acc.value();
        out.scale = 1.0 / total;
        for x in out.before.iter_mut().chain(out.after.iter_mut()) {
            *x *= out.scale;
        }
        if let Some(last) = out.after.last_mut() {
            *last = 1.0;
        }
        out
    }

    fn len(&self) -> usize {
        self.ends.len()
    }

    /// Cumulative mass at `k`, which must lie inside block `i` (or past the
    /// end when `i == len`).
    fn mass_at(&self, i: usize, k: &Pos) -> f64 {
        if i >= self.len() {
            return 1.0;
        }
        let start = &self.starts[i];
        let v = self.value[i];
        let inside = match (k.exact, start.exact) {
            (Some(a), Some(s)) if v.is_normal() => (a - s) as f64 * v,
            _ => (k.ln + self.log_value[i]).exp() - (start.ln + self.log_value[i]).exp(),
        };
        (self.before[i] + inside * self.scale).clamp(self.before[i], self.after[i])
    }
}

/// Whether a plan came from the majorization solver or a deterministic map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanMode {
    Majorization,
    Deterministic,
}

/// A run of target atoms `[start, end)` on which `P′ = scale · Q↓`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    /// Atom index; `null` in JSON when it overflows `f64`.
    pub start: f64,
    pub end: f64,
    pub ln_start: f64,
    pub ln_end: f64,
    pub scale: f64,
    /// Target mass covered by the segment.
    pub q_mass: f64,
    /// Source mass assigned to it.
    pub p_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConversionPlan {
    pub segments: Vec<Segment>,
    pub fidelity: f64,
    pub mode: PlanMode,
}

impl ConversionPlan {
    /// Reconstructs `P′` over the atoms of a finite sorted target.
    ///
    /// Only meaningful when every segment boundary is an exact index.
    pub fn p_prime(&self, q_sorted: &[f64]) -> Vec<f64> {
        let len = self.segments.iter().map(|s| s.end as usize).max().unwrap_or(0).max(q_sorted.len());
        let mut out = vec![0.0; len];
        for s in &self.segments {
            for i in (s.start as usize)..(s.end as usize) {
                if i < q_sorted.len() {
                    out[i] = s.scale * q_sorted[i];
                }
            }
        }
        out
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }
}

/// `F^M(P→Q)` and the optimal plan.
pub fn maj_fidelity(p: &BlockDistribution, q: &BlockDistribution) -> Result<(f64, ConversionPlan)> {
    let cp = Cumulative::new(p);
    let cq = Cumulative::new(q);
    // (x = Q mass, y = P mass, position)
    let mut pts: Vec<(f64, f64, Pos)> = Vec::with_capacity(cp.len() + cq.len() + 1);
    pts.push((0.0, 0.0, Pos::ZERO));
    let (mut i, mut j) = (0usize, 0usize);
    while i < cp.len() || j < cq.len() {
        let order = if i >= cp.len() {
            Ordering::Greater
        } else if j >= cq.len() {
            Ordering::Less
        } else {
            cp.ends[i].compare(&cq.ends[j])
        };
        let pt = match order {
            Ordering::Less => {
                let k = cp.ends[i];
                let pt = (cq.mass_at(j, &k), cp.after[i], k);
                i += 1;
                pt
            }
            Ordering::Greater => {
                let k = cq.ends[j];
                let pt = (cq.after[j], cp.mass_at(i, &k), k);
                j += 1;
                pt
            }
            Ordering::Equal => {
                let k = cp.ends[i];
                let pt = (cq.after[j], cp.after[i], k);
                i += 1;
                j += 1;
                pt
            }
        };
        pts.push(pt);
    }

    let hull = upper_hull(&pts);
    let mut acc = Neumaier::default();
    let mut segments = Vec::with_capacity(hull.len());
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        let dx = (b.0 - a.0).max(0.0);
        let dy = (b.1 - a.1).max(0.0);
        if dx == 0.0 {
            continue;
        }
        acc.add((dx * dy).sqrt());
        segments.push(Segment {
            start: a.2.count(),
            end: b.2.count(),
            ln_start: a.2.ln,
            ln_end: b.2.ln,
            scale: dy / dx,
            q_mass: dx,
            p_mass: dy,
        });
    }
    let fidelity = acc.value().min(1.0);
    if !fidelity.is_finite() {
        return Err(Error::Solver("majorization fidelity is not finite".into()));
    }
    Ok((fidelity, ConversionPlan { segments, fidelity, mode: PlanMode::Majorization }))
}

/// Upper concave envelope of points with nondecreasing `x`.
fn upper_hull(pts: &[(f64, f64, Pos)]) -> Vec<(f64, f64, Pos)> {
    let mut hull: Vec<(f64, f64, Pos)> = Vec::with_capacity(pts.len());
    for &p in pts {
        while hull.len() >= 2 {
            let o = hull[hull.len() - 2];
            let a = hull[hull.len() - 1];
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// [`maj_fidelity`] on finite distributions.
pub fn maj_fidelity_finite(p: &FiniteDistribution, q: &FiniteDistribution) -> Result<(f64, ConversionPlan)> {
    maj_fidelity(&BlockDistribution::from(p), &BlockDistribution::from(q))
}

/// `F^M(P^n → Q^L)`; `L = 0` gives 1.
pub fn maj_fidelity_powers(p: &FiniteDistribution, n: usize, q: &FiniteDistribution, l: usize) -> Result<f64> {
    if l == 0 {
        return Ok(1.0);
    }
    let pn = tensor_power_blocks(p, n)?;
    let ql = tensor_power_blocks(q, l)?;
    Ok(maj_fidelity(&pn, &ql)?.0)
}

/// `D_L(Q)`: `Q↓` truncated to its `L` largest atoms and renormalized.
pub fn dil_distribution(q: &FiniteDistribution, l: usize) -> Result<Vec<f64>> {
    if l == 0 {
        return Err(Error::Domain("L must be at least 1".into()));
    }
    let head = &q.sorted()[..l.min(q.support())];
    let mut acc = Neumaier::default();
    for &x in head {
        acc.add(x);
    }
    let s = acc.value();
    Ok(head.iter().map(|x| x / s).collect())
}

/// `F^M(U_L → Q) = √(Σ_{i≤L} Q↓(i))`.
pub fn dil_fidelity(q: &FiniteDistribution, l: usize) -> f64 {
    let mut acc = Neumaier::default();
    for &x in q.sorted().iter().take(l) {
        acc.add(x);
    }
    acc.value().min(1.0).sqrt()
}

fn tail_sums(sorted: &[f64]) -> Vec<f64> {
    // tails[j] = Σ_{i≥j} sorted[i], 0-based; tails[len] = 0
    let mut tails = vec![0.0; sorted.len() + 1];
    let mut acc = Neumaier::default();
    for j in (0..sorted.len()).rev() {
        acc.add(sorted[j]);
        tails[j] = acc.value();
    }
    tails
}

/// `J_{P,L}`: the largest `2 ≤ j ≤ L` (1-based) whose flattened tail
/// average `Σ_{i≥j} P↓(i)/(L+1−j)` is strictly below `P↓(j−1)`, or 1.
pub fn con_index(p: &FiniteDistribution, l: usize) -> usize {
    let s = p.sorted();
    let tails = tail_sums(s);
    let mut best = 1;
    for j in 2..=l {
        let tail = if j - 1 < s.len() { tails[j - 1] } else { 0.0 };
        let prev = if j - 2 < s.len() { s[j - 2] } else { 0.0 };
        if tail / ((l + 1 - j) as f64) < prev {
            best = j;
        }
    }
    best
}

/// `C_L(P)`: keep the `J−1` largest atoms, spread the rest evenly over
/// positions `J..=L`.
pub fn con_distribution(p: &FiniteDistribution, l: usize) -> Result<Vec<f64>> {
    if l == 0 {
        return Err(Error::Domain("L must be at least 1".into()));
    }
    let s = p.sorted();
    let j = con_index(p, l);
    let tails = tail_sums(s);
    let tail = if j - 1 < s.len() { tails[j - 1] } else { 0.0 };
    let mut out = Vec::with_capacity(l);
    for idx in 1..=l {
        if idx < j {
            out.push(s[idx - 1]);
        } else {
            out.push(tail / (l + 1 - j) as f64);
        }
    }
    Ok(out)
}

/// `F^M(P → U_L)` in closed form.
pub fn con_fidelity(p: &FiniteDistribution, l: usize) -> f64 {
    let s = p.sorted();
    let j = con_index(p, l);
    let tails = tail_sums(s);
    let tail = if j - 1 < s.len() { tails[j - 1] } else { 0.0 };
    let mut acc = Neumaier::default();
    for &x in &s[..(j - 1).min(s.len())] {
        acc.add(x.sqrt());
    }
    acc.add(((l + 1 - j) as f64 * tail).sqrt());
    (acc.value() / (l as f64).sqrt()).min(1.0)
}

fn feasible(x: &[f64], bounds: &[f64]) -> bool {
    let mut run = 0.0;
    for (xi, b) in x.iter().zip(bounds) {
        if *xi < -1e-15 {
            return false;
        }
        run += xi;
        if run < b - 1e-12 {
            return false;
        }
    }
    true
}

/// Pulls mass forward from the tail until every prefix bound holds without
/// slack. Points accepted by [`feasible`] move by at most the tolerance, but
/// the square root would turn such a leak into a visible gain.
fn repair(mut x: Vec<f64>, bounds: &[f64]) -> Vec<f64> {
    let k = x.len();
    let mut run = 0.0;
    for i in 0..k {
        x[i] = x[i].max(0.0);
        run += x[i];
        let mut deficit = bounds[i] - run;
        if deficit > 0.0 {
            x[i] += deficit;
            run += deficit;
            for j in (i + 1..k).rev() {
                let t = deficit.min(x[j]);
                x[j] -= t;
                deficit -= t;
                if deficit <= 0.0 {
                    break;
                }
            }
        }
    }
    x
}

fn objective(x: &[f64], q: &[f64]) -> f64 {
    x.iter().zip(q).map(|(a, b)| (a.max(0.0) * b).sqrt()).sum()
}

/// Independent oracle for [`maj_fidelity`] on supports of at most 6.
///
/// Takes the best of (a) every choice of tight prefix constraints, with `P′`
/// proportional to `Q↓` between tight indices, and (b) pairwise-transfer
/// ascent from 100 seeded random feasible starts.
pub fn brute_maj_oracle(p: &FiniteDistribution, q: &FiniteDistribution) -> Result<f64> {
    let k = p.support().max(q.support());
    if k > 6 {
        return Err(Error::ResourceLimit(format!("brute-force oracle supports at most 6 atoms, got {k}")));
    }
    let mut ps = p.sorted().to_vec();
    let mut qs = q.sorted().to_vec();
    ps.resize(k, 0.0);
    qs.resize(k, 0.0);
    let bounds: Vec<f64> = ps
        .iter()
        .scan(0.0, |run, x| {
            *run += x;
            Some(*run)
        })
        .collect();

    let mut best: f64 = 0.0;
    for mask in 0u32..(1 << (k - 1)) {
        let mut tight: Vec<usize> = (1..k).filter(|i| mask & (1 << (i - 1)) != 0).collect();
        tight.push(k);
        let mut cand = vec![0.0; k];
        let mut prev = 0usize;
        let mut prev_b = 0.0;
        for &t in &tight {
            let dp = bounds[t - 1] - prev_b;
            let dq: f64 = qs[prev..t].iter().sum();
            if dq > 0.0 {
                for i in prev..t {
                    cand[i] = dp * qs[i] / dq;
                }
            } else {
                cand[prev] = dp;
            }
            prev = t;
            prev_b = bounds[t - 1];
        }
        if feasible(&cand, &bounds) {
            best = best.max(objective(&repair(cand, &bounds), &qs));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..100 {
        let lam: f64 = rng.gen();
        let mut x: Vec<f64> = ps.iter().map(|v| lam * v).collect();
        x[0] += 1.0 - lam;
        // moving mass towards the front only raises prefix sums
        for _ in 0..k {
            let j = rng.gen_range(0..k);
            let i = rng.gen_range(0..=j);
            let t = x[j] * rng.gen::<f64>();
            x[j] -= t;
            x[i] += t;
        }
        best = best.max(pairwise_ascent(repair(x, &bounds), &qs, &bounds));
    }
    Ok(best.min(1.0))
}

fn pairwise_ascent(mut x: Vec<f64>, q: &[f64], bounds: &[f64]) -> f64 {
    let k = x.len();
    let mut fx = objective(&x, q);
    let mut step: f64 = 0.25;
    while step > 1e-13 {
        let mut improved = true;
        while improved {
            improved = false;
            for from in 0..k {
                for to in 0..k {
                    if from == to || x[from] <= 0.0 {
                        continue;
                    }
                    let t = step.min(x[from]);
                    let mut y = x.clone();
                    y[from] -= t;
                    y[to] += t;
                    if !feasible(&y, bounds) {
                        continue;
                    }
                    let y = repair(y, bounds);
                    let fy = objective(&y, q);
                    if fy > fx + 1e-16 {
                        x = y;
                        fx = fy;
                        improved = true;
                    }
                }
            }
        }
        step *= 0.5;
    }
    fx
}

/// Maximum of `F(W(P), Q)` over all maps `W: X → Y`, by enumeration.
pub fn det_fidelity_brute(p: &FiniteDistribution, q: &FiniteDistribution) -> Result<f64> {
    let (nx, ny) = (p.support(), q.support());
    let total = (ny as u64).checked_pow(nx as u32).filter(|&t| t <= 10_000_000).ok_or_else(|| {
        Error::ResourceLimit(format!("{ny}^{nx} deterministic maps exceed the 10^7 enumeration limit"))
    })?;
    let (px, qy) = (p.probs(), q.probs());
    let mut digits = vec![0usize; nx];
    let mut image = vec![0.0; ny];
    let mut best: f64 = 0.0;
    for _ in 0..total {
        image.iter_mut().for_each(|v| *v = 0.0);
        for (x, &y) in digits.iter().enumerate() {
            image[y] += px[x];
        }
        best = best.max(crate::distributions::fidelity(&image, qy));
        for d in digits.iter_mut() {
            *d += 1;
            if *d < ny {
                break;
            }
            *d = 0;
        }
    }
    Ok(best.min(1.0))
}

/// Maximum number of atoms the greedy converter will stream.
pub const GREEDY_ATOM_CAP: u64 = 20_000_000;

/// Consecutive sorted source atoms `[p_start, p_end)` sent to target atom
/// `q_index`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Group {
    pub p_start: u64,
    pub p_end: u64,
    pub q_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeterministicMap {
    pub groups: Vec<Group>,
    pub fidelity: f64,
}

fn expand_atoms(b: &BlockDistribution, what: &str) -> Result<Vec<f64>> {
    let n = b.exact_atom_count().filter(|&n| n <= GREEDY_ATOM_CAP).ok_or_else(|| {
        Error::ResourceLimit(format!("{what} has more than {GREEDY_ATOM_CAP} atoms for the greedy converter"))
    })?;
    let mut out = Vec::with_capacity(n as usize);
    let scale = 1.0 / b.total_mass();
    for blk in b.blocks() {
        let v = blk.value * scale;
        for _ in 0..blk.exact_count.expect("exact count checked") {
            out.push(v);
        }
    }
    Ok(out)
}

/// Deterministic map built by interval aggregation: each source atom, in
/// decreasing order, goes to the target atom whose cumulative-mass interval
/// contains the source atom's cumulative midpoint. The achieved fidelity is
/// a lower bound on `F^D(P→Q)`.
///
/// Midpoints lie in `(0, 1)`, so every atom lands on some target atom and
/// no residual mass needs placing.
pub fn greedy_det_converter(p: &BlockDistribution, q: &BlockDistribution) -> Result<DeterministicMap> {
    let pa = expand_atoms(p, "source")?;
    let qa = expand_atoms(q, "target")?;
    let mut image = vec![0.0; qa.len()];
    let mut groups: Vec<Group> = Vec::new();
    let mut q_idx = 0usize;
    let mut q_end = qa[0];
    let mut cum = 0.0;
    for (i, &x) in pa.iter().enumerate() {
        let mid = cum + 0.5 * x;
        cum += x;
        while mid >= q_end && q_idx + 1 < qa.len() {
            q_idx += 1;
            q_end += qa[q_idx];
        }
        image[q_idx] += x;
        match groups.last_mut() {
            Some(g) if g.q_index == q_idx as u64 => g.p_end = i as u64 + 1,
            _ => groups.push(Group { p_start: i as u64, p_end: i as u64 + 1, q_index: q_idx as u64 }),
        }
    }
    let fidelity = crate::distributions::fidelity(&image, &qa).min(1.0);
    Ok(DeterministicMap { groups, fidelity })
}

/// Largest `L` with `F^M(P^n → Q^L) ≥ ν`, with every evaluated `(L, F)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvertibleScan {
    pub l: u64,
    pub evaluated: Vec<(u64, f64)>,
}

/// `L^M_n(P, Q | ν)`.
pub fn max_convertible_m(p: &FiniteDistribution, q: &FiniteDistribution, n: usize, nu: f64) -> Result<u64> {
    Ok(max_convertible_scan(p, q, n, nu)?.l)
}

/// [`max_convertible_m`] with the scan record. The search starts at the
/// first-order guess `⌊H(P)n/H(Q)⌋`, doubles its step until the threshold
/// is crossed, then bisects. Evaluated fidelities are checked to be
/// non-increasing in `L`.
pub fn max_convertible_scan(p: &FiniteDistribution, q: &FiniteDistribution, n: usize, nu: f64) -> Result<ConvertibleScan> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(Error::Domain(format!("ν must lie in (0,1), got {nu}")));
    }
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    let pn = tensor_power_blocks(p, n)?;
    let threshold = nu * (1.0 - THRESHOLD_SLACK);
    let mut evaluated: Vec<(u64, f64)> = Vec::new();
    let mut eval = |l: u64| -> Result<f64> {
        if let Some(&(_, f)) = evaluated.iter().find(|(x, _)| *x == l) {
            return Ok(f);
        }
        let f = if l == 0 {
            1.0
        } else {
            let ql = tensor_power_blocks(q, l as usize)?;
            maj_fidelity(&pn, &ql)?.0
        };
        evaluated.push((l, f));
        Ok(f)
    };

    let guess = ((p.entropy() * n as f64) / q.entropy()).floor().max(1.0) as u64;
    let (mut lo, mut hi);
    if eval(guess)? >= threshold {
        lo = guess;
        let mut step = 1u64;
        loop {
            let cand = lo + step;
            if eval(cand)? >= threshold {
                lo = cand;
                step *= 2;
            } else {
                hi = cand;
                break;
            }
        }
    } else {
        hi = guess;
        let mut step = 1u64;
        loop {
            let cand = hi.saturating_sub(step);
            if eval(cand)? >= threshold {
                lo = cand;
                break;
            }
            hi = cand;
            step *= 2;
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if eval(mid)? >= threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    evaluated.sort_by_key(|e| e.0);
    for w in evaluated.windows(2) {
        if w[1].1 > w[0].1 + 1e-12 {
            return Err(Error::Solver(format!(
                "fidelity increased from {} at L={} to {} at L={}",
                w[0].1, w[0].0, w[1].1, w[1].0
            )));
        }
    }
    Ok(ConvertibleScan { l: lo, evaluated })
}
