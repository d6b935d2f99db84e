//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rnc_core::asymptotics::convergence_harness;
use rnc_core::conversion::{
    brute_maj_oracle, con_fidelity, det_fidelity_brute, dil_fidelity, maj_fidelity_finite, maj_fidelity_powers,
    max_convertible_m,
};
use rnc_core::locc::{clone_copies, replication_estimate, BipartiteState, CopyMode, Copies};
use rnc_core::normal::std_cdf;
use rnc_core::rayleigh::{continuous_fidelity, is_feasible_on_grid, optimizer_function, Profile};
use rnc_core::{z_cdf, FiniteDistribution, GaussParams, RNParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let t = Instant::now();
    let mut o = f();
    let el = t.elapsed();
    o.detail = format!("{}; {:.2?}", o.detail, el);
    if let Some(limit) = limit {
        if el > limit {
            o.pass = false;
            o.detail.push_str(&format!(" exceeds {limit:?}"));
        }
    }
    o
}

fn random_dist(rng: &mut ChaCha8Rng, max_support: usize) -> FiniteDistribution {
    let k = rng.gen_range(2..=max_support);
    let mut w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    if k > 2 && rng.gen_bool(0.2) {
        w[1] = w[0];
    }
    FiniteDistribution::new(&w).unwrap()
}

fn binary(p: f64) -> FiniteDistribution {
    FiniteDistribution::new(&[p, 1.0 - p]).unwrap()
}

fn rayleigh_branch() -> Outcome {
    let mut worst: f64 = 0.0;
    for mu in [0.5, 1.0, 2.0, 3.0] {
        worst = worst.max((z_cdf(mu, 1.0).unwrap() - (1.0 - (-mu * mu / 4.0f64).exp())).abs());
    }
    outcome(worst < 1e-10, format!("max error {worst:.2e}"))
}

fn symmetry() -> Outcome {
    let mut worst: f64 = 0.0;
    for v in [1.0 / 8.0, 1.0 / 3.0, 0.5, 2.0, 3.0, 8.0] {
        for i in 0..81 {
            let mu = -4.0 + 0.1 * i as f64;
            let a = z_cdf(mu, v).unwrap();
            let b = z_cdf(mu / f64::sqrt(v), 1.0 / v).unwrap();
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst < 1e-8, format!("max |Z_v(mu) - Z_1/v(mu/sqrt v)| {worst:.2e}"))
}

fn normal_limit() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..=800 {
        let mu = -4.0 + 0.01 * i as f64;
        worst = worst.max((z_cdf(mu, 1e-4).unwrap() - std_cdf(mu)).abs());
    }
    outcome(worst < 0.02, format!("sup gap {worst:.2e}"))
}

/// Convex combination of simple feasible profiles, optionally mixed with an
/// optimizer.
struct Mixture<'a> {
    parts: Vec<(f64, Part)>,
    base: Option<(f64, &'a dyn Profile)>,
}

enum Part {
    /// `Φ(x + s)`, `s ≥ 0`.
    Shift(f64),
    /// `max(Φ, c·Φ_{m,s})`.
    Max { c: f64, g: GaussParams },
    /// `Φ + λ(1 − Φ)`.
    Lift(f64),
}

impl Part {
    fn value(&self, x: f64) -> f64 {
        let phi = std_cdf(x);
        match *self {
            Part::Shift(s) => std_cdf(x + s),
            Part::Max { c, g } => phi.max(c * g.cdf(x)),
            Part::Lift(l) => phi + l * (1.0 - phi),
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        let std = GaussParams::standard();
        match *self {
            Part::Shift(s) => std.pdf(x + s),
            Part::Max { c, g } => {
                if c * g.cdf(x) > std.cdf(x) {
                    c * g.pdf(x)
                } else {
                    std.pdf(x)
                }
            }
            Part::Lift(l) => (1.0 - l) * std.pdf(x),
        }
    }

    /// Crossings of `c·Φ_{m,s}` and `Φ`, where the max switches branch.
    fn kinks(&self) -> Vec<f64> {
        let Part::Max { c, g } = *self else { return Vec::new() };
        let h = |x: f64| c * g.cdf(x) - std_cdf(x);
        let mut out = Vec::new();
        let mut x0 = -60.0;
        while x0 < 60.0 {
            let x1 = x0 + 0.05;
            if (h(x0) > 0.0) != (h(x1) > 0.0) {
                let (mut lo, mut hi) = (x0, x1);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if (h(mid) > 0.0) == (h(lo) > 0.0) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out.push(0.5 * (lo + hi));
            }
            x0 = x1;
        }
        out
    }
}

impl Profile for Mixture<'_> {
    fn value(&self, x: f64) -> f64 {
        let mut y: f64 = self.parts.iter().map(|(w, p)| w * p.value(x)).sum();
        if let Some((w, a)) = self.base {
            y += w * a.value(x);
        }
        y
    }

    fn derivative(&self, x: f64) -> f64 {
        let mut y: f64 = self.parts.iter().map(|(w, p)| w * p.derivative(x)).sum();
        if let Some((w, a)) = self.base {
            y += w * a.derivative(x);
        }
        y
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.base.map(|(_, a)| a.breakpoints()).unwrap_or_default();
        b.extend(self.parts.iter().flat_map(|(_, p)| p.kinks()));
        b
    }
}

fn random_parts(rng: &mut ChaCha8Rng) -> Vec<(f64, Part)> {
    let k = rng.gen_range(1..=3);
    let mut ws: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = ws.iter().sum();
    ws.iter_mut().for_each(|w| *w /= total);
    ws.into_iter()
        .map(|w| {
            let part = match rng.gen_range(0..3) {
                0 => Part::Shift(rng.gen_range(0.0..3.0)),
                1 => Part::Max {
                    c: rng.gen_range(0.3..1.0),
                    g: GaussParams::new(rng.gen_range(-3.0..3.0), rng.gen_range(0.2..5.0)).unwrap(),
                },
                _ => Part::Lift(rng.gen_range(0.0..0.9)),
            };
            (w, part)
        })
        .collect()
}

fn variational() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let grid: Vec<f64> = (0..=1200).map(|i| -12.0 + 0.02 * i as f64).collect();
    let (mut worst_match, mut worst_beat, mut infeasible): (f64, f64, usize) = (0.0, f64::NEG_INFINITY, 0);
    for _ in 0..50 {
        let mu = rng.gen_range(-3.0..3.0);
        let v = if rng.gen_bool(0.5) { rng.gen_range(0.05..1.0) } else { rng.gen_range(1.0..6.0) };
        let params = RNParams::new(mu, v).unwrap();
        let g = GaussParams::new(mu, v).unwrap();
        let opt = optimizer_function(params).unwrap();
        let f_opt = continuous_fidelity(&opt, g).unwrap();
        worst_match = worst_match.max((1.0 - f_opt * f_opt - z_cdf(mu, v).unwrap()).abs());
        for j in 0..20 {
            let parts = random_parts(&mut rng);
            let mix = if j % 2 == 0 {
                Mixture { parts, base: None }
            } else {
                let eps = rng.gen_range(1e-3..0.2);
                let parts = parts.into_iter().map(|(w, p)| (w * eps, p)).collect();
                Mixture { parts, base: Some((1.0 - eps, &opt as &dyn Profile)) }
            };
            if !is_feasible_on_grid(&mix, &grid, 1e-12) {
                infeasible += 1;
                continue;
            }
            let f = continuous_fidelity(&mix, g).unwrap();
            worst_beat = worst_beat.max(f - f_opt);
        }
    }
    outcome(
        worst_match < 1e-7 && worst_beat <= 1e-6 && infeasible == 0,
        format!("|1-F^2 - Z| max {worst_match:.2e}; best competitor margin {worst_beat:.2e}; infeasible draws {infeasible}"),
    )
}

fn closed_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut dil_err, mut con_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let q = random_dist(&mut rng, 8);
        let l = rng.gen_range(2..=q.support());
        let f = maj_fidelity_finite(&FiniteDistribution::uniform(l).unwrap(), &q).unwrap().0;
        dil_err = dil_err.max((f - dil_fidelity(&q, l)).abs());
    }
    for _ in 0..100 {
        let p = random_dist(&mut rng, 8);
        let l = rng.gen_range(2..=10);
        let f = maj_fidelity_finite(&p, &FiniteDistribution::uniform(l).unwrap()).unwrap().0;
        con_err = con_err.max((f - con_fidelity(&p, l)).abs());
    }
    outcome(dil_err < 1e-12 && con_err < 1e-12, format!("dilution {dil_err:.2e}, concentration {con_err:.2e}"))
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let p = random_dist(&mut rng, 6);
        let q = random_dist(&mut rng, 6);
        let engine = maj_fidelity_finite(&p, &q).unwrap().0;
        let oracle = brute_maj_oracle(&p, &q).unwrap();
        worst = worst.max((engine - oracle).abs());
    }
    outcome(worst < 1e-6, format!("max |engine - oracle| {worst:.2e} over 200"))
}

fn ordering() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for _ in 0..200 {
        let p = random_dist(&mut rng, 6);
        let q = random_dist(&mut rng, 6);
        let det = det_fidelity_brute(&p, &q).unwrap();
        worst = worst.max(det - maj_fidelity_finite(&p, &q).unwrap().0);
        count += 1;
    }
    // small i.i.d. powers, expanded to atoms
    for (a, n, b, l) in [(0.6, 3, 0.7, 2), (0.7, 2, 0.6, 3), (0.55, 3, 0.9, 2), (0.8, 2, 0.8, 2)] {
        let p = power(a, n);
        let q = power(b, l);
        let det = det_fidelity_brute(&p, &q).unwrap();
        worst = worst.max(det - maj_fidelity_finite(&p, &q).unwrap().0);
        count += 1;
    }
    outcome(worst <= 1e-12, format!("max det - maj {worst:.2e} over {count}"))
}

fn power(a: f64, n: u32) -> FiniteDistribution {
    let atoms: Vec<f64> = (0..1u32 << n).map(|m| (0..n).map(|i| if m >> i & 1 == 0 { a } else { 1.0 - a }).product()).collect();
    FiniteDistribution::new(&atoms).unwrap()
}

const GRID: [u64; 4] = [100, 400, 1600, 6400];

fn harness_check(p: &FiniteDistribution, q: &FiniteDistribution, b: f64, monotone: bool, label: &str) -> Outcome {
    let rows = convergence_harness(p, q, b, &GRID).unwrap();
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    let shrinking = gaps.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let last = *gaps.last().unwrap();
    let pass = last < 0.05 && (!monotone || shrinking);
    let shown: Vec<String> = gaps.iter().map(|g| format!("{g:.4}")).collect();
    outcome(pass, format!("{label} b={b}: gaps [{}]", shown.join(", ")))
}

fn combine(parts: Vec<Outcome>) -> Outcome {
    let pass = parts.iter().all(|o| o.pass);
    let detail = parts
        .iter()
        .map(|o| format!("{}{}", if o.pass { "" } else { "failing " }, o.detail))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, detail)
}

fn second_order_clone() -> Outcome {
    let p = binary(0.6);
    combine([-0.5, 0.5].iter().map(|&b| harness_check(&p, &p, b, true, "P=Q")).collect())
}

fn uniform_branches() -> Outcome {
    let p = binary(0.6);
    let u = FiniteDistribution::uniform(2).unwrap();
    let mut parts = Vec::new();
    for b in [-0.5, 0.5] {
        parts.push(harness_check(&p, &u, b, false, "Q=U_2"));
    }
    for b in [-0.5, 0.5] {
        parts.push(harness_check(&u, &p, b, false, "P=U_2"));
    }
    combine(parts)
}

fn epr_cloning() -> Outcome {
    let epr = BipartiteState::epr();
    let mut bad = Vec::new();
    for nu in [0.3f64, 0.5, 0.9] {
        for n in [5usize, 10, 50] {
            let want = (n as f64 + 2.0 * (1.0 / nu).log2()).floor() as u64;
            let got = clone_copies(&epr, nu, n, CopyMode::Exact).unwrap();
            let engine = max_convertible_m(epr.schmidt_sq(), epr.schmidt_sq(), n, nu).unwrap();
            if got != Copies::Exact(want) || engine != want {
                bad.push(format!("nu={nu} n={n}: {got:?}, engine {engine}, want {want}"));
            }
        }
    }
    outcome(bad.is_empty(), if bad.is_empty() { "9 cases exact, engine agrees".into() } else { bad.join("; ") })
}

fn replication() -> Outcome {
    let psi = BipartiteState::from_schmidt(&[0.75, 0.25]).unwrap();
    let est = replication_estimate(&psi, 0.5, &[100, 200, 400, 800, 1600, 3200, 6400]).unwrap();
    let pts: Vec<String> = est.points.iter().map(|(n, l)| format!("{}", l - n)).collect();
    outcome(
        (0.4..=0.6).contains(&est.exponent),
        format!("exponent {:.4}; L_n - n = [{}]", est.exponent, pts.join(", ")),
    )
}

fn first_order() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 6400;
    let mut parts = Vec::new();
    for _ in 0..2 {
        let (a, b) = (rng.gen_range(0.55..0.8), rng.gen_range(0.55..0.8));
        let (p, q) = (binary(a), binary(b));
        let l = max_convertible_m(&p, &q, n, 0.5).unwrap();
        let ratio = l as f64 / n as f64;
        let target = p.entropy() / q.entropy();
        parts.push(outcome(
            (ratio - target).abs() < 0.02,
            format!("P=({a:.4},..) Q=({b:.4},..): L/n {ratio:.4} vs {target:.4}"),
        ));
    }
    combine(parts)
}

fn main() {
    let sec = Duration::from_secs;
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Outcome>)> = vec![
        ("rayleigh branch exactness", Box::new(|| timed(Some(sec(1)), rayleigh_branch))),
        ("symmetry", Box::new(|| timed(Some(sec(10)), symmetry))),
        ("normal limit", Box::new(|| timed(None, normal_limit))),
        ("variational optimality", Box::new(|| timed(Some(sec(120)), variational))),
        ("closed-form converters", Box::new(|| timed(Some(sec(10)), closed_forms))),
        ("oracle equivalence", Box::new(|| timed(Some(sec(300)), oracle_equivalence))),
        ("deterministic below majorization", Box::new(|| timed(None, ordering))),
        ("second-order convergence", Box::new(|| timed(Some(sec(300)), second_order_clone))),
        ("uniform-side convergence", Box::new(|| timed(None, uniform_branches))),
        ("maximal-state cloning", Box::new(|| timed(Some(sec(1)), epr_cloning))),
        ("replication exponent", Box::new(|| timed(None, replication))),
        ("first-order rate", Box::new(|| timed(None, first_order))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {:>2} {}: {} ({})", i + 1, if o.pass { "PASS" } else { "FAIL" }, name, o.detail);
    }
    // sanity line: the engine and the closed form agree on the uniform case
    let u = FiniteDistribution::uniform(2).unwrap();
    assert_eq!(maj_fidelity_powers(&u, 10, &u, 12).unwrap(), 0.5);
    println!("{} of 12 criteria passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
