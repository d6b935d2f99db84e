use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rnc_core::asymptotics::{convergence_harness, rate_constants, second_order_expansion};
use rnc_core::conversion::{greedy_det_converter, maj_fidelity};
use rnc_core::distributions::tensor_power_blocks;
use rnc_core::locc::{clone_copies, locc_max_copies, BipartiteState, CopyMode, Copies};
use rnc_core::{z_cdf, z_quantile, Error, FiniteDistribution};

#[derive(Parser)]
#[command(name = "rnc", version, about = "Rayleigh-normal distributions and optimal i.i.d. conversion")]
struct Cli {
    /// Write output here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FidelityMode {
    Maj,
    Det,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Asymptotic,
}

impl From<Mode> for CopyMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Exact => CopyMode::Exact,
            Mode::Asymptotic => CopyMode::Asymptotic,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Z_v(mu).
    RnCdf {
        #[arg(long)]
        v: f64,
        #[arg(long, allow_hyphen_values = true)]
        mu: f64,
    },
    /// Z_v^{-1}(p).
    RnQuantile {
        #[arg(long)]
        v: f64,
        #[arg(long)]
        p: f64,
    },
    /// Z_v on an evenly spaced mu grid, one block of rows per v.
    RnCurve {
        #[arg(long, value_delimiter = ',', required = true)]
        v: Vec<f64>,
        #[arg(long, allow_hyphen_values = true)]
        mu_min: f64,
        #[arg(long, allow_hyphen_values = true)]
        mu_max: f64,
        #[arg(long)]
        steps: usize,
    },
    /// Rate constants and the second-order approximation of L_n.
    Rate {
        #[arg(long = "P", alias = "p")]
        p: PathBuf,
        #[arg(long = "Q", alias = "q")]
        q: PathBuf,
        #[arg(long)]
        nu: f64,
        #[arg(long)]
        n: u64,
    },
    /// Second-order coefficient Z_C^{-1}(1-nu^2)/D against nu.
    RateCurve {
        #[arg(long = "P", alias = "p", requires = "q")]
        p: Option<PathBuf>,
        #[arg(long = "Q", alias = "q", requires = "p")]
        q: Option<PathBuf>,
        /// Explicit C values; overrides P and Q.
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["p", "q"])]
        c: Vec<f64>,
        /// D used with --c.
        #[arg(long, default_value_t = 1.0)]
        d: f64,
        #[arg(long)]
        nu_steps: usize,
    },
    /// F(P^n -> Q^L).
    Fidelity {
        #[arg(long = "P", alias = "p")]
        p: PathBuf,
        #[arg(long = "Q", alias = "q")]
        q: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long = "L", alias = "l")]
        l: usize,
        #[arg(long, value_enum, default_value = "maj")]
        mode: FidelityMode,
        /// Write the conversion plan or map as JSON.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Exact fidelity against its second-order limit.
    Converge {
        #[arg(long = "P", alias = "p")]
        p: PathBuf,
        #[arg(long = "Q", alias = "q")]
        q: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        n_grid: Vec<u64>,
    },
    /// Maximum copies of phi from psi^n at fidelity nu.
    LoccPlan {
        #[arg(long)]
        psi: PathBuf,
        #[arg(long)]
        phi: PathBuf,
        #[arg(long)]
        nu: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "exact")]
        mode: Mode,
    },
    /// Cloning count for psi.
    LoccClone {
        #[arg(long)]
        psi: PathBuf,
        #[arg(long)]
        nu: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "exact")]
        mode: Mode,
    },
}

enum Failure {
    Input(String),
    Resource(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::ResourceLimit(_) => Failure::Resource(e.to_string()),
            Error::InvalidDistribution(_) | Error::Domain(_) | Error::ProductState | Error::InvalidState(_) => {
                Failure::Input(e.to_string())
            }
            _ => Failure::Other(e.to_string()),
        }
    }
}

/// Twelve significant digits, shortest form.
fn fmt(x: f64) -> String {
    if !x.is_finite() || x == 0.0 {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("own output parses");
    if (1e-6..1e16).contains(&rounded.abs()) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_dist(path: &Path) -> Result<FiniteDistribution, Failure> {
    FiniteDistribution::from_json_str(&read(path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_state(path: &Path) -> Result<BipartiteState, Failure> {
    BipartiteState::from_json_str(&read(path)?).map_err(|e| match e {
        Error::ProductState | Error::InvalidState(_) => Failure::Input(format!("{}: {e}", path.display())),
        other => other.into(),
    })
}

fn write_file(path: &Path, body: &str) -> Result<(), Failure> {
    fs::write(path, body).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))
}

fn copies_cell(c: Copies) -> String {
    match c {
        Copies::Exact(l) => l.to_string(),
        Copies::Asymptotic(x) => fmt(x),
    }
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Exact => "exact",
        Mode::Asymptotic => "asymptotic",
    }
}

fn run(cmd: Command) -> Result<String, Failure> {
    let mut out = String::new();
    match cmd {
        Command::RnCdf { v, mu } => {
            out.push_str("mu,v,z_cdf\n");
            writeln!(out, "{},{},{}", fmt(mu), fmt(v), fmt(z_cdf(mu, v)?)).unwrap();
        }
        Command::RnQuantile { v, p } => {
            out.push_str("p,v,z_quantile\n");
            writeln!(out, "{},{},{}", fmt(p), fmt(v), fmt(z_quantile(p, v)?)).unwrap();
        }
        Command::RnCurve { v, mu_min, mu_max, steps } => {
            if steps < 2 || !(mu_max > mu_min) {
                return Err(Failure::Input("need steps >= 2 and mu-max > mu-min".into()));
            }
            out.push_str("mu,v,z_cdf\n");
            for &vv in &v {
                for i in 0..steps {
                    let mu = mu_min + (mu_max - mu_min) * i as f64 / (steps - 1) as f64;
                    // evaluate at the printed abscissa so the file is self-consistent
                    let mu: f64 = fmt(mu).parse().expect("own output parses");
                    writeln!(out, "{},{},{}", fmt(mu), fmt(vv), fmt(z_cdf(mu, vv)?)).unwrap();
                }
            }
        }
        Command::Rate { p, q, nu, n } => {
            let (p, q) = (load_dist(&p)?, load_dist(&q)?);
            let k = rate_constants(&p, &q);
            let e = second_order_expansion(&p, &q, nu, n)?;
            out.push_str("h_p,h_q,v_p,v_q,c,d,branch,n,nu,first_order,second_order_coefficient,l_approx\n");
            let branch = serde_json::to_value(e.branch).expect("enum serializes");
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                fmt(k.h_p),
                fmt(k.h_q),
                fmt(k.v_p),
                fmt(k.v_q),
                fmt_opt(k.c),
                fmt_opt(k.d),
                branch.as_str().expect("string variant"),
                n,
                fmt(nu),
                fmt(e.first_order),
                fmt(e.second_order),
                fmt(e.value)
            )
            .unwrap();
        }
        Command::RateCurve { p, q, c, d, nu_steps } => {
            if nu_steps == 0 {
                return Err(Failure::Input("nu-steps must be positive".into()));
            }
            let pairs: Vec<(f64, f64)> = if !c.is_empty() {
                if !(d > 0.0) {
                    return Err(Failure::Input("d must be positive".into()));
                }
                c.iter().map(|&cc| (cc, d)).collect()
            } else {
                let (Some(p), Some(q)) = (p, q) else {
                    return Err(Failure::Input("give --P and --Q, or --c".into()));
                };
                let k = rate_constants(&load_dist(&p)?, &load_dist(&q)?);
                match (k.c, k.d) {
                    (Some(c), Some(d)) => vec![(c, d)],
                    _ => return Err(Failure::Input("rate-curve needs a non-uniform P".into())),
                }
            };
            out.push_str("nu,c,d,coefficient\n");
            for &(cc, dd) in &pairs {
                for i in 1..=nu_steps {
                    let nu = i as f64 / (nu_steps + 1) as f64;
                    let coef = z_quantile(1.0 - nu * nu, cc)? / dd;
                    writeln!(out, "{},{},{},{}", fmt(nu), fmt(cc), fmt(dd), fmt(coef)).unwrap();
                }
            }
        }
        Command::Fidelity { p, q, n, l, mode, plan } => {
            let (p, q) = (load_dist(&p)?, load_dist(&q)?);
            if n == 0 || l == 0 {
                return Err(Failure::Input("n and L must be positive".into()));
            }
            let pn = tensor_power_blocks(&p, n)?;
            let ql = tensor_power_blocks(&q, l)?;
            let (f, name, plan_json) = match mode {
                FidelityMode::Maj => {
                    let (f, pl) = maj_fidelity(&pn, &ql)?;
                    (f, "maj", pl.to_json_string())
                }
                FidelityMode::Det => {
                    let map = greedy_det_converter(&pn, &ql)?;
                    (map.fidelity, "det", serde_json::to_string(&map).expect("map serializes"))
                }
            };
            if let Some(path) = plan {
                write_file(&path, &plan_json)?;
            }
            out.push_str("n,L,mode,fidelity\n");
            writeln!(out, "{n},{l},{name},{}", fmt(f)).unwrap();
        }
        Command::Converge { p, q, b, n_grid } => {
            let (p, q) = (load_dist(&p)?, load_dist(&q)?);
            out.push_str("n,L_used,exact_fidelity,limit_fidelity,gap\n");
            for r in convergence_harness(&p, &q, b, &n_grid)? {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    r.n,
                    r.l_used,
                    fmt(r.exact_fidelity),
                    fmt(r.limit_fidelity),
                    fmt(r.gap)
                )
                .unwrap();
            }
        }
        Command::LoccPlan { psi, phi, nu, n, mode } => {
            let (psi, phi) = (load_state(&psi)?, load_state(&phi)?);
            let c = locc_max_copies(&psi, &phi, nu, n, mode.into())?;
            out.push_str("n,nu,mode,L\n");
            writeln!(out, "{n},{},{},{}", fmt(nu), mode_name(mode), copies_cell(c)).unwrap();
        }
        Command::LoccClone { psi, nu, n, mode } => {
            let psi = load_state(&psi)?;
            let c = clone_copies(&psi, nu, n, mode.into())?;
            out.push_str("n,nu,mode,L\n");
            writeln!(out, "{n},{},{},{}", fmt(nu), mode_name(mode), copies_cell(c)).unwrap();
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = run(cli.command).and_then(|body| match &cli.out {
        Some(path) => write_file(path, &body),
        None => std::io::stdout().write_all(body.as_bytes()).map_err(|e| Failure::Other(e.to_string())),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Resource(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fmt;

    #[test]
    fn twelve_digits() {
        assert_eq!(fmt(1.0 - (-1.0f64).exp()), "0.632120558829");
        assert_eq!(fmt(12.0), "12");
        assert_eq!(fmt(-1.0 / 3.0), "-0.333333333333");
        assert_eq!(fmt(0.0), "0");
        assert_eq!(fmt(1.5e-300), "1.5e-300");
    }
}
