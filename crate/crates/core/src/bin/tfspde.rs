use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tfspde::bernstein::BernsteinSpec;
use tfspde::config::ExperimentConfig;
use tfspde::experiments::{self, Artifacts, FitRequest, FitTarget, KernelProbe};
use tfspde::Error;

#[derive(Parser)]
#[command(name = "tfspde", version, about = "Kernels, noise and mild solutions for time-fractional SPDEs")]
struct Cli {
    /// Experiment config (TOML). Without it the built-in preset is used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for per-path and per-sample work.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mittag-Leffler identities against closed forms.
    MlCheck,
    /// Kernel mass and norm scaling; with --alpha/--sigma, a single-order probe.
    KernelCheck(KernelArgs),
    /// Frequency-localised kernel bound with a frozen constant.
    BandCheck,
    /// Strong (p,p) ratios of the square function.
    SquareCheck,
    /// Compensated Poisson moment inequality and count statistics.
    NoiseCheck,
    /// Picard solution ensemble.
    Solve {
        /// Number of paths, overriding the config.
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Log-log regression of kernel norms against the declared exponent.
    FitExponents(FitArgs),
    /// Aggregate verdicts in the output directory.
    Report {
        /// Run every check before aggregating.
        #[arg(long)]
        run_all: bool,
    },
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, requires = "sigma")]
    alpha: Option<f64>,
    #[arg(long, requires = "alpha")]
    sigma: Option<f64>,
    /// `power:S`, `log_power:S:C`, or an inline TOML table.
    #[arg(long)]
    phi: Option<String>,
    #[arg(long, default_value_t = 1)]
    d: usize,
    /// Comma-separated times.
    #[arg(long, value_delimiter = ',', default_value = "0.015625,0.03125,0.0625,0.125,0.25,0.5,1")]
    t_sweep: Vec<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    target: FitTarget,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 1)]
    d: usize,
}

fn parse_phi(text: &str) -> tfspde::Result<BernsteinSpec> {
    let bad = || Error::Config(format!("--phi `{text}`: expected power:S, log_power:S:C or an inline table"));
    if text.trim_start().starts_with('{') {
        #[derive(serde::Deserialize)]
        struct Wrap {
            phi: BernsteinSpec,
        }
        let w: Wrap = toml::from_str(&format!("phi = {text}")).map_err(|e| Error::Config(e.to_string()))?;
        w.phi.validate()?;
        return Ok(w.phi);
    }
    let parts: Vec<&str> = text.split(':').collect();
    let nums: Vec<f64> = parts[1..].iter().map(|s| s.parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
    match (parts[0], nums.as_slice()) {
        ("power", [s]) => BernsteinSpec::power(*s),
        ("log_power", [s, c]) => BernsteinSpec::log_power(*s, *c),
        _ => Err(bad()),
    }
}

fn load(cli: &Cli) -> tfspde::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::preset(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if cli.threads == 0 {
        return Err(Error::Config("--threads must be positive".into()));
    }
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &mut ExperimentConfig) -> tfspde::Result<Vec<Artifacts>> {
    let threads = cli.threads;
    Ok(match &cli.command {
        Command::MlCheck => vec![experiments::ml_check(cfg)?],
        Command::KernelCheck(k) => {
            let probe = match (k.alpha, k.sigma) {
                (Some(alpha), Some(sigma)) => Some(KernelProbe {
                    alpha,
                    sigma,
                    phi: match &k.phi {
                        Some(p) => parse_phi(p)?,
                        None => cfg.phi.clone(),
                    },
                    d: k.d,
                    times: k.t_sweep.clone(),
                }),
                _ => None,
            };
            vec![experiments::kernel_check(cfg, probe.as_ref())?]
        }
        Command::BandCheck => vec![experiments::band_check(cfg)?],
        Command::SquareCheck => vec![experiments::square_check(cfg, threads)?],
        Command::NoiseCheck => vec![experiments::noise_check(cfg, threads)?],
        Command::Solve { paths } => {
            if let Some(n) = paths {
                cfg.solver.paths = *n;
                cfg.validate()?;
            }
            vec![experiments::solve(cfg, threads)?]
        }
        Command::FitExponents(f) => {
            let req = FitRequest {
                target: f.target,
                alpha: f.alpha,
                sigma: f.sigma,
                p: f.p,
                d: f.d,
            };
            let (fit, art) = experiments::fit_exponents(cfg, &req)?;
            println!(
                "slope {:.6} (predicted {:.6}), declared {:.6}, r2 {:.6}, deviation {:.4}",
                fit.slope, fit.predicted, fit.declared, fit.r2, fit.deviation
            );
            vec![art]
        }
        Command::Report { run_all } => {
            if *run_all {
                let suite = [
                    experiments::ml_check(cfg)?,
                    experiments::kernel_check(cfg, None)?,
                    experiments::band_check(cfg)?,
                    experiments::square_check(cfg, threads)?,
                    experiments::noise_check(cfg, threads)?,
                    experiments::solve(cfg, threads)?,
                ];
                for a in &suite {
                    print_verdict(a);
                    a.write(&cfg.output_dir)?;
                }
            }
            vec![experiments::report(cfg, &cfg.output_dir)?]
        }
    })
}

fn print_verdict(a: &Artifacts) {
    let v = &a.verdict;
    for c in &v.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for w in &v.warnings {
        println!("warning: {w}");
    }
    println!("{}: {}", v.experiment, if v.passed { "pass" } else { "fail" });
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cli, &mut cfg) {
        Ok(arts) => {
            let mut passed = true;
            for a in &arts {
                print_verdict(a);
                match a.write(&cfg.output_dir) {
                    Ok(paths) => {
                        for p in paths {
                            println!("wrote {}", p.display());
                        }
                    }
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(1);
                    }
                }
                passed &= a.verdict.passed;
            }
            ExitCode::from(if passed { 0 } else { 1 })
        }
        Err(e @ (Error::Config(_) | Error::Gate(_))) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
