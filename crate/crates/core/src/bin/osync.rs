use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ortho_sync::certify::CertTols;
use ortho_sync::gpm::GpmConfig;
use ortho_sync::synth::{SynthSpec, TruthKind};
use ortho_sync::xcli::loo::{cmd_loo, LooSpec};
use ortho_sync::xcli::selftest::{cmd_selftest, Fault};
use ortho_sync::xcli::sweep::{cmd_sweep, SigmaGrid, SweepSpec};
use ortho_sync::xcli::{
    cmd_certify, cmd_gen, cmd_solve, write_json, CertifyArgs, CliError, GenArgs, Outcome,
    SolveArgs, EXIT_INVALID,
};
use ortho_sync::Error;

/// Synchronization of orthogonal group elements by the generalized power
/// method, with optimality certificates.
#[derive(Parser, Debug)]
#[command(name = "osync", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// GPM stopping tolerance (relative to √(nd)).
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, global = true, default_value_t = 200)]
    max_iter: usize,
    /// Primary output file of the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Keep the diagonal blocks of `A` noise free.
    #[arg(long, global = true)]
    no_diagonal_noise: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a synthetic observation matrix.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        sigma: f64,
        #[arg(long, value_enum, default_value_t = TruthArg::Haar)]
        truth: TruthArg,
        /// Also write the ground-truth stack here.
        #[arg(long)]
        truth_out: Option<PathBuf>,
        /// Also write the noise matrix here.
        #[arg(long)]
        noise_out: Option<PathBuf>,
    },
    /// Run spectral initialization and GPM on a stored matrix.
    Solve {
        #[arg(long)]
        input: PathBuf,
        /// Ground-truth stack for reporting the distance to truth.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-10)]
        eig_tol: f64,
    },
    /// Check the optimality certificate of a stack.
    Certify {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        stack: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        residual_tol: Option<f64>,
        #[arg(long)]
        psd_tol: Option<f64>,
    },
    /// Certification rates over a grid of (n, d, sigma).
    Sweep {
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        d: Vec<usize>,
        /// Absolute noise levels: list `a,b,c` or range `start:stop:step`.
        #[arg(long, conflicts_with = "sigma_over_star")]
        sigma: Option<String>,
        /// Noise levels as multiples of sigma*(n, d).
        #[arg(long)]
        sigma_over_star: Option<String>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Summary JSON with per-cell rates and the 50% crossing.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Leave-one-out stability experiment.
    Loo {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, conflicts_with = "sigma_over_star")]
        sigma: Option<f64>,
        #[arg(long)]
        sigma_over_star: Option<f64>,
        /// 1-based blocks to leave out (default: all).
        #[arg(long, value_delimiter = ',')]
        m: Vec<usize>,
        /// Number of instances, seeded `seed, seed+1, ...`.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Run the built-in oracle comparisons.
    Selftest {
        #[arg(long, value_enum)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TruthArg {
    Haar,
    Identity,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FaultArg {
    SignFlip,
}

fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Core(Error::InvalidInput(format!("cannot parse grid '{text}'")));
    if let Some((start, rest)) = text.split_once(':') {
        let (stop, step) = rest.split_once(':').ok_or_else(bad)?;
        let [start, stop, step]: [f64; 3] =
            [start, stop, step].map(|s| s.trim().parse::<f64>().unwrap_or(f64::NAN));
        if step.is_nan() || step <= 0.0 || !start.is_finite() || !stop.is_finite() {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as i64 + 1;
        Ok((0..count.max(0)).map(|k| start + k as f64 * step).collect())
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect()
    }
}

fn require_out(out: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    out.clone()
        .ok_or_else(|| CliError::Core(Error::InvalidInput("--out is required".into())))
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let g = &cli.global;
    let gpm = GpmConfig {
        tol: g.tol,
        max_iter: g.max_iter,
        seed: g.seed,
        ..GpmConfig::default()
    };
    match cli.command {
        Command::Gen {
            n,
            d,
            sigma,
            truth,
            truth_out,
            noise_out,
        } => {
            let truth = match truth {
                TruthArg::Haar => TruthKind::Haar,
                TruthArg::Identity => TruthKind::Identity,
            };
            let spec = SynthSpec::new(n, d, sigma, g.seed)
                .with_truth(truth)
                .with_diagonal_noise(!g.no_diagonal_noise);
            spec.validate()?;
            cmd_gen(&GenArgs {
                spec,
                out: require_out(&g.out)?,
                truth_out,
                noise_out,
            })
        }
        Command::Solve {
            input,
            truth,
            report,
            eig_tol,
        } => {
            let cfg = GpmConfig { eig_tol, ..gpm };
            let outcome = cmd_solve(&SolveArgs {
                input,
                truth,
                out: g.out.clone(),
                cfg,
            })?;
            if let Some(p) = report {
                write_json(&p, &outcome.report)?;
            }
            Ok(outcome)
        }
        Command::Certify {
            matrix,
            stack,
            report,
            residual_tol,
            psd_tol,
        } => {
            let tols = CertTols {
                residual_tol,
                psd_tol,
                eig_tol: None,
                seed: g.seed,
            };
            let outcome = cmd_certify(&CertifyArgs {
                matrix,
                stack,
                tols,
            })?;
            if let Some(p) = report {
                write_json(&p, &outcome.report)?;
            }
            Ok(outcome)
        }
        Command::Sweep {
            n,
            d,
            sigma,
            sigma_over_star,
            trials,
            summary,
        } => {
            let sigma_grid = match (sigma, sigma_over_star) {
                (Some(s), None) => SigmaGrid::Absolute(parse_grid(&s)?),
                (None, Some(s)) => SigmaGrid::RelativeToStar(parse_grid(&s)?),
                _ => {
                    return Err(Error::InvalidInput(
                        "give exactly one of --sigma, --sigma-over-star".into(),
                    )
                    .into())
                }
            };
            let spec = SweepSpec {
                n_list: n,
                d_list: d,
                sigma_grid,
                trials,
                base_seed: g.seed,
                diagonal_noise: !g.no_diagonal_noise,
                gpm,
            };
            cmd_sweep(&spec, &require_out(&g.out)?, summary.as_deref())
        }
        Command::Loo {
            n,
            d,
            sigma,
            sigma_over_star,
            m,
            seeds,
        } => {
            let sigma = match (sigma, sigma_over_star) {
                (Some(s), None) => s,
                (None, Some(r)) if n > 0 && d > 0 => r * ortho_sync::sigma_star(n, d),
                (None, Some(_)) => {
                    return Err(Error::InvalidInput("n and d must be positive".into()).into())
                }
                _ => {
                    return Err(Error::InvalidInput(
                        "give exactly one of --sigma, --sigma-over-star".into(),
                    )
                    .into())
                }
            };
            let spec = SynthSpec::new(n, d, sigma, g.seed);
            spec.validate()?;
            let spec = LooSpec {
                n,
                d,
                sigma,
                seeds: (0..seeds).map(|k| g.seed.wrapping_add(k)).collect(),
                m_list: m,
                diagonal_noise: !g.no_diagonal_noise,
                gpm,
            };
            cmd_loo(&spec, &require_out(&g.out)?)
        }
        Command::Selftest { inject_fault } => Ok(cmd_selftest(
            inject_fault.map(|FaultArg::SignFlip| Fault::SignFlip),
        )),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_INVALID as u8);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    if let Some(threads) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("osync: {e}");
            return ExitCode::from(EXIT_INVALID as u8);
        }
    }
    match run(cli) {
        Ok(outcome) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&outcome.report).expect("report serializes")
            );
            ExitCode::from(outcome.code as u8)
        }
        Err(e) => {
            eprintln!("osync: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
