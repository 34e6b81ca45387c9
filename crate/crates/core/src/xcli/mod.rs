//! Command implementations behind the `osync` binary.
//!
//! Every command is an ordinary function returning an [`Outcome`] (exit code
//! plus a JSON report) so it can be driven from tests without spawning a
//! process. Reports always carry the seed, the PRNG identifier and the
//! effective configuration.

pub mod container;
pub mod loo;
pub mod selftest;
pub mod sweep;

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::align::distance_f;
use crate::blockmat::BlockStack;
use crate::certify::{verify_certificate, CertTols};
use crate::error::Error;
use crate::gpm::{run_gpm, GpmConfig};
use crate::synth::{Instance, SynthSpec, PRNG_ID};
use container::{Container, ContainerKind, Header};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;
pub const EXIT_DEGENERATE: i32 = 5;
pub const EXIT_NOT_CERTIFIED: i32 = 6;
pub const EXIT_SELFTEST_FAILED: i32 = 7;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed container: {0}")]
    Format(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } | Self::Format(_) | Self::Csv(_) => EXIT_IO,
            Self::Core(Error::DegenerateBlock { .. }) => EXIT_DEGENERATE,
            Self::Core(Error::NoConvergence { .. }) => EXIT_NOT_CONVERGED,
            Self::Core(_) => EXIT_INVALID,
        }
    }
}

/// Result of a command: the process exit code and a JSON report.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub code: i32,
    pub report: Value,
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

#[derive(Clone, Debug)]
pub struct GenArgs {
    pub spec: SynthSpec,
    pub out: PathBuf,
    pub truth_out: Option<PathBuf>,
    pub noise_out: Option<PathBuf>,
}

fn instance_header(kind: ContainerKind, spec: &SynthSpec) -> Header {
    let mut h = Header::new(kind, spec.n, spec.d);
    h.sigma = Some(spec.sigma);
    h.seed = Some(spec.seed);
    h.prng_id = Some(PRNG_ID.to_string());
    h.diagonal_noise = Some(spec.diagonal_noise);
    h
}

/// Draw an instance and write `A` (and optionally `G`, `W`).
pub fn cmd_gen(args: &GenArgs) -> Result<Outcome, CliError> {
    let inst = Instance::generate(&args.spec)?;
    Container::matrix(
        instance_header(ContainerKind::Observation, &args.spec),
        inst.observation.clone(),
    )
    .write(&args.out)?;
    if let Some(p) = &args.truth_out {
        Container::stack(
            instance_header(ContainerKind::Truth, &args.spec),
            inst.truth.as_stack().clone(),
        )
        .write(p)?;
    }
    if let Some(p) = &args.noise_out {
        Container::matrix(
            instance_header(ContainerKind::Noise, &args.spec),
            inst.noise.clone(),
        )
        .write(p)?;
    }
    Ok(Outcome {
        code: EXIT_OK,
        report: json!({
            "command": "gen",
            "seed": args.spec.seed,
            "prng_id": PRNG_ID,
            "config": args.spec,
            "observation": args.out,
            "truth": args.truth_out,
            "noise": args.noise_out,
        }),
    })
}

#[derive(Clone, Debug)]
pub struct SolveArgs {
    pub input: PathBuf,
    pub truth: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub cfg: GpmConfig,
}

fn read_truth(path: &Path, n: usize, d: usize) -> Result<BlockStack, CliError> {
    let (_, g) = Container::read(path)?.into_stack()?;
    if g.n() != n || g.d() != d {
        return Err(Error::ShapeMismatch(format!(
            "truth is n={}, d={}; matrix is n={n}, d={d}",
            g.n(),
            g.d()
        ))
        .into());
    }
    Ok(g)
}

/// Run spectral initialization and GPM on a stored matrix.
///
/// The solution is written even when the iteration does not converge; the
/// exit code then reports non-convergence.
pub fn cmd_solve(args: &SolveArgs) -> Result<Outcome, CliError> {
    let (header, a) = Container::read(&args.input)?.into_matrix()?;
    let truth = args
        .truth
        .as_deref()
        .map(|p| read_truth(p, a.n(), a.d()))
        .transpose()?;
    let (s, trace) = run_gpm(&a, &args.cfg, truth.as_ref())?;
    if let Some(out) = &args.out {
        let mut h = Header::new(ContainerKind::Solution, a.n(), a.d());
        h.sigma = header.sigma;
        h.seed = Some(args.cfg.seed);
        h.prng_id = header.prng_id.clone();
        h.diagonal_noise = header.diagonal_noise;
        Container::stack(h, s.as_stack().clone()).write(out)?;
    }
    let df_to_truth = truth
        .as_ref()
        .map(|g| distance_f(g, &s))
        .transpose()?
        .map(|r| r.d_f);
    let code = if trace.converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    };
    Ok(Outcome {
        code,
        report: json!({
            "command": "solve",
            "seed": args.cfg.seed,
            "prng_id": header.prng_id,
            "config": args.cfg,
            "input": header,
            "converged": trace.converged,
            "iterations": trace.iterations,
            "dF_to_truth": df_to_truth,
            "trace": trace,
        }),
    })
}

#[derive(Clone, Debug)]
pub struct CertifyArgs {
    pub matrix: PathBuf,
    pub stack: PathBuf,
    pub tols: CertTols,
}

/// Check the optimality certificate of a stored stack for a stored matrix.
pub fn cmd_certify(args: &CertifyArgs) -> Result<Outcome, CliError> {
    let (header, a) = Container::read(&args.matrix)?.into_matrix()?;
    let (sheader, s) = Container::read(&args.stack)?.into_stack()?;
    let report = verify_certificate(&a, &s, &args.tols)?;
    let code = if report.certified() {
        EXIT_OK
    } else {
        EXIT_NOT_CERTIFIED
    };
    Ok(Outcome {
        code,
        report: json!({
            "command": "certify",
            "seed": args.tols.seed,
            "prng_id": header.prng_id,
            "config": args.tols,
            "matrix": header,
            "stack": sheader,
            "certificate": report,
        }),
    })
}
