//! Parameter sweeps over `(n, d, σ)` with repeated trials.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{write_json, CliError, Outcome, EXIT_OK};
use crate::align::distance_f;
use crate::certify::{verify_certificate, CertTols};
use crate::gpm::{run_gpm, GpmConfig};
use crate::synth::{Instance, SynthSpec, PRNG_ID};
use crate::{sigma_star, Error};

/// How the σ grid is given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaGrid {
    Absolute(Vec<f64>),
    /// Multiples of `σ*(n, d)`.
    RelativeToStar(Vec<f64>),
}

impl SigmaGrid {
    pub fn len(&self) -> usize {
        match self {
            Self::Absolute(v) | Self::RelativeToStar(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sigma(&self, idx: usize, n: usize, d: usize) -> f64 {
        match self {
            Self::Absolute(v) => v[idx],
            Self::RelativeToStar(v) => v[idx] * sigma_star(n, d),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSpec {
    pub n_list: Vec<usize>,
    pub d_list: Vec<usize>,
    pub sigma_grid: SigmaGrid,
    pub trials: usize,
    pub base_seed: u64,
    pub diagonal_noise: bool,
    pub gpm: GpmConfig,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), Error> {
        if self.n_list.is_empty()
            || self.d_list.is_empty()
            || self.sigma_grid.is_empty()
            || self.trials == 0
        {
            return Err(Error::InvalidInput(
                "sweep needs non-empty n, d, sigma lists and trials >= 1".into(),
            ));
        }
        if self.n_list.contains(&0) || self.d_list.contains(&0) {
            return Err(Error::InvalidInput("n and d must be positive".into()));
        }
        let bad = match &self.sigma_grid {
            SigmaGrid::Absolute(v) | SigmaGrid::RelativeToStar(v) => {
                v.iter().any(|s| !(*s >= 0.0) || !s.is_finite())
            }
        };
        if bad {
            return Err(Error::InvalidInput(
                "sigma values must be finite and non-negative".into(),
            ));
        }
        self.gpm.validate()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one trial, a fixed function of its coordinates in the sweep.
pub fn trial_seed(base_seed: u64, n: usize, d: usize, sigma_index: usize, trial: usize) -> u64 {
    [n, d, sigma_index, trial]
        .iter()
        .fold(splitmix64(base_seed), |h, &x| splitmix64(h ^ x as u64))
}

/// One CSV row; field order is the column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub d: usize,
    pub sigma: f64,
    pub sigma_over_star: f64,
    pub seed: u64,
    pub converged: bool,
    pub iterations: usize,
    #[serde(rename = "dF_to_truth")]
    pub df_to_truth: Option<f64>,
    pub blockwise_error: Option<f64>,
    pub certified: bool,
    pub lambda_d_plus_1: Option<f64>,
    pub residual: Option<f64>,
    pub wall_ms: f64,
}

pub const SWEEP_COLUMNS: [&str; 13] = [
    "n",
    "d",
    "sigma",
    "sigma_over_star",
    "seed",
    "converged",
    "iterations",
    "dF_to_truth",
    "blockwise_error",
    "certified",
    "lambda_d_plus_1",
    "residual",
    "wall_ms",
];

/// Generate, solve and certify one instance. Failures of any stage are
/// recorded in the row (missing values, `converged`/`certified` false)
/// rather than propagated.
pub fn run_trial(
    n: usize,
    d: usize,
    sigma: f64,
    seed: u64,
    diagonal_noise: bool,
    cfg: &GpmConfig,
) -> SweepRow {
    let start = Instant::now();
    let mut row = SweepRow {
        n,
        d,
        sigma,
        sigma_over_star: sigma / sigma_star(n, d),
        seed,
        converged: false,
        iterations: 0,
        df_to_truth: None,
        blockwise_error: None,
        certified: false,
        lambda_d_plus_1: None,
        residual: None,
        wall_ms: 0.0,
    };
    let spec = SynthSpec::new(n, d, sigma, seed).with_diagonal_noise(diagonal_noise);
    let cfg = GpmConfig {
        seed,
        ..cfg.clone()
    };
    let result = (|| -> Result<(), Error> {
        let inst = Instance::generate(&spec)?;
        let (s, trace) = run_gpm(&inst.observation, &cfg, None)?;
        row.converged = trace.converged;
        row.iterations = trace.iterations;
        let al = distance_f(&inst.truth, &s)?;
        row.df_to_truth = Some(al.d_f);
        row.blockwise_error = Some(al.blockwise_max);
        let cert = verify_certificate(
            &inst.observation,
            &s,
            &CertTols {
                seed,
                ..Default::default()
            },
        )?;
        row.certified = cert.certified();
        row.lambda_d_plus_1 = cert
            .lambda_d_plus_1
            .is_finite()
            .then_some(cert.lambda_d_plus_1);
        row.residual = Some(cert.fixed_point_residual);
        Ok(())
    })();
    let _ = result;
    row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    row
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub d: usize,
    pub sigma: f64,
    pub sigma_over_star: f64,
    pub trials: usize,
    pub certified: usize,
    pub converged: usize,
    pub success_rate: f64,
    pub median_blockwise_error: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Threshold {
    pub n: usize,
    pub d: usize,
    /// σ at which the certification rate crosses 1/2, by linear
    /// interpolation between adjacent grid points.
    pub sigma_hat_50: Option<f64>,
    pub sigma_hat_50_over_star: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSummary {
    pub seed: u64,
    pub prng_id: String,
    pub config: SweepSpec,
    pub cells: Vec<CellSummary>,
    pub thresholds: Vec<Threshold>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let k = values.len();
    Some(if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    })
}

/// First downward crossing of rate 1/2 along increasing σ. `None` if the
/// rate starts below 1/2 or never drops below it.
pub fn crossing_50(points: &[(f64, f64)]) -> Option<f64> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.first()?.1 < 0.5 {
        return None;
    }
    pts.windows(2)
        .find(|w| w[0].1 >= 0.5 && w[1].1 < 0.5)
        .map(|w| {
            let ((s0, r0), (s1, r1)) = (w[0], w[1]);
            s0 + (r0 - 0.5) * (s1 - s0) / (r0 - r1)
        })
}

pub fn summarize(spec: &SweepSpec, rows: &[SweepRow]) -> SweepSummary {
    let mut cells = Vec::new();
    let mut thresholds = Vec::new();
    for &n in &spec.n_list {
        for &d in &spec.d_list {
            let mut points = Vec::new();
            for si in 0..spec.sigma_grid.len() {
                let sigma = spec.sigma_grid.sigma(si, n, d);
                let cell: Vec<&SweepRow> = rows
                    .iter()
                    .filter(|r| r.n == n && r.d == d && r.sigma == sigma)
                    .collect();
                let certified = cell.iter().filter(|r| r.certified).count();
                let converged = cell.iter().filter(|r| r.converged).count();
                let rate = certified as f64 / cell.len().max(1) as f64;
                let mut be: Vec<f64> = cell.iter().filter_map(|r| r.blockwise_error).collect();
                points.push((sigma, rate));
                cells.push(CellSummary {
                    n,
                    d,
                    sigma,
                    sigma_over_star: sigma / sigma_star(n, d),
                    trials: cell.len(),
                    certified,
                    converged,
                    success_rate: rate,
                    median_blockwise_error: median(&mut be),
                });
            }
            let s50 = crossing_50(&points);
            thresholds.push(Threshold {
                n,
                d,
                sigma_hat_50: s50,
                sigma_hat_50_over_star: s50.map(|s| s / sigma_star(n, d)),
            });
        }
    }
    SweepSummary {
        seed: spec.base_seed,
        prng_id: PRNG_ID.to_string(),
        config: spec.clone(),
        cells,
        thresholds,
    }
}

/// All trials of the sweep in canonical `(n, d, σ, trial)` order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, Error> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for &n in &spec.n_list {
        for &d in &spec.d_list {
            for si in 0..spec.sigma_grid.len() {
                for t in 0..spec.trials {
                    jobs.push((n, d, si, t));
                }
            }
        }
    }
    Ok(jobs
        .par_iter()
        .map(|&(n, d, si, t)| {
            let seed = trial_seed(spec.base_seed, n, d, si, t);
            run_trial(
                n,
                d,
                spec.sigma_grid.sigma(si, n, d),
                seed,
                spec.diagonal_noise,
                &spec.gpm,
            )
        })
        .collect())
}

pub fn write_rows(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_rows(path: &Path) -> Result<Vec<SweepRow>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn cmd_sweep(
    spec: &SweepSpec,
    out: &Path,
    summary_out: Option<&Path>,
) -> Result<Outcome, CliError> {
    let rows = run_sweep(spec)?;
    write_rows(out, &rows)?;
    let summary = summarize(spec, &rows);
    if let Some(p) = summary_out {
        write_json(p, &summary)?;
    }
    let report = serde_json::to_value(&summary).expect("summary serializes");
    Ok(Outcome {
        code: EXIT_OK,
        report,
    })
}
