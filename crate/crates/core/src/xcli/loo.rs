//! Leave-one-out experiment: solve on `A` and on each `A^(m)` and record how
//! far apart the two fixed points are, alongside the noise correlation of
//! the left-out column.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CliError, Outcome, EXIT_OK};
use crate::align::{distance_f, noise_column_scale, BasinConstants};
use crate::gpm::{run_gpm, GpmConfig};
use crate::synth::{Instance, SynthSpec, PRNG_ID};
use crate::Error;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LooSpec {
    pub n: usize,
    pub d: usize,
    pub sigma: f64,
    /// Instance seeds.
    pub seeds: Vec<u64>,
    /// 1-based block indices to leave out; empty means all.
    pub m_list: Vec<usize>,
    pub diagonal_noise: bool,
    pub gpm: GpmConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LooRow {
    pub seed: u64,
    pub m: usize,
    /// `d_F(S^∞, S^{∞,m})`.
    pub df_full_vs_loo: f64,
    /// `‖W_mᵀ S^∞‖_F`.
    pub noise_corr: f64,
    /// `‖W_mᵀ S^{∞,m}‖_F`.
    pub noise_corr_loo: f64,
    /// `κ √d / 2`.
    pub kappa_bound: f64,
    /// `ξ √(nd) (√d + 4√ln n)`.
    pub xi_bound: f64,
}

pub fn run_loo(spec: &LooSpec) -> Result<Vec<LooRow>, Error> {
    let (n, d) = (spec.n, spec.d);
    let consts = BasinConstants::defaults(d);
    let kappa_bound = consts.kappa * (d as f64).sqrt() / 2.0;
    let xi_bound = consts.xi * noise_column_scale(n, d);
    let ms: Vec<usize> = if spec.m_list.is_empty() {
        (1..=n).collect()
    } else {
        spec.m_list.clone()
    };
    let mut rows = Vec::new();
    for &seed in &spec.seeds {
        let inst = Instance::generate(
            &SynthSpec::new(n, d, spec.sigma, seed).with_diagonal_noise(spec.diagonal_noise),
        )?;
        let cfg = GpmConfig {
            seed,
            ..spec.gpm.clone()
        };
        let (s, _) = run_gpm(&inst.observation, &cfg, None)?;
        let ws = inst.noise.mul_stack(&s)?;
        for &m in &ms {
            let am = inst.leave_one_out(m)?;
            let (sm, _) = run_gpm(&am, &cfg, None)?;
            let wsm = inst.noise.mul_stack(&sm)?;
            rows.push(LooRow {
                seed,
                m,
                df_full_vs_loo: distance_f(&s, &sm)?.d_f,
                noise_corr: ws.block(m - 1).frobenius_norm(),
                noise_corr_loo: wsm.block(m - 1).frobenius_norm(),
                kappa_bound,
                xi_bound,
            });
        }
    }
    Ok(rows)
}

pub fn cmd_loo(spec: &LooSpec, out: &Path) -> Result<Outcome, CliError> {
    let rows = run_loo(spec)?;
    let mut w = csv::Writer::from_path(out)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(out, e))?;
    let max_df = rows.iter().map(|r| r.df_full_vs_loo).fold(0.0, f64::max);
    let max_corr = rows.iter().map(|r| r.noise_corr).fold(0.0, f64::max);
    Ok(Outcome {
        code: EXIT_OK,
        report: serde_json::json!({
            "command": "loo",
            "seed": spec.seeds,
            "prng_id": PRNG_ID,
            "config": spec,
            "rows": rows.len(),
            "max_df_full_vs_loo": max_df,
            "max_noise_corr": max_corr,
        }),
    })
}
