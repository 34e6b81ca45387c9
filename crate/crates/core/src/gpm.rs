//! Generalized power method with spectral initialization.
//!
//! `S⁰ = P_n(Φ)` with `Φ` the top-`d` eigenvectors of `A` scaled so that
//! `ΦᵀΦ = n I_d`, then `S^{t+1} = P_n(A S^t / n)` until
//! `d_F(S^{t+1}, S^t) ≤ tol·√(nd)`. Dividing by `n` does not change the
//! iterates since the polar factor is invariant under positive scaling.

use serde::{Deserialize, Serialize};

use crate::align::distance_f;
use crate::blockmat::{
    polar_stack_with_sigma_min, svd_small, top_eigs, BlockStack, BlockSym, OrthoStack, SpectralPair,
};
use crate::error::{Error, Result};

/// Slack constant for the spectral-initialization check
/// `|σ_j(Φ_i) − 1| ≤ C η`.
pub const INIT_SV_SLACK: f64 = 20.0;

/// Envelope for the observed contraction ratio `steps[t] / steps[t−1]`.
pub const CONTRACTION_ENVELOPE: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpmConfig {
    /// Stop once `d_F(S^{t+1}, S^t) ≤ tol·√(nd)`.
    pub tol: f64,
    pub max_iter: usize,
    pub eig_tol: f64,
    pub seed: u64,
    /// Iterate with `A/n` instead of `A`.
    pub scale_by_n: bool,
    /// Abort when a block to be projected has `σ_min / n` below this.
    pub min_block_sv: f64,
}

impl Default for GpmConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            eig_tol: 1e-10,
            seed: 0,
            scale_by_n: true,
            min_block_sv: 1e-12,
        }
    }
}

impl GpmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be at least 1".into()));
        }
        if !(self.eig_tol > 0.0) {
            return Err(Error::InvalidInput("eig_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    /// `d_F(S^{t+1}, S^t)` for each iteration.
    pub steps: Vec<f64>,
    /// `steps[t] / steps[t−1]`; `None` for `t = 0` or a zero denominator.
    pub ratios: Vec<Option<f64>>,
    /// `d_F(S⁰, G)` when the ground truth was supplied.
    pub init_distance: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl ConvergenceTrace {
    fn push(&mut self, step: f64) {
        let ratio = match self.steps.last() {
            Some(&prev) if prev > 0.0 => Some(step / prev),
            _ => None,
        };
        self.steps.push(step);
        self.ratios.push(ratio);
        self.iterations = self.steps.len();
    }

    /// Largest ratio over `t ≥ from`.
    pub fn max_ratio_from(&self, from: usize) -> Option<f64> {
        self.ratios
            .iter()
            .skip(from)
            .flatten()
            .copied()
            .reduce(f64::max)
    }
}

/// Spectral initialization: `Φ` from [`top_eigs`] and `S⁰ = P_n(Φ)`.
pub fn spectral_init(a: &BlockSym, cfg: &GpmConfig) -> Result<(OrthoStack, SpectralPair)> {
    cfg.validate()?;
    let pair = top_eigs(a, a.d(), cfg.eig_tol, cfg.seed)?;
    let phi = pair.phi_stack()?;
    let (s0, smin) = polar_stack_with_sigma_min(&phi)?;
    if let Some((block, &sigma_min)) = smin
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v >= cfg.min_block_sv))
    {
        return Err(Error::DegenerateBlock {
            block,
            sigma_min,
            iteration: None,
        });
    }
    Ok((s0, pair))
}

/// Singular values of every block of `Φ`, for comparing against `1 ± Cη`.
pub fn init_block_singular_values(pair: &SpectralPair) -> Result<Vec<Vec<f64>>> {
    let phi = pair.phi_stack()?;
    phi.blocks().map(|b| Ok(svd_small(&b)?.s)).collect()
}

/// One power step with projection, `P_n(A S)` (or `P_n(A S / n)`).
pub fn gpm_step(a: &BlockSym, s: &BlockStack, cfg: &GpmConfig) -> Result<OrthoStack> {
    step_at(a, s, cfg, None)
}

fn step_at(
    a: &BlockSym,
    s: &BlockStack,
    cfg: &GpmConfig,
    iteration: Option<usize>,
) -> Result<OrthoStack> {
    let n = a.n() as f64;
    let mut as_ = a.mul_stack(s)?;
    if cfg.scale_by_n {
        as_ = as_.scale(1.0 / n);
    }
    let (next, smin) = polar_stack_with_sigma_min(&as_)?;
    let to_unit = if cfg.scale_by_n { 1.0 } else { 1.0 / n };
    if let Some((block, &v)) = smin
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v * to_unit >= cfg.min_block_sv))
    {
        return Err(Error::DegenerateBlock {
            block,
            sigma_min: v * to_unit,
            iteration,
        });
    }
    Ok(next)
}

/// Spectral initialization followed by power iterations.
pub fn run_gpm(
    a: &BlockSym,
    cfg: &GpmConfig,
    truth: Option<&BlockStack>,
) -> Result<(OrthoStack, ConvergenceTrace)> {
    let (s0, _) = spectral_init(a, cfg)?;
    iterate(a, s0, cfg, truth)
}

/// Power iterations from a caller-supplied start. Blocks of `s0` are
/// projected to the nearest orthogonal matrices first; a block with
/// `σ_min` below `min_block_sv` is rejected.
pub fn run_gpm_from(
    a: &BlockSym,
    s0: &BlockStack,
    cfg: &GpmConfig,
) -> Result<(OrthoStack, ConvergenceTrace)> {
    cfg.validate()?;
    if s0.n() != a.n() || s0.d() != a.d() {
        return Err(Error::ShapeMismatch(format!(
            "start stack n={}, d={} vs matrix n={}, d={}",
            s0.n(),
            s0.d(),
            a.n(),
            a.d()
        )));
    }
    let (start, smin) = polar_stack_with_sigma_min(s0)?;
    if let Some((block, &v)) = smin
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v >= cfg.min_block_sv))
    {
        return Err(Error::DegenerateBlock {
            block,
            sigma_min: v,
            iteration: Some(0),
        });
    }
    iterate(a, start, cfg, None)
}

fn iterate(
    a: &BlockSym,
    s0: OrthoStack,
    cfg: &GpmConfig,
    truth: Option<&BlockStack>,
) -> Result<(OrthoStack, ConvergenceTrace)> {
    cfg.validate()?;
    let mut trace = ConvergenceTrace::default();
    if let Some(g) = truth {
        trace.init_distance = Some(distance_f(g, &s0)?.d_f);
    }
    let threshold = cfg.tol * ((a.n() * a.d()) as f64).sqrt();
    let mut s = s0;
    for t in 0..cfg.max_iter {
        let next = step_at(a, &s, cfg, Some(t + 1))?;
        let step = distance_f(&s, &next)?.d_f;
        trace.push(step);
        s = next;
        if step <= threshold {
            trace.converged = true;
            break;
        }
    }
    Ok((s, trace))
}
