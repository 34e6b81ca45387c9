//! Seeded problem generation.
//!
//! Noise entries come from a ChaCha8 stream addressed by the entry's
//! position, so `W(seed)` does not depend on generation order or threading.
//! Entry `(r, c)` with `r ≤ c` of an `m×m` noise matrix consumes the four
//! 32-bit words starting at word `4(r·m + c)` of stream [`NOISE_STREAM`],
//! turned into one standard normal by Box–Muller.

use std::f64::consts::TAU;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockmat::BlockStack;
pub use crate::blockmat::{BlockSym, MatrixKind, OrthoStack, SmallMatrix};
use crate::error::{Error, Result};

/// Identifier of the generator recorded in file headers and reports.
pub const PRNG_ID: &str = "chacha8-counter-boxmuller-v1";

pub const NOISE_STREAM: u64 = 1;
pub const TRUTH_STREAM: u64 = 2;

/// How the ground-truth stack is drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthKind {
    /// Independent Haar-distributed blocks.
    #[default]
    Haar,
    /// All blocks equal to `I_d`.
    Identity,
}

/// Parameters of one synthetic instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub sigma: f64,
    pub seed: u64,
    /// Keep noise on the diagonal blocks `A_ii`.
    pub diagonal_noise: bool,
    #[serde(default)]
    pub truth: TruthKind,
}

impl SynthSpec {
    pub fn new(n: usize, d: usize, sigma: f64, seed: u64) -> Self {
        Self {
            n,
            d,
            sigma,
            seed,
            diagonal_noise: true,
            truth: TruthKind::Haar,
        }
    }

    pub fn with_truth(mut self, truth: TruthKind) -> Self {
        self.truth = truth;
        self
    }

    pub fn with_diagonal_noise(mut self, on: bool) -> Self {
        self.diagonal_noise = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::InvalidInput(format!(
                "need n >= 1 and d >= 1 (got n={}, d={})",
                self.n, self.d
            )));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sigma must be finite and >= 0 (got {})",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// A generated instance: truth `G`, noise `W` and observation `A`.
#[derive(Clone, Debug)]
pub struct Instance {
    pub spec: SynthSpec,
    pub truth: OrthoStack,
    pub noise: BlockSym,
    pub observation: BlockSym,
}

impl Instance {
    pub fn generate(spec: &SynthSpec) -> Result<Self> {
        spec.validate()?;
        let truth = sample_truth(spec);
        let noise = sample_wigner(spec.n, spec.d, spec.seed);
        let observation = assemble_observation(&truth, spec.sigma, &noise, spec.diagonal_noise)?;
        Ok(Self {
            spec: spec.clone(),
            truth,
            noise,
            observation,
        })
    }

    /// `A^(m)` for 1-based `m`.
    pub fn leave_one_out(&self, m: usize) -> Result<BlockSym> {
        leave_one_out(
            &self.truth,
            self.spec.sigma,
            &self.noise,
            m,
            self.spec.diagonal_noise,
        )
    }
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// diagonal of `R` made positive.
pub fn sample_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> SmallMatrix {
    let mut cols: Vec<Vec<f64>> = (0..d)
        .map(|_| {
            (0..d)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    // Gram–Schmidt with reorthogonalization; the implied R has a positive
    // diagonal, which is the sign correction that makes Q Haar.
    for j in 0..d {
        let (done, rest) = cols.split_at_mut(j);
        let col = &mut rest[0];
        for _ in 0..2 {
            for q in done.iter() {
                let c: f64 = col.iter().zip(q).map(|(a, b)| a * b).sum();
                col.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let nrm = col.iter().map(|a| a * a).sum::<f64>().sqrt();
        col.iter_mut().for_each(|a| *a /= nrm);
    }
    SmallMatrix::from_fn(d, |i, j| cols[j][i])
}

/// Ground-truth stack for the spec: Haar blocks from [`TRUTH_STREAM`] or
/// identities.
pub fn sample_truth(spec: &SynthSpec) -> OrthoStack {
    match spec.truth {
        TruthKind::Identity => OrthoStack::identity(spec.n, spec.d),
        TruthKind::Haar => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(TRUTH_STREAM);
            let blocks: Vec<SmallMatrix> = (0..spec.n)
                .map(|_| sample_orthogonal(spec.d, &mut rng))
                .collect();
            OrthoStack::from_blocks(&blocks).expect("Haar samples are orthogonal")
        }
    }
}

fn unit_open(bits: u64) -> f64 {
    // (0, 1]: never zero, so the logarithm is finite.
    ((bits >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

fn unit_closed_open(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Symmetric `nd×nd` Gaussian matrix with i.i.d. `N(0, 1)` entries on and
/// above the diagonal, mirrored below.
pub fn sample_wigner(n: usize, d: usize, seed: u64) -> BlockSym {
    let m = n * d;
    let mut upper = vec![0.0; m * m];
    upper.par_chunks_mut(m).enumerate().for_each(|(r, row)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(NOISE_STREAM);
        rng.set_word_pos(4 * (r as u128 * m as u128 + r as u128));
        for x in row.iter_mut().skip(r) {
            let u1 = unit_open(rng.next_u64());
            let u2 = unit_closed_open(rng.next_u64());
            *x = (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos();
        }
    });
    BlockSym::from_upper_fn(n, d, MatrixKind::Noise, |r, c| upper[r * m + c])
}

#[inline]
fn truth_entry(g: &BlockStack, r: usize, c: usize) -> f64 {
    // (G Gᵀ)_{rc} = Σ_k G[r, k] G[c, k]
    let d = g.d();
    let mut s = 0.0;
    for k in 0..d {
        s += g.get(r, k) * g.get(c, k);
    }
    s
}

/// `A = G Gᵀ + σ W`; with `diagonal_noise` off the diagonal blocks are
/// exactly `G_i G_iᵀ`.
pub fn assemble_observation(
    g: &OrthoStack,
    sigma: f64,
    w: &BlockSym,
    diagonal_noise: bool,
) -> Result<BlockSym> {
    if g.n() != w.n() || g.d() != w.d() {
        return Err(Error::ShapeMismatch(format!(
            "truth has n={}, d={} but noise has n={}, d={}",
            g.n(),
            g.d(),
            w.n(),
            w.d()
        )));
    }
    let d = g.d();
    Ok(BlockSym::from_upper_fn(
        g.n(),
        d,
        MatrixKind::Observation,
        |r, c| {
            let base = truth_entry(g, r, c);
            if !diagonal_noise && r / d == c / d {
                base
            } else {
                base + sigma * w.entry(r, c)
            }
        },
    ))
}

/// `A^(m) = G Gᵀ + σ W^(m)` where `W^(m)` zeroes block row and column `m`
/// (1-based) of `W`.
pub fn leave_one_out(
    g: &OrthoStack,
    sigma: f64,
    w: &BlockSym,
    m: usize,
    diagonal_noise: bool,
) -> Result<BlockSym> {
    if m == 0 || m > w.n() {
        return Err(Error::IndexOutOfRange {
            index: m,
            len: w.n(),
        });
    }
    let d = w.d();
    let skip = m - 1;
    let wm = BlockSym::from_upper_fn(w.n(), d, MatrixKind::Noise, |r, c| {
        if r / d == skip || c / d == skip {
            0.0
        } else {
            w.entry(r, c)
        }
    });
    Ok(assemble_observation(g, sigma, &wm, diagonal_noise)?.with_kind(MatrixKind::LeaveOneOut(m)))
}
