//! Orthogonal group synchronization under Gaussian noise.
//!
//! The crate recovers `n` orthogonal `d×d` matrices `G_1, …, G_n` from the
//! noisy pairwise observations `A_ij = G_i G_jᵀ + σ W_ij` with the
//! generalized power method (spectral initialization followed by
//! `S ← P_n(A S)`), and checks whether the limit is the unique maximizer of
//! the semidefinite relaxation `max ⟨A, X⟩ s.t. X ⪰ 0, X_ii = I_d` through a
//! block-diagonal dual certificate.
//!
//! Module map:
//! - [`blockmat`]: small SVD, polar factors, block matrices and eigensolvers.
//! - [`synth`]: seeded ground truth, Wigner noise and observation matrices.
//! - [`align`]: quotient distance `d_F`, global alignment, basin diagnostics.
//! - [`gpm`]: the solver and its convergence trace.
//! - [`certify`]: the multiplier `Λ` and the optimality certificate.
//! - [`xcli`]: file formats, sweeps, leave-one-out experiments, self test.
//! - [`oracle`]: slow reference implementations used for verification.

// Negated comparisons are used on purpose so that NaN fails every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod blockmat;
pub mod certify;
pub mod error;
pub mod gpm;
pub mod oracle;
pub mod synth;
pub mod xcli;

pub use error::{Error, Result};

/// The normalizing noise scale `√n / (√d (√d + √ln n))`.
pub fn sigma_star(n: usize, d: usize) -> f64 {
    let n = n as f64;
    let d = d as f64;
    n.sqrt() / (d.sqrt() * (d.sqrt() + n.ln().sqrt()))
}
