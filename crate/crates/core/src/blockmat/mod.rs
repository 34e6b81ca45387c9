//! Dense block-structured linear algebra.
//!
//! Small `d×d` kernels (SVD, polar factor, symmetric eigendecomposition),
//! the `nd×d` stack and `nd×nd` symmetric block matrix types, and the
//! iterative eigensolvers used for spectral initialization and for the
//! optimality certificate.

mod eigen;
mod small;
mod stack;

pub use eigen::{
    lambda_after_deflation, op_norm_estimate, top_eigs, SpectralPair, MAX_MATVECS, MAX_SWEEPS,
};
pub use small::{left_psd_factor, polar, svd_small, sym_eig, SmallMatrix, SmallSvd};
pub use stack::{
    polar_stack, polar_stack_with_sigma_min, BlockStack, BlockSym, MatrixKind, OrthoStack,
    ORTHO_TOL,
};
