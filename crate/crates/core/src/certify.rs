//! Dual certificate for the semidefinite relaxation.
//!
//! A stack `S` of orthogonal blocks gives the unique maximizer `S Sᵀ` of
//! `max ⟨A, X⟩ s.t. X ⪰ 0, X_ii = I_d` when a block-diagonal `Λ ⪰ 0`
//! satisfies `A S = Λ S`, `Λ − A ⪰ 0`, and `Λ − A` has rank `(n−1)d`. The
//! multiplier is built blockwise as `Λ_ii = ([AS]_i [AS]_iᵀ)^{1/2}`, which is
//! symmetric PSD by construction and equals `[AS]_i S_iᵀ` at an exact fixed
//! point of the power iteration.
//!
//! A failed check does not prove that `S` is suboptimal.

use serde::{Deserialize, Serialize};

use crate::blockmat::{
    lambda_after_deflation, left_psd_factor, sym_eig, BlockStack, BlockSym, SmallMatrix,
};
use crate::error::Result;

/// Block-diagonal matrix with symmetric `d×d` blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDiag {
    blocks: Vec<SmallMatrix>,
}

impl BlockDiag {
    pub fn new(blocks: Vec<SmallMatrix>) -> Self {
        Self { blocks }
    }

    pub fn n(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, i: usize) -> &SmallMatrix {
        &self.blocks[i]
    }

    pub fn blocks(&self) -> &[SmallMatrix] {
        &self.blocks
    }

    /// `Λ S`.
    pub fn mul_stack(&self, s: &BlockStack) -> BlockStack {
        let out: Vec<SmallMatrix> = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, l)| l.matmul(&s.block(i)))
            .collect();
        BlockStack::from_blocks(&out).expect("block shapes agree")
    }

    /// `min_i λ_min(Λ_ii)`.
    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| *sym_eig(b).0.last().unwrap())
            .fold(f64::INFINITY, f64::min)
    }

    /// `Λ − A`.
    pub fn minus(&self, a: &BlockSym) -> BlockSym {
        let mut m = a.negated();
        for (i, b) in self.blocks.iter().enumerate() {
            m.add_to_diagonal_block(i, b);
        }
        m
    }
}

/// `Λ_ii = ([AS]_i [AS]_iᵀ)^{1/2}`.
pub fn build_multiplier(a: &BlockSym, s: &BlockStack) -> Result<BlockDiag> {
    let as_ = a.mul_stack(s)?;
    let blocks = as_
        .blocks()
        .map(|b| left_psd_factor(&b))
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockDiag::new(blocks))
}

/// `Λ_ii = [AS]_i S_iᵀ`, symmetric only at exact fixed points.
pub fn multiplier_from_product(a: &BlockSym, s: &BlockStack) -> Result<BlockDiag> {
    let as_ = a.mul_stack(s)?;
    let blocks = (0..s.n())
        .map(|i| as_.block(i).matmul_tr(&s.block(i)))
        .collect();
    Ok(BlockDiag::new(blocks))
}

/// `⟨A, S Sᵀ⟩ = Σ_{i,j} ⟨A_ij, S_i S_jᵀ⟩`.
///
/// This is the full double sum: twice the `i < j` objective plus the
/// diagonal-block contribution `Σ_i ⟨A_ii, S_i S_iᵀ⟩` (which equals
/// `Σ_i tr(A_ii)` since `S_i S_iᵀ = I`).
pub fn objective_value(a: &BlockSym, s: &BlockStack) -> Result<f64> {
    Ok(a.mul_stack(s)?.inner(s))
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct CertTols {
    /// Defaults to `1e−8·n√d`.
    pub residual_tol: Option<f64>,
    /// Defaults to `1e−8·n`.
    pub psd_tol: Option<f64>,
    /// Accuracy of the deflated eigenvalue, relative to `‖Λ − A‖`.
    pub eig_tol: Option<f64>,
    pub seed: u64,
}

impl CertTols {
    pub fn residual_tol_for(&self, n: usize, d: usize) -> f64 {
        self.residual_tol
            .unwrap_or(1e-8 * n as f64 * (d as f64).sqrt())
    }

    pub fn psd_tol_for(&self, n: usize) -> f64 {
        self.psd_tol.unwrap_or(1e-8 * n as f64)
    }

    pub fn eig_tol(&self) -> f64 {
        self.eig_tol.unwrap_or(1e-10)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    CertifiedUnique,
    NotCertified,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CertificateChecks {
    pub residual_ok: bool,
    pub blocks_positive: bool,
    pub complement_positive: bool,
    pub numerical_failure: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateReport {
    /// `‖A S − Λ S‖_F`.
    pub fixed_point_residual: f64,
    /// `min_i λ_min(Λ_ii)`.
    pub lambda_min_blocks: f64,
    /// `λ_{d+1}(Λ − A)`, the smallest eigenvalue on `col(S)^⊥`; `NaN` when
    /// the eigensolver failed.
    pub lambda_d_plus_1: f64,
    pub residual_tol_used: f64,
    pub psd_tol_used: f64,
    pub verdict: Verdict,
    pub details: CertificateChecks,
}

impl CertificateReport {
    pub fn certified(&self) -> bool {
        self.verdict == Verdict::CertifiedUnique
    }
}

/// Builds `Λ` at `S` and checks the sufficient conditions for `S Sᵀ` being
/// the unique maximizer of the relaxation.
pub fn verify_certificate(
    a: &BlockSym,
    s: &BlockStack,
    tols: &CertTols,
) -> Result<CertificateReport> {
    let (n, d) = (s.n(), s.d());
    let lambda = build_multiplier(a, s)?;
    let residual = a.mul_stack(s)?.sub(&lambda.mul_stack(s)).frobenius_norm();
    let lambda_min_blocks = lambda.min_eigenvalue();
    let gap = lambda.minus(a);
    let residual_tol = tols.residual_tol_for(n, d);
    let psd_tol = tols.psd_tol_for(n);

    let (lambda_d_plus_1, numerical_failure) =
        match lambda_after_deflation(&gap, s, tols.eig_tol(), tols.seed) {
            Ok(v) => (v, false),
            Err(_) => (f64::NAN, true),
        };

    let details = CertificateChecks {
        residual_ok: residual <= residual_tol,
        blocks_positive: lambda_min_blocks > 0.0,
        complement_positive: !numerical_failure && lambda_d_plus_1 > psd_tol,
        numerical_failure,
    };
    let verdict = if details.residual_ok && details.blocks_positive && details.complement_positive {
        Verdict::CertifiedUnique
    } else {
        Verdict::NotCertified
    };
    Ok(CertificateReport {
        fixed_point_residual: residual,
        lambda_min_blocks,
        lambda_d_plus_1,
        residual_tol_used: residual_tol,
        psd_tol_used: psd_tol,
        verdict,
        details,
    })
}
