//! Geometry on stacks modulo a global orthogonal transform.
//!
//! Convention used throughout the crate: `optimal_rotation(x, y)` returns
//! `Q = P(xᵀy)`, the orthogonal matrix minimizing `‖y − x Q‖_F`, so `x Q` is
//! `x` carried onto `y`.

use serde::{Deserialize, Serialize};

use crate::blockmat::{polar, svd_small, BlockStack, BlockSym, SmallMatrix};
use crate::error::Result;

/// `P(xᵀ y)`, minimizing `‖y − x Q‖_F` over orthogonal `Q`.
pub fn optimal_rotation(x: &BlockStack, y: &BlockStack) -> Result<SmallMatrix> {
    x.check_shape(y)?;
    polar(&x.tr_mul(y))
}

#[derive(Clone, Debug)]
pub struct AlignmentResult {
    /// `P(xᵀ y)`.
    pub q: SmallMatrix,
    /// `min_Q ‖y − x Q‖_F`, evaluated directly at the minimizer.
    pub d_f: f64,
    /// `max_i ‖y_i − x_i Q‖_F` with the same `Q`.
    pub blockwise_max: f64,
    /// Nuclear norm `‖xᵀ y‖_*`.
    pub nuclear: f64,
}

/// The quotient distance `d_F(x, y) = min_Q ‖y − x Q‖_F`.
///
/// The value is computed from the residual `y − x Q`, not from the closed
/// form `d_F² = 2(nd − ‖xᵀy‖_*)` (valid for orthogonal stacks), which loses
/// half the significant digits near zero.
pub fn distance_f(x: &BlockStack, y: &BlockStack) -> Result<AlignmentResult> {
    x.check_shape(y)?;
    let svd = svd_small(&x.tr_mul(y))?;
    let q = svd.u.matmul_tr(&svd.v);
    let residual = y.sub(&x.mul_small(&q));
    let blockwise_max = residual
        .blocks()
        .map(|b| b.frobenius_norm())
        .fold(0.0, f64::max);
    Ok(AlignmentResult {
        d_f: residual.frobenius_norm(),
        q,
        blockwise_max,
        nuclear: svd.nuclear_norm(),
    })
}

/// `max_i ‖s_i − g_i Q‖_F` with the single global aligner `Q = P(gᵀ s)`.
pub fn blockwise_error(s: &BlockStack, g: &BlockStack) -> Result<f64> {
    Ok(distance_f(g, s)?.blockwise_max)
}

/// Analysis constants for the basin diagnostics.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BasinConstants {
    pub epsilon: f64,
    pub kappa: f64,
    pub xi: f64,
}

impl BasinConstants {
    /// `ε = 1/(32√d)`, `κ = 3ε`, `ξ = 3κ + 1`.
    pub fn defaults(d: usize) -> Self {
        let epsilon = 1.0 / (32.0 * (d as f64).sqrt());
        let kappa = 3.0 * epsilon;
        Self {
            epsilon,
            kappa,
            xi: 3.0 * kappa + 1.0,
        }
    }
}

/// `√(nd) (√d + 4√ln n)`, the scale of `‖W_mᵀ S‖_F`.
pub fn noise_column_scale(n: usize, d: usize) -> f64 {
    let (nf, df) = (n as f64, d as f64);
    (nf * df).sqrt() * (df.sqrt() + 4.0 * nf.ln().sqrt())
}

/// `η = σ n^{−1/2} (√d + √ln n)`.
pub fn eta(n: usize, d: usize, sigma: f64) -> f64 {
    let (nf, df) = (n as f64, d as f64);
    sigma / nf.sqrt() * (df.sqrt() + nf.ln().sqrt())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasinReport {
    /// `d_F(S, Z) / √(nd)`.
    pub epsilon_hat: f64,
    /// `max_m ‖W_mᵀ S‖_F / (√(nd)(√d + 4√ln n))`.
    pub xi_hat: f64,
    /// `max_m ‖W_mᵀ S‖_F`.
    pub max_noise_correlation: f64,
    pub eta: f64,
    /// `σ_min(Zᵀ S) / n`.
    pub sigma_min_gram: f64,
    pub in_n_eps: bool,
    pub in_n_xi: bool,
}

/// Per-column noise correlations `‖W_mᵀ S‖_F`, `m = 1..n`. Since `W` is
/// symmetric, `W_mᵀ S` is block `m` of `W S`.
pub fn noise_correlations(w: &BlockSym, s: &BlockStack) -> Result<Vec<f64>> {
    Ok(w.mul_stack(s)?
        .blocks()
        .map(|b| b.frobenius_norm())
        .collect())
}

/// Membership diagnostics for the sets `N_ε` and `N_{ξ,∞}` around the
/// reference stack `z` (the ground truth).
pub fn basin_check(
    s: &BlockStack,
    z: &BlockStack,
    w: &BlockSym,
    sigma: f64,
    eps: f64,
    xi: f64,
) -> Result<BasinReport> {
    let (n, d) = (s.n(), s.d());
    let nd = (n * d) as f64;
    let align = distance_f(z, s)?;
    let corr = noise_correlations(w, s)?;
    let max_corr = corr.iter().copied().fold(0.0, f64::max);
    let epsilon_hat = align.d_f / nd.sqrt();
    let xi_hat = max_corr / noise_column_scale(n, d);
    let gram = svd_small(&z.tr_mul(s))?;
    Ok(BasinReport {
        epsilon_hat,
        xi_hat,
        max_noise_correlation: max_corr,
        eta: eta(n, d, sigma),
        sigma_min_gram: gram.sigma_min() / n as f64,
        in_n_eps: epsilon_hat <= eps,
        in_n_xi: xi_hat <= xi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockmat::OrthoStack;
    use crate::synth::{sample_orthogonal, sample_wigner};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_ortho_stack(n: usize, d: usize, seed: u64) -> OrthoStack {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks: Vec<_> = (0..n).map(|_| sample_orthogonal(d, &mut rng)).collect();
        OrthoStack::from_blocks(&blocks).unwrap()
    }

    #[test]
    fn identical_stacks_align_trivially() {
        let x = random_ortho_stack(5, 3, 1);
        let q = optimal_rotation(&x, &x).unwrap();
        assert!(q.sub(&SmallMatrix::identity(3)).frobenius_norm() < 1e-12);
        assert!(distance_f(&x, &x).unwrap().d_f < 1e-12);
    }

    #[test]
    fn scalar_case_by_enumeration() {
        let x = BlockStack::from_vec(4, 1, vec![1.0, -1.0, 1.0, 1.0]).unwrap();
        let y = BlockStack::from_vec(4, 1, vec![-1.0, 1.0, 1.0, -1.0]).unwrap();
        let q = optimal_rotation(&x, &y).unwrap().get(0, 0);
        let cost = |s: f64| y.sub(&x.scale(s)).frobenius_norm();
        let best = if cost(1.0) <= cost(-1.0) { 1.0 } else { -1.0 };
        assert_eq!(q, best);
    }

    #[test]
    fn two_element_distance() {
        let x = BlockStack::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        let y = BlockStack::from_vec(2, 1, vec![1.0, -1.0]).unwrap();
        let r = distance_f(&x, &y).unwrap();
        assert!((r.d_f - 2.0).abs() < 1e-15);
    }

    #[test]
    fn gauge_invariance_of_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_ortho_stack(6, 3, 4);
        let q = sample_orthogonal(3, &mut rng);
        let xq = x.mul_orthogonal(&q).unwrap();
        assert!(distance_f(&x, &xq).unwrap().d_f < 1e-12);
    }

    #[test]
    fn blockwise_error_direct_loop() {
        let g = random_ortho_stack(3, 2, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let blocks: Vec<_> = (0..3)
            .map(|i| {
                let p = SmallMatrix::from_fn(2, |a, b| 0.05 * ((i * 4 + a * 2 + b) as f64).sin());
                crate::blockmat::polar(&g.block(i).add(&p)).unwrap()
            })
            .collect();
        let s = OrthoStack::from_blocks(&blocks).unwrap();
        let q0 = sample_orthogonal(2, &mut rng);
        let s = s.mul_orthogonal(&q0).unwrap();
        let q = optimal_rotation(&g, &s).unwrap();
        let direct = (0..3)
            .map(|i| s.block(i).sub(&g.block(i).matmul(&q)).frobenius_norm())
            .fold(0.0, f64::max);
        assert!((blockwise_error(&s, &g).unwrap() - direct).abs() < 1e-15);
        assert!(blockwise_error(&g.mul_orthogonal(&q0).unwrap(), &g).unwrap() < 1e-12);
    }

    #[test]
    fn basin_at_truth() {
        let z = OrthoStack::identity(10, 2);
        let w = sample_wigner(10, 2, 1);
        let rep = basin_check(&z, &z, &w, 0.7, 1e-6, 1.0).unwrap();
        assert_eq!(rep.epsilon_hat, 0.0);
        assert!(rep.in_n_eps);
        assert!((rep.sigma_min_gram - 1.0).abs() < 1e-14);
    }

    #[test]
    fn default_constants_satisfy_inequalities() {
        for d in 1..=6 {
            let c = BasinConstants::defaults(d);
            assert!(c.epsilon * (d as f64).sqrt() < 1.0 / 31.0);
            assert!(c.kappa > 2.0 * c.epsilon);
            assert!((c.xi - (3.0 * c.kappa + 1.0)).abs() < 1e-15);
        }
    }
}
