//! Randomized property checks on the geometry, eigensolvers and
//! certificate.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ortho_sync::align::distance_f;
use ortho_sync::blockmat::{polar, svd_small, top_eigs, OrthoStack, SmallMatrix};
use ortho_sync::certify::{verify_certificate, CertTols};
use ortho_sync::gpm::{run_gpm, GpmConfig};
use ortho_sync::oracle;
use ortho_sync::synth::{sample_orthogonal, Instance, SynthSpec};
use ortho_sync::xcli::selftest::random_symmetric;

fn matrix(d: usize, seed: u64) -> SmallMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SmallMatrix::from_fn(d, |_, _| rng.random_range(-2.0..2.0))
}

fn orthogonal(d: usize, seed: u64) -> SmallMatrix {
    sample_orthogonal(d, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn polar_is_orthogonal_and_fixes_orthogonal(d in 1usize..=6, seed in any::<u64>()) {
        let q = polar(&matrix(d, seed)).unwrap();
        prop_assert!(q.orthogonality_defect() < 1e-12);
        let o = orthogonal(d, seed);
        prop_assert!(polar(&o).unwrap().sub(&o).frobenius_norm() < 1e-12);
    }

    #[test]
    fn polar_attains_nuclear_norm(d in 1usize..=6, seed in any::<u64>()) {
        let m = matrix(d, seed);
        let nuc = svd_small(&m).unwrap().nuclear_norm();
        prop_assert!((polar(&m).unwrap().inner(&m) - nuc).abs() <= 1e-10 * nuc.max(1.0));
    }

    #[test]
    fn polar_is_equivariant(d in 1usize..=6, seed in any::<u64>()) {
        let m = matrix(d, seed);
        let q = orthogonal(d, seed ^ 0xABCD);
        let p = polar(&m).unwrap();
        prop_assert!(polar(&m.matmul(&q)).unwrap().sub(&p.matmul(&q)).frobenius_norm() < 1e-10);
        prop_assert!(polar(&q.matmul(&m)).unwrap().sub(&q.matmul(&p)).frobenius_norm() < 1e-10);
    }

    #[test]
    fn svd_reconstructs(d in 1usize..=6, seed in any::<u64>()) {
        let m = matrix(d, seed);
        let svd = svd_small(&m).unwrap();
        prop_assert!(svd.reconstruct().sub(&m).frobenius_norm() < 1e-12 * m.frobenius_norm().max(1.0));
        prop_assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
    }
}

/// Stack at a controlled distance from `z`: every block rotated by a small
/// random perturbation of size `t`.
fn perturbed(z: &OrthoStack, t: f64, seed: u64) -> OrthoStack {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = z.d();
    let blocks: Vec<_> = z
        .blocks()
        .map(|b| polar(&b.add(&SmallMatrix::from_fn(d, |_, _| rng.random_range(-t..t)))).unwrap())
        .collect();
    OrthoStack::from_blocks(&blocks).unwrap()
}

fn ortho_stack(n: usize, d: usize, seed: u64) -> OrthoStack {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks: Vec<_> = (0..n).map(|_| sample_orthogonal(d, &mut rng)).collect();
    OrthoStack::from_blocks(&blocks).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    /// Near the reference, `σ_min(ZᵀS) ≥ (1 − ε²d/2) n` with `ε = d_F/√(nd)`.
    #[test]
    fn gram_singular_value_lower_bound(n in 2usize..12, d in 1usize..5, t in 0.0f64..0.6, seed in any::<u64>()) {
        let z = ortho_stack(n, d, seed);
        let s = perturbed(&z, t, seed ^ 1);
        let nd = (n * d) as f64;
        let eps = distance_f(&z, &s).unwrap().d_f / nd.sqrt();
        let smin = svd_small(&z.tr_mul(&s)).unwrap().sigma_min();
        prop_assert!(smin >= (1.0 - eps * eps * d as f64 / 2.0) * n as f64 - 1e-9 * nd);
    }

    #[test]
    fn distance_matches_two_dimensional_grid(n in 1usize..6, seed in any::<u64>()) {
        let x = ortho_stack(n, 2, seed);
        let y = perturbed(&x, 1.0, seed ^ 2);
        let grid = oracle::alignment_grid_2d(x.as_slice(), y.as_slice(), 10_000);
        let d_f = distance_f(&x, &y).unwrap().d_f;
        prop_assert!(d_f <= grid + 1e-12);
        prop_assert!(grid - d_f <= 1e-2 * (n as f64).sqrt());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn top_eigs_matches_dense_oracle(n in 2usize..15, d in 1usize..5, seed in any::<u64>()) {
        let a = random_symmetric(n, d, seed);
        let all = oracle::dense_eigenvalues(a.as_slice(), a.dim());
        let pair = top_eigs(&a, d, 1e-12, seed).unwrap();
        for j in 0..d {
            prop_assert!((pair.eigenvalues[j] - all[all.len() - 1 - j]).abs() < 1e-8);
        }
    }

    /// The verdict does not depend on the global gauge of the stack.
    #[test]
    fn certificate_is_gauge_invariant(n in 5usize..30, d in 1usize..4, frac in 0.0f64..1.5, seed in any::<u64>()) {
        let sigma = frac * ortho_sync::sigma_star(n, d);
        let inst = Instance::generate(&SynthSpec::new(n, d, sigma, seed)).unwrap();
        let Ok((s, _)) = run_gpm(&inst.observation, &GpmConfig::default(), None) else { return Ok(()); };
        let tols = CertTols::default();
        let c1 = verify_certificate(&inst.observation, &s, &tols).unwrap();
        let q = orthogonal(d, seed ^ 3);
        let c2 = verify_certificate(&inst.observation, &s.mul_orthogonal(&q).unwrap(), &tols).unwrap();
        prop_assert!((c1.fixed_point_residual - c2.fixed_point_residual).abs() < 1e-9 * n as f64);
        prop_assert!((c1.lambda_min_blocks - c2.lambda_min_blocks).abs() < 1e-9 * n as f64);
        if c1.lambda_d_plus_1.is_finite() {
            prop_assert!((c1.lambda_d_plus_1 - c2.lambda_d_plus_1).abs() < 1e-7 * n as f64);
        }
    }

    /// A certified stack attains an objective no smaller than any other
    /// stack of orthogonal blocks, here random ones and the ground truth.
    #[test]
    fn certified_objective_dominates(n in 4usize..20, d in 1usize..4, seed in any::<u64>()) {
        let sigma = 0.3 * ortho_sync::sigma_star(n, d);
        let inst = Instance::generate(&SynthSpec::new(n, d, sigma, seed)).unwrap();
        let a = &inst.observation;
        let (s, _) = run_gpm(a, &GpmConfig::default(), None).unwrap();
        let cert = verify_certificate(a, &s, &CertTols::default()).unwrap();
        if cert.certified() {
            let best = a.mul_stack(&s).unwrap().inner(&s);
            for k in 0..5u64 {
                let r = ortho_stack(n, d, seed.wrapping_add(k));
                prop_assert!(a.mul_stack(&r).unwrap().inner(&r) <= best + 1e-9 * best.abs());
            }
            let g = inst.truth.as_stack();
            prop_assert!(a.mul_stack(g).unwrap().inner(g) <= best + 1e-9 * best.abs());
        }
    }
}
