//! Built-in self checks comparing the fast paths against the reference
//! routines in [`crate::oracle`].
//!
//! [`Fault::SignFlip`] corrupts the outputs under test by a sign change;
//! every suite is expected to notice, which is itself checked by the test
//! suite.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Outcome, EXIT_OK, EXIT_SELFTEST_FAILED};
use crate::blockmat::{
    lambda_after_deflation, polar, svd_small, top_eigs, BlockStack, BlockSym, MatrixKind,
    SmallMatrix,
};
use crate::certify::{objective_value, verify_certificate, CertTols};
use crate::gpm::{run_gpm, GpmConfig};
use crate::oracle;
use crate::synth::{sample_orthogonal, Instance, SynthSpec, PRNG_ID};

pub const SELFTEST_SEED: u64 = 0x05E1_F7E5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    SignFlip,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Largest observed discrepancy, in the suite's own units.
    pub worst: f64,
    pub wall_ms: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

struct Tally {
    cases: usize,
    failures: usize,
    worst: f64,
}

impl Tally {
    fn new() -> Self {
        Self {
            cases: 0,
            failures: 0,
            worst: 0.0,
        }
    }

    fn check(&mut self, err: f64, tol: f64) {
        self.cases += 1;
        // NaN counts as a failure.
        if !(err <= tol) {
            self.failures += 1;
        }
        if err.is_nan() || err > self.worst {
            self.worst = if err.is_nan() { f64::INFINITY } else { err };
        }
    }

    fn fail(&mut self) {
        self.cases += 1;
        self.failures += 1;
    }
}

fn flip(fault: Option<Fault>) -> f64 {
    if fault == Some(Fault::SignFlip) {
        -1.0
    } else {
        1.0
    }
}

fn random_small(d: usize, rng: &mut ChaCha8Rng) -> SmallMatrix {
    SmallMatrix::from_fn(d, |_, _| rng.random_range(-1.0..1.0))
}

/// Random symmetric matrix with a planted spectrum so that gaps are not
/// pathologically small.
pub fn random_symmetric(n: usize, d: usize, seed: u64) -> BlockSym {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = n * d;
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < m {
        let mut v: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        for _ in 0..2 {
            for u in &q {
                let c: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
            }
        }
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nv > 1e-6 {
            q.push(v.into_iter().map(|x| x / nv).collect());
        }
    }
    let lam: Vec<f64> = (0..m)
        .map(|i| 10.0 * (i as f64 + 1.0) / m as f64 - 5.0 + 0.3 * rng.random::<f64>())
        .collect();
    BlockSym::from_upper_fn(n, d, MatrixKind::Generic, |r, c| {
        (0..m).map(|k| lam[k] * q[k][r] * q[k][c]).sum()
    })
}

fn random_stack(n: usize, d: usize, rng: &mut ChaCha8Rng) -> BlockStack {
    let data = (0..n * d * d)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    BlockStack::from_vec(n, d, data).unwrap()
}

fn svd_oracle(fault: Option<Fault>) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(SELFTEST_SEED);
    let mut t = Tally::new();
    for case in 0..300 {
        let d = 1 + case % 6;
        let m = random_small(d, &mut rng);
        let (s_ref, _, _) = oracle::svd_via_gram(m.as_slice(), d);
        let Ok(svd) = svd_small(&m) else {
            t.fail();
            continue;
        };
        let f = flip(fault);
        let err = svd
            .s
            .iter()
            .zip(&s_ref)
            .map(|(a, b)| (f * a - b).abs())
            .fold(0.0, f64::max);
        // The Gram route squares the condition number; compare only where
        // it is trustworthy.
        let tol = 1e-10 * s_ref[0].max(1.0) / s_ref[d - 1].max(1e-3);
        t.check(err, tol);
        let q = polar(&m).unwrap().scale(f);
        // ⟨Q, M⟩ equals the nuclear norm at the polar factor.
        t.check(
            (q.inner(&m) - s_ref.iter().sum::<f64>()).abs(),
            1e-10 * d as f64,
        );
    }
    t
}

fn polar_grid(fault: Option<Fault>) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(SELFTEST_SEED + 1);
    let mut t = Tally::new();
    for _ in 0..50 {
        let m = random_small(2, &mut rng);
        let x: [f64; 4] = m.as_slice().try_into().unwrap();
        let (_, grid_dist) = oracle::polar_grid_2x2(&x, 20_000);
        let q = polar(&m).unwrap().scale(flip(fault));
        let dist = q.sub(&m).frobenius_norm();
        // The exact minimizer can never lose to a grid point, and the grid
        // is fine enough to be within 1e-3 of it.
        t.check((dist - grid_dist).max(0.0), 1e-12);
        t.check((grid_dist - dist).max(0.0), 1e-3);
    }
    t
}

fn dense_eigensolver(fault: Option<Fault>) -> Tally {
    let mut t = Tally::new();
    for case in 0..12 {
        let (n, d) = [(4, 1), (10, 2), (20, 3), (12, 5), (30, 2), (15, 4)][case % 6];
        let a = random_symmetric(n, d, SELFTEST_SEED + 100 + case as u64);
        let k = d;
        let Ok(pair) = top_eigs(&a, k, 1e-12, case as u64) else {
            t.fail();
            continue;
        };
        let all = oracle::dense_eigenvalues(a.as_slice(), a.dim());
        for j in 0..k {
            let want = all[all.len() - 1 - j];
            t.check(
                (flip(fault) * pair.eigenvalues[j] - want).abs(),
                1e-8 * want.abs().max(1.0),
            );
        }
    }
    t
}

fn deflated_eigenvalue(fault: Option<Fault>) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(SELFTEST_SEED + 2);
    let mut t = Tally::new();
    for case in 0..12 {
        let (n, d) = [(4, 1), (10, 2), (20, 3), (12, 5), (30, 2), (15, 4)][case % 6];
        let a = random_symmetric(n, d, SELFTEST_SEED + 200 + case as u64);
        let s = random_stack(n, d, &mut rng);
        let Ok(got) = lambda_after_deflation(&a, &s, 1e-12, case as u64) else {
            t.fail();
            continue;
        };
        let cols: Vec<Vec<f64>> = (0..d).map(|c| s.column(c)).collect();
        let want = oracle::projected_eigenvalues(a.as_slice(), a.dim(), &cols)[0];
        t.check((flip(fault) * got - want).abs(), 1e-8 * want.abs().max(1.0));
    }
    t
}

fn brute_force_d1(fault: Option<Fault>) -> Tally {
    let mut t = Tally::new();
    let n = 10;
    let sigma = 0.3 * (n as f64).sqrt() / (1.0 + (n as f64).ln().sqrt());
    let mut certified = 0;
    let trials = 10;
    for seed in 0..trials {
        let inst = Instance::generate(&SynthSpec::new(n, 1, sigma, SELFTEST_SEED + seed)).unwrap();
        let a = &inst.observation;
        let Ok((s, _)) = run_gpm(
            a,
            &GpmConfig {
                seed,
                ..Default::default()
            },
            None,
        ) else {
            t.fail();
            continue;
        };
        let mut s = s.into_stack();
        if fault == Some(Fault::SignFlip) {
            let mut b = s.block(n - 1);
            b.set(0, 0, -b.get(0, 0));
            s.set_block(n - 1, &b);
        }
        let cert = verify_certificate(a, &s, &CertTols::default()).unwrap();
        if cert.certified() {
            certified += 1;
            let (best, _) = oracle::max_over_signs(a.as_slice(), n);
            let obj = objective_value(a, &s).unwrap();
            t.check((obj - best).abs(), 1e-9 * best.abs());
        }
    }
    // Certification must succeed in nearly every trial at this noise level.
    t.check((trials as usize - certified) as f64, 1.0);
    t
}

fn noiseless_pipeline(fault: Option<Fault>) -> Tally {
    let mut t = Tally::new();
    let mut rng = ChaCha8Rng::seed_from_u64(SELFTEST_SEED + 3);
    for (n, d) in [(20, 3), (15, 1), (8, 4)] {
        let inst = Instance::generate(&SynthSpec::new(n, d, 0.0, rng.random())).unwrap();
        let Ok((s, trace)) = run_gpm(&inst.observation, &GpmConfig::default(), None) else {
            t.fail();
            continue;
        };
        let q = sample_orthogonal(d, &mut rng);
        let s = s
            .mul_orthogonal(&q)
            .unwrap()
            .into_stack()
            .scale(flip(fault));
        t.check(trace.iterations as f64, 5.0);
        let cert = verify_certificate(&inst.observation, &s, &CertTols::default()).unwrap();
        t.check(if cert.certified() { 0.0 } else { 1.0 }, 0.0);
        // Λ − A = n I − G Gᵀ, whose complement eigenvalue is exactly n.
        t.check((cert.lambda_d_plus_1 - n as f64).abs(), 1e-8 * n as f64);
        let d_f = crate::align::distance_f(inst.truth.as_stack(), &s)
            .unwrap()
            .d_f;
        t.check(d_f, 1e-8);
        let objective = objective_value(&inst.observation, &s).unwrap();
        t.check(
            (objective - (n * n * d) as f64).abs(),
            1e-8 * (n * n * d) as f64,
        );
        if fault == Some(Fault::SignFlip) {
            // A global flip is gauge-equivalent and goes unnoticed above, so
            // also corrupt a single block, which the certificate must reject.
            let mut s2 = s.clone();
            let b = s2.block(0).scale(-1.0);
            s2.set_block(0, &b);
            let c2 = verify_certificate(&inst.observation, &s2, &CertTols::default()).unwrap();
            t.check(if c2.certified() { 0.0 } else { 1.0 }, 0.0);
        }
    }
    t
}

type Suite = fn(Option<Fault>) -> Tally;

const SUITES: [(&str, Suite); 6] = [
    ("svd_oracle", svd_oracle),
    ("polar_grid", polar_grid),
    ("dense_eigensolver", dense_eigensolver),
    ("deflated_eigenvalue", deflated_eigenvalue),
    ("brute_force_d1", brute_force_d1),
    ("noiseless_pipeline", noiseless_pipeline),
];

pub fn run_selftest(fault: Option<Fault>) -> Vec<SuiteResult> {
    SUITES
        .iter()
        .map(|(name, suite)| {
            let start = Instant::now();
            let t = suite(fault);
            SuiteResult {
                name: name.to_string(),
                cases: t.cases,
                failures: t.failures,
                worst: t.worst,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            }
        })
        .collect()
}

pub fn cmd_selftest(fault: Option<Fault>) -> Outcome {
    let results = run_selftest(fault);
    let ok = results.iter().all(SuiteResult::passed);
    Outcome {
        code: if ok { EXIT_OK } else { EXIT_SELFTEST_FAILED },
        report: serde_json::json!({
            "command": "selftest",
            "seed": SELFTEST_SEED,
            "prng_id": PRNG_ID,
            "config": { "inject_fault": fault },
            "passed": ok,
            "suites": results,
        }),
    }
}
