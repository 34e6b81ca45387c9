//! Iterative symmetric eigensolvers on [`BlockSym`] matrices.
//!
//! - [`top_eigs`]: blocked subspace iteration with Rayleigh–Ritz for the
//!   algebraically largest eigenpairs.
//! - [`lambda_after_deflation`]: smallest eigenvalue of a matrix restricted
//!   to the orthogonal complement of a given column space, by Lanczos with
//!   full reorthogonalization.
//! - [`op_norm_estimate`]: a slightly inflated spectral norm estimate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::small::{dot, sym_eig, SmallMatrix};
use super::stack::{BlockStack, BlockSym};
use crate::error::{Error, Result};

/// Sweep cap for [`top_eigs`].
pub const MAX_SWEEPS: usize = 10_000;

/// Matrix-vector product cap for [`lambda_after_deflation`].
pub const MAX_MATVECS: usize = 10_000;

/// Lanczos steps used by [`op_norm_estimate`]; enough for a relative error
/// below 4.7% with probability `1 − 1e−6` at `nd ≤ 10⁶`.
const NORM_LANCZOS_STEPS: usize = 64;

/// Inflation applied to the Lanczos norm estimate.
const NORM_SAFETY: f64 = 1.05;

const NORM_SEED: u64 = 0x6f70_6e6f_726d;

const MAX_KRYLOV_DIM: usize = 300;

/// Leading eigenpairs of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SpectralPair {
    /// Number of blocks of the source matrix.
    pub n: usize,
    /// Number of eigenpairs kept.
    pub k: usize,
    /// Row-major `nd×k` eigenvector matrix scaled so that `ΦᵀΦ = n·I_k`.
    pub phi: Vec<f64>,
    /// Eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// `λ_k − λ_{k+1}` from the guard vectors, `+∞` when none are available.
    pub gap: f64,
    /// Subspace iteration sweeps used.
    pub sweeps: usize,
}

impl SpectralPair {
    /// The eigenvectors as an `n`-block stack; requires `k` to equal the
    /// block size of the source matrix.
    pub fn phi_stack(&self) -> Result<BlockStack> {
        if self.phi.len() != self.n * self.k * self.k {
            return Err(Error::ShapeMismatch(format!(
                "{} eigenvectors do not form a stack of {} blocks",
                self.k, self.n
            )));
        }
        BlockStack::from_vec(self.n, self.k, self.phi.clone())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.phi.chunks(self.k).map(|row| row[j]).collect()
    }
}

/// Row-major `rows×cols` scratch matrix used by the subspace iteration.
struct Panel {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Panel {
    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        Self { rows, cols, data }
    }

    fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.data[r * self.cols + j])
            .collect()
    }

    fn set_col(&mut self, j: usize, v: &[f64]) {
        for (r, &x) in v.iter().enumerate() {
            self.data[r * self.cols + j] = x;
        }
    }

    /// `selfᵀ other`.
    fn tr_mul(&self, other: &Panel) -> SmallMatrix {
        let k = self.cols;
        let mut out = vec![0.0; k * k];
        for r in 0..self.rows {
            let a = &self.data[r * k..(r + 1) * k];
            let b = &other.data[r * k..(r + 1) * k];
            for i in 0..k {
                for j in 0..k {
                    out[i * k + j] += a[i] * b[j];
                }
            }
        }
        SmallMatrix::from_vec_unchecked(k, out)
    }

    fn mul_small(&self, q: &SmallMatrix) -> Panel {
        let k = self.cols;
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            let a = &self.data[r * k..(r + 1) * k];
            let o = &mut data[r * k..(r + 1) * k];
            for (i, &ai) in a.iter().enumerate() {
                for (j, oj) in o.iter_mut().enumerate() {
                    *oj += ai * q.get(i, j);
                }
            }
        }
        Panel {
            rows: self.rows,
            cols: k,
            data,
        }
    }

    /// Orthonormalizes the columns in place (two passes of modified
    /// Gram–Schmidt); columns that collapse are replaced by random vectors.
    fn orthonormalize(&mut self, rng: &mut ChaCha8Rng) {
        let mut cols: Vec<Vec<f64>> = (0..self.cols).map(|j| self.col(j)).collect();
        orthonormalize_columns(&mut cols, &[], rng);
        for (j, c) in cols.iter().enumerate() {
            self.set_col(j, c);
        }
    }
}

fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for q in basis {
        let c = dot(v, q);
        v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let nrm = dot(v, v).sqrt();
    if nrm > 0.0 {
        v.iter_mut().for_each(|x| *x /= nrm);
    }
    nrm
}

/// Orthonormalizes `cols` against `fixed` and each other. Columns that lose
/// more than all but `1e−10` of their norm are redrawn at random.
fn orthonormalize_columns(cols: &mut [Vec<f64>], fixed: &[Vec<f64>], rng: &mut ChaCha8Rng) {
    let mut done: Vec<Vec<f64>> = fixed.to_vec();
    for col in cols.iter_mut() {
        let mut attempts = 0;
        loop {
            let before = dot(col, col).sqrt();
            project_out(col, &done);
            project_out(col, &done);
            let after = normalize(col);
            if before > 0.0 && after > 1e-10 * before {
                break;
            }
            attempts += 1;
            assert!(attempts < 16, "cannot extend orthonormal basis");
            for x in col.iter_mut() {
                *x = StandardNormal.sample(rng);
            }
        }
        done.push(col.clone());
    }
}

/// Spectral norm estimate `ν` with `‖M‖ ≤ ν ≤ 1.1‖M‖` with high probability.
///
/// Runs Lanczos from a fixed seeded start vector, takes the larger of the
/// extreme Ritz magnitudes, inflates it by 5%, and caps it by `‖M‖_F`.
pub fn op_norm_estimate(m: &BlockSym) -> f64 {
    let dim = m.dim();
    let fro = m.frobenius_norm();
    if fro == 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(NORM_SEED);
    let start: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let steps = NORM_LANCZOS_STEPS.min(dim);
    let mut krylov = Krylov::new(start, &[]);
    for _ in 0..steps {
        if !krylov.extend(m, &[]) {
            break;
        }
    }
    let k = krylov.alphas.len();
    let lo = tridiag_eigenvalue(&krylov.alphas, &krylov.betas[..k - 1], 0);
    let hi = tridiag_eigenvalue(&krylov.alphas, &krylov.betas[..k - 1], k - 1);
    (NORM_SAFETY * lo.abs().max(hi.abs())).min(fro)
}

/// The `k` algebraically largest eigenpairs of `a`.
///
/// Blocked subspace iteration on `A + νI` (with `ν` from
/// [`op_norm_estimate`], so the shifted matrix is positive semidefinite)
/// using a block of `k + 2` vectors and a Rayleigh–Ritz step per sweep. The
/// two guard vectors are discarded on return. Stops when every kept Ritz
/// pair has `‖Aφ − λφ‖ ≤ tol·ν`.
pub fn top_eigs(a: &BlockSym, k: usize, tol: f64, seed: u64) -> Result<SpectralPair> {
    let dim = a.dim();
    if k == 0 || k > dim {
        return Err(Error::InvalidInput(format!(
            "cannot take {k} eigenpairs of a {dim}x{dim} matrix"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(
            "eigensolver tolerance must be positive".into(),
        ));
    }
    let p = (k + 2).min(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Panel::random(dim, p, &mut rng);
    x.orthonormalize(&mut rng);
    let nu = op_norm_estimate(a);

    for sweep in 1..=MAX_SWEEPS {
        let ax = Panel {
            rows: dim,
            cols: p,
            data: a.mul_dense(&x.data, p),
        };
        let h = x.tr_mul(&ax);
        let (vals, vecs) = sym_eig(&h);
        let xr = x.mul_small(&vecs);
        let axr = ax.mul_small(&vecs);

        let mut worst: f64 = 0.0;
        for (j, &lam) in vals.iter().enumerate().take(k) {
            let mut r2 = 0.0;
            for row in 0..dim {
                let e = axr.data[row * p + j] - lam * xr.data[row * p + j];
                r2 += e * e;
            }
            worst = worst.max(r2.sqrt());
        }
        if nu == 0.0 || worst <= tol * nu {
            return Ok(finish_top_eigs(a, k, &xr, &vals, sweep));
        }

        let mut y = axr;
        for (yv, xv) in y.data.iter_mut().zip(&xr.data) {
            *yv += nu * xv;
        }
        y.orthonormalize(&mut rng);
        x = y;
    }
    Err(Error::NoConvergence {
        iterations: MAX_SWEEPS,
    })
}

fn finish_top_eigs(a: &BlockSym, k: usize, x: &Panel, vals: &[f64], sweeps: usize) -> SpectralPair {
    let dim = a.dim();
    let n = a.n();
    let scale = (n as f64).sqrt();
    let mut phi = vec![0.0; dim * k];
    for j in 0..k {
        let col = x.col(j);
        // Deterministic sign: largest-magnitude entry positive.
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        let sign = if col[best] < 0.0 { -1.0 } else { 1.0 };
        for (r, v) in col.iter().enumerate() {
            phi[r * k + j] = sign * scale * v;
        }
    }
    let gap = if vals.len() > k {
        vals[k - 1] - vals[k]
    } else {
        f64::INFINITY
    };
    SpectralPair {
        n,
        k,
        phi,
        eigenvalues: vals[..k].to_vec(),
        gap,
        sweeps,
    }
}

/// Smallest eigenvalue of `m` restricted to the orthogonal complement of the
/// column space of `s`; for a matrix that annihilates `col(s)` this is
/// `λ_{d+1}(m)`.
///
/// The columns of `s` are orthonormalized first (rank loss is an error).
/// Lanczos with full reorthogonalization against both the deflation basis
/// and the Krylov basis runs on the projected operator until the Ritz
/// residual drops below `tol·ν`, `ν` being [`op_norm_estimate`]`(m)`; the
/// Krylov space is explicitly restarted from the current Ritz vector when it
/// reaches its size cap.
pub fn lambda_after_deflation(m: &BlockSym, s: &BlockStack, tol: f64, seed: u64) -> Result<f64> {
    let dim = m.dim();
    if s.rows() != dim {
        return Err(Error::ShapeMismatch(format!(
            "deflation basis has {} rows, matrix has {dim}",
            s.rows()
        )));
    }
    let k = s.d();
    if k >= dim {
        return Err(Error::InvalidInput(
            "deflation leaves an empty complement".into(),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(
            "eigensolver tolerance must be positive".into(),
        ));
    }

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut c = s.column(j);
        let before = dot(&c, &c).sqrt();
        project_out(&mut c, &basis);
        project_out(&mut c, &basis);
        let after = normalize(&mut c);
        if !(before > 0.0 && after > 1e-10 * before) {
            return Err(Error::RankDeficient {
                rank: basis.len(),
                expected: k,
            });
        }
        basis.push(c);
    }

    let nu = op_norm_estimate(m);
    if nu == 0.0 {
        return Ok(0.0);
    }
    let threshold = tol * nu;
    let complement = dim - k;
    let max_dim = MAX_KRYLOV_DIM.min(complement);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut start: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut matvecs = 0;
    loop {
        let mut krylov = Krylov::new(start, &basis);
        loop {
            let alive = krylov.extend(m, &basis);
            matvecs += 1;
            let j = krylov.alphas.len();
            let theta = tridiag_eigenvalue(&krylov.alphas, &krylov.betas[..j - 1], 0);
            let y = tridiag_eigenvector(&krylov.alphas, &krylov.betas[..j - 1], theta);
            let residual = krylov.betas[j - 1].abs() * y[j - 1].abs();
            if !alive || residual <= threshold {
                return Ok(theta);
            }
            if matvecs >= MAX_MATVECS {
                return Err(Error::NoConvergence {
                    iterations: matvecs,
                });
            }
            if j >= max_dim {
                start = krylov.combine(&y);
                break;
            }
        }
    }
}

/// Lanczos recurrence with full reorthogonalization.
struct Krylov {
    vectors: Vec<Vec<f64>>,
    alphas: Vec<f64>,
    /// `betas[j]` couples `vectors[j]` and `vectors[j+1]`.
    betas: Vec<f64>,
    next: Vec<f64>,
}

impl Krylov {
    fn new(mut start: Vec<f64>, deflate: &[Vec<f64>]) -> Self {
        project_out(&mut start, deflate);
        project_out(&mut start, deflate);
        normalize(&mut start);
        Self {
            vectors: Vec::new(),
            alphas: Vec::new(),
            betas: Vec::new(),
            next: start,
        }
    }

    /// Adds one Lanczos vector; returns `false` on breakdown (the Krylov
    /// space became invariant).
    fn extend(&mut self, m: &BlockSym, deflate: &[Vec<f64>]) -> bool {
        let v = std::mem::take(&mut self.next);
        let mut w = vec![0.0; v.len()];
        m.matvec(&v, &mut w);
        project_out(&mut w, deflate);
        let alpha = dot(&v, &w);
        self.vectors.push(v);
        for _ in 0..2 {
            project_out(&mut w, &self.vectors);
            project_out(&mut w, deflate);
        }
        let beta = normalize(&mut w);
        self.alphas.push(alpha);
        self.betas.push(beta);
        self.next = w;
        let scale = self
            .alphas
            .iter()
            .map(|a| a.abs())
            .fold(0.0, f64::max)
            .max(1e-300);
        beta > 1e-13 * scale
    }

    fn combine(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.vectors[0].len()];
        for (v, &c) in self.vectors.iter().zip(y) {
            out.iter_mut().zip(v).for_each(|(o, x)| *o += c * x);
        }
        out
    }
}

/// Number of eigenvalues of the symmetric tridiagonal `(alpha, beta)` that
/// are strictly less than `x` (Sturm sequence).
fn sturm_count(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..alpha.len() {
        let b2 = if i == 0 {
            0.0
        } else {
            beta[i - 1] * beta[i - 1]
        };
        q = alpha[i] - x - if i == 0 { 0.0 } else { b2 / q };
        if q == 0.0 {
            q = -f64::MIN_POSITIVE.sqrt();
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `idx`-th smallest (0-based) eigenvalue of a symmetric tridiagonal
/// matrix, by bisection.
fn tridiag_eigenvalue(alpha: &[f64], beta: &[f64], idx: usize) -> f64 {
    let k = alpha.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..k {
        let r = if i > 0 { beta[i - 1].abs() } else { 0.0 }
            + if i + 1 < k { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    let span = hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE);
    lo -= f64::EPSILON * span;
    hi += f64::EPSILON * span;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 2.0 * f64::EPSILON * span {
            break;
        }
        if sturm_count(alpha, beta, mid) > idx {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Unit eigenvector of a symmetric tridiagonal matrix for the (accurate)
/// eigenvalue `theta`, by inverse iteration with a pivoted LU.
fn tridiag_eigenvector(alpha: &[f64], beta: &[f64], theta: f64) -> Vec<f64> {
    let k = alpha.len();
    if k == 1 {
        return vec![1.0];
    }
    let scale = alpha
        .iter()
        .chain(beta)
        .map(|x| x.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let tiny = f64::EPSILON * scale;
    let lu = TridiagLu::factor(alpha, beta, theta, tiny);
    let mut y = vec![1.0; k];
    for _ in 0..3 {
        lu.solve(&mut y);
        normalize(&mut y);
    }
    y
}

/// LU factorization with partial pivoting of `T − θI` for tridiagonal `T`.
struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    fn factor(alpha: &[f64], beta: &[f64], theta: f64, tiny: f64) -> Self {
        let k = alpha.len();
        let mut d: Vec<f64> = alpha.iter().map(|a| a - theta).collect();
        let mut dl = beta.to_vec();
        let mut du = beta.to_vec();
        let mut du2 = vec![0.0; k.saturating_sub(2)];
        let mut swapped = vec![false; k.saturating_sub(1)];
        for i in 0..k - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let l = dl[i] / d[i];
                dl[i] = l;
                d[i + 1] -= l * du[i];
            } else {
                let l = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = l;
                let tmp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = tmp - l * d[i + 1];
                if i + 2 < k {
                    du2[i] = du[i + 1];
                    du[i + 1] = -l * du2[i];
                }
                swapped[i] = true;
            }
        }
        if d[k - 1] == 0.0 {
            d[k - 1] = tiny;
        }
        Self {
            dl,
            d,
            du,
            du2,
            swapped,
        }
    }

    fn solve(&self, b: &mut [f64]) {
        let k = self.d.len();
        for i in 0..k - 1 {
            if self.swapped[i] {
                b.swap(i, i + 1);
            }
            b[i + 1] -= self.dl[i] * b[i];
        }
        b[k - 1] /= self.d[k - 1];
        if k >= 2 {
            b[k - 2] = (b[k - 2] - self.du[k - 2] * b[k - 1]) / self.d[k - 2];
        }
        for i in (0..k.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}
