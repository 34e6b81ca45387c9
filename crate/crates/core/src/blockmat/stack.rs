//! Block-structured dense matrices: `nd×d` stacks and symmetric `nd×nd`
//! block matrices.

use std::ops::Deref;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::small::{dot, polar_with_singular_values, SmallMatrix};
use crate::error::{Error, Result};

/// Tolerance on `‖QᵀQ − I‖_F` accepted for the blocks of an [`OrthoStack`].
pub const ORTHO_TOL: f64 = 1e-8;

/// Row count above which dense products are split across threads. Each
/// output row is always reduced sequentially, so results do not depend on
/// the thread count.
const PAR_ROWS: usize = 256;

/// An `nd×d` matrix made of `n` stacked `d×d` blocks, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockStack {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl BlockStack {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            data: vec![0.0; n * d * d],
        }
    }

    pub fn from_vec(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidInput("stack needs n >= 1 and d >= 1".into()));
        }
        if data.len() != n * d * d {
            return Err(Error::ShapeMismatch(format!(
                "stack {n}x{d} needs {} entries, got {}",
                n * d * d,
                data.len()
            )));
        }
        Ok(Self { n, d, data })
    }

    pub fn from_blocks(blocks: &[SmallMatrix]) -> Result<Self> {
        let n = blocks.len();
        if n == 0 {
            return Err(Error::InvalidInput("stack needs at least one block".into()));
        }
        let d = blocks[0].dim();
        if blocks.iter().any(|b| b.dim() != d) {
            return Err(Error::ShapeMismatch("blocks of differing size".into()));
        }
        let mut data = Vec::with_capacity(n * d * d);
        for b in blocks {
            data.extend_from_slice(b.as_slice());
        }
        Ok(Self { n, d, data })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of rows, `n·d`.
    #[inline]
    pub fn rows(&self) -> usize {
        self.n * self.d
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.d + col]
    }

    pub fn block(&self, i: usize) -> SmallMatrix {
        let dd = self.d * self.d;
        SmallMatrix::from_vec_unchecked(self.d, self.data[i * dd..(i + 1) * dd].to_vec())
    }

    pub fn set_block(&mut self, i: usize, b: &SmallMatrix) {
        assert_eq!(b.dim(), self.d);
        let dd = self.d * self.d;
        self.data[i * dd..(i + 1) * dd].copy_from_slice(b.as_slice());
    }

    pub fn blocks(&self) -> impl Iterator<Item = SmallMatrix> + '_ {
        (0..self.n).map(move |i| self.block(i))
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows()).map(|r| self.get(r, c)).collect()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n == other.n && self.d == other.d
    }

    pub(crate) fn check_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "stack {}x{} vs {}x{}",
                self.n, self.d, other.n, other.d
            )))
        }
    }

    /// `selfᵀ · other` (a `d×d` matrix).
    pub fn tr_mul(&self, other: &Self) -> SmallMatrix {
        assert!(self.same_shape(other));
        let d = self.d;
        let mut out = vec![0.0; d * d];
        for r in 0..self.rows() {
            let a = &self.data[r * d..(r + 1) * d];
            let b = &other.data[r * d..(r + 1) * d];
            for i in 0..d {
                for j in 0..d {
                    out[i * d + j] += a[i] * b[j];
                }
            }
        }
        SmallMatrix::from_vec_unchecked(d, out)
    }

    /// `self · q` for a `d×d` matrix `q`.
    pub fn mul_small(&self, q: &SmallMatrix) -> Self {
        assert_eq!(q.dim(), self.d);
        let d = self.d;
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows() {
            let a = &self.data[r * d..(r + 1) * d];
            let out = &mut data[r * d..(r + 1) * d];
            for (k, &ak) in a.iter().enumerate() {
                for (o, &qkj) in out.iter_mut().zip(q.row(k)) {
                    *o += ak * qkj;
                }
            }
        }
        Self { n: self.n, d, data }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert!(self.same_shape(other));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Self {
            n: self.n,
            d: self.d,
            data,
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            n: self.n,
            d: self.d,
            data: self.data.iter().map(|a| a * c).collect(),
        }
    }

    pub fn inner(&self, other: &Self) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }
}

/// A stack whose blocks are all orthogonal (to [`ORTHO_TOL`]).
#[derive(Clone, Debug, PartialEq)]
pub struct OrthoStack(BlockStack);

impl OrthoStack {
    /// Checks every block and wraps the stack.
    pub fn new(stack: BlockStack) -> Result<Self> {
        for (i, b) in stack.blocks().enumerate() {
            let defect = b.orthogonality_defect();
            if !(defect <= ORTHO_TOL) {
                return Err(Error::InvalidInput(format!(
                    "block {i} is not orthogonal (defect {defect:e})"
                )));
            }
        }
        Ok(Self(stack))
    }

    pub fn from_blocks(blocks: &[SmallMatrix]) -> Result<Self> {
        Self::new(BlockStack::from_blocks(blocks)?)
    }

    /// All blocks equal to `I_d`, the stack usually written `Z`.
    pub fn identity(n: usize, d: usize) -> Self {
        let eye = SmallMatrix::identity(d);
        let mut s = BlockStack::zeros(n, d);
        for i in 0..n {
            s.set_block(i, &eye);
        }
        Self(s)
    }

    /// Right multiplication by an orthogonal `q`.
    pub fn mul_orthogonal(&self, q: &SmallMatrix) -> Result<Self> {
        if q.orthogonality_defect() > ORTHO_TOL {
            return Err(Error::InvalidInput("right factor is not orthogonal".into()));
        }
        Ok(Self(self.0.mul_small(q)))
    }

    pub fn as_stack(&self) -> &BlockStack {
        &self.0
    }

    pub fn into_stack(self) -> BlockStack {
        self.0
    }
}

impl Deref for OrthoStack {
    type Target = BlockStack;

    fn deref(&self) -> &BlockStack {
        &self.0
    }
}

/// Blockwise polar projection `P_n(X)`: block `i` becomes `polar(X_i)`.
pub fn polar_stack(x: &BlockStack) -> Result<OrthoStack> {
    Ok(polar_stack_with_sigma_min(x)?.0)
}

/// [`polar_stack`] that also reports `σ_min` of every input block.
pub fn polar_stack_with_sigma_min(x: &BlockStack) -> Result<(OrthoStack, Vec<f64>)> {
    let mut out = BlockStack::zeros(x.n(), x.d());
    let mut smin = Vec::with_capacity(x.n());
    for i in 0..x.n() {
        let (q, s) = polar_with_singular_values(&x.block(i))?;
        out.set_block(i, &q);
        smin.push(*s.last().unwrap());
    }
    Ok((OrthoStack(out), smin))
}

/// Provenance tag carried by a [`BlockSym`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    Observation,
    Noise,
    /// Leave-one-out observation for the given 1-based block index.
    LeaveOneOut(usize),
    Generic,
}

/// A dense symmetric `nd×nd` matrix partitioned into `d×d` blocks.
///
/// Symmetry is exact: every constructor either mirrors the upper triangle
/// or verifies bit-equality.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSym {
    n: usize,
    d: usize,
    kind: MatrixKind,
    data: Vec<f64>,
}

impl BlockSym {
    pub fn zeros(n: usize, d: usize, kind: MatrixKind) -> Self {
        let m = n * d;
        Self {
            n,
            d,
            kind,
            data: vec![0.0; m * m],
        }
    }

    /// Evaluates `f(r, c)` for `r ≤ c` and mirrors it to the lower triangle.
    pub fn from_upper_fn(
        n: usize,
        d: usize,
        kind: MatrixKind,
        f: impl Fn(usize, usize) -> f64 + Sync,
    ) -> Self {
        let m = n * d;
        let mut data = vec![0.0; m * m];
        data.par_chunks_mut(m).enumerate().for_each(|(r, row)| {
            for (c, x) in row.iter_mut().enumerate() {
                *x = if r <= c { f(r, c) } else { f(c, r) };
            }
        });
        Self { n, d, kind, data }
    }

    /// Wraps row-major entries after checking exact symmetry.
    pub fn from_dense(n: usize, d: usize, kind: MatrixKind, data: Vec<f64>) -> Result<Self> {
        let m = n * d;
        if n == 0 || d == 0 {
            return Err(Error::InvalidInput("matrix needs n >= 1 and d >= 1".into()));
        }
        if data.len() != m * m {
            return Err(Error::ShapeMismatch(format!(
                "{m}x{m} matrix needs {} entries, got {}",
                m * m,
                data.len()
            )));
        }
        for r in 0..m {
            for c in (r + 1)..m {
                if data[r * m + c].to_bits() != data[c * m + r].to_bits() {
                    return Err(Error::InvalidInput(format!(
                        "matrix not symmetric at ({r}, {c})"
                    )));
                }
            }
        }
        Ok(Self { n, d, kind, data })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    /// Side length `n·d`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.n * self.d
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: MatrixKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn entry(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.dim() + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let m = self.dim();
        &self.data[r * m..(r + 1) * m]
    }

    /// Block `(i, j)`, 0-based.
    pub fn block(&self, i: usize, j: usize) -> SmallMatrix {
        let d = self.d;
        SmallMatrix::from_fn(d, |a, b| self.entry(i * d + a, j * d + b))
    }

    /// Adds a symmetric `d×d` matrix to diagonal block `i`.
    pub(crate) fn add_to_diagonal_block(&mut self, i: usize, b: &SmallMatrix) {
        let d = self.d;
        let m = self.dim();
        let b = b.symmetrized();
        for a in 0..d {
            for c in 0..d {
                self.data[(i * d + a) * m + i * d + c] += b.get(a, c);
            }
        }
    }

    pub fn negated(&self) -> Self {
        Self {
            n: self.n,
            d: self.d,
            kind: MatrixKind::Generic,
            data: self.data.iter().map(|x| -x).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    /// `y = M x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let m = self.dim();
        assert_eq!(x.len(), m);
        assert_eq!(y.len(), m);
        if m >= PAR_ROWS {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(r, yr)| *yr = dot(self.row(r), x));
        } else {
            for (r, yr) in y.iter_mut().enumerate() {
                *yr = dot(self.row(r), x);
            }
        }
    }

    /// `M X` for a row-major `nd×k` matrix `X`.
    pub fn mul_dense(&self, x: &[f64], k: usize) -> Vec<f64> {
        let m = self.dim();
        assert_eq!(x.len(), m * k);
        let mut out = vec![0.0; m * k];
        let row_kernel = |r: usize, out_row: &mut [f64]| {
            let a = self.row(r);
            for (c, &arc) in a.iter().enumerate() {
                if arc == 0.0 {
                    continue;
                }
                let xr = &x[c * k..(c + 1) * k];
                for (o, &xv) in out_row.iter_mut().zip(xr) {
                    *o += arc * xv;
                }
            }
        };
        if m >= PAR_ROWS {
            out.par_chunks_mut(k)
                .enumerate()
                .for_each(|(r, o)| row_kernel(r, o));
        } else {
            out.chunks_mut(k)
                .enumerate()
                .for_each(|(r, o)| row_kernel(r, o));
        }
        out
    }

    /// `M S` for a block stack with matching `n`, `d`.
    pub fn mul_stack(&self, s: &BlockStack) -> Result<BlockStack> {
        if s.n() != self.n || s.d() != self.d {
            return Err(Error::ShapeMismatch(format!(
                "matrix with n={}, d={} applied to stack with n={}, d={}",
                self.n,
                self.d,
                s.n(),
                s.d()
            )));
        }
        let data = self.mul_dense(s.as_slice(), self.d);
        Ok(BlockStack {
            n: self.n,
            d: self.d,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polar_stack_of_identities() {
        let z = OrthoStack::identity(4, 3);
        let p = polar_stack(z.as_stack()).unwrap();
        assert_eq!(p, z);
    }

    #[test]
    fn polar_stack_removes_positive_scaling() {
        let r = SmallMatrix::from_rows(&[&[0.6, -0.8], &[0.8, 0.6]]);
        let f = SmallMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let blocks = vec![
            r.scale(3.0),
            f.scale(0.25),
            SmallMatrix::identity(2).scale(7.0),
        ];
        let p = polar_stack(&BlockStack::from_blocks(&blocks).unwrap()).unwrap();
        assert!(p.block(0).sub(&r).frobenius_norm() < 1e-14);
        assert!(p.block(1).sub(&f).frobenius_norm() < 1e-14);
        assert!(p.block(2).sub(&SmallMatrix::identity(2)).frobenius_norm() < 1e-14);
    }

    #[test]
    fn ortho_stack_rejects_non_orthogonal() {
        let s = BlockStack::from_blocks(&[SmallMatrix::identity(2).scale(2.0)]).unwrap();
        assert!(OrthoStack::new(s).is_err());
    }

    #[test]
    fn from_dense_requires_exact_symmetry() {
        let ok = BlockSym::from_dense(1, 2, MatrixKind::Generic, vec![1.0, 2.0, 2.0, 3.0]);
        assert!(ok.is_ok());
        let bad = BlockSym::from_dense(
            1,
            2,
            MatrixKind::Generic,
            vec![1.0, 2.0, 2.0 + 1e-16 * 4.0, 3.0],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn mul_stack_matches_direct_loop() {
        let a = BlockSym::from_upper_fn(3, 2, MatrixKind::Generic, |r, c| {
            (r * 7 + c * 3) as f64 - 4.5
        });
        let s = BlockStack::from_vec(3, 2, (0..12).map(|x| (x as f64).sin()).collect()).unwrap();
        let got = a.mul_stack(&s).unwrap();
        for r in 0..6 {
            for c in 0..2 {
                let want: f64 = (0..6).map(|k| a.entry(r, k) * s.get(k, c)).sum();
                assert!((got.get(r, c) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mul_stack_shape_mismatch() {
        let a = BlockSym::zeros(3, 2, MatrixKind::Generic);
        let s = BlockStack::zeros(2, 2);
        assert!(matches!(a.mul_stack(&s), Err(Error::ShapeMismatch(_))));
    }
}
