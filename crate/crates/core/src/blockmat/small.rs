//! Small square matrices (`d ≤ 16` is the intended range) and their
//! factorizations: one-sided Jacobi SVD, polar factor, Jacobi eigensolver.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_JACOBI_SWEEPS: usize = 80;

/// A dense `d×d` matrix stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallMatrix {
    d: usize,
    data: Vec<f64>,
}

impl fmt::Debug for SmallMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SmallMatrix({}x{})", self.d, self.d)?;
        for i in 0..self.d {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        Ok(())
    }
}

impl SmallMatrix {
    /// Builds a matrix from row-major entries, rejecting non-finite values.
    pub fn new(d: usize, data: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidInput("matrix dimension must be >= 1".into()));
        }
        if data.len() != d * d {
            return Err(Error::ShapeMismatch(format!(
                "expected {} entries for a {d}x{d} matrix, got {}",
                d * d,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        Ok(Self { d, data })
    }

    /// Builds from rows; panics on ragged input. Intended for literals.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let d = rows.len();
        let mut data = Vec::with_capacity(d * d);
        for r in rows {
            assert_eq!(r.len(), d, "rows must all have length {d}");
            data.extend_from_slice(r);
        }
        Self { d, data }
    }

    pub(crate) fn from_vec_unchecked(d: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), d * d);
        Self { d, data }
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            d,
            data: vec![0.0; d * d],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            m.data[i * d + i] = 1.0;
        }
        m
    }

    pub fn from_fn(d: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                data.push(f(i, j));
            }
        }
        Self { d, data }
    }

    pub fn diag(values: &[f64]) -> Self {
        let d = values.len();
        Self::from_fn(d, |i, j| if i == j { values[i] } else { 0.0 })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.d + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.d, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.d, other.d);
        let d = self.d;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..d {
                    out[i * d + j] += a * other.data[k * d + j];
                }
            }
        }
        Self { d, data: out }
    }

    /// `selfᵀ · other`.
    pub fn tr_matmul(&self, other: &Self) -> Self {
        self.transpose().matmul(other)
    }

    /// `self · otherᵀ`.
    pub fn matmul_tr(&self, other: &Self) -> Self {
        self.matmul(&other.transpose())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.d, other.d);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Self { d: self.d, data }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.d, other.d);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Self { d: self.d, data }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            d: self.d,
            data: self.data.iter().map(|a| a * c).collect(),
        }
    }

    /// Frobenius inner product `⟨self, other⟩ = tr(selfᵀ other)`.
    pub fn inner(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// `(self + selfᵀ) / 2`, exactly symmetric.
    pub fn symmetrized(&self) -> Self {
        let d = self.d;
        let mut out = self.clone();
        for i in 0..d {
            for j in (i + 1)..d {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        out
    }

    /// `‖selfᵀ self − I‖_F`.
    pub fn orthogonality_defect(&self) -> f64 {
        self.tr_matmul(self)
            .sub(&Self::identity(self.d))
            .frobenius_norm()
    }

    pub fn determinant(&self) -> f64 {
        // Gaussian elimination with partial pivoting on a copy.
        let d = self.d;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for k in 0..d {
            let p = (k..d)
                .max_by(|&x, &y| a[x * d + k].abs().total_cmp(&a[y * d + k].abs()))
                .unwrap();
            if a[p * d + k] == 0.0 {
                return 0.0;
            }
            if p != k {
                for j in 0..d {
                    a.swap(k * d + j, p * d + j);
                }
                det = -det;
            }
            let piv = a[k * d + k];
            det *= piv;
            for i in (k + 1)..d {
                let f = a[i * d + k] / piv;
                for j in k..d {
                    a[i * d + j] -= f * a[k * d + j];
                }
            }
        }
        det
    }
}

/// Singular value decomposition `M = U diag(S) Vᵀ` of a small square matrix.
#[derive(Clone, Debug)]
pub struct SmallSvd {
    pub u: SmallMatrix,
    pub s: Vec<f64>,
    pub v: SmallMatrix,
}

impl SmallSvd {
    pub fn reconstruct(&self) -> SmallMatrix {
        let d = self.u.dim();
        let us = SmallMatrix::from_fn(d, |i, j| self.u.get(i, j) * self.s[j]);
        us.matmul_tr(&self.v)
    }

    pub fn sigma_min(&self) -> f64 {
        *self.s.last().unwrap()
    }

    pub fn nuclear_norm(&self) -> f64 {
        self.s.iter().sum()
    }
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Singular values are sorted descending. Each left singular vector is
/// signed so that its largest-magnitude entry is positive (lowest row index
/// wins ties) and the matching right singular vector is flipped with it.
/// Left singular vectors for zero singular values are completed from the
/// canonical basis by Gram–Schmidt.
pub fn svd_small(m: &SmallMatrix) -> Result<SmallSvd> {
    if !m.is_finite() {
        return Err(Error::InvalidInput(
            "svd input has non-finite entries".into(),
        ));
    }
    let d = m.dim();
    // Column-major working copies: b[j] is column j of M·V.
    let mut b: Vec<Vec<f64>> = (0..d)
        .map(|j| (0..d).map(|i| m.get(i, j)).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..d)
        .map(|j| (0..d).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..d {
            for q in (p + 1)..d {
                let alpha = dot(&b[p], &b[p]);
                let beta = dot(&b[q], &b[q]);
                let gamma = dot(&b[p], &b[q]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut b, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = b.iter().map(|col| dot(col, col).sqrt()).collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));

    let s_max = norms[order[0]];
    let null_floor = s_max * f64::EPSILON * d as f64;
    let mut s = Vec::with_capacity(d);
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut v_cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    for &j in &order {
        let sj = norms[j];
        v_cols.push(v[j].clone());
        if sj > null_floor && sj > 0.0 {
            s.push(sj);
            u_cols.push(b[j].iter().map(|x| x / sj).collect());
        } else {
            s.push(if sj > 0.0 { sj } else { 0.0 });
            u_cols.push(Vec::new());
        }
    }
    complete_orthonormal(&mut u_cols, d);

    for j in 0..d {
        let col = &u_cols[j];
        let mut best = 0;
        for i in 1..d {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            u_cols[j].iter_mut().for_each(|x| *x = -*x);
            v_cols[j].iter_mut().for_each(|x| *x = -*x);
        }
    }

    let u = SmallMatrix::from_fn(d, |i, j| u_cols[j][i]);
    let v = SmallMatrix::from_fn(d, |i, j| v_cols[j][i]);
    Ok(SmallSvd { u, s, v })
}

/// Fills empty columns with orthonormal vectors and re-orthonormalizes the
/// rest with one modified Gram–Schmidt pass in the given order.
fn complete_orthonormal(cols: &mut [Vec<f64>], d: usize) {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut pending = Vec::new();
    for (j, col) in cols.iter_mut().enumerate() {
        if col.is_empty() {
            pending.push(j);
            continue;
        }
        for q in &basis {
            let c = dot(col, q);
            col.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
        let nrm = dot(col, col).sqrt();
        col.iter_mut().for_each(|x| *x /= nrm);
        basis.push(col.clone());
    }
    let mut e = 0;
    for j in pending {
        loop {
            assert!(e < d, "failed to complete orthonormal basis");
            let mut cand: Vec<f64> = (0..d).map(|i| if i == e { 1.0 } else { 0.0 }).collect();
            e += 1;
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(&cand, q);
                    cand.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
                }
            }
            let nrm = dot(&cand, &cand).sqrt();
            if nrm > 0.5 / (d as f64).sqrt() {
                cand.iter_mut().for_each(|x| *x /= nrm);
                basis.push(cand.clone());
                cols[j] = cand;
                break;
            }
        }
    }
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let cp = &mut lo[p];
    let cq = &mut hi[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let a = *x;
        let b = *y;
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The orthogonal polar factor `U Vᵀ`, i.e. the orthogonal matrix nearest
/// to `m` in Frobenius norm.
///
/// For singular `m` the factor is not unique; the SVD sign convention of
/// [`svd_small`] picks one.
pub fn polar(m: &SmallMatrix) -> Result<SmallMatrix> {
    let svd = svd_small(m)?;
    Ok(svd.u.matmul_tr(&svd.v))
}

/// Polar factor together with the singular values of the input.
pub(crate) fn polar_with_singular_values(m: &SmallMatrix) -> Result<(SmallMatrix, Vec<f64>)> {
    let svd = svd_small(m)?;
    Ok((svd.u.matmul_tr(&svd.v), svd.s))
}

/// Symmetric PSD square root of `m mᵀ`, i.e. `U Σ Uᵀ`.
pub fn left_psd_factor(m: &SmallMatrix) -> Result<SmallMatrix> {
    let svd = svd_small(m)?;
    let d = m.dim();
    let us = SmallMatrix::from_fn(d, |i, j| svd.u.get(i, j) * svd.s[j]);
    Ok(us.matmul_tr(&svd.u).symmetrized())
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the eigenvectors as columns.
/// Only the upper triangle is read.
pub fn sym_eig(m: &SmallMatrix) -> (Vec<f64>, SmallMatrix) {
    let d = m.dim();
    let mut a = m.symmetrized();
    let mut v = SmallMatrix::identity(d);
    for _ in 0..MAX_JACOBI_SWEEPS {
        let off: f64 = (0..d)
            .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j).powi(2))
            .sum();
        let total: f64 = a.data.iter().map(|x| x * x).sum();
        if off <= (f64::EPSILON * f64::EPSILON) * total || off == 0.0 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..d {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..d {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| a.get(y, y).total_cmp(&a.get(x, x)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let vectors = SmallMatrix::from_fn(d, |i, j| v.get(i, order[j]));
    (values, vectors)
}
