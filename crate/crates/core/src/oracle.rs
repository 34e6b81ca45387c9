//! Slow, independent reference computations used to verify the fast paths.
//!
//! Nothing here calls into the iterative solvers of [`crate::blockmat`];
//! each routine works on plain dense arrays.

use std::f64::consts::TAU;

/// All eigenvalues (ascending) of a dense symmetric `m×m` row-major matrix,
/// by classical cyclic Jacobi iteration run until the off-diagonal mass
/// underflows relative to the diagonal.
pub fn dense_eigenvalues(a: &[f64], m: usize) -> Vec<f64> {
    dense_eigen(a, m).0
}

/// Eigenvalues (ascending) and row-major eigenvector matrix (columns).
pub fn dense_eigen(a: &[f64], m: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), m * m);
    let mut a: Vec<f64> = (0..m * m)
        .map(|k| {
            let (i, j) = (k / m, k % m);
            0.5 * (a[i * m + j] + a[j * m + i])
        })
        .collect();
    let mut v = vec![0.0; m * m];
    for i in 0..m {
        v[i * m + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    off += a[i * m + j] * a[i * m + j];
                }
            }
        }
        if off == 0.0 {
            break;
        }
        let diag: f64 = (0..m).map(|i| a[i * m + i] * a[i * m + i]).sum();
        if off < 1e-34 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = a[p * m + q];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                // Rutishauser's formulation of the rotation.
                let tau = (a[q * m + q] - a[p * m + p]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..m {
                    let akp = a[k * m + p];
                    let akq = a[k * m + q];
                    a[k * m + p] = c * akp - s * akq;
                    a[k * m + q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[p * m + k];
                    let aqk = a[q * m + k];
                    a[p * m + k] = c * apk - s * aqk;
                    a[q * m + k] = s * apk + c * aqk;
                }
                for k in 0..m {
                    let vkp = v[k * m + p];
                    let vkq = v[k * m + q];
                    v[k * m + p] = c * vkp - s * vkq;
                    v[k * m + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| a[x * m + x].total_cmp(&a[y * m + y]));
    let vals = order.iter().map(|&i| a[i * m + i]).collect();
    let mut vecs = vec![0.0; m * m];
    for (newj, &j) in order.iter().enumerate() {
        for i in 0..m {
            vecs[i * m + newj] = v[i * m + j];
        }
    }
    (vals, vecs)
}

/// Orthonormal basis (columns, each of length `m`) of the orthogonal
/// complement of the span of `cols`, by Gram–Schmidt on `cols` followed by
/// the canonical basis vectors.
pub fn complement_basis(cols: &[Vec<f64>], m: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let push = |mut v: Vec<f64>, basis: &mut Vec<Vec<f64>>| -> bool {
        let before = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for _ in 0..2 {
            for q in basis.iter() {
                let c: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let after = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if after > 1e-8 * before.max(1e-300) && after > 0.0 {
            v.iter_mut().for_each(|x| *x /= after);
            basis.push(v);
            true
        } else {
            false
        }
    };
    for c in cols {
        push(c.clone(), &mut basis);
    }
    let k = basis.len();
    for e in 0..m {
        let mut v = vec![0.0; m];
        v[e] = 1.0;
        push(v, &mut basis);
    }
    basis.split_off(k)
}

/// Eigenvalues (ascending) of `Bᵀ M B` where `B` spans the orthogonal
/// complement of `cols`.
pub fn projected_eigenvalues(mat: &[f64], m: usize, cols: &[Vec<f64>]) -> Vec<f64> {
    let b = complement_basis(cols, m);
    let k = b.len();
    let mb: Vec<Vec<f64>> = b
        .iter()
        .map(|v| {
            (0..m)
                .map(|r| (0..m).map(|c| mat[r * m + c] * v[c]).sum())
                .collect()
        })
        .collect();
    let mut h = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            h[i * k + j] = b[i].iter().zip(&mb[j]).map(|(x, y)| x * y).sum();
        }
    }
    dense_eigenvalues(&h, k)
}

/// Singular values (descending), `U` and `V` (row-major, columns are the
/// singular vectors) of a square matrix, from the Jacobi eigendecomposition
/// of `MᵀM`. Accurate when the matrix is well conditioned.
pub fn svd_via_gram(a: &[f64], d: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut g = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            g[i * d + j] = (0..d).map(|k| a[k * d + i] * a[k * d + j]).sum();
        }
    }
    let (vals, vecs) = dense_eigen(&g, d);
    let order: Vec<usize> = (0..d).rev().collect();
    let s: Vec<f64> = order.iter().map(|&j| vals[j].max(0.0).sqrt()).collect();
    let mut v = vec![0.0; d * d];
    let mut u = vec![0.0; d * d];
    for (newj, &j) in order.iter().enumerate() {
        for i in 0..d {
            v[i * d + newj] = vecs[i * d + j];
        }
        for i in 0..d {
            let av: f64 = (0..d).map(|k| a[i * d + k] * vecs[k * d + j]).sum();
            u[i * d + newj] = av / s[newj];
        }
    }
    (s, u, v)
}

/// Best `2×2` orthogonal matrix for `‖Q − X‖_F` over a grid of `samples`
/// rotations and the same number of reflections. Returns the row-major
/// matrix and the attained distance.
pub fn polar_grid_2x2(x: &[f64; 4], samples: usize) -> ([f64; 4], f64) {
    let mut best = ([1.0, 0.0, 0.0, 1.0], f64::INFINITY);
    for k in 0..samples {
        let th = TAU * k as f64 / samples as f64;
        let (s, c) = th.sin_cos();
        for q in [[c, -s, s, c], [c, s, s, -c]] {
            let dist = q
                .iter()
                .zip(x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dist < best.1 {
                best = (q, dist);
            }
        }
    }
    best
}

/// Best alignment cost `min_Q ‖Y − X Q‖_F` for `d = 2` stacks over the same
/// grid as [`polar_grid_2x2`]. Stacks are row-major `2n×2`.
pub fn alignment_grid_2d(x: &[f64], y: &[f64], samples: usize) -> f64 {
    let rows = x.len() / 2;
    let mut best = f64::INFINITY;
    for k in 0..samples {
        let th = TAU * k as f64 / samples as f64;
        let (s, c) = th.sin_cos();
        for q in [[c, -s, s, c], [c, s, s, -c]] {
            let mut cost = 0.0;
            for r in 0..rows {
                let x0 = x[2 * r];
                let x1 = x[2 * r + 1];
                let e0 = y[2 * r] - (x0 * q[0] + x1 * q[2]);
                let e1 = y[2 * r + 1] - (x0 * q[1] + x1 * q[3]);
                cost += e0 * e0 + e1 * e1;
            }
            best = best.min(cost.sqrt());
        }
    }
    best
}

/// `max_{s ∈ {±1}ⁿ} sᵀ A s` by enumeration, for a dense `n×n` matrix.
/// Returns the maximum and one maximizer with `s_0 = +1`.
pub fn max_over_signs(a: &[f64], n: usize) -> (f64, Vec<f64>) {
    assert!((1..=24).contains(&n), "enumeration limited to n <= 24");
    let mut best = (f64::NEG_INFINITY, vec![1.0; n]);
    // s_0 fixed to +1: the objective is invariant under global sign flip.
    for mask in 0u64..(1u64 << (n - 1)) {
        let s: Vec<f64> = (0..n)
            .map(|i| {
                if i > 0 && (mask >> (i - 1)) & 1 == 1 {
                    -1.0
                } else {
                    1.0
                }
            })
            .collect();
        let mut v = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += a[i * n + j] * s[j];
            }
            v += s[i] * row;
        }
        if v > best.0 {
            best = (v, s);
        }
    }
    best
}
