//! Sparse and dense linear algebra used by the device and network solvers.
//!
//! The device matrices come from five-point stencils on a row-major grid, so a
//! banded LU with half-bandwidth `nx` is an exact direct solver. Every matrix we
//! factor is an M-matrix with a positive, column-dominant diagonal, which keeps
//! elimination without pivoting stable.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::math;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a square matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < n && c < n);
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            cols.push(c);
            vals.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            *yi = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Largest `|a_ij - a_ji|` over the stored pattern.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// `(lower, upper)` half-bandwidths.
    pub fn bandwidth(&self) -> (usize, usize) {
        let mut lo = 0;
        let mut up = 0;
        for i in 0..self.n {
            for (j, _) in self.row(i) {
                if j < i {
                    lo = lo.max(i - j);
                } else {
                    up = up.max(j - i);
                }
            }
        }
        (lo, up)
    }

    /// `self + diag(d)`.
    pub fn with_added_diagonal(&self, d: &[f64]) -> Self {
        let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(self.vals.len() + self.n);
        for i in 0..self.n {
            triplets.extend(self.row(i).map(|(j, v)| (i, j, v)));
            triplets.push((i, i, d[i]));
        }
        Self::from_triplets(self.n, triplets)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[(i, j)] += v;
            }
        }
        d
    }
}

/// LU factors of a banded matrix, computed without pivoting.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    lower: usize,
    upper: usize,
    // row-major band storage, entry (i, j) at i * width + (j + lower - i)
    band: Vec<f64>,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let (lower, upper) = a.bandwidth();
        let width = lower + upper + 1;
        let mut band = vec![0.0; n * width];
        for i in 0..n {
            for (j, v) in a.row(i) {
                band[i * width + j + lower - i] += v;
            }
        }
        for k in 0..n {
            let pivot = band[k * width + lower];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::ZeroPivot(k));
            }
            let last_row = (k + lower).min(n - 1);
            let last_col = (k + upper).min(n - 1);
            for i in k + 1..=last_row {
                let ik = i * width + k + lower - i;
                let l = band[ik] / pivot;
                band[ik] = l;
                if l == 0.0 {
                    continue;
                }
                // row k lies entirely before row i in the band storage
                let (top, rest) = band.split_at_mut(i * width);
                let row_k = k * width + lower - k;
                let src = &top[row_k + k + 1..=row_k + last_col];
                let dst = &mut rest[lower + k + 1 - i..=lower + last_col - i];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d -= l * s;
                }
            }
        }
        Ok(Self {
            n,
            lower,
            upper,
            band,
        })
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, lower, upper) = (self.n, self.lower, self.upper);
        let width = lower + upper + 1;
        for i in 0..n {
            let first = i.saturating_sub(lower);
            let row = i * width + lower - i;
            let mut s = x[i];
            for j in first..i {
                s -= self.band[row + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let last = (i + upper).min(n - 1);
            let row = i * width + lower - i;
            let mut s = x[i];
            for j in i + 1..=last {
                s -= self.band[row + j] * x[j];
            }
            x[i] = s / self.band[row + i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Anderson acceleration of a fixed-point iteration `x = G(x)`, keeping the
/// last `depth` differences.
#[derive(Debug, Clone)]
pub struct Anderson {
    depth: usize,
    g_hist: Vec<Vec<f64>>,
    // residuals G(x) - x
    f_hist: Vec<Vec<f64>>,
}

impl Anderson {
    pub fn new(depth: usize) -> Self {
        Self {
            depth,
            g_hist: Vec::new(),
            f_hist: Vec::new(),
        }
    }

    /// Next iterate from the current `x` and `g = G(x)`.
    pub fn next(&mut self, x: &[f64], g: &[f64]) -> Vec<f64> {
        self.f_hist.push(g.iter().zip(x).map(|(a, b)| a - b).collect());
        self.g_hist.push(g.to_vec());
        if self.f_hist.len() > self.depth + 1 {
            self.f_hist.remove(0);
            self.g_hist.remove(0);
        }
        let m = self.f_hist.len() - 1;
        if m == 0 {
            return g.to_vec();
        }
        let (f, gh) = (&self.f_hist, &self.g_hist);
        let df = DMatrix::from_fn(x.len(), m, |r, c| f[c + 1][r] - f[c][r]);
        let svd = df.svd(true, true);
        let cutoff = 1e-10 * svd.singular_values.max();
        let Ok(gamma) = svd.solve(&DVector::from_column_slice(&f[m]), cutoff) else {
            return g.to_vec();
        };
        let mut next = g.to_vec();
        for (c, w) in gamma.iter().enumerate() {
            for (r, v) in next.iter_mut().enumerate() {
                *v -= w * (gh[c + 1][r] - gh[c][r]);
            }
        }
        next
    }
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite
/// systems. Stops when `|r| <= rel_tol * |b|`.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = a.dim();
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let b_norm = norm2(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        a.matvec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let res = norm2(&r);
        if res <= rel_tol * b_norm {
            return Ok(x);
        }
        if it + 1 == max_iter {
            return Err(Error::NotConverged {
                iterations: max_iter,
                residual: res / b_norm,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual: norm2(&r) / b_norm,
    })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    math::sqrt(dot(a, a))
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Relative threshold below which a singular value counts as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Orthonormal basis (as columns) of the right kernel of `b`.
///
/// Singular values `<= RANK_TOL * sigma_max` are treated as zero; a zero matrix
/// has the whole space as its kernel.
pub fn null_space(b: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = b.shape();
    if cols == 0 {
        return DMatrix::zeros(0, 0);
    }
    // pad with zero rows so the SVD returns a full V
    let mut sq = DMatrix::zeros(rows.max(cols), cols);
    sq.view_mut((0, 0), (rows, cols)).copy_from(b);
    let svd = sq.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sigma_max = svd.singular_values.iter().fold(0.0f64, |m, s| m.max(*s));
    let cut = RANK_TOL * sigma_max;
    let kernel: Vec<usize> = (0..cols)
        .filter(|&i| sigma_max == 0.0 || svd.singular_values[i] <= cut)
        .collect();
    let mut basis = DMatrix::zeros(cols, kernel.len());
    for (k, &i) in kernel.iter().enumerate() {
        basis.set_column(k, &v_t.row(i).transpose());
    }
    basis
}

/// Numerical rank with the same threshold as [`null_space`].
pub fn rank(b: &DMatrix<f64>) -> usize {
    b.ncols() - null_space(b).ncols()
}

/// Orthogonal projector `N N^T` onto the kernel of `b`.
pub fn kernel_projector(b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = null_space(b);
    if n.ncols() == 0 {
        return DMatrix::zeros(b.ncols(), b.ncols());
    }
    &n * n.transpose()
}

/// Ratio of largest to smallest singular value (infinite if singular at
/// [`RANK_TOL`]).
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let s = a.clone().svd(false, false).singular_values;
    let max = s.iter().fold(0.0f64, |m, v| m.max(*v));
    let min = s.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if max == 0.0 || min <= RANK_TOL * max {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn max_norm_mat(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn max_norm_vec(a: &DVector<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
