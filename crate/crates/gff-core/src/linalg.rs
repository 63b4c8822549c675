//! Linear algebra kernels: sine transforms on boxes, banded Cholesky for
//! masked precision matrices, conjugate gradients and small dense helpers.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked in
use num_traits::Float;

use crate::error::{Error, Result};

/// Orthonormal type-I sine transform matrix of size `side` (symmetric and
/// its own inverse).
pub fn dst_matrix(side: usize) -> Vec<f64> {
    let scale = (2.0 / (side as f64 + 1.0)).sqrt();
    let w = core::f64::consts::PI / (side as f64 + 1.0);
    let mut m = vec![0.0; side * side];
    for j in 0..side {
        for k in 0..side {
            // Reduce the product modulo 2(side+1) to keep the argument small.
            let p = ((j + 1) * (k + 1)) % (2 * (side + 1));
            m[j * side + k] = scale * (w * p as f64).sin();
        }
    }
    m
}

/// Apply the `side × side` matrix `mat` along `axis` of a `d`-dimensional
/// row-major array with `side` entries per axis.
pub fn apply_along_axis(
    data: &mut [f64],
    d: usize,
    side: usize,
    axis: usize,
    mat: &[f64],
    scratch: &mut Vec<f64>,
) {
    let inner = side.pow((d - 1 - axis) as u32);
    let outer = data.len() / (side * inner);
    scratch.clear();
    scratch.resize(side * inner, 0.0);
    for o in 0..outer {
        let block = &mut data[o * side * inner..(o + 1) * side * inner];
        if inner == 1 {
            for j in 0..side {
                let row = &mat[j * side..(j + 1) * side];
                scratch[j] = row.iter().zip(block.iter()).map(|(a, b)| a * b).sum();
            }
        } else {
            scratch.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..side {
                let out = &mut scratch[j * inner..(j + 1) * inner];
                for k in 0..side {
                    let m = mat[j * side + k];
                    let src = &block[k * inner..(k + 1) * inner];
                    out.iter_mut().zip(src).for_each(|(a, b)| *a += m * b);
                }
            }
        }
        block.copy_from_slice(&scratch[..side * inner]);
    }
}

/// Eigen-decomposition of `g(-Δ) + m²` on a box with zero boundary values.
#[derive(Debug, Clone)]
pub struct SineBasis {
    pub d: usize,
    pub side: usize,
    pub mat: Vec<f64>,
    /// One-dimensional Laplacian eigenvalues `2 - 2cos(π j/(side+1))`.
    pub eig1d: Vec<f64>,
    pub g: f64,
    pub m2: f64,
}

impl SineBasis {
    pub fn new(d: usize, side: usize, g: f64, m2: f64) -> Self {
        let w = core::f64::consts::PI / (side as f64 + 1.0);
        let eig1d = (1..=side)
            .map(|j| 2.0 - 2.0 * (w * j as f64).cos())
            .collect();
        SineBasis {
            d,
            side,
            mat: dst_matrix(side),
            eig1d,
            g,
            m2,
        }
    }

    pub fn len(&self) -> usize {
        self.side.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.side == 0
    }

    /// Eigenvalue of mode with flat multi-index `t`.
    #[inline]
    pub fn eigenvalue(&self, mut t: usize) -> f64 {
        let mut s = 0.0;
        for _ in 0..self.d {
            s += self.eig1d[t % self.side];
            t /= self.side;
        }
        self.g * s + self.m2
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        (0..self.len()).map(|t| self.eigenvalue(t)).collect()
    }

    /// In-place transform to or from the eigenbasis (it is an involution).
    pub fn transform(&self, data: &mut [f64], scratch: &mut Vec<f64>) {
        for axis in 0..self.d {
            apply_along_axis(data, self.d, self.side, axis, &self.mat, scratch);
        }
    }

    /// Apply `(g(-Δ) + m²)^{-p}` with `p = 1` (`power = 1.0`) or `p = 1/2`.
    pub fn apply_inverse_power(&self, data: &mut [f64], power: f64, scratch: &mut Vec<f64>) {
        self.transform(data, scratch);
        for (t, v) in data.iter_mut().enumerate() {
            *v *= self.eigenvalue(t).powf(-power);
        }
        self.transform(data, scratch);
    }

    /// Value of the normalised eigenvector with flat multi-index `t` at site `i`.
    pub fn mode_value(&self, t: usize, i: usize) -> f64 {
        let mut v = 1.0;
        let (mut t, mut i) = (t, i);
        for _ in 0..self.d {
            v *= self.mat[(t % self.side) * self.side + i % self.side];
            t /= self.side;
            i /= self.side;
        }
        v
    }

    /// Green function entry: spectral sum over the first `d - 1` axes, with the
    /// last axis handled by the closed-form inverse of a tridiagonal matrix.
    pub fn green(&self, x: usize, y: usize) -> f64 {
        let side = self.side;
        let mut cx = [0usize; 3];
        let mut cy = [0usize; 3];
        let (mut a, mut b) = (x, y);
        for k in (0..self.d).rev() {
            cx[k] = a % side;
            cy[k] = b % side;
            a /= side;
            b /= side;
        }
        let last = self.d - 1;
        let prods: Vec<Vec<f64>> = (0..last)
            .map(|k| {
                (0..side)
                    .map(|j| self.mat[j * side + cx[k]] * self.mat[j * side + cy[k]])
                    .collect()
            })
            .collect();
        let (lo, hi) = (cx[last].min(cy[last]) + 1, cx[last].max(cy[last]) + 1);
        let mut total = 0.0;
        for t in 0..side.pow(last as u32) {
            let mut r = t;
            let mut w = 1.0;
            let mut lam = 0.0;
            for p in prods.iter().rev() {
                let j = r % side;
                r /= side;
                w *= p[j];
                lam += self.eig1d[j];
            }
            total += w * tridiagonal_inverse(side, 2.0 + (self.g * lam + self.m2) / self.g, lo, hi)
                / self.g;
        }
        total
    }

    /// Green function entry by the full sum over modes (slow; reference only).
    pub fn green_by_modes(&self, x: usize, y: usize) -> f64 {
        (0..self.len())
            .map(|t| self.mode_value(t, x) * self.mode_value(t, y) / self.eigenvalue(t))
            .sum()
    }
}

/// Entry `(lo, hi)` (1-based, `lo <= hi`) of the inverse of the `len × len`
/// tridiagonal matrix with `c` on the diagonal and `-1` off it, for `c > 2`.
fn tridiagonal_inverse(len: usize, c: f64, lo: usize, hi: usize) -> f64 {
    if c <= 2.0 {
        return (lo * (len + 1 - hi)) as f64 / (len + 1) as f64;
    }
    let theta = (0.5 * c).acosh();
    let one_minus = |x: f64| -(-2.0 * x * theta).exp_m1();
    let num = (-((hi - lo) as f64) * theta).exp()
        * one_minus(lo as f64)
        * one_minus((len + 1 - hi) as f64);
    num / (2.0 * theta.sinh() * one_minus((len + 1) as f64))
}

/// Cholesky factor of a symmetric positive definite banded matrix.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    // Row i stores L[i][i-bw ..= i] at offsets 0..=bw (offset bw is the diagonal).
    l: Vec<f64>,
}

impl BandedCholesky {
    /// `entry(i, j)` must return `A[i][j]` for `j <= i`, `i - j <= bw`.
    pub fn factor<F: Fn(usize, usize) -> f64>(n: usize, bw: usize, entry: F) -> Result<Self> {
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = entry(i, j);
                let ri = i * w + bw - i;
                let rj = j * w + bw - j;
                for k in k0..j {
                    s -= l[ri + k] * l[rj + k];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::Numeric {
                            what: "matrix not positive definite".into(),
                            residual: s,
                        });
                    }
                    l[ri + i] = s.sqrt();
                } else {
                    l[ri + j] = s / l[rj + j];
                }
            }
        }
        Ok(BandedCholesky { n, bw, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * (self.bw + 1) + self.bw + j - i]
    }

    /// Solve `L y = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            let mut s = b[i];
            for j in j0..i {
                s -= self.at(i, j) * b[j];
            }
            b[i] = s / self.at(i, i);
        }
    }

    /// Solve `Lᵀ x = y` in place.
    pub fn backward(&self, y: &mut [f64]) {
        for i in (0..self.n).rev() {
            let v = y[i] / self.at(i, i);
            y[i] = v;
            let j0 = i.saturating_sub(self.bw);
            for j in j0..i {
                y[j] -= self.at(i, j) * v;
            }
        }
    }

    /// Solve `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        self.forward(b);
        self.backward(b);
    }
}

/// Preconditioned conjugate gradients for a symmetric positive definite
/// operator. Returns the number of iterations and final relative residual.
pub fn conjugate_gradient<A, P>(
    mut apply: A,
    mut precond: P,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<(usize, f64)>
where
    A: FnMut(&[f64], &mut [f64]),
    P: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm(b).max(f64::MIN_POSITIVE);
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = norm(&r) / bnorm;
    for it in 0..max_iter {
        if rel <= rel_tol {
            return Ok((it, rel));
        }
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm(&r) / bnorm;
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if rel <= rel_tol {
        Ok((max_iter, rel))
    } else {
        Err(Error::Numeric {
            what: "conjugate gradients did not converge".into(),
            residual: rel,
        })
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Dense Cholesky of a row-major SPD matrix; returns the lower factor.
pub fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    BandedCholesky::factor(n, n.saturating_sub(1), |i, j| a[i * n + j]).map(|f| {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                l[i * n + j] = f.at(i, j);
            }
        }
        l
    })
}

/// Solve a dense SPD system.
pub fn solve_spd(a: &[f64], n: usize, b: &[f64]) -> Result<Vec<f64>> {
    let f = BandedCholesky::factor(n, n.saturating_sub(1), |i, j| a[i * n + j])?;
    let mut x = b.to_vec();
    f.solve(&mut x);
    Ok(x)
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn power_iteration(a: &[f64], n: usize, tol: f64, max_iter: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut w = vec![0.0; n];
    let mut lam = 0.0;
    for _ in 0..max_iter {
        for i in 0..n {
            w[i] = dot(&a[i * n..(i + 1) * n], &v);
        }
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        let new = dot(&v, &w);
        for i in 0..n {
            v[i] = w[i] / nw;
        }
        if (new - lam).abs() <= tol * new.abs() {
            return new;
        }
        lam = new;
    }
    lam
}
