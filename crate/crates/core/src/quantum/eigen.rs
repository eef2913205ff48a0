//! Symmetric and Hermitian eigen-decompositions.
//!
//! Real symmetric matrices go through Householder tridiagonalization followed
//! by the implicit QL algorithm. A Hermitian `H = X + iY` is handled through
//! its real symmetric embedding `[[X, -Y], [Y, X]]`, whose spectrum is the
//! spectrum of `H` with every eigenvalue doubled.

use alloc::vec;
use alloc::vec::Vec;

use crate::quantum::Operator;
use crate::{Error, Result, C64};

/// Eigenvalues in ascending order with matching eigenvectors stored as the
/// columns of a row-major `n x n` matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

impl SymmetricEigen {
    /// `V f(Λ) V^T`, row-major.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let n = self.values.len();
        let fl: Vec<f64> = self.values.iter().map(|&x| f(x)).collect();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += self.vectors[i * n + k] * fl[k] * self.vectors[j * n + k];
                }
                out[i * n + j] = acc;
                out[j * n + i] = acc;
            }
        }
        out
    }
}

/// Eigen-decomposition of the symmetric row-major matrix `a` (only symmetry
/// is assumed; the lower triangle is what gets read).
pub fn symmetric_eigen(n: usize, a: &[f64]) -> SymmetricEigen {
    assert_eq!(a.len(), n * n, "matrix has wrong size");
    if n == 0 {
        return SymmetricEigen { values: Vec::new(), vectors: Vec::new() };
    }
    let mut v = a.to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut v, &mut d, &mut e);
    tql2(n, &mut v, &mut d, &mut e);
    SymmetricEigen { values: d, vectors: v }
}

fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let idx = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
                v[idx(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let f = d[i - 1];
            let mut g = libm::sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for j in 0..i {
                e[j] = 0.0;
            }
            for j in 0..i {
                let f = d[j];
                v[idx(j, i)] = f;
                let mut g = e[j] + v[idx(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[idx(k, j)] * d[k];
                    e[k] += v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                for k in j..i {
                    v[idx(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    v[idx(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = 0.0;
    }
    v[idx(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

fn tql2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let idx = |i: usize, j: usize| i * n + j;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = libm::hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = libm::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let hk = v[idx(k, i + 1)];
                        v[idx(k, i + 1)] = s * v[idx(k, i)] + c * hk;
                        v[idx(k, i)] = c * v[idx(k, i)] - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 || iter > 200 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for (j, &dj) in d.iter().enumerate().skip(i + 1) {
            if dj < p {
                k = j;
                p = dj;
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            for r in 0..n {
                v.swap(idx(r, i), idx(r, k));
            }
        }
    }
}

fn real_embedding(op: &Operator) -> Vec<f64> {
    let n = op.dim();
    let m = 2 * n;
    let mut a = vec![0.0; m * m];
    for i in 0..n {
        for j in 0..n {
            let z = op.get(i, j);
            a[i * m + j] = z.re;
            a[(i + n) * m + j + n] = z.re;
            a[i * m + j + n] = -z.im;
            a[(i + n) * m + j] = z.im;
        }
    }
    a
}

/// Ascending eigenvalues of a Hermitian operator.
pub fn hermitian_eigenvalues(op: &Operator) -> Vec<f64> {
    let n = op.dim();
    let eig = symmetric_eigen(2 * n, &real_embedding(op));
    eig.values.iter().step_by(2).copied().collect()
}

/// `f(H)` for Hermitian `H`, via the spectral theorem.
pub fn hermitian_function(op: &Operator, f: impl Fn(f64) -> f64) -> Operator {
    let n = op.dim();
    let m = 2 * n;
    let eig = symmetric_eigen(m, &real_embedding(op));
    let fm = eig.map(f);
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            data.push(C64::new(fm[i * m + j], fm[(i + n) * m + j]));
        }
    }
    Operator::from_parts_unchecked(n, data, true)
}

/// Symmetric square root of a real positive semi-definite matrix. Eigenvalues
/// in `[-tol * max(1, λ_max), 0)` are clamped to zero; anything more negative
/// is rejected.
pub fn psd_sqrt(n: usize, a: &[f64], tol: f64) -> Result<Vec<f64>> {
    let eig = symmetric_eigen(n, a);
    check_psd(&eig.values, tol)?;
    let floor = noise_floor(&eig.values);
    Ok(eig.map(|x| if x > floor { libm::sqrt(x) } else { 0.0 }))
}

/// Factor `L` with `L L^T = a` (columns scaled eigenvectors), clamping tiny
/// negative eigenvalues as in [`psd_sqrt`].
pub fn psd_factor(n: usize, a: &[f64], tol: f64) -> Result<Vec<f64>> {
    let eig = symmetric_eigen(n, a);
    check_psd(&eig.values, tol)?;
    let floor = noise_floor(&eig.values);
    let mut l = eig.vectors;
    for k in 0..n {
        let s = if eig.values[k] > floor { libm::sqrt(eig.values[k]) } else { 0.0 };
        for i in 0..n {
            l[i * n + k] *= s;
        }
    }
    Ok(l)
}

/// Eigenvalues this small are rounding noise of a rank-deficient matrix;
/// taking their square root would inflate them to `sqrt(eps)`.
fn noise_floor(values: &[f64]) -> f64 {
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    64.0 * f64::EPSILON * max * values.len().max(1) as f64
}

pub(crate) fn check_psd(values: &[f64], tol: f64) -> Result<()> {
    let max = values.last().copied().unwrap_or(0.0).abs().max(1.0);
    let min = values.first().copied().unwrap_or(0.0);
    if min < -tol * max {
        return Err(Error::NotPositiveSemiDefinite { min_eigenvalue: min });
    }
    Ok(())
}
