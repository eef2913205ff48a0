use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

use crate::quantum::{PureState, DEFAULT_DIM_CAP};
use crate::{Error, Result, C64};

/// Asymmetry above which a matrix flagged Hermitian is rejected rather than
/// symmetrized.
const HERMITIAN_REJECT: f64 = 1e-8;

/// Dense `dim x dim` complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    dim: usize,
    data: Vec<C64>,
    hermitian: bool,
}

impl Operator {
    /// Build from row-major entries.
    pub fn from_rows(dim: usize, data: Vec<C64>) -> Result<Self> {
        Self::check_shape(dim, data.len())?;
        if data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidOperator);
        }
        Ok(Self { dim, data, hermitian: false })
    }

    /// Build a Hermitian operator. The entries are symmetrized as
    /// `(O + O^dagger) / 2`; asymmetry above `1e-8` (relative to the largest
    /// entry) is an error.
    pub fn hermitian(dim: usize, data: Vec<C64>) -> Result<Self> {
        let op = Self::from_rows(dim, data)?;
        op.into_hermitian()
    }

    pub fn from_real(dim: usize, data: &[f64]) -> Result<Self> {
        Self::from_rows(dim, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    fn check_shape(dim: usize, len: usize) -> Result<()> {
        if dim == 0 {
            return Err(Error::shape("operator dimension must be positive"));
        }
        if dim > DEFAULT_DIM_CAP {
            return Err(Error::TooLarge { dim, cap: DEFAULT_DIM_CAP });
        }
        if len != dim * dim {
            return Err(Error::shape(format!(
                "expected {} entries for dimension {dim}, got {len}",
                dim * dim
            )));
        }
        Ok(())
    }

    /// Symmetrize and flag as Hermitian, rejecting matrices that are far from
    /// Hermitian.
    pub fn into_hermitian(mut self) -> Result<Self> {
        let scale = self.max_abs().max(1.0);
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                let a = self.data[i * n + j];
                let b = self.data[j * n + i].conj();
                worst = worst.max((a - b).norm());
                let avg = (a + b) * 0.5;
                self.data[i * n + j] = avg;
                self.data[j * n + i] = avg.conj();
            }
        }
        if worst > HERMITIAN_REJECT * scale {
            return Err(Error::invalid(format!(
                "operator is not Hermitian (asymmetry {worst:e})"
            )));
        }
        self.hermitian = true;
        Ok(self)
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![C64::new(0.0, 0.0); dim * dim], hermitian: true }
    }

    pub fn identity(dim: usize) -> Self {
        let mut op = Self::zeros(dim);
        for i in 0..dim {
            op.data[i * dim + i] = C64::new(1.0, 0.0);
        }
        op
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut op = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            op.data[i * values.len() + i] = C64::new(v, 0.0);
        }
        op
    }

    pub fn pauli_x() -> Self {
        Self::from_real(2, &[0.0, 1.0, 1.0, 0.0]).unwrap().into_hermitian().unwrap()
    }

    pub fn pauli_y() -> Self {
        let i = C64::new(0.0, 1.0);
        let z = C64::new(0.0, 0.0);
        Self::hermitian(2, vec![z, -i, i, z]).unwrap()
    }

    pub fn pauli_z() -> Self {
        Self::diagonal(&[1.0, -1.0])
    }

    /// `|a><b|` for two states of equal dimension.
    pub fn outer(a: &PureState, b: &PureState) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::shape("outer product of states with different dimensions"));
        }
        let n = a.dim();
        let mut data = Vec::with_capacity(n * n);
        for ai in a.amplitudes() {
            for bj in b.amplitudes() {
                data.push(ai * bj.conj());
            }
        }
        Self::from_rows(n, data)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim + j]
    }

    pub fn is_flagged_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Largest `|O_ij - conj(O_ji)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.data[i * n + j] - self.data[j * n + i].conj()).norm());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Induced 1-norm (largest absolute column sum).
    pub fn norm_one(&self) -> f64 {
        let n = self.dim;
        (0..n)
            .map(|j| (0..n).map(|i| self.data[i * n + j].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|z| z.norm_sqr()).sum())
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut data = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        Self { dim: n, data, hermitian: self.hermitian }
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim;
        let mut data = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                data[j * n + i] = self.data[i * n + j];
            }
        }
        Self { dim: n, data, hermitian: self.hermitian }
    }

    pub fn scale(&self, c: C64) -> Self {
        let hermitian = self.hermitian && c.im == 0.0;
        Self { dim: self.dim, data: self.data.iter().map(|z| z * c).collect(), hermitian }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * c).collect(),
            hermitian: self.hermitian,
        }
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: C64, other: &Operator) {
        assert_eq!(self.dim, other.dim, "operator dimensions differ");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        self.hermitian = self.hermitian && other.hermitian && c.im == 0.0;
    }

    pub fn matmul(&self, other: &Operator) -> Self {
        assert_eq!(self.dim, other.dim, "operator dimensions differ");
        let n = self.dim;
        let mut data = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            let row = &mut data[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let brow = &other.data[k * n..(k + 1) * n];
                for (r, b) in row.iter_mut().zip(brow) {
                    *r += a * b;
                }
            }
        }
        Self { dim: n, data, hermitian: false }
    }

    /// `[self, other]`.
    pub fn commutator(&self, other: &Operator) -> Self {
        &self.matmul(other) - &other.matmul(self)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Operator) -> Result<Self> {
        let (n, m) = (self.dim, other.dim);
        let dim = n * m;
        Self::check_shape(dim, dim * dim)?;
        let mut data = vec![C64::new(0.0, 0.0); dim * dim];
        for i in 0..n {
            for j in 0..n {
                let a = self.data[i * n + j];
                for k in 0..m {
                    for l in 0..m {
                        data[(i * m + k) * dim + j * m + l] = a * other.data[k * m + l];
                    }
                }
            }
        }
        Ok(Self { dim, data, hermitian: self.hermitian && other.hermitian })
    }

    /// `y = O x` on raw amplitude slices.
    #[inline]
    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        let n = self.dim;
        debug_assert!(x.len() == n && y.len() == n);
        for (i, yi) in y.iter_mut().enumerate() {
            let row = &self.data[i * n..(i + 1) * n];
            *yi = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn apply(&self, s: &PureState) -> Result<PureState> {
        if s.dim() != self.dim {
            return Err(Error::shape(format!(
                "operator of dimension {} applied to state of dimension {}",
                self.dim,
                s.dim()
            )));
        }
        let mut out = vec![C64::new(0.0, 0.0); self.dim];
        self.apply_into(s.amplitudes(), &mut out);
        Ok(PureState::from_amplitudes_unchecked(out))
    }

    /// `<a| O |b>`.
    pub fn sandwich(&self, a: &[C64], b: &[C64]) -> C64 {
        let n = self.dim;
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            let ob: C64 = row.iter().zip(b).map(|(x, y)| x * y).sum();
            acc += a[i].conj() * ob;
        }
        acc
    }

    pub(crate) fn from_parts_unchecked(dim: usize, data: Vec<C64>, hermitian: bool) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        Self { dim, data, hermitian }
    }

    pub(crate) fn data_mut(&mut self) -> &mut [C64] {
        self.hermitian = false;
        &mut self.data
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        let mut out = self.clone();
        out.add_scaled(C64::new(1.0, 0.0), rhs);
        out
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        let mut out = self.clone();
        out.add_scaled(C64::new(-1.0, 0.0), rhs);
        out
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.matmul(rhs)
    }
}
