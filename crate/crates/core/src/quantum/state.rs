use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::quantum::{eigen, Operator};
use crate::{Error, Result, C64};

/// State vector. Not necessarily normalized: the linear stochastic equations
/// produce states whose squared norm carries a probability weight.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amps: Vec<C64>,
}

impl PureState {
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::shape("state dimension must be positive"));
        }
        if amps.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::invalid("state has non-finite amplitudes"));
        }
        Ok(Self { amps })
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::new(amps.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub(crate) fn from_amplitudes_unchecked(amps: Vec<C64>) -> Self {
        Self { amps }
    }

    /// Computational basis vector `|index>`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        amps[index] = C64::new(1.0, 0.0);
        Self { amps }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    #[inline]
    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    #[inline]
    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.norm_sqr())
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &PureState) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn scaled(&self, c: C64) -> PureState {
        PureState { amps: self.amps.iter().map(|z| z * c).collect() }
    }

    pub fn normalized(&self) -> Result<PureState> {
        let n = self.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::DegenerateState);
        }
        Ok(self.scaled(C64::new(1.0 / n, 0.0)))
    }

    /// `||self - other||`.
    pub fn distance(&self, other: &PureState) -> f64 {
        libm::sqrt(self.amps.iter().zip(&other.amps).map(|(a, b)| (a - b).norm_sqr()).sum())
    }

    pub fn tensor(&self, other: &PureState) -> PureState {
        let mut amps = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        PureState { amps }
    }
}

/// Density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedState {
    matrix: Operator,
}

impl MixedState {
    /// Validate a density matrix: Hermitian within `1e-10`, eigenvalues
    /// above `-1e-8`. The trace is kept as given; see [`MixedState::trace`].
    pub fn new(matrix: Operator) -> Result<Self> {
        let scale = matrix.max_abs().max(1.0);
        if matrix.hermitian_defect() > 1e-10 * scale {
            return Err(Error::invalid("density matrix is not Hermitian"));
        }
        let matrix = matrix.into_hermitian()?;
        let min = eigen::hermitian_eigenvalues(&matrix)
            .first()
            .copied()
            .unwrap_or(0.0);
        if min < -1e-8 * scale {
            return Err(Error::NotPositiveSemiDefinite { min_eigenvalue: min });
        }
        Ok(Self { matrix })
    }

    /// Like [`MixedState::new`], additionally requiring the trace to be within
    /// `1e-8` of `declared_trace`.
    pub fn with_trace(matrix: Operator, declared_trace: f64) -> Result<Self> {
        let rho = Self::new(matrix)?;
        let tr = rho.trace();
        if (tr - declared_trace).abs() > 1e-8 {
            return Err(Error::invalid(format!(
                "trace {tr} differs from declared trace {declared_trace}"
            )));
        }
        Ok(rho)
    }

    /// Skip validation; used for intermediate results of trusted propagators.
    pub(crate) fn from_operator_unchecked(matrix: Operator) -> Self {
        Self { matrix }
    }

    /// `|s><s| / <s|s>`.
    pub fn from_pure(s: &PureState) -> Result<Self> {
        let n = s.normalized()?;
        Ok(Self { matrix: Operator::outer(&n, &n)?.into_hermitian()? })
    }

    /// `|s><s|` without normalization.
    pub fn projector_unnormalized(s: &PureState) -> Result<Self> {
        Ok(Self { matrix: Operator::outer(s, s)?.into_hermitian()? })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { matrix: Operator::identity(dim).scale_real(1.0 / dim as f64) }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    #[inline]
    pub fn matrix(&self) -> &Operator {
        &self.matrix
    }

    pub fn into_matrix(self) -> Operator {
        self.matrix
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.matrix.get(i, j)
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn tensor(&self, other: &MixedState) -> Result<MixedState> {
        Ok(Self { matrix: self.matrix.kron(&other.matrix)? })
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigen::hermitian_eigenvalues(&self.matrix)
    }

    /// `tr(rho O)`.
    pub fn expectation(&self, op: &Operator) -> Result<f64> {
        if op.dim() != self.dim() {
            return Err(Error::shape("operator and density matrix dimensions differ"));
        }
        Ok((&self.matrix * op).trace().re)
    }
}
