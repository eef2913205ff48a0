//! Density-matrix oracles: the influence-functional map propagated as a
//! superoperator, the closed-form dephasing coherence and state comparison.
//!
//! The superoperator step shares its memory quadrature with the state-level
//! propagator in [`crate::nonmarkov`]. For a step from `t_n` it applies
//! `exp(L_n)` with
//!
//! ```text
//! L_n rho = gamma dt sum_j (A_j rho M_j + M_j rho A_j - A_j M_j rho - rho M_j A_j)
//! ```
//!
//! where `M_j = Mem_j(n)` is the trapezoid memory operator at `t_n`.

use alloc::vec;
use alloc::vec::Vec;

use crate::kernel::{double_integral, KernelRef, ModeDecomposition};
use crate::markov::{apply_super, CollapseSystem};
use crate::nonmarkov::{InteractionOps, MemoryTable};
use crate::quantum::eigen::{hermitian_eigenvalues, hermitian_function};
use crate::quantum::{exp_action_dense, matrix_exponential, MixedState, Operator, TaylorScratch};
use crate::{Error, Result, TimeGrid, C64};

/// Trace distance and Uhlmann fidelity between two density matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityComparison {
    pub trace_distance: f64,
    pub fidelity: f64,
}

pub fn compare_density(a: &MixedState, b: &MixedState) -> Result<DensityComparison> {
    if a.dim() != b.dim() {
        return Err(Error::shape("density matrices have different dimensions"));
    }
    let diff = (a.matrix() - b.matrix()).into_hermitian()?;
    let trace_distance = 0.5 * hermitian_eigenvalues(&diff).iter().map(|x| x.abs()).sum::<f64>();
    let sa = hermitian_function(a.matrix(), |x| libm::sqrt(x.max(0.0)));
    let inner = (&(&sa * b.matrix()) * &sa).into_hermitian()?;
    let root: f64 = hermitian_eigenvalues(&inner).iter().map(|x| libm::sqrt(x.max(0.0))).sum();
    Ok(DensityComparison { trace_distance, fidelity: (root * root).min(1.0) })
}

/// `exp(-2 gamma F(t))` for a single channel, with `F` the double integral
/// of the kernel over `[0, t]^2`.
pub fn dephasing_coherence<'a>(source: impl Into<KernelRef<'a>>, gamma: f64, t: f64) -> Result<f64> {
    let f = double_integral(source, t)?;
    if f.len() != 1 {
        return Err(Error::invalid("dephasing coherence needs a single-channel kernel"));
    }
    Ok(libm::exp(-2.0 * gamma * f[0]))
}

/// Per-step superoperators of the influence-functional map, interaction
/// picture, on row-major `vec(rho)`.
#[derive(Debug, Clone)]
pub struct SuperPropagator {
    grid: TimeGrid,
    dim: usize,
    gamma: f64,
    iops: InteractionOps,
    memory: MemoryTable,
}

impl SuperPropagator {
    pub fn new(sys: &CollapseSystem, md: &ModeDecomposition, grid: &TimeGrid) -> Result<Self> {
        let iops = InteractionOps::new(sys, grid)?;
        let memory = MemoryTable::new(&iops, md, sys.gamma())?;
        Ok(Self { grid: *grid, dim: sys.dim(), gamma: sys.gamma(), iops, memory })
    }

    #[inline]
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// The generator `L_n` of step `n`.
    pub fn generator(&self, n: usize) -> Result<Operator> {
        let d = self.dim;
        let id = Operator::identity(d);
        let c = C64::new(self.gamma * self.grid.dt(), 0.0);
        let mut l = Operator::zeros(d * d);
        for j in 0..self.iops.channels() {
            let a = self.iops.get(n, j);
            let m = self.memory.memory(n, j);
            l.add_scaled(c, &a.kron(&m.transpose())?);
            l.add_scaled(c, &m.kron(&a.transpose())?);
            l.add_scaled(-c, &a.matmul(m).kron(&id)?);
            l.add_scaled(-c, &id.kron(&m.matmul(a).transpose())?);
        }
        Ok(l)
    }

    /// `rho(t_n)` on every grid point, interaction picture.
    pub fn propagate(&self, rho0: &MixedState) -> Result<Vec<MixedState>> {
        if rho0.dim() != self.dim {
            return Err(Error::shape("density matrix and system dimensions differ"));
        }
        let d = self.dim;
        let mut scratch = TaylorScratch::new(d * d);
        let mut v = rho0.matrix().entries().to_vec();
        let mut out = Vec::with_capacity(self.grid.len());
        out.push(rho0.clone());
        for n in 0..self.grid.steps() {
            let l = self.generator(n)?;
            exp_action_dense(&l, &mut v, &mut scratch)?;
            let op = Operator::from_parts_unchecked(d, v.clone(), false);
            out.push(MixedState::from_operator_unchecked(hermitian_part(op)));
        }
        Ok(out)
    }

    /// The composed map over the whole grid as a matrix on `vec(rho)`.
    pub fn total_map(&self) -> Result<Operator> {
        let d2 = self.dim * self.dim;
        let mut total = Operator::identity(d2);
        for n in 0..self.grid.steps() {
            let step = matrix_exponential(&self.generator(n)?, C64::new(1.0, 0.0))?;
            total = step.matmul(&total);
        }
        Ok(total)
    }

    /// Smallest eigenvalue of the Choi matrix of the composed map, normalized
    /// so that a trace-preserving map has Choi trace `dim`. Limited to
    /// `dim <= 8`.
    pub fn choi_min_eigenvalue(&self) -> Result<f64> {
        if self.dim > 8 {
            return Err(Error::TooLarge { dim: self.dim, cap: 8 });
        }
        let choi = choi_matrix(&self.total_map()?, self.dim);
        Ok(hermitian_eigenvalues(&choi.into_hermitian()?)[0])
    }

    /// `e^{-iHt_n} rho e^{iHt_n}`.
    pub fn to_schrodinger(&self, n: usize, rho: &MixedState) -> Result<MixedState> {
        self.iops.to_schrodinger_mixed(n, rho)
    }
}

/// `C[(k,i),(l,j)] = Phi(|k><l|)_{ij}` for a map `Phi` acting on row-major
/// `vec(rho)`.
pub fn choi_matrix(map: &Operator, dim: usize) -> Operator {
    let d2 = dim * dim;
    let mut data = vec![C64::new(0.0, 0.0); d2 * d2];
    for k in 0..dim {
        for l in 0..dim {
            for i in 0..dim {
                for j in 0..dim {
                    data[(k * dim + i) * d2 + (l * dim + j)] = map.get(i * dim + j, k * dim + l);
                }
            }
        }
    }
    Operator::from_parts_unchecked(d2, data, false)
}

fn hermitian_part(op: Operator) -> Operator {
    let adj = op.adjoint();
    let mut sym = op;
    sym.add_scaled(C64::new(1.0, 0.0), &adj);
    Operator::from_parts_unchecked(sym.dim(), sym.scale_real(0.5).entries().to_vec(), true)
}

/// Influence-functional evolution of `rho0` on every grid point, interaction
/// picture.
pub fn influence_propagate(
    rho0: &MixedState,
    sys: &CollapseSystem,
    md: &ModeDecomposition,
    grid: &TimeGrid,
) -> Result<Vec<MixedState>> {
    SuperPropagator::new(sys, md, grid)?.propagate(rho0)
}

/// One superoperator application, exposed for the Markov comparison.
pub fn apply_superoperator(sup: &Operator, rho: &MixedState) -> Result<MixedState> {
    if sup.dim() != rho.dim() * rho.dim() {
        return Err(Error::shape("superoperator and density matrix dimensions differ"));
    }
    Ok(MixedState::from_operator_unchecked(apply_super(sup, rho.matrix())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::StationaryKernel;
    use crate::markov::lindblad_trajectory;
    use crate::quantum::PureState;

    fn plus() -> MixedState {
        MixedState::from_pure(&PureState::from_real(&[1.0, 1.0]).unwrap()).unwrap()
    }

    fn dephasing(gamma: f64) -> CollapseSystem {
        CollapseSystem::new(Operator::zeros(2), vec![Operator::pauli_z()], gamma).unwrap()
    }

    #[test]
    fn compare_density_examples() {
        let zero = MixedState::from_pure(&PureState::basis(2, 0)).unwrap();
        let one = MixedState::from_pure(&PureState::basis(2, 1)).unwrap();
        let c = compare_density(&zero, &zero).unwrap();
        assert!(c.trace_distance.abs() < 1e-14 && (c.fidelity - 1.0).abs() < 1e-12);
        let c = compare_density(&zero, &one).unwrap();
        assert!((c.trace_distance - 1.0).abs() < 1e-14 && c.fidelity.abs() < 1e-12);
        let c = compare_density(&MixedState::maximally_mixed(2), &zero).unwrap();
        assert!((c.trace_distance - 0.5).abs() < 1e-14);
        assert!((c.fidelity - 0.5).abs() < 1e-12);
        assert!(matches!(
            compare_density(&zero, &MixedState::maximally_mixed(3)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn fidelity_of_mixed_states_matches_qubit_formula() {
        // For qubits F = tr(ab) + 2 sqrt(det a det b).
        let a = MixedState::new(Operator::from_rows(2, vec![
            C64::new(0.7, 0.0), C64::new(0.1, 0.2),
            C64::new(0.1, -0.2), C64::new(0.3, 0.0),
        ]).unwrap()).unwrap();
        let b = MixedState::new(Operator::from_rows(2, vec![
            C64::new(0.4, 0.0), C64::new(-0.2, 0.1),
            C64::new(-0.2, -0.1), C64::new(0.6, 0.0),
        ]).unwrap()).unwrap();
        let det = |m: &MixedState| (m.get(0, 0) * m.get(1, 1) - m.get(0, 1) * m.get(1, 0)).re;
        let expected = (a.matrix() * b.matrix()).trace().re + 2.0 * libm::sqrt(det(&a) * det(&b));
        let f = compare_density(&a, &b).unwrap().fidelity;
        assert!((f - expected).abs() < 1e-12, "{f} vs {expected}");
    }

    #[test]
    fn dephasing_coherence_examples() {
        let md = ModeDecomposition::single(1.0, 2.0).unwrap();
        assert_eq!(dephasing_coherence(&md, 0.3, 0.0).unwrap(), 1.0);
        let revival = 2.0 * core::f64::consts::PI / 2.0;
        assert!((dephasing_coherence(&md, 0.3, revival).unwrap() - 1.0).abs() < 1e-14);
        // Closed form exp(-2 gamma 2 k^2 (1 - cos wt) / w^2).
        let t = 0.7;
        let expected = libm::exp(-2.0 * 0.3 * 2.0 * (1.0 - libm::cos(2.0 * t)) / 4.0);
        assert!((dephasing_coherence(&md, 0.3, t).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn dephasing_coherence_white_limit() {
        let k = StationaryKernel::white(1.0, 1e6).unwrap();
        let c = dephasing_coherence(&k, 0.5, 1.0).unwrap();
        assert!((c - libm::exp(-1.0)).abs() < 1e-5, "{c}");
    }

    #[test]
    fn zero_coupling_is_identity() {
        let md = ModeDecomposition::single(1.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.01, 50).unwrap();
        let rhos = influence_propagate(&plus(), &dephasing(0.0), &md, &grid).unwrap();
        for r in &rhos {
            assert!(compare_density(r, &plus()).unwrap().trace_distance < 1e-15);
        }
    }

    #[test]
    fn single_mode_dephasing_matches_closed_form() {
        let (gamma, kappa, omega) = (0.1, 1.0, 2.0);
        let md = ModeDecomposition::single(kappa, omega).unwrap();
        let grid = TimeGrid::covering(2.0 * core::f64::consts::PI / omega, 1e-4).unwrap();
        let rhos = influence_propagate(&plus(), &dephasing(gamma), &md, &grid).unwrap();
        let mut worst: f64 = 0.0;
        for (n, r) in rhos.iter().enumerate() {
            let t = grid.t(n);
            let exact = 0.5 * libm::exp(-2.0 * gamma * 2.0 * kappa * kappa * (1.0 - libm::cos(omega * t)) / (omega * omega));
            worst = worst.max((r.get(0, 1).re - exact).abs());
            assert!((r.trace() - 1.0).abs() < 1e-12);
        }
        assert!(worst < 1e-5, "{worst}");
        let last = rhos.last().unwrap().get(0, 1).re;
        assert!((last - 0.5).abs() < 1e-6, "revival {last}");
    }

    #[test]
    fn white_kernel_reproduces_lindblad() {
        let grid = TimeGrid::new(2e-3, 250).unwrap();
        let k = StationaryKernel::white(1.0, core::f64::consts::PI / grid.dt()).unwrap();
        let md = crate::kernel::factorize(&k, 300, core::f64::consts::PI / grid.dt()).unwrap();
        let sys = dephasing(0.5);
        let rhos = influence_propagate(&plus(), &sys, &md, &grid).unwrap();
        let exact = lindblad_trajectory(&plus(), &sys, &grid).unwrap();
        let td = compare_density(rhos.last().unwrap(), exact.last().unwrap()).unwrap().trace_distance;
        assert!(td < 1e-3, "{td}");
    }

    #[test]
    fn composed_map_is_cptp() {
        let h = Operator::pauli_x().scale_real(0.5);
        let sys = CollapseSystem::new(h, vec![Operator::pauli_z()], 0.4).unwrap();
        let md = ModeDecomposition::new(1, vec![1.0, 2.5], vec![0.8, 0.5], None).unwrap();
        let grid = TimeGrid::new(0.01, 100).unwrap();
        let sp = SuperPropagator::new(&sys, &md, &grid).unwrap();
        assert!(sp.choi_min_eigenvalue().unwrap() > -1e-7);
        let map = sp.total_map().unwrap();
        // Trace preservation: sum_i Phi_{(ii),(kl)} = delta_kl.
        for k in 0..2 {
            for l in 0..2 {
                let tr: C64 = (0..2).map(|i| map.get(i * 2 + i, k * 2 + l)).sum();
                let target = if k == l { 1.0 } else { 0.0 };
                assert!((tr - C64::new(target, 0.0)).norm() < 1e-9);
            }
        }
    }
}
