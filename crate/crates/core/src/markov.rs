//! Markovian collapse: normalized Euler–Maruyama trajectories of the Itô
//! collapse equation and the Lindblad equation for their ensemble average.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::ensemble;
use crate::quantum::{expectation, matrix_exponential, MixedState, Operator, PureState};
use crate::stats::{DensityAccumulator, DensityEstimate};
use crate::{rng, Error, Result, TimeGrid, C64};

/// Hamiltonian, collapse operators and collapse strength `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseSystem {
    h: Operator,
    a: Vec<Operator>,
    gamma: f64,
}

impl CollapseSystem {
    /// Validate Hermiticity (within `1e-10`), a shared dimension and
    /// `gamma >= 0`. Shape errors name the offending collapse operator.
    pub fn new(h: Operator, a: Vec<Operator>, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::invalid(format!("gamma must be finite and >= 0, got {gamma}")));
        }
        if a.is_empty() {
            return Err(Error::invalid("at least one collapse operator is required"));
        }
        let dim = h.dim();
        let h = hermitian_checked(h, "hamiltonian")?;
        let mut ops = Vec::with_capacity(a.len());
        for (k, op) in a.into_iter().enumerate() {
            if op.dim() != dim {
                return Err(Error::shape(format!(
                    "collapse operator {k} has dimension {}, hamiltonian has {dim}",
                    op.dim()
                )));
            }
            ops.push(hermitian_checked(op, &format!("collapse operator {k}"))?);
        }
        Ok(Self { h, a: ops, gamma })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.a.len()
    }

    #[inline]
    pub fn hamiltonian(&self) -> &Operator {
        &self.h
    }

    #[inline]
    pub fn collapse_ops(&self) -> &[Operator] {
        &self.a
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.h.clone(), self.a.clone(), gamma)
    }
}

fn hermitian_checked(op: Operator, name: &str) -> Result<Operator> {
    let scale = op.max_abs().max(1.0);
    if op.hermitian_defect() > 1e-10 * scale {
        return Err(Error::invalid(format!("{name} is not Hermitian")));
    }
    op.into_hermitian()
}

/// One Euler–Maruyama step of
/// `d psi = [-i H dt + sum_k (sqrt(gamma) (A_k - <A_k>) dW_k - gamma/2 (A_k - <A_k>)^2 dt)] psi`
/// followed by renormalization.
pub fn ito_step(s: &PureState, sys: &CollapseSystem, dw: &[f64], dt: f64) -> Result<PureState> {
    if dw.len() != sys.channels() {
        return Err(Error::shape(format!("{} increments for {} channels", dw.len(), sys.channels())));
    }
    if s.dim() != sys.dim() {
        return Err(Error::shape("state and system dimensions differ"));
    }
    let n2 = s.norm_sqr();
    if !(n2 > 0.0 && n2.is_finite()) {
        return Err(Error::DegenerateState);
    }
    if (n2 - 1.0).abs() > 1e-8 {
        return Err(Error::invalid("ito_step expects a unit-norm state"));
    }
    let n = s.dim();
    let psi = s.amplitudes();
    let mut out = vec![C64::new(0.0, 0.0); n];
    let mut v = vec![C64::new(0.0, 0.0); n];
    let mut v2 = vec![C64::new(0.0, 0.0); n];
    sys.h.apply_into(psi, &mut out);
    for (o, p) in out.iter_mut().zip(psi) {
        *o = p + C64::new(0.0, -dt) * *o;
    }
    let sg = libm::sqrt(sys.gamma);
    for (a, &dwk) in sys.a.iter().zip(dw) {
        let mean = a.sandwich(psi, psi).re / n2;
        a.apply_into(psi, &mut v);
        for (vi, p) in v.iter_mut().zip(psi) {
            *vi -= p * mean;
        }
        a.apply_into(&v, &mut v2);
        for (w, vi) in v2.iter_mut().zip(&v) {
            *w -= vi * mean;
        }
        for ((o, vi), wi) in out.iter_mut().zip(&v).zip(&v2) {
            *o += vi * (sg * dwk) - wi * (0.5 * sys.gamma * dt);
        }
    }
    PureState::from_amplitudes_unchecked(out).normalized()
}

/// Integrate from `psi0` over `grid` with increments `dw[n * D + k]` for the
/// step `t_n -> t_{n+1}`. Returns the normalized state at every grid point.
pub fn ito_trajectory(sys: &CollapseSystem, psi0: &PureState, grid: &TimeGrid, dw: &[f64]) -> Result<Vec<PureState>> {
    let d = sys.channels();
    if dw.len() != grid.steps() * d {
        return Err(Error::shape(format!(
            "expected {} increments, got {}",
            grid.steps() * d,
            dw.len()
        )));
    }
    let mut states = Vec::with_capacity(grid.len());
    states.push(psi0.normalized()?);
    for n in 0..grid.steps() {
        let next = ito_step(&states[n], sys, &dw[n * d..(n + 1) * d], grid.dt())?;
        states.push(next);
    }
    Ok(states)
}

/// Gaussian increments `N(0, dt)` for `steps` steps and `channels` channels.
pub fn wiener_increments<R: rand::Rng + ?Sized>(rng: &mut R, steps: usize, channels: usize, dt: f64) -> Vec<f64> {
    let s = libm::sqrt(dt);
    (0..steps * channels).map(|_| s * rng::standard_normal(rng)).collect()
}

/// The Lindblad generator as a superoperator on row-major `vec(rho)`:
/// `L = -i [H, .] + gamma sum_k (A_k . A_k - 1/2 {A_k^2, .})`.
pub fn lindblad_generator(sys: &CollapseSystem) -> Result<Operator> {
    let n = sys.dim();
    let id = Operator::identity(n);
    // vec(X rho Y) = (X ⊗ Y^T) vec(rho)
    let mut l = sys.h.kron(&id)?.scale(C64::new(0.0, -1.0));
    l.add_scaled(C64::new(0.0, 1.0), &id.kron(&sys.h.transpose())?);
    for a in &sys.a {
        let a2 = a.matmul(a);
        l.add_scaled(C64::new(sys.gamma, 0.0), &a.kron(&a.transpose())?);
        l.add_scaled(C64::new(-0.5 * sys.gamma, 0.0), &a2.kron(&id)?);
        l.add_scaled(C64::new(-0.5 * sys.gamma, 0.0), &id.kron(&a2.transpose())?);
    }
    Ok(l)
}

/// Apply a superoperator to a density matrix.
pub(crate) fn apply_super(sup: &Operator, rho: &Operator) -> Operator {
    let n = rho.dim();
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    sup.apply_into(rho.entries(), &mut out);
    let op = Operator::from_parts_unchecked(n, out, false);
    // Symmetrize away rounding drift.
    let adj = op.adjoint();
    let mut sym = op;
    sym.add_scaled(C64::new(1.0, 0.0), &adj);
    sym.scale_real(0.5).into_hermitian().expect("symmetrized matrix is Hermitian")
}

/// `rho(t)` under the Lindblad equation, by exponentiating the generator.
pub fn lindblad_propagate(rho0: &MixedState, sys: &CollapseSystem, t: f64) -> Result<MixedState> {
    if rho0.dim() != sys.dim() {
        return Err(Error::shape("density matrix and system dimensions differ"));
    }
    let l = lindblad_generator(sys)?;
    let prop = matrix_exponential(&l, C64::new(t, 0.0))?;
    Ok(MixedState::from_operator_unchecked(apply_super(&prop, rho0.matrix())))
}

/// Lindblad solution at every point of a grid, sharing one step propagator.
pub fn lindblad_trajectory(rho0: &MixedState, sys: &CollapseSystem, grid: &TimeGrid) -> Result<Vec<MixedState>> {
    if rho0.dim() != sys.dim() {
        return Err(Error::shape("density matrix and system dimensions differ"));
    }
    let l = lindblad_generator(sys)?;
    let step = matrix_exponential(&l, C64::new(grid.dt(), 0.0))?;
    let mut out = Vec::with_capacity(grid.len());
    out.push(rho0.clone());
    for n in 0..grid.steps() {
        let next = apply_super(&step, out[n].matrix());
        out.push(MixedState::from_operator_unchecked(next));
    }
    Ok(out)
}

/// Per-trajectory records and the ensemble-averaged density matrix.
#[derive(Debug, Clone)]
pub struct MarkovEnsemble {
    pub grid: TimeGrid,
    pub channels: usize,
    /// `expectations[i][n * D + k] = <A_k>` of trajectory `i` at `t_n`.
    pub expectations: Vec<Vec<f64>>,
    pub final_states: Vec<PureState>,
    pub density: DensityEstimate,
}

/// Run `n_traj` independent trajectories; trajectory `i` draws its
/// increments from stream `i` of `seed`.
pub fn run_markov_ensemble(
    sys: &CollapseSystem,
    psi0: &PureState,
    grid: &TimeGrid,
    n_traj: usize,
    seed: u64,
) -> Result<MarkovEnsemble> {
    if n_traj == 0 {
        return Err(Error::invalid("n_traj must be at least 1"));
    }
    let psi0 = psi0.normalized()?;
    let d = sys.channels();
    let chunks = ensemble::chunks(n_traj);
    let results = ensemble::map_ordered(chunks.len(), |c| -> Result<_> {
        let (start, end) = chunks[c];
        let mut acc = DensityAccumulator::new(sys.dim(), grid.len());
        let mut records = Vec::with_capacity(end - start);
        let mut finals = Vec::with_capacity(end - start);
        for i in start..end {
            let mut r = rng::stream(seed, i as u64);
            let dw = wiener_increments(&mut r, grid.steps(), d, grid.dt());
            let states = ito_trajectory(sys, &psi0, grid, &dw)?;
            let mut rec = Vec::with_capacity(grid.len() * d);
            for (n, s) in states.iter().enumerate() {
                acc.add(n, s.amplitudes(), 1.0);
                for a in sys.collapse_ops() {
                    rec.push(expectation(s, a)?);
                }
            }
            acc.finish_trajectory();
            records.push(rec);
            finals.push(states.into_iter().last().expect("grid has points"));
        }
        Ok((acc, records, finals))
    });
    let mut total = DensityAccumulator::new(sys.dim(), grid.len());
    let mut expectations = Vec::with_capacity(n_traj);
    let mut final_states = Vec::with_capacity(n_traj);
    for r in results {
        let (acc, rec, fin) = r?;
        total.merge(&acc);
        expectations.extend(rec);
        final_states.extend(fin);
    }
    Ok(MarkovEnsemble { grid: *grid, channels: d, expectations, final_states, density: total.estimate() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::compare_density;
    use crate::stats;

    fn dephasing(gamma: f64) -> CollapseSystem {
        CollapseSystem::new(Operator::zeros(2), vec![Operator::pauli_z()], gamma).unwrap()
    }

    fn plus() -> PureState {
        PureState::from_real(&[1.0, 1.0]).unwrap().normalized().unwrap()
    }

    #[test]
    fn system_validation_names_operator() {
        let err = CollapseSystem::new(Operator::zeros(2), vec![Operator::pauli_z(), Operator::identity(3)], 1.0);
        match err {
            Err(Error::Shape(msg)) => assert!(msg.contains("collapse operator 1"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(CollapseSystem::new(Operator::zeros(2), vec![Operator::pauli_z()], -1.0).is_err());
        let skew = Operator::from_real(2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(CollapseSystem::new(Operator::zeros(2), vec![skew], 1.0).is_err());
    }

    #[test]
    fn eigenstate_is_a_fixed_point() {
        let sys = dephasing(2.0);
        let s = PureState::basis(2, 1);
        for dw in [-0.3, 0.0, 1.7] {
            let out = ito_step(&s, &sys, &[dw], 0.01).unwrap();
            assert!(out.distance(&s) < 1e-15);
        }
    }

    #[test]
    fn zero_gamma_is_an_euler_unitary_step() {
        let h = Operator::pauli_x();
        let sys = CollapseSystem::new(h, vec![Operator::pauli_z()], 0.0).unwrap();
        let dt = 1e-3;
        let out = ito_step(&PureState::basis(2, 0), &sys, &[0.5], dt).unwrap();
        // (1 - i dt sx)|0> normalized
        let n = libm::sqrt(1.0 + dt * dt);
        assert!((out.amplitudes()[0] - C64::new(1.0 / n, 0.0)).norm() < 1e-15);
        assert!((out.amplitudes()[1] - C64::new(0.0, -dt / n)).norm() < 1e-15);
    }

    #[test]
    fn expectation_increments_are_martingale() {
        let sys = dephasing(1.0);
        let dt = 0.01;
        let s = PureState::from_real(&[0.8, 0.6]).unwrap();
        let z0 = expectation(&s, &Operator::pauli_z()).unwrap();
        let mut r = rng::stream(31, 0);
        let incs: Vec<f64> = (0..10_000)
            .map(|_| {
                let dw = wiener_increments(&mut r, 1, 1, dt);
                let out = ito_step(&s, &sys, &dw, dt).unwrap();
                expectation(&out, &Operator::pauli_z()).unwrap() - z0
            })
            .collect();
        assert!(stats::mean_stderr(&incs).z_score(0.0) < 3.0);
    }

    #[test]
    fn norm_is_exactly_one_after_each_step() {
        let sys = CollapseSystem::new(Operator::pauli_x(), vec![Operator::pauli_z()], 3.0).unwrap();
        let grid = TimeGrid::new(0.01, 100).unwrap();
        let dw = wiener_increments(&mut rng::stream(2, 0), 100, 1, 0.01);
        for s in ito_trajectory(&sys, &plus(), &grid, &dw).unwrap() {
            assert!((s.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn lindblad_zero_gamma_is_unitary_conjugation() {
        let h = Operator::pauli_x().scale_real(0.7);
        let sys = CollapseSystem::new(h.clone(), vec![Operator::pauli_z()], 0.0).unwrap();
        let rho0 = MixedState::from_pure(&PureState::from_real(&[0.6, 0.8]).unwrap()).unwrap();
        let t = 1.3;
        let rho = lindblad_propagate(&rho0, &sys, t).unwrap();
        let u = matrix_exponential(&h, C64::new(0.0, -t)).unwrap();
        let expected = &(&u * rho0.matrix()) * &u.adjoint();
        for (a, b) in rho.matrix().entries().iter().zip(expected.entries()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn lindblad_dephasing_closed_form() {
        let gamma = 0.8;
        let rho0 = MixedState::from_pure(&plus()).unwrap();
        for t in [0.0, 0.3, 1.0, 2.5] {
            let rho = lindblad_propagate(&rho0, &dephasing(gamma), t).unwrap();
            assert!((rho.get(0, 1).re - 0.5 * libm::exp(-2.0 * gamma * t)).abs() < 1e-13);
            assert!((rho.trace() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn maximally_mixed_is_stationary() {
        let sys = CollapseSystem::new(Operator::zeros(3), vec![Operator::diagonal(&[1.0, -0.5, 2.0])], 1.5).unwrap();
        let rho = lindblad_propagate(&MixedState::maximally_mixed(3), &sys, 2.0).unwrap();
        let d = compare_density(&rho, &MixedState::maximally_mixed(3)).unwrap();
        assert!(d.trace_distance < 1e-13);
    }

    #[test]
    fn single_trajectory_is_reproducible() {
        let sys = dephasing(1.0);
        let grid = TimeGrid::new(0.01, 50).unwrap();
        let a = run_markov_ensemble(&sys, &plus(), &grid, 1, 77).unwrap();
        let b = run_markov_ensemble(&sys, &plus(), &grid, 1, 77).unwrap();
        assert_eq!(a.expectations, b.expectations);
        assert_eq!(a.final_states, b.final_states);
    }

    #[test]
    fn ensemble_matches_lindblad() {
        let gamma = 1.0;
        let sys = dephasing(gamma);
        let grid = TimeGrid::new(0.01, 100).unwrap();
        let ens = run_markov_ensemble(&sys, &plus(), &grid, 400, 5).unwrap();
        let rho0 = MixedState::from_pure(&plus()).unwrap();
        let exact = lindblad_trajectory(&rho0, &sys, &grid).unwrap();
        for n in [25, 50, 100] {
            let td = compare_density(&ens.density.mean[n], &exact[n]).unwrap().trace_distance;
            let bound = 3.0 * (ens.density.trace_distance_stderr(n) + 2.0 * grid.dt());
            assert!(td <= bound, "t = {}: {td} > {bound}", grid.t(n));
        }
    }

    #[test]
    fn collapse_outcomes_follow_born_rule() {
        let sys = dephasing(5.0);
        let grid = TimeGrid::new(0.01, 300).unwrap();
        let ens = run_markov_ensemble(&sys, &plus(), &grid, 400, 9).unwrap();
        let up = ens
            .final_states
            .iter()
            .filter(|s| expectation(s, &Operator::pauli_z()).unwrap() > 0.99)
            .count();
        assert!(stats::binomial_z(up, 400, 0.5) < 3.0);
    }
}
