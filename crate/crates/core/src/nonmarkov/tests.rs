use super::*;
use crate::kernel::{double_integral, factorize, reconstruct, StationaryKernel};
use crate::markov::ito_trajectory;
use crate::noise::{noise_from_hidden, sample_hidden_seeded, HiddenVariables};
use crate::quantum::fidelity;
use proptest::prelude::*;

fn dephasing(gamma: f64) -> CollapseSystem {
    CollapseSystem::new(Operator::zeros(2), vec![Operator::pauli_z()], gamma).unwrap()
}

fn driven(gamma: f64) -> CollapseSystem {
    CollapseSystem::new(Operator::pauli_x().scale_real(0.5), vec![Operator::pauli_z()], gamma).unwrap()
}

fn plus() -> PureState {
    PureState::from_real(&[1.0, 1.0]).unwrap().normalized().unwrap()
}

fn two_modes() -> ModeDecomposition {
    ModeDecomposition::new(1, vec![1.0, 2.5], vec![0.8, 0.5], None).unwrap()
}

fn dist(a: &[C64], b: &[C64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum())
}

fn op_dist(a: &Operator, b: &Operator) -> f64 {
    a.entries().iter().zip(b.entries()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn interaction_ops_commuting_and_initial() {
    let grid = TimeGrid::new(0.1, 10).unwrap();
    let sys = CollapseSystem::new(Operator::pauli_z().scale_real(0.7), vec![Operator::pauli_z()], 1.0).unwrap();
    let iops = interaction_ops(&sys, &grid).unwrap();
    for n in 0..grid.len() {
        assert!(op_dist(iops.get(n, 0), &Operator::pauli_z()) < 1e-12);
        assert!(iops.get(n, 0).is_flagged_hermitian());
    }
    let iops = interaction_ops(&driven(1.0), &grid).unwrap();
    assert_eq!(iops.get(0, 0).entries(), Operator::pauli_z().entries());
}

#[test]
fn interaction_ops_pauli_rotation() {
    let omega = 1.3;
    let sys = CollapseSystem::new(Operator::pauli_x().scale_real(omega / 2.0), vec![Operator::pauli_z()], 1.0).unwrap();
    let grid = TimeGrid::new(0.05, 100).unwrap();
    let iops = interaction_ops(&sys, &grid).unwrap();
    for n in 0..grid.len() {
        let t = grid.t(n);
        let mut expected = Operator::pauli_z().scale_real(libm::cos(omega * t));
        expected.add_scaled(C64::new(libm::sin(omega * t), 0.0), &Operator::pauli_y());
        assert!(op_dist(iops.get(n, 0), &expected) < 1e-11, "t = {t}");
    }
}

#[test]
fn memory_table_matches_direct_sum() {
    let grid = TimeGrid::new(0.05, 40).unwrap();
    let sys = driven(0.7);
    let md = two_modes();
    let iops = interaction_ops(&sys, &grid).unwrap();
    let table = MemoryTable::new(&iops, &md, 0.7).unwrap();
    let dt = grid.dt();
    for n in [0, 1, 17, 40] {
        let mut direct = Operator::zeros(2);
        for m in 0..=n {
            let c = if m == n { 0.5 } else { 1.0 };
            let d = reconstruct(&md, grid.t(n) - grid.t(m))[0];
            direct.add_scaled(C64::new(c * dt * d, 0.0), iops.get(m, 0));
        }
        assert!(op_dist(table.memory(n, 0), &direct) < 1e-13);
        let b = iops.get(n, 0).matmul(&direct).scale_real(-2.0 * 0.7 * dt);
        assert!(op_dist(table.drift(n), &b) < 1e-13);
    }
}

#[test]
fn zero_coupling_keeps_initial_state() {
    let grid = TimeGrid::new(0.01, 100).unwrap();
    let md = two_modes();
    let w = NoiseSource::Modes(&md).draw(&grid, 4, 0).unwrap();
    let traj = linear_propagate(&driven(0.0), &md, &w, &plus()).unwrap();
    for (n, s) in traj.states.iter().enumerate() {
        assert!(dist(s.amplitudes(), plus().amplitudes()) < 1e-14);
        assert!((measure_weight(&traj, n) - 1.0).abs() < 1e-14);
    }
}

#[test]
fn linear_propagate_rejects_mismatches() {
    let md = two_modes();
    let grid = TimeGrid::new(0.01, 10).unwrap();
    let other = TimeGrid::new(0.02, 10).unwrap();
    let prop = LinearPropagator::new(&dephasing(1.0), &md, &grid).unwrap();
    let w = NoiseTrajectory::zeros(other, 1);
    assert!(matches!(prop.propagate(&w, &plus()), Err(Error::GridMismatch)));
    let w = NoiseTrajectory::zeros(grid, 1);
    let unnormalized = PureState::from_real(&[1.0, 1.0]).unwrap();
    assert!(linear_propagate(&dephasing(1.0), &md, &w, &unnormalized).is_err());
}

/// `ln ||phi(T)||^2` for the eigenstate `|0>` of `sigma_z` under a single
/// cosine mode, in closed form.
fn scalar_log_norm(gamma: f64, kappa: f64, omega: f64, x: &HiddenVariables, t: f64) -> f64 {
    let int_w = core::f64::consts::SQRT_2 * kappa
        * (libm::sin(omega * t) * x.xplus[0] + (1.0 - libm::cos(omega * t)) * x.xminus[0])
        / omega;
    let md = ModeDecomposition::single(kappa, omega).unwrap();
    let f = double_integral(&md, t).unwrap()[0];
    2.0 * libm::sqrt(gamma) * int_w - 4.0 * gamma * f / 2.0
}

#[test]
fn eigenstate_norm_matches_scalar_closed_form() {
    let (gamma, kappa, omega) = (0.6, 1.2, 1.7);
    let md = ModeDecomposition::single(kappa, omega).unwrap();
    let x = sample_hidden_seeded(&md, 11, 0);
    let exact = scalar_log_norm(gamma, kappa, omega, &x, 2.0);
    let mut errs = Vec::new();
    for dt in [0.01, 0.005, 0.0025] {
        let grid = TimeGrid::covering(2.0, dt).unwrap();
        let w = noise_from_hidden(&x, &md, &grid).unwrap();
        let traj = linear_propagate(&dephasing(gamma), &md, &w, &PureState::basis(2, 0)).unwrap();
        let ln = libm::log(*traj.norms_sqr.last().unwrap());
        errs.push((ln - exact).abs());
    }
    assert!(errs[2] < 0.02, "{errs:?}");
    assert!(errs[0] / errs[1] > 1.7 && errs[1] / errs[2] > 1.7, "{errs:?}");
}

#[test]
fn dephasing_ensemble_matches_closed_form() {
    let (gamma, kappa, omega) = (0.4, 1.0, 2.0);
    let md = ModeDecomposition::single(kappa, omega).unwrap();
    let grid = TimeGrid::covering(2.0, 0.01).unwrap();
    let prop = LinearPropagator::new(&dephasing(gamma), &md, &grid).unwrap();
    let points = [50, 100, 200];
    let ens = run_linear_ensemble(&prop, &plus(), NoiseSource::Modes(&md), &points, 2000, 21).unwrap();
    for (p, &n) in points.iter().enumerate() {
        let t = grid.t(n);
        let exact = 0.5 * crate::oracle::dephasing_coherence(&md, gamma, t).unwrap();
        let got = ens.density.mean[p].get(0, 1).re;
        let se = ens.density.stderr[p][1];
        assert!((got - exact).abs() < 4.0 * se + 1e-3, "t={t} {got} vs {exact} (se {se})");
        assert!(ens.weight_estimate(p).z_score(1.0) < 4.0);
    }
}

#[test]
fn ensemble_is_reproducible() {
    let md = two_modes();
    let grid = TimeGrid::new(0.02, 30).unwrap();
    let prop = LinearPropagator::new(&driven(0.5), &md, &grid).unwrap();
    let a = run_linear_ensemble(&prop, &plus(), NoiseSource::Modes(&md), &[30, 10], 70, 5).unwrap();
    let b = run_linear_ensemble(&prop, &plus(), NoiseSource::Modes(&md), &[30, 10], 70, 5).unwrap();
    assert_eq!(a.weights, b.weights);
    assert_eq!(a.density.mean, b.density.mean);
    // Points are accepted in any order.
    let c = run_linear_ensemble(&prop, &plus(), NoiseSource::Modes(&md), &[10], 70, 5).unwrap();
    assert_eq!(a.weights[1], c.weights[0]);
}

#[test]
fn fd_insertion_trivial_cases() {
    let md = two_modes();
    let grid = TimeGrid::new(0.01, 20).unwrap();
    let w = NoiseSource::Modes(&md).draw(&grid, 8, 0).unwrap();
    let sys = driven(0.9);
    let prop = LinearPropagator::new(&sys, &md, &grid).unwrap();
    let d0 = prop.fd_insertion(&w, &plus(), 0, 0, 0).unwrap();
    let expected = Operator::pauli_z().apply(&plus()).unwrap().scaled(C64::new(libm::sqrt(0.9), 0.0));
    assert!(dist(d0.amplitudes(), expected.amplitudes()) < 1e-15);
    assert!(matches!(prop.fd_insertion(&w, &plus(), 5, 0, 4), Err(Error::InvalidArgument(_))));
    let prop0 = LinearPropagator::new(&driven(0.0), &md, &grid).unwrap();
    let z = prop0.fd_insertion(&w, &plus(), 3, 0, 12).unwrap();
    assert_eq!(z.norm(), 0.0);
}

/// Max over grid times of the finite-difference residual of the differential
/// equation, relative to the size of its right side.
fn residual(dt: f64) -> f64 {
    let (gamma, t_final) = (0.5, 1.0);
    let md = two_modes();
    let x = sample_hidden_seeded(&md, 3, 0);
    let grid = TimeGrid::covering(t_final, dt).unwrap();
    let w = noise_from_hidden(&x, &md, &grid).unwrap();
    let prop = LinearPropagator::new(&dephasing(gamma), &md, &grid).unwrap();
    let traj = prop.propagate(&w, &plus()).unwrap();
    let sg = libm::sqrt(gamma);
    let a = Operator::pauli_z();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for n in 0..grid.steps() {
        let phi = traj.states[n].amplitudes();
        let mut rhs = vec![C64::new(0.0, 0.0); 2];
        a.apply_into(phi, &mut rhs);
        rhs.iter_mut().for_each(|z| *z *= sg * w.get(n, 0));
        for m in 0..=n {
            let c = if m == n { 0.5 } else { 1.0 };
            let dd = prop.lags().get(n - m, 0, 0);
            let fd = prop.fd_insertion(&w, &plus(), m, 0, n).unwrap();
            let mut afd = vec![C64::new(0.0, 0.0); 2];
            a.apply_into(fd.amplitudes(), &mut afd);
            for (r, v) in rhs.iter_mut().zip(&afd) {
                *r -= v * (2.0 * sg * c * dt * dd);
            }
        }
        let next = traj.states[n + 1].amplitudes();
        let lhs: Vec<C64> = next.iter().zip(phi).map(|(p, q)| (p - q) / dt).collect();
        worst = worst.max(dist(&lhs, &rhs));
        scale = scale.max(libm::sqrt(rhs.iter().map(|z| z.norm_sqr()).sum()));
    }
    worst / scale
}

#[test]
fn differential_form_residual_is_first_order() {
    let r1 = residual(0.01);
    let r2 = residual(0.005);
    assert!(r2 < 0.02, "{r1} {r2}");
    assert!(r1 / r2 > 1.7 && r1 / r2 < 2.3, "{r1} {r2}");
}

#[test]
fn no_future_dependence() {
    let md = two_modes();
    let grid = TimeGrid::new(0.01, 100).unwrap();
    let w = NoiseSource::Modes(&md).draw(&grid, 2, 0).unwrap();
    let mut tail = w.clone();
    for v in 41..grid.len() {
        tail.values_mut()[v] += 3.0 * (v as f64).sin();
    }
    let prop = LinearPropagator::new(&driven(0.8), &md, &grid).unwrap();
    let a = prop.propagate(&w, &plus()).unwrap();
    let b = prop.propagate(&tail, &plus()).unwrap();
    for n in 0..=41 {
        assert_eq!(a.states[n], b.states[n]);
    }
    assert_ne!(a.states[42], b.states[42]);
}

#[test]
fn timestep_convergence_is_first_order() {
    let md = two_modes();
    let x = sample_hidden_seeded(&md, 9, 0);
    let sys = driven(0.6);
    let finals: Vec<Vec<C64>> = [0.02, 0.01, 0.005]
        .iter()
        .map(|&dt| {
            let grid = TimeGrid::covering(1.0, dt).unwrap();
            let w = noise_from_hidden(&x, &md, &grid).unwrap();
            let traj = linear_propagate(&sys, &md, &w, &plus()).unwrap();
            traj.states.last().unwrap().amplitudes().to_vec()
        })
        .collect();
    let e1 = dist(&finals[0], &finals[1]);
    let e2 = dist(&finals[1], &finals[2]);
    assert!(e1 / e2 > 1.7 && e1 / e2 < 2.3, "{e1} {e2}");
}

#[test]
fn redefinition_trivial_cases() {
    let md = two_modes();
    let grid = TimeGrid::new(0.01, 20).unwrap();
    let w = NoiseSource::Modes(&md).draw(&grid, 1, 0).unwrap();
    assert_eq!(redefine_noise_step(&w, &md, 1.0, &[0.0], 5).unwrap(), w);
    assert_eq!(redefine_noise_step(&w, &md, 0.0, &[0.7], 5).unwrap(), w);
    assert!(matches!(redefine_noise_step(&w, &md, 1.0, &[0.1, 0.2], 5), Err(Error::Shape(_))));
    let shifted = redefine_noise_step(&w, &md, 1.0, &[0.5], 5).unwrap();
    for v in 0..grid.len() {
        let d = reconstruct(&md, grid.t(5) - grid.t(v))[0];
        assert!((shifted.get(v, 0) - w.get(v, 0) - 2.0 * 0.01 * d * 0.5).abs() < 1e-13);
    }
}

#[test]
fn eigenstate_is_fixed_and_noise_shift_matches_integral() {
    let (gamma, kappa, omega) = (0.8, 1.1, 2.3);
    let md = ModeDecomposition::single(kappa, omega).unwrap();
    let t_final = 1.5;
    let mut errs = Vec::new();
    for dt in [0.01, 0.005] {
        let grid = TimeGrid::covering(t_final, dt).unwrap();
        let w = NoiseSource::Modes(&md).draw(&grid, 6, 0).unwrap();
        let traj = nonlinear_trajectory(&dephasing(gamma), &md, &w, &PureState::basis(2, 0)).unwrap();
        for (n, s) in traj.states.iter().enumerate() {
            assert!((s.amplitudes()[0].norm() - 1.0).abs() < 1e-12);
            assert!((traj.expectations[n] - 1.0).abs() < 1e-12);
        }
        let mut worst: f64 = 0.0;
        for v in 0..grid.len() {
            let (t, s) = (t_final, grid.t(v));
            let exact = 2.0 * libm::sqrt(gamma) * kappa * kappa
                * (libm::sin(omega * t) * libm::cos(omega * s) + (1.0 - libm::cos(omega * t)) * libm::sin(omega * s))
                / omega;
            worst = worst.max((traj.final_noise.get(v, 0) - w.get(v, 0) - exact).abs());
        }
        errs.push(worst);
    }
    assert!(errs[1] < 0.02, "{errs:?}");
    assert!(errs[0] / errs[1] > 1.7, "{errs:?}");
}

#[test]
fn nonlinear_final_state_is_self_consistent() {
    let md = two_modes();
    let grid = TimeGrid::new(0.01, 80).unwrap();
    let sys = driven(0.7);
    let w = NoiseSource::Modes(&md).draw(&grid, 12, 0).unwrap();
    let prop = LinearPropagator::new(&sys, &md, &grid).unwrap();
    let traj = prop.nonlinear_trajectory_recording(&w, &plus()).unwrap();
    assert_eq!(traj.snapshots[0], w);
    assert_eq!(traj.snapshots.last().unwrap(), &traj.final_noise);
    let lin = prop.propagate(&traj.final_noise, &plus()).unwrap();
    let last = lin.states.last().unwrap().normalized().unwrap();
    assert!(dist(last.amplitudes(), traj.states.last().unwrap().amplitudes()) < 1e-12);
    for s in &traj.states {
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn white_kernel_nonlinear_trajectory_follows_ito() {
    let dt = 1e-3;
    let grid = TimeGrid::covering(0.2, dt).unwrap();
    let cutoff = core::f64::consts::PI / dt;
    let k = StationaryKernel::white(1.0, cutoff).unwrap();
    let md = factorize(&k, grid.steps() / 2 + 2, cutoff).unwrap();
    let sys = driven(0.5);
    let prop = LinearPropagator::new(&sys, &md, &grid).unwrap();
    let w = NoiseSource::Modes(&md).draw(&grid, 31, 0).unwrap();
    let traj = prop.nonlinear_trajectory(&w, &plus()).unwrap();
    let dw: Vec<f64> = w.values()[..grid.steps()].iter().map(|x| x * dt).collect();
    let ito = ito_trajectory(&sys, &plus(), &grid, &dw).unwrap();
    for n in 0..grid.len() {
        let s = prop.interaction_ops().to_schrodinger(n, &traj.states[n]).unwrap();
        let f = fidelity(&s, &ito[n]).unwrap();
        assert!(f > 0.999, "n = {n}: {f}");
    }
}

#[test]
fn girsanov_identity_holds() {
    let md = ModeDecomposition::single(1.0, 2.0).unwrap();
    let grid = TimeGrid::covering(0.5, 0.01).unwrap();
    let prop = LinearPropagator::new(&dephasing(0.5), &md, &grid).unwrap();
    let t = grid.steps();
    for f in [
        NoiseFunctional::One,
        NoiseFunctional::Linear { n: 20, k: 0 },
        NoiseFunctional::Quadratic { n1: 10, k1: 0, n2: 40, k2: 0 },
    ] {
        let r = girsanov_check(&prop, &md, &plus(), f, t, 1000, 17).unwrap();
        assert!(r.z_score < 3.5, "{f:?}: {r:?}");
    }
    let free = LinearPropagator::new(&dephasing(0.0), &md, &grid).unwrap();
    let r = girsanov_check(&free, &md, &plus(), NoiseFunctional::Linear { n: 3, k: 0 }, t, 50, 1).unwrap();
    assert!((r.shifted.mean - r.weighted.mean).abs() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn nonlinear_states_stay_normalized(seed in 0u64..1000, gamma in 0.05f64..2.0) {
        let md = two_modes();
        let grid = TimeGrid::new(0.02, 25).unwrap();
        let w = NoiseSource::Modes(&md).draw(&grid, seed, 0).unwrap();
        let traj = nonlinear_trajectory(&driven(gamma), &md, &w, &plus()).unwrap();
        for s in &traj.states {
            prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        }
        for e in &traj.expectations {
            prop_assert!(e.abs() <= 1.0 + 1e-12);
        }
    }
}
