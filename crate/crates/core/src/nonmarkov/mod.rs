//! Colored-noise collapse: the linear stochastic Schrödinger equation with
//! memory, its functional-derivative form, the noise redefinition and the
//! normalized nonlinear trajectories built from them.
//!
//! Everything runs in the interaction picture of the system Hamiltonian. A
//! step `t_n -> t_{n+1}` applies `exp(G_n)` with
//!
//! ```text
//! G_n = sqrt(gamma) dt sum_j w_j(t_n) A_j(t_n) + B_n
//! B_n = -2 gamma dt sum_j A_j(t_n) Mem_j(n)
//! Mem_j(n) = sum_{m<=n} c_m dt sum_k D~_jk(t_n - t_m) A_k(t_m)
//! ```
//!
//! with trapezoid weights `c_n = 1/2` and `c_m = 1` otherwise. `B_n` does not
//! depend on the noise, so it is tabulated once per system and grid.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::ensemble;
use crate::kernel::{LagTable, ModeDecomposition};
use crate::markov::CollapseSystem;
use crate::noise::{NoiseSource, NoiseTrajectory};
use crate::quantum::{exp_action, matrix_exponential, MixedState, Operator, PureState, TaylorScratch};
use crate::stats::{self, DensityAccumulator, DensityEstimate, Estimate};
use crate::{Error, Result, TimeGrid, C64};

/// `A_k^I(t_n) = e^{i H t_n} A_k e^{-i H t_n}` on every grid point.
#[derive(Debug, Clone)]
pub struct InteractionOps {
    grid: TimeGrid,
    channels: usize,
    ops: Vec<Operator>,
    /// `e^{-i H t_n}`, absent when `H = 0`.
    unitaries: Option<Vec<Operator>>,
}

impl InteractionOps {
    pub fn new(sys: &CollapseSystem, grid: &TimeGrid) -> Result<Self> {
        let d = sys.channels();
        let free = sys.hamiltonian().max_abs() == 0.0;
        let mut ops = Vec::with_capacity(grid.len() * d);
        let mut unitaries = if free { None } else { Some(Vec::with_capacity(grid.len())) };
        for n in 0..grid.len() {
            match unitaries.as_mut() {
                None => ops.extend(sys.collapse_ops().iter().cloned()),
                Some(us) => {
                    let u = matrix_exponential(sys.hamiltonian(), C64::new(0.0, -grid.t(n)))?;
                    let ud = u.adjoint();
                    for a in sys.collapse_ops() {
                        ops.push((&(&ud * a) * &u).into_hermitian()?);
                    }
                    us.push(u);
                }
            }
        }
        Ok(Self { grid: *grid, channels: d, ops, unitaries })
    }

    #[inline]
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.ops[0].dim()
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize) -> &Operator {
        &self.ops[n * self.channels + k]
    }

    /// `e^{-i H t_n} psi`: the Schrödinger-picture state at `t_n`.
    pub fn to_schrodinger(&self, n: usize, psi: &PureState) -> Result<PureState> {
        match &self.unitaries {
            None => Ok(psi.clone()),
            Some(us) => us[n].apply(psi),
        }
    }

    /// `e^{-i H t_n} rho e^{i H t_n}`.
    pub fn to_schrodinger_mixed(&self, n: usize, rho: &MixedState) -> Result<MixedState> {
        if rho.dim() != self.dim() {
            return Err(Error::shape("density matrix and system dimensions differ"));
        }
        match &self.unitaries {
            None => Ok(rho.clone()),
            Some(us) => {
                let m = (&(&us[n] * rho.matrix()) * &us[n].adjoint()).into_hermitian()?;
                Ok(MixedState::from_operator_unchecked(m))
            }
        }
    }
}

pub fn interaction_ops(sys: &CollapseSystem, grid: &TimeGrid) -> Result<InteractionOps> {
    InteractionOps::new(sys, grid)
}

/// Noise-independent memory operators `Mem_j(n)` and drift generators `B_n`.
#[derive(Debug, Clone)]
pub struct MemoryTable {
    channels: usize,
    mem: Vec<Operator>,
    drift: Vec<Operator>,
}

impl MemoryTable {
    /// Accumulates the memory integral through per-mode cosine and sine
    /// running sums, using `cos(w (t_n - t_m)) = cos w t_n cos w t_m + sin w t_n sin w t_m`.
    pub fn new(iops: &InteractionOps, md: &ModeDecomposition, gamma: f64) -> Result<Self> {
        let d = iops.channels;
        if md.channels() != d {
            return Err(Error::shape(format!(
                "kernel has {} channels, system has {d} collapse operators",
                md.channels()
            )));
        }
        let grid = iops.grid;
        let dt = grid.dt();
        let dim = iops.dim();
        let modes = md.modes();
        let zero = Operator::zeros(dim);
        let mut cos_sum = vec![zero.clone(); modes * d];
        let mut sin_sum = vec![zero.clone(); modes * d];
        let mut mem = Vec::with_capacity(grid.len() * d);
        let mut drift = Vec::with_capacity(grid.len());
        for n in 0..grid.len() {
            let t = grid.t(n);
            let mut mem_n = vec![zero.clone(); d];
            for (m, &w) in md.omegas().iter().enumerate() {
                let (s, c) = libm::sincos(w * t);
                let g = md.mode_weight(m);
                for k in 0..d {
                    // Trapezoid half weight at the current time.
                    let mut ck = cos_sum[m * d + k].clone();
                    ck.add_scaled(C64::new(0.5 * dt * c, 0.0), iops.get(n, k));
                    let mut sk = sin_sum[m * d + k].clone();
                    sk.add_scaled(C64::new(0.5 * dt * s, 0.0), iops.get(n, k));
                    for (j, mj) in mem_n.iter_mut().enumerate() {
                        let gjk = g[j * d + k];
                        if gjk != 0.0 {
                            mj.add_scaled(C64::new(gjk * c, 0.0), &ck);
                            mj.add_scaled(C64::new(gjk * s, 0.0), &sk);
                        }
                    }
                    cos_sum[m * d + k].add_scaled(C64::new(dt * c, 0.0), iops.get(n, k));
                    sin_sum[m * d + k].add_scaled(C64::new(dt * s, 0.0), iops.get(n, k));
                }
            }
            let mut b = zero.clone();
            for (j, mj) in mem_n.iter().enumerate() {
                b.add_scaled(C64::new(-2.0 * gamma * dt, 0.0), &iops.get(n, j).matmul(mj));
            }
            drift.push(b);
            mem.extend(mem_n);
        }
        Ok(Self { channels: d, mem, drift })
    }

    /// `Mem_j(n)`.
    #[inline]
    pub fn memory(&self, n: usize, j: usize) -> &Operator {
        &self.mem[n * self.channels + j]
    }

    /// `B_n`.
    #[inline]
    pub fn drift(&self, n: usize) -> &Operator {
        &self.drift[n]
    }
}

/// Unnormalized states of the linear equation and their squared norms.
#[derive(Debug, Clone)]
pub struct LinearTrajectory {
    pub grid: TimeGrid,
    pub states: Vec<PureState>,
    pub norms_sqr: Vec<f64>,
}

/// `||phi(t_n)||^2`, the density of the physical measure with respect to
/// the noise measure up to time `t_n`.
pub fn measure_weight(traj: &LinearTrajectory, n: usize) -> f64 {
    traj.norms_sqr[n]
}

/// Step propagator of the linear equation for one system, kernel and grid.
#[derive(Debug, Clone)]
pub struct LinearPropagator {
    gamma: f64,
    grid: TimeGrid,
    iops: InteractionOps,
    memory: MemoryTable,
    lags: LagTable,
}

/// Per-worker buffers for [`LinearPropagator`].
#[derive(Debug, Clone)]
pub struct Workspace {
    generator: Operator,
    taylor: TaylorScratch,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        Self { generator: Operator::zeros(dim), taylor: TaylorScratch::new(dim) }
    }
}

impl LinearPropagator {
    pub fn new(sys: &CollapseSystem, md: &ModeDecomposition, grid: &TimeGrid) -> Result<Self> {
        let iops = InteractionOps::new(sys, grid)?;
        let memory = MemoryTable::new(&iops, md, sys.gamma())?;
        Ok(Self { gamma: sys.gamma(), grid: *grid, iops, memory, lags: LagTable::new(md, grid) })
    }

    #[inline]
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.iops.dim()
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.iops.channels
    }

    #[inline]
    pub fn interaction_ops(&self) -> &InteractionOps {
        &self.iops
    }

    #[inline]
    pub fn memory(&self) -> &MemoryTable {
        &self.memory
    }

    #[inline]
    pub fn lags(&self) -> &LagTable {
        &self.lags
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(self.dim())
    }

    fn check_noise(&self, w: &NoiseTrajectory) -> Result<()> {
        self.grid.ensure_matches(w.grid())?;
        if w.channels() != self.channels() {
            return Err(Error::shape(format!(
                "noise has {} channels, system has {}",
                w.channels(),
                self.channels()
            )));
        }
        Ok(())
    }

    fn check_initial(&self, psi0: &PureState) -> Result<()> {
        if psi0.dim() != self.dim() {
            return Err(Error::shape("initial state and system dimensions differ"));
        }
        if (psi0.norm_sqr() - 1.0).abs() > 1e-8 {
            return Err(Error::invalid("initial state must have unit norm"));
        }
        Ok(())
    }

    /// `v <- exp(G_n) v` for the noise values `w_n` at `t_n`.
    pub fn step(&self, n: usize, w_n: &[f64], v: &mut [C64], ws: &mut Workspace) -> Result<()> {
        let dt = self.grid.dt();
        let sg = libm::sqrt(self.gamma);
        let g = ws.generator.data_mut();
        g.copy_from_slice(self.memory.drift(n).entries());
        for (k, &wk) in w_n.iter().enumerate() {
            let c = sg * dt * wk;
            if c != 0.0 {
                for (x, a) in g.iter_mut().zip(self.iops.get(n, k).entries()) {
                    *x += a * c;
                }
            }
        }
        let bound = ws.generator.norm_one();
        let gen = &ws.generator;
        exp_action(|x, y| gen.apply_into(x, y), bound, v, &mut ws.taylor)?;
        Ok(())
    }

    /// Amplitudes of `phi(t_end)` under noise `w`.
    pub fn propagate_to(&self, w: &NoiseTrajectory, psi0: &PureState, end: usize, ws: &mut Workspace) -> Result<Vec<C64>> {
        let mut v = psi0.amplitudes().to_vec();
        for n in 0..end {
            self.step(n, w.at(n), &mut v, ws)?;
        }
        Ok(v)
    }

    /// Full linear trajectory under noise `w`.
    pub fn propagate(&self, w: &NoiseTrajectory, psi0: &PureState) -> Result<LinearTrajectory> {
        self.check_noise(w)?;
        self.check_initial(psi0)?;
        let mut ws = self.workspace();
        let mut v = psi0.amplitudes().to_vec();
        let mut states = Vec::with_capacity(self.grid.len());
        let mut norms_sqr = Vec::with_capacity(self.grid.len());
        for n in 0..self.grid.len() {
            let s = PureState::new(v.clone())?;
            norms_sqr.push(s.norm_sqr());
            states.push(s);
            if n < self.grid.steps() {
                self.step(n, w.at(n), &mut v, &mut ws)?;
            }
        }
        Ok(LinearTrajectory { grid: self.grid, states, norms_sqr })
    }

    /// Discrete functional derivative `d phi(t) / d w_k(s)`: propagate to
    /// `s`, apply `sqrt(gamma) A_k(s)`, then continue with the same step
    /// generators up to `t`.
    pub fn fd_insertion(&self, w: &NoiseTrajectory, psi0: &PureState, s: usize, k: usize, t: usize) -> Result<PureState> {
        self.check_noise(w)?;
        self.check_initial(psi0)?;
        if s > t {
            return Err(Error::invalid("the state at t does not depend on noise at s > t"));
        }
        if t > self.grid.steps() || k >= self.channels() {
            return Err(Error::invalid("insertion point outside the grid or channel range"));
        }
        let mut ws = self.workspace();
        let v = self.propagate_to(w, psi0, s, &mut ws)?;
        let mut u = vec![C64::new(0.0, 0.0); v.len()];
        self.iops.get(s, k).apply_into(&v, &mut u);
        let sg = libm::sqrt(self.gamma);
        u.iter_mut().for_each(|x| *x *= sg);
        for n in s..t {
            self.step(n, w.at(n), &mut u, &mut ws)?;
        }
        PureState::new(u)
    }

    /// `w_k(t_v) += 2 sqrt(gamma) dt sum_j D~_jk(t_n - t_v) <A_j>` for every
    /// grid point `v`.
    pub fn redefine_noise_step(&self, w: &mut NoiseTrajectory, expect: &[f64], n: usize) -> Result<()> {
        redefine_in_place(w, &self.lags, self.gamma, expect, n)
    }

    /// Normalized trajectory of the nonlinear equation: at each `t_n`
    /// re-propagate from `0` under the current noise `w^[t_n]`, normalize,
    /// record `<A_k>`, then redefine the noise with those expectations.
    pub fn nonlinear_trajectory(&self, w0: &NoiseTrajectory, psi0: &PureState) -> Result<PhysicalTrajectory> {
        self.nonlinear_inner(w0, psi0, false)
    }

    /// As [`LinearPropagator::nonlinear_trajectory`], also keeping every
    /// intermediate noise field `w^[t_n]`.
    pub fn nonlinear_trajectory_recording(&self, w0: &NoiseTrajectory, psi0: &PureState) -> Result<PhysicalTrajectory> {
        self.nonlinear_inner(w0, psi0, true)
    }

    fn nonlinear_inner(&self, w0: &NoiseTrajectory, psi0: &PureState, record: bool) -> Result<PhysicalTrajectory> {
        self.check_noise(w0)?;
        self.check_initial(psi0)?;
        let d = self.channels();
        let mut ws = self.workspace();
        let mut w = w0.clone();
        let len = self.grid.len();
        let mut states = Vec::with_capacity(len);
        let mut expectations = Vec::with_capacity(len * d);
        let mut linear_norms = Vec::with_capacity(len);
        let mut snapshots = Vec::new();
        let mut expect = vec![0.0; d];
        for n in 0..len {
            let v = self.propagate_to(&w, psi0, n, &mut ws)?;
            let n2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            if !(n2 > 0.0 && n2.is_finite()) {
                return Err(Error::DegenerateState);
            }
            let inv = 1.0 / libm::sqrt(n2);
            let psi: Vec<C64> = v.iter().map(|z| z * inv).collect();
            for (k, e) in expect.iter_mut().enumerate() {
                *e = self.iops.get(n, k).sandwich(&psi, &psi).re;
            }
            expectations.extend_from_slice(&expect);
            linear_norms.push(n2);
            states.push(PureState::from_amplitudes_unchecked(psi));
            if record {
                snapshots.push(w.clone());
            }
            if n + 1 < len {
                self.redefine_noise_step(&mut w, &expect, n)?;
            }
        }
        Ok(PhysicalTrajectory {
            grid: self.grid,
            channels: d,
            states,
            expectations,
            linear_norms,
            final_noise: w,
            snapshots,
        })
    }
}

fn redefine_in_place(w: &mut NoiseTrajectory, lags: &LagTable, gamma: f64, expect: &[f64], n: usize) -> Result<()> {
    let d = w.channels();
    if expect.len() != d || lags.channels() != d {
        return Err(Error::shape(format!("{} expectations for {d} channels", expect.len())));
    }
    if n >= w.grid().len() {
        return Err(Error::invalid("redefinition time is off the grid"));
    }
    let c = 2.0 * libm::sqrt(gamma) * w.grid().dt();
    if c == 0.0 || expect.iter().all(|&e| e == 0.0) {
        return Ok(());
    }
    let len = w.grid().len();
    let values = w.values_mut();
    for v in 0..len {
        let lag = n.abs_diff(v);
        for k in 0..d {
            let shift: f64 = (0..d).map(|j| lags.get(lag, j, k) * expect[j]).sum();
            values[v * d + k] += c * shift;
        }
    }
    Ok(())
}

/// One rectangle of the noise redefinition applied at grid time `t_n`,
/// returning the new noise.
pub fn redefine_noise_step(
    w: &NoiseTrajectory,
    md: &ModeDecomposition,
    gamma: f64,
    expect: &[f64],
    n: usize,
) -> Result<NoiseTrajectory> {
    let mut out = w.clone();
    redefine_in_place(&mut out, &LagTable::new(md, w.grid()), gamma, expect, n)?;
    Ok(out)
}

/// Normalized collapse trajectory together with the running noise.
#[derive(Debug, Clone)]
pub struct PhysicalTrajectory {
    pub grid: TimeGrid,
    pub channels: usize,
    /// Unit-norm interaction-picture states.
    pub states: Vec<PureState>,
    /// `expectations[n * D + k] = <A_k>` at `t_n`.
    pub expectations: Vec<f64>,
    /// `||phi(t_n)||^2` of the linear state under `w^[t_n]`.
    pub linear_norms: Vec<f64>,
    /// `w^[T]`, the noise used for the final state.
    pub final_noise: NoiseTrajectory,
    /// `w^[t_n]` for every `n`, when recorded.
    pub snapshots: Vec<NoiseTrajectory>,
}

/// Convenience wrapper building the propagator on the noise grid.
pub fn nonlinear_trajectory(
    sys: &CollapseSystem,
    md: &ModeDecomposition,
    w0: &NoiseTrajectory,
    psi0: &PureState,
) -> Result<PhysicalTrajectory> {
    LinearPropagator::new(sys, md, w0.grid())?.nonlinear_trajectory(w0, psi0)
}

/// Convenience wrapper for a single linear trajectory.
pub fn linear_propagate(
    sys: &CollapseSystem,
    md: &ModeDecomposition,
    w: &NoiseTrajectory,
    psi0: &PureState,
) -> Result<LinearTrajectory> {
    LinearPropagator::new(sys, md, w.grid())?.propagate(w, psi0)
}

/// Noise-averaged statistics of the linear equation at selected grid points.
#[derive(Debug, Clone)]
pub struct LinearEnsemble {
    pub points: Vec<usize>,
    /// `weights[p][i] = ||phi_i(t_points[p])||^2`.
    pub weights: Vec<Vec<f64>>,
    /// `E_Q[|phi><phi|]` at each point.
    pub density: DensityEstimate,
}

impl LinearEnsemble {
    pub fn weight_estimate(&self, p: usize) -> Estimate {
        stats::mean_stderr(&self.weights[p])
    }
}

/// Average `|phi_w(t)><phi_w(t)|` over noises drawn from `source`; noise `i`
/// is draw `i` of `seed`.
pub fn run_linear_ensemble(
    prop: &LinearPropagator,
    psi0: &PureState,
    source: NoiseSource<'_>,
    points: &[usize],
    n_traj: usize,
    seed: u64,
) -> Result<LinearEnsemble> {
    if n_traj == 0 {
        return Err(Error::invalid("n_traj must be at least 1"));
    }
    if points.iter().any(|&p| p > prop.grid.steps()) {
        return Err(Error::invalid("ensemble point outside the grid"));
    }
    prop.check_initial(psi0)?;
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by_key(|&i| points[i]);
    let chunks = ensemble::chunks(n_traj);
    let results = ensemble::map_ordered(chunks.len(), |c| -> Result<_> {
        let (start, end) = chunks[c];
        let mut acc = DensityAccumulator::new(prop.dim(), points.len());
        let mut weights: Vec<Vec<f64>> = vec![Vec::with_capacity(end - start); points.len()];
        let mut ws = prop.workspace();
        for i in start..end {
            let w = source.draw(&prop.grid, seed, i as u64)?;
            prop.check_noise(&w)?;
            let mut v = psi0.amplitudes().to_vec();
            let mut at = 0;
            for &p in &order {
                while at < points[p] {
                    prop.step(at, w.at(at), &mut v, &mut ws)?;
                    at += 1;
                }
                acc.add(p, &v, 1.0);
                weights[p].push(v.iter().map(|z| z.norm_sqr()).sum());
            }
            acc.finish_trajectory();
        }
        Ok((acc, weights))
    });
    let mut total = DensityAccumulator::new(prop.dim(), points.len());
    let mut weights = vec![Vec::with_capacity(n_traj); points.len()];
    for r in results {
        let (acc, w) = r?;
        total.merge(&acc);
        for (dst, src) in weights.iter_mut().zip(w) {
            dst.extend(src);
        }
    }
    Ok(LinearEnsemble { points: points.to_vec(), weights, density: total.estimate() })
}

/// Test functionals of the noise at grid points for the change-of-measure
/// identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseFunctional {
    One,
    /// `w_k(t_n)`.
    Linear { n: usize, k: usize },
    /// `w_k1(t_n1) w_k2(t_n2)`.
    Quadratic { n1: usize, k1: usize, n2: usize, k2: usize },
}

impl NoiseFunctional {
    pub fn eval(&self, w: &NoiseTrajectory) -> f64 {
        match *self {
            NoiseFunctional::One => 1.0,
            NoiseFunctional::Linear { n, k } => w.get(n, k),
            NoiseFunctional::Quadratic { n1, k1, n2, k2 } => w.get(n1, k1) * w.get(n2, k2),
        }
    }
}

/// Both sides of `E_Q[f(w^[t])] = E_Q[f(w) ||phi_w(t)||^2]` over the same
/// noises, with the z-score of their paired difference.
#[derive(Debug, Clone, Copy)]
pub struct GirsanovReport {
    pub shifted: Estimate,
    pub weighted: Estimate,
    pub z_score: f64,
}

/// Monte Carlo check of the change-of-measure identity at grid time `t`
/// (index). Noise `i` is draw `i` of `seed` from the mode decomposition.
pub fn girsanov_check(
    prop: &LinearPropagator,
    md: &ModeDecomposition,
    psi0: &PureState,
    f: NoiseFunctional,
    t: usize,
    n_traj: usize,
    seed: u64,
) -> Result<GirsanovReport> {
    if t > prop.grid.steps() {
        return Err(Error::invalid("check time outside the grid"));
    }
    if n_traj < 2 {
        return Err(Error::invalid("girsanov_check needs at least two trajectories"));
    }
    let pairs = ensemble::map_ordered(n_traj, |i| -> Result<(f64, f64)> {
        let w = NoiseSource::Modes(md).draw(&prop.grid, seed, i as u64)?;
        let mut ws = prop.workspace();
        let v = prop.propagate_to(&w, psi0, t, &mut ws)?;
        let weight: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let shifted = shifted_noise(prop, &w, psi0, t, &mut ws)?;
        Ok((f.eval(&shifted), f.eval(&w) * weight))
    });
    let mut lhs = Vec::with_capacity(n_traj);
    let mut rhs = Vec::with_capacity(n_traj);
    for p in pairs {
        let (a, b) = p?;
        lhs.push(a);
        rhs.push(b);
    }
    Ok(GirsanovReport {
        shifted: stats::mean_stderr(&lhs),
        weighted: stats::mean_stderr(&rhs),
        z_score: stats::paired_z(&lhs, &rhs),
    })
}

/// `w^[t_end]`: run the nonlinear recursion up to `t_end` and return the
/// noise it has built.
fn shifted_noise(
    prop: &LinearPropagator,
    w0: &NoiseTrajectory,
    psi0: &PureState,
    end: usize,
    ws: &mut Workspace,
) -> Result<NoiseTrajectory> {
    let d = prop.channels();
    let mut w = w0.clone();
    let mut expect = vec![0.0; d];
    for n in 0..end {
        let v = prop.propagate_to(&w, psi0, n, ws)?;
        let n2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if !(n2 > 0.0 && n2.is_finite()) {
            return Err(Error::DegenerateState);
        }
        for (k, e) in expect.iter_mut().enumerate() {
            *e = prop.iops.get(n, k).sandwich(&v, &v).re / n2;
        }
        prop.redefine_noise_step(&mut w, &expect, n)?;
    }
    Ok(w)
}

#[cfg(test)]
mod tests;
