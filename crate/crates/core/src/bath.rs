//! Joint system and bath evolution with Bohmian hidden variables for the
//! bath quadratures.
//!
//! Each mode pair `(l, m)` carries two unit oscillators `x+` and `x-` with no
//! free Hamiltonian, so in the bath interaction picture
//!
//! ```text
//! H(t) = H_sys + sqrt(2 gamma) sum_k A_k sum_{l,m} kappa[m][k][l] (cos(w_m t) p+_{lm} + sin(w_m t) p-_{lm})
//! ```
//!
//! Oscillator `o = (l * M + m) * 2 + s` with `s = 0` for `x+` and `s = 1` for
//! `x-`. Each oscillator is truncated to Fock levels `0..n_max`. Joint
//! amplitudes are indexed `s * B + b`, where the bath index `b` has oscillator
//! `0` as its most significant digit in base `n_max`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::ensemble;
use crate::kernel::ModeDecomposition;
use crate::markov::CollapseSystem;
use crate::noise::{noise_from_hidden, sample_hidden_seeded, HiddenVariables, NoiseTrajectory};
use crate::quantum::{exp_action, MixedState, Operator, PureState, TaylorScratch, DEFAULT_DIM_CAP};
use crate::stats::{DensityAccumulator, DensityEstimate};
use crate::{Error, Result, TimeGrid, C64};

/// Default cap on the joint dimension.
pub const DEFAULT_JOINT_CAP: usize = 1 << 22;

/// Population of a top Fock level above which results are flagged.
pub const TRUNCATION_WARNING: f64 = 1e-6;

const FRAC_PI_POW_QUARTER: f64 = 0.751_125_544_464_942_5;

/// Bath discretization: the mode decomposition and the Fock truncation.
#[derive(Debug, Clone)]
pub struct BathConfig {
    md: ModeDecomposition,
    n_max: usize,
    cap: usize,
}

impl BathConfig {
    pub fn new(md: ModeDecomposition, n_max: usize) -> Result<Self> {
        Self::with_cap(md, n_max, DEFAULT_JOINT_CAP)
    }

    pub fn with_cap(md: ModeDecomposition, n_max: usize, cap: usize) -> Result<Self> {
        if n_max < 2 {
            return Err(Error::invalid("n_max must be at least 2"));
        }
        let bc = Self { md, n_max, cap };
        bc.bath_dim()?;
        Ok(bc)
    }

    #[inline]
    pub fn modes(&self) -> &ModeDecomposition {
        &self.md
    }

    #[inline]
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// `2 D M`.
    #[inline]
    pub fn oscillators(&self) -> usize {
        2 * self.md.pairs()
    }

    /// Oscillator index of quadrature `sign` (0 for `x+`, 1 for `x-`) of
    /// pair `(l, m)`.
    #[inline]
    pub fn oscillator(&self, l: usize, m: usize, sign: usize) -> usize {
        (l * self.md.modes() + m) * 2 + sign
    }

    /// `n_max^(2 D M)`, checked against the cap.
    pub fn bath_dim(&self) -> Result<usize> {
        let mut b: usize = 1;
        for _ in 0..self.oscillators() {
            b = b
                .checked_mul(self.n_max)
                .filter(|&x| x <= self.cap)
                .ok_or(Error::TooLarge { dim: usize::MAX, cap: self.cap })?;
        }
        Ok(b)
    }

    /// `dim_sys * n_max^(2 D M)`, checked against the cap.
    pub fn joint_dim(&self, dim_sys: usize) -> Result<usize> {
        let b = self.bath_dim()?;
        match b.checked_mul(dim_sys) {
            Some(d) if d <= self.cap => Ok(d),
            Some(d) => Err(Error::TooLarge { dim: d, cap: self.cap }),
            None => Err(Error::TooLarge { dim: usize::MAX, cap: self.cap }),
        }
    }
}

/// `<n|p|n+1> = -i sqrt((n+1)/2)`, `<n+1|p|n> = i sqrt((n+1)/2)`.
pub fn momentum_matrix(n_max: usize) -> Operator {
    let mut data = vec![C64::new(0.0, 0.0); n_max * n_max];
    for n in 0..n_max - 1 {
        let r = libm::sqrt((n + 1) as f64 / 2.0);
        data[n * n_max + n + 1] = C64::new(0.0, -r);
        data[(n + 1) * n_max + n] = C64::new(0.0, r);
    }
    Operator::from_parts_unchecked(n_max, data, true)
}

/// `<n|x|n+1> = <n+1|x|n> = sqrt((n+1)/2)`.
pub fn position_matrix(n_max: usize) -> Operator {
    let mut data = vec![C64::new(0.0, 0.0); n_max * n_max];
    for n in 0..n_max - 1 {
        let r = libm::sqrt((n + 1) as f64 / 2.0);
        data[n * n_max + n + 1] = C64::new(r, 0.0);
        data[(n + 1) * n_max + n] = C64::new(r, 0.0);
    }
    Operator::from_parts_unchecked(n_max, data, true)
}

/// Normalized oscillator eigenfunction `phi_n(x)`.
pub fn hermite_point(n: usize, x: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = FRAC_PI_POW_QUARTER * libm::exp(-0.5 * x * x);
    for k in 0..n {
        let kf = k as f64;
        let next = libm::sqrt(2.0 / (kf + 1.0)) * x * cur - libm::sqrt(kf / (kf + 1.0)) * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `phi_n(x) / phi_0(x)` for `n < n_max`, by the same recurrence.
pub fn hermite_ratios(n_max: usize, x: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if n_max > 1 {
        out[1] = core::f64::consts::SQRT_2 * x;
    }
    for k in 1..n_max.saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] = libm::sqrt(2.0 / (kf + 1.0)) * x * out[k] - libm::sqrt(kf / (kf + 1.0)) * out[k - 1];
    }
}

/// Joint system and bath amplitudes in the bath interaction picture.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    dim_sys: usize,
    n_max: usize,
    oscillators: usize,
    bath_dim: usize,
    t: f64,
    amps: Vec<C64>,
}

impl JointState {
    /// `psi0 ⊗ |0...0>` at time zero.
    pub fn vacuum(psi0: &PureState, bc: &BathConfig) -> Result<Self> {
        let dim = bc.joint_dim(psi0.dim())?;
        let bath_dim = dim / psi0.dim();
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        for (s, a) in psi0.amplitudes().iter().enumerate() {
            amps[s * bath_dim] = *a;
        }
        Ok(Self { dim_sys: psi0.dim(), n_max: bc.n_max, oscillators: bc.oscillators(), bath_dim, t: 0.0, amps })
    }

    /// Wrap raw amplitudes with the layout of `bc`.
    pub fn from_amplitudes(bc: &BathConfig, dim_sys: usize, t: f64, amps: Vec<C64>) -> Result<Self> {
        let dim = bc.joint_dim(dim_sys)?;
        if amps.len() != dim {
            return Err(Error::shape(format!("expected {dim} joint amplitudes, got {}", amps.len())));
        }
        Ok(Self { dim_sys, n_max: bc.n_max, oscillators: bc.oscillators(), bath_dim: dim / dim_sys, t, amps })
    }

    #[inline]
    pub fn time(&self) -> f64 {
        self.t
    }

    #[inline]
    pub fn dim_sys(&self) -> usize {
        self.dim_sys
    }

    #[inline]
    pub fn bath_dim(&self) -> usize {
        self.bath_dim
    }

    #[inline]
    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    fn stride(&self, o: usize) -> usize {
        self.n_max.pow((self.oscillators - 1 - o) as u32)
    }

    /// Largest population of the top Fock level over all oscillators.
    pub fn top_population(&self) -> f64 {
        let top = self.n_max - 1;
        (0..self.oscillators)
            .map(|o| {
                let st = self.stride(o);
                self.amps
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| (i % self.bath_dim / st) % self.n_max == top)
                    .map(|(_, z)| z.norm_sqr())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Reduced density matrix of oscillator `o` in the Fock basis.
    pub fn oscillator_density(&self, o: usize) -> Result<MixedState> {
        if o >= self.oscillators {
            return Err(Error::invalid("oscillator index out of range"));
        }
        let n = self.n_max;
        let st = self.stride(o);
        let mut rho = vec![C64::new(0.0, 0.0); n * n];
        let blocks = self.amps.len() / (st * n);
        for outer in 0..blocks {
            let base = outer * st * n;
            for inner in 0..st {
                for a in 0..n {
                    let za = self.amps[base + a * st + inner];
                    if za == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for b in 0..n {
                        rho[a * n + b] += za * self.amps[base + b * st + inner].conj();
                    }
                }
            }
        }
        Ok(MixedState::from_operator_unchecked(Operator::from_parts_unchecked(n, rho, true)))
    }

    /// Born density `|<x|Psi>|^2` of the position of oscillator `o`,
    /// marginalized over everything else.
    pub fn position_marginal(&self, o: usize, x: f64) -> Result<f64> {
        let rho = self.oscillator_density(o)?;
        let phi: Vec<f64> = (0..self.n_max).map(|n| hermite_point(n, x)).collect();
        let mut p = 0.0;
        for a in 0..self.n_max {
            for b in 0..self.n_max {
                p += (rho.get(a, b) * phi[a] * phi[b]).re;
            }
        }
        Ok(p)
    }

    fn contract_with(&self, amps: &[C64], x: &HiddenVariables, buf: &mut ContractScratch) -> Result<Vec<C64>> {
        let pairs = self.oscillators / 2;
        if x.pairs() != pairs {
            return Err(Error::shape(format!(
                "{} hidden-variable pairs for a bath with {pairs} pairs",
                x.pairs()
            )));
        }
        let n = self.n_max;
        buf.weights.resize(self.oscillators * n, 0.0);
        for p in 0..pairs {
            hermite_ratios(n, x.xplus[p], &mut buf.weights[(2 * p) * n..(2 * p + 1) * n]);
            hermite_ratios(n, x.xminus[p], &mut buf.weights[(2 * p + 1) * n..(2 * p + 2) * n]);
        }
        // Contract the least significant oscillator first.
        buf.a.clear();
        buf.a.extend_from_slice(amps);
        for o in (0..self.oscillators).rev() {
            let h = &buf.weights[o * n..(o + 1) * n];
            buf.b.clear();
            for chunk in buf.a.chunks_exact(n) {
                buf.b.push(chunk.iter().zip(h).map(|(z, w)| z * *w).sum());
            }
            core::mem::swap(&mut buf.a, &mut buf.b);
        }
        Ok(buf.a.clone())
    }
}

/// Reusable buffers for conditional-state contractions.
#[derive(Debug, Clone, Default)]
pub struct ContractScratch {
    weights: Vec<f64>,
    a: Vec<C64>,
    b: Vec<C64>,
}

/// Conditional system state at a bath configuration.
#[derive(Debug, Clone)]
pub struct Conditional {
    /// `<x|Psi> / <x|0>`, unnormalized.
    pub raw: Vec<C64>,
    pub normalized: PureState,
}

/// `<x|Psi>` divided by the vacuum wave function at `x`, so that the product
/// initial state gives back `psi0` at any `x`.
pub fn conditional_state(psi: &JointState, x: &HiddenVariables) -> Result<Conditional> {
    conditional_with(psi, x, &mut ContractScratch::default())
}

fn conditional_with(psi: &JointState, x: &HiddenVariables, buf: &mut ContractScratch) -> Result<Conditional> {
    let raw = psi.contract_with(&psi.amps, x, buf)?;
    let n2: f64 = raw.iter().map(|z| z.norm_sqr()).sum();
    if !(n2 > 0.0 && n2.is_finite()) {
        return Err(Error::DegenerateState);
    }
    let inv = 1.0 / libm::sqrt(n2);
    let normalized = PureState::from_amplitudes_unchecked(raw.iter().map(|z| z * inv).collect());
    Ok(Conditional { raw, normalized })
}

/// `tr_bath |Psi><Psi|`.
pub fn trace_out_bath(psi: &JointState) -> MixedState {
    let (d, b) = (psi.dim_sys, psi.bath_dim);
    let mut rho = vec![C64::new(0.0, 0.0); d * d];
    for i in 0..d {
        for j in i..d {
            let v: C64 = psi.amps[i * b..(i + 1) * b]
                .iter()
                .zip(&psi.amps[j * b..(j + 1) * b])
                .map(|(x, y)| x * y.conj())
                .sum();
            rho[i * d + j] = v;
            rho[j * d + i] = v.conj();
        }
    }
    MixedState::from_operator_unchecked(Operator::from_parts_unchecked(d, rho, true))
}

/// Interaction-picture Hamiltonian of the joint system, applied without
/// forming the joint matrix.
#[derive(Debug, Clone)]
pub struct BathCoupling {
    dim_sys: usize,
    n_max: usize,
    oscillators: usize,
    bath_dim: usize,
    h_sys: Operator,
    omegas: Vec<f64>,
    modes: usize,
    /// `K_p = sqrt(2 gamma) sum_k kappa[m][k][l] A_k` for pair `p`.
    pair_ops: Vec<Operator>,
    p_norm: f64,
}

impl BathCoupling {
    pub fn new(bc: &BathConfig, sys: &CollapseSystem) -> Result<Self> {
        let md = &bc.md;
        if md.channels() != sys.channels() {
            return Err(Error::shape(format!(
                "kernel has {} channels, system has {} collapse operators",
                md.channels(),
                sys.channels()
            )));
        }
        let dim = bc.joint_dim(sys.dim())?;
        let d = md.channels();
        let sg = libm::sqrt(2.0 * sys.gamma());
        let mut pair_ops = Vec::with_capacity(md.pairs());
        for l in 0..d {
            for m in 0..md.modes() {
                let mut k_op = Operator::zeros(sys.dim());
                for (k, a) in sys.collapse_ops().iter().enumerate() {
                    let c = sg * md.coupling(m, k, l);
                    if c != 0.0 {
                        k_op.add_scaled(C64::new(c, 0.0), a);
                    }
                }
                pair_ops.push(k_op);
            }
        }
        let n = bc.n_max;
        let p_norm = (0..n)
            .map(|k| {
                let up = if k + 1 < n { libm::sqrt((k + 1) as f64 / 2.0) } else { 0.0 };
                let down = libm::sqrt(k as f64 / 2.0);
                up + down
            })
            .fold(0.0, f64::max);
        Ok(Self {
            dim_sys: sys.dim(),
            n_max: n,
            oscillators: bc.oscillators(),
            bath_dim: dim / sys.dim(),
            h_sys: sys.hamiltonian().clone(),
            omegas: md.omegas().to_vec(),
            modes: md.modes(),
            pair_ops,
            p_norm,
        })
    }

    #[inline]
    pub fn joint_dim(&self) -> usize {
        self.dim_sys * self.bath_dim
    }

    /// `cos(w_m t)` for `x+`, `sin(w_m t)` for `x-`.
    #[inline]
    fn trig(&self, o: usize, t: f64) -> f64 {
        let m = (o / 2) % self.modes;
        let (s, c) = libm::sincos(self.omegas[m] * t);
        if o % 2 == 0 {
            c
        } else {
            s
        }
    }

    fn stride(&self, o: usize) -> usize {
        self.n_max.pow((self.oscillators - 1 - o) as u32)
    }

    /// Upper bound on the induced 1-norm of `H(t)`.
    pub fn norm_bound(&self, t: f64) -> f64 {
        let mut b = self.h_sys.norm_one();
        for o in 0..self.oscillators {
            b += self.trig(o, t).abs() * self.pair_ops[o / 2].norm_one() * self.p_norm;
        }
        b
    }

    /// `y = H(t) x`.
    pub fn apply(&self, t: f64, x: &[C64], y: &mut [C64]) {
        let bd = self.bath_dim;
        let ds = self.dim_sys;
        y.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for s in 0..ds {
            for s2 in 0..ds {
                let h = self.h_sys.get(s, s2);
                if h != C64::new(0.0, 0.0) {
                    let (ys, xs) = (s * bd, s2 * bd);
                    for b in 0..bd {
                        y[ys + b] += h * x[xs + b];
                    }
                }
            }
        }
        for o in 0..self.oscillators {
            let f = self.trig(o, t);
            if f == 0.0 {
                continue;
            }
            let k_op = &self.pair_ops[o / 2];
            for s in 0..ds {
                for s2 in 0..ds {
                    let c = k_op.get(s, s2) * f;
                    if c != C64::new(0.0, 0.0) {
                        self.apply_momentum(o, c, &x[s2 * bd..(s2 + 1) * bd], &mut y[s * bd..(s + 1) * bd]);
                    }
                }
            }
        }
    }

    /// `y += c p_o x` on one system block.
    fn apply_momentum(&self, o: usize, c: C64, x: &[C64], y: &mut [C64]) {
        let st = self.stride(o);
        let n = self.n_max;
        let ci = c * C64::new(0.0, 1.0);
        for base in (0..x.len()).step_by(st * n) {
            for k in 0..n {
                let row = base + k * st;
                if k + 1 < n {
                    // <k|p|k+1> = -i sqrt((k+1)/2)
                    let r = libm::sqrt((k + 1) as f64 / 2.0);
                    let up = row + st;
                    for i in 0..st {
                        y[row + i] -= ci * r * x[up + i];
                    }
                }
                if k > 0 {
                    let r = libm::sqrt(k as f64 / 2.0);
                    let down = row - st;
                    for i in 0..st {
                        y[row + i] += ci * r * x[down + i];
                    }
                }
            }
        }
    }

    /// `y = x_o x` for the position of oscillator `o`.
    fn apply_position(&self, o: usize, x: &[C64], y: &mut [C64]) {
        let st = self.stride(o);
        let n = self.n_max;
        y.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for base in (0..x.len()).step_by(st * n) {
            for k in 0..n {
                let row = base + k * st;
                if k + 1 < n {
                    let r = libm::sqrt((k + 1) as f64 / 2.0);
                    for i in 0..st {
                        y[row + i] += x[row + st + i] * r;
                    }
                }
                if k > 0 {
                    let r = libm::sqrt(k as f64 / 2.0);
                    for i in 0..st {
                        y[row + i] += x[row - st + i] * r;
                    }
                }
            }
        }
    }

    /// `Psi <- exp(-i dt H(t + dt/2)) Psi`.
    pub fn evolve(&self, psi: &mut JointState, dt: f64, scratch: &mut TaylorScratch) -> Result<()> {
        if psi.amps.len() != self.joint_dim() {
            return Err(Error::shape("joint state does not match the coupling layout"));
        }
        let tm = psi.t + 0.5 * dt;
        let bound = dt * self.norm_bound(tm);
        let factor = C64::new(0.0, -dt);
        exp_action(
            |x, y| {
                self.apply(tm, x, y);
                y.iter_mut().for_each(|z| *z *= factor);
            },
            bound,
            &mut psi.amps,
            scratch,
        )?;
        psi.t += dt;
        Ok(())
    }

    /// Guiding velocities `v_o = trig_o(t) <K_p>` in the conditional state,
    /// ordered like the oscillators.
    pub fn velocities(&self, cond: &PureState, t: f64) -> Vec<f64> {
        let a = cond.amplitudes();
        let means: Vec<f64> = self.pair_ops.iter().map(|k| k.sandwich(a, a).re).collect();
        (0..self.oscillators).map(|o| self.trig(o, t) * means[o / 2]).collect()
    }
}

/// The joint interaction-picture Hamiltonian as a dense matrix, for joint
/// dimensions up to the dense operator cap.
pub fn build_interaction(bc: &BathConfig, sys: &CollapseSystem, t: f64) -> Result<Operator> {
    let coupling = BathCoupling::new(bc, sys)?;
    let dim = coupling.joint_dim();
    if dim > DEFAULT_DIM_CAP {
        return Err(Error::TooLarge { dim, cap: DEFAULT_DIM_CAP });
    }
    let mut data = vec![C64::new(0.0, 0.0); dim * dim];
    let mut e = vec![C64::new(0.0, 0.0); dim];
    let mut col = vec![C64::new(0.0, 0.0); dim];
    for j in 0..dim {
        e[j] = C64::new(1.0, 0.0);
        coupling.apply(t, &e, &mut col);
        e[j] = C64::new(0.0, 0.0);
        for i in 0..dim {
            data[i * dim + j] = col[i];
        }
    }
    Operator::hermitian(dim, data)
}

/// One midpoint step of the joint state.
pub fn evolve_joint(psi: &mut JointState, coupling: &BathCoupling, dt: f64) -> Result<()> {
    coupling.evolve(psi, dt, &mut TaylorScratch::new(psi.amps.len()))
}

/// Velocities `v+_{lm}` and `v-_{lm}` as hidden-variable arrays, from the
/// conditional expectation of the collapse operators.
pub fn guiding_velocity(psi: &JointState, x: &HiddenVariables, coupling: &BathCoupling, t: f64) -> Result<HiddenVariables> {
    let cond = conditional_state(psi, x)?;
    Ok(split_velocities(&coupling.velocities(&cond.normalized, t)))
}

/// The same velocities from `Re <Psi| P_x V_o |Psi> / <Psi| P_x |Psi>` with
/// `V_o = -i [x_o, H(t)]` built from the truncated matrices.
pub fn guiding_velocity_generic(
    psi: &JointState,
    x: &HiddenVariables,
    coupling: &BathCoupling,
    t: f64,
) -> Result<HiddenVariables> {
    let mut buf = ContractScratch::default();
    let cond = psi.contract_with(&psi.amps, x, &mut buf)?;
    let den: f64 = cond.iter().map(|z| z.norm_sqr()).sum();
    if !(den > 0.0 && den.is_finite()) {
        return Err(Error::DegenerateState);
    }
    let len = psi.amps.len();
    let bd = psi.bath_dim;
    let mut hpsi = vec![C64::new(0.0, 0.0); len];
    let mut xpsi = vec![C64::new(0.0, 0.0); len];
    let mut tmp = vec![C64::new(0.0, 0.0); len];
    coupling.apply(t, &psi.amps, &mut hpsi);
    let mut v = Vec::with_capacity(coupling.oscillators);
    for o in 0..coupling.oscillators {
        // x H Psi
        for s in 0..psi.dim_sys {
            coupling.apply_position(o, &hpsi[s * bd..(s + 1) * bd], &mut tmp[s * bd..(s + 1) * bd]);
        }
        let xh = tmp.clone();
        // H x Psi
        for s in 0..psi.dim_sys {
            coupling.apply_position(o, &psi.amps[s * bd..(s + 1) * bd], &mut xpsi[s * bd..(s + 1) * bd]);
        }
        coupling.apply(t, &xpsi, &mut tmp);
        let vpsi: Vec<C64> = xh.iter().zip(&tmp).map(|(a, b)| (a - b) * C64::new(0.0, -1.0)).collect();
        let cv = psi.contract_with(&vpsi, x, &mut buf)?;
        let num: f64 = cond.iter().zip(&cv).map(|(a, b)| (a.conj() * b).re).sum();
        v.push(num / den);
    }
    Ok(split_velocities(&v))
}

fn split_velocities(v: &[f64]) -> HiddenVariables {
    HiddenVariables {
        xplus: v.iter().step_by(2).copied().collect(),
        xminus: v.iter().skip(1).step_by(2).copied().collect(),
    }
}

fn axpy(x: &HiddenVariables, c: f64, v: &HiddenVariables) -> HiddenVariables {
    HiddenVariables {
        xplus: x.xplus.iter().zip(&v.xplus).map(|(a, b)| a + c * b).collect(),
        xminus: x.xminus.iter().zip(&v.xminus).map(|(a, b)| a + c * b).collect(),
    }
}

/// Hidden-variable path with the conditional states along it.
#[derive(Debug, Clone)]
pub struct BohmTrajectory {
    pub grid: TimeGrid,
    pub channels: usize,
    /// `x(t_n)`.
    pub x: Vec<HiddenVariables>,
    /// Normalized conditional states at `t_n`.
    pub states: Vec<PureState>,
    /// `expectations[n * D + k] = <A_k>` in the conditional state.
    pub expectations: Vec<f64>,
    /// Grid index at which the particle hit a node, if it did.
    pub aborted_at: Option<usize>,
}

impl BohmTrajectory {
    /// `w(x(t_n), .)` on the trajectory grid.
    pub fn noise_snapshot(&self, md: &ModeDecomposition, n: usize) -> Result<NoiseTrajectory> {
        noise_from_hidden(&self.x[n], md, &self.grid)
    }
}

/// Lockstep particles guided by one joint state.
#[derive(Debug, Clone)]
pub struct BohmRun {
    pub trajectories: Vec<BohmTrajectory>,
    /// Largest top-Fock-level population seen on the grid.
    pub max_top_population: f64,
    /// Largest deviation of the joint norm from one.
    pub max_norm_drift: f64,
    pub final_state: JointState,
}

impl BohmRun {
    pub fn truncation_warning(&self) -> bool {
        self.max_top_population > TRUNCATION_WARNING
    }
}

/// Integrate the joint state and every particle in `x0` over `grid`. The
/// joint state uses midpoint exponentials; the particles use the midpoint
/// rule with velocities at `t_n + dt/2` from one extra half step of the joint
/// state.
pub fn integrate_bohm_many(
    sys: &CollapseSystem,
    bc: &BathConfig,
    psi0: &PureState,
    x0: &[HiddenVariables],
    grid: &TimeGrid,
) -> Result<BohmRun> {
    if (psi0.norm_sqr() - 1.0).abs() > 1e-8 {
        return Err(Error::invalid("initial state must have unit norm"));
    }
    let coupling = BathCoupling::new(bc, sys)?;
    for x in x0 {
        if x.pairs() != bc.md.pairs() {
            return Err(Error::shape("initial hidden variables do not match the bath"));
        }
    }
    let d = sys.channels();
    let dt = grid.dt();
    let mut psi = JointState::vacuum(psi0, bc)?;
    let mut half = psi.clone();
    let mut scratch = TaylorScratch::new(psi.amps.len());
    let mut trajs: Vec<BohmTrajectory> = x0
        .iter()
        .map(|x| BohmTrajectory {
            grid: *grid,
            channels: d,
            x: vec![x.clone()],
            states: Vec::with_capacity(grid.len()),
            expectations: Vec::with_capacity(grid.len() * d),
            aborted_at: None,
        })
        .collect();
    let mut max_top = psi.top_population();
    let mut max_drift: f64 = 0.0;
    for n in 0..grid.len() {
        let t = grid.t(n);
        let last = n == grid.steps();
        if !last {
            half.amps.copy_from_slice(&psi.amps);
            half.t = psi.t;
            coupling.evolve(&mut half, 0.5 * dt, &mut scratch)?;
        }
        let results = ensemble::map_ordered(trajs.len(), |i| -> Option<(PureState, Vec<f64>, Option<HiddenVariables>)> {
            let tr = &trajs[i];
            if tr.aborted_at.is_some() {
                return None;
            }
            let mut buf = ContractScratch::default();
            let x = &tr.x[n];
            let cond = conditional_with(&psi, x, &mut buf).ok()?;
            let a = cond.normalized.amplitudes();
            let expect: Vec<f64> = sys.collapse_ops().iter().map(|op| op.sandwich(a, a).re).collect();
            if last {
                return Some((cond.normalized, expect, None));
            }
            let v0 = split_velocities(&coupling.velocities(&cond.normalized, t));
            let xm = axpy(x, 0.5 * dt, &v0);
            let Ok(cm) = conditional_with(&half, &xm, &mut buf) else {
                return Some((cond.normalized, expect, None));
            };
            let vm = split_velocities(&coupling.velocities(&cm.normalized, t + 0.5 * dt));
            Some((cond.normalized, expect, Some(axpy(x, dt, &vm))))
        });
        for (tr, r) in trajs.iter_mut().zip(results) {
            if tr.aborted_at.is_some() {
                continue;
            }
            match r {
                None => tr.aborted_at = Some(n),
                Some((state, expect, next)) => {
                    tr.states.push(state);
                    tr.expectations.extend(expect);
                    match next {
                        Some(x) => tr.x.push(x),
                        None if !last => tr.aborted_at = Some(n),
                        None => {}
                    }
                }
            }
        }
        if !last {
            coupling.evolve(&mut psi, dt, &mut scratch)?;
            max_top = max_top.max(psi.top_population());
            max_drift = max_drift.max((psi.norm_sqr() - 1.0).abs());
        }
    }
    Ok(BohmRun { trajectories: trajs, max_top_population: max_top, max_norm_drift: max_drift, final_state: psi })
}

/// Single-particle version of [`integrate_bohm_many`]; a node aborts with
/// [`Error::DegenerateState`].
pub fn integrate_bohm(
    sys: &CollapseSystem,
    bc: &BathConfig,
    psi0: &PureState,
    x0: &HiddenVariables,
    grid: &TimeGrid,
) -> Result<BohmTrajectory> {
    let run = integrate_bohm_many(sys, bc, psi0, core::slice::from_ref(x0), grid)?;
    let tr = run.trajectories.into_iter().next().expect("one trajectory");
    match tr.aborted_at {
        Some(_) => Err(Error::DegenerateState),
        None => Ok(tr),
    }
}

/// `E[|psi_x><psi_x|]` over vacuum-distributed `x` with the unnormalized
/// conditional states, which weights each sample by its Born density
/// relative to the vacuum.
pub fn conditional_projector_average(
    psi: &JointState,
    md: &ModeDecomposition,
    samples: usize,
    seed: u64,
) -> Result<DensityEstimate> {
    if samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let chunks = ensemble::chunks(samples);
    let parts = ensemble::map_ordered(chunks.len(), |c| -> Result<DensityAccumulator> {
        let (start, end) = chunks[c];
        let mut acc = DensityAccumulator::new(psi.dim_sys, 1);
        let mut buf = ContractScratch::default();
        for i in start..end {
            let x = sample_hidden_seeded(md, seed, i as u64);
            let raw = psi.contract_with(&psi.amps, &x, &mut buf)?;
            acc.add(0, &raw, 1.0);
            acc.finish_trajectory();
        }
        Ok(acc)
    });
    let mut total = DensityAccumulator::new(psi.dim_sys, 1);
    for p in parts {
        total.merge(&p?);
    }
    Ok(total.estimate())
}
