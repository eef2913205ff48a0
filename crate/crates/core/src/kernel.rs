//! Stationary noise kernels `D_jk(t - s)`, their spectral densities and their
//! factorization into a finite set of oscillator modes.
//!
//! Matrices are `D x D`, real, row-major `Vec<f64>`. A [`ModeDecomposition`]
//! stores the couplings as `kappa[m][k][l]`: mode `m`, channel `k`, bath
//! index `l`. The bath index runs over as many values as there are channels,
//! so every mode carries a square coupling matrix.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use crate::quantum::eigen;
use crate::{Error, Result, TimeGrid};

/// Clamping tolerance for the PSD square root of spectral matrices.
const SQRT_CLAMP: f64 = 1e-10;
/// Tolerance on negative eigenvalues of sampled block covariances.
const BLOCK_PSD_TOL: f64 = 1e-8;

/// One discrete line `G cos(omega tau)` of a cosine-sum kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineLine {
    pub weight: Vec<f64>,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelForm {
    /// `D(tau) = sum_m G_m cos(omega_m tau)`.
    CosineSum(Vec<CosineLine>),
    /// `D(tau) = a exp(-|tau| / tau_c)`.
    ExponentialDecay { amplitude: Vec<f64>, tau_c: f64 },
    /// Band-limited delta: `D(tau) = d sin(cutoff tau) / (pi tau)`, flat
    /// spectrum `d / pi` below the cutoff.
    WhiteApprox { diffusion: Vec<f64>, cutoff: f64 },
    /// Samples `D(tau_i)` on an ascending grid starting at `tau = 0`,
    /// linearly interpolated and zero beyond the last point.
    GridTabulated { tau: Vec<f64>, samples: Vec<Vec<f64>> },
}

/// A validated stationary kernel with `channels` noise components.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryKernel {
    channels: usize,
    form: KernelForm,
}

fn check_matrix(name: &str, d: usize, m: &[f64]) -> Result<()> {
    if m.len() != d * d {
        return Err(Error::shape(format!("{name}: expected {} entries, got {}", d * d, m.len())));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("{name}: non-finite entry")));
    }
    for i in 0..d {
        for j in 0..i {
            let (a, b) = (m[i * d + j], m[j * d + i]);
            if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                return Err(Error::invalid(format!("{name}: channel matrix must be symmetric")));
            }
        }
    }
    Ok(())
}

fn check_psd_matrix(d: usize, m: &[f64]) -> Result<()> {
    let eig = eigen::symmetric_eigen(d, m);
    eigen::check_psd(&eig.values, BLOCK_PSD_TOL)
}

impl StationaryKernel {
    /// Validate shapes, channel symmetry and positive semi-definiteness.
    /// Tabulated kernels are checked through the block covariance on their own
    /// grid; the other forms are PSD exactly when their matrices are.
    pub fn new(channels: usize, form: KernelForm) -> Result<Self> {
        if channels == 0 {
            return Err(Error::invalid("kernel needs at least one channel"));
        }
        let d = channels;
        match &form {
            KernelForm::CosineSum(lines) => {
                if lines.is_empty() {
                    return Err(Error::invalid("cosine sum needs at least one line"));
                }
                for (i, line) in lines.iter().enumerate() {
                    check_matrix(&format!("line {i} weight"), d, &line.weight)?;
                    if !(line.omega.is_finite() && line.omega >= 0.0) {
                        return Err(Error::invalid(format!("line {i}: frequency must be >= 0")));
                    }
                    check_psd_matrix(d, &line.weight)?;
                }
            }
            KernelForm::ExponentialDecay { amplitude, tau_c } => {
                check_matrix("amplitude", d, amplitude)?;
                if !(tau_c.is_finite() && *tau_c > 0.0) {
                    return Err(Error::invalid("correlation time must be positive"));
                }
                check_psd_matrix(d, amplitude)?;
            }
            KernelForm::WhiteApprox { diffusion, cutoff } => {
                check_matrix("diffusion", d, diffusion)?;
                if !(cutoff.is_finite() && *cutoff > 0.0) {
                    return Err(Error::invalid("cutoff must be positive"));
                }
                check_psd_matrix(d, diffusion)?;
            }
            KernelForm::GridTabulated { tau, samples } => {
                if tau.len() < 2 || tau.len() != samples.len() {
                    return Err(Error::shape("tabulated kernel needs matching tau and sample lists of length >= 2"));
                }
                if tau[0] != 0.0 || tau.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::invalid("tau grid must start at 0 and increase strictly"));
                }
                for (i, s) in samples.iter().enumerate() {
                    check_matrix(&format!("sample {i}"), d, s)?;
                }
            }
        }
        let kernel = Self { channels, form };
        if let KernelForm::GridTabulated { tau, .. } = &kernel.form {
            let h = tau[1] - tau[0];
            let uniform = tau.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h);
            if uniform {
                let n = tau.len().min(256);
                kernel.check_psd_on(&TimeGrid::new(h, n - 1)?)?;
            }
        }
        Ok(kernel)
    }

    /// Scalar kernel `amplitude * exp(-|tau| / tau_c)`.
    pub fn exponential(amplitude: f64, tau_c: f64) -> Result<Self> {
        Self::new(1, KernelForm::ExponentialDecay { amplitude: vec![amplitude], tau_c })
    }

    /// Scalar single-line kernel `weight * cos(omega tau)`.
    pub fn single_line(weight: f64, omega: f64) -> Result<Self> {
        Self::new(1, KernelForm::CosineSum(vec![CosineLine { weight: vec![weight], omega }]))
    }

    /// Scalar band-limited white kernel.
    pub fn white(diffusion: f64, cutoff: f64) -> Result<Self> {
        Self::new(1, KernelForm::WhiteApprox { diffusion: vec![diffusion], cutoff })
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn form(&self) -> &KernelForm {
        &self.form
    }

    /// `D(tau)` as a `D x D` matrix.
    pub fn value(&self, tau: f64) -> Vec<f64> {
        let d = self.channels;
        match &self.form {
            KernelForm::CosineSum(lines) => {
                let mut out = vec![0.0; d * d];
                for line in lines {
                    let c = libm::cos(line.omega * tau);
                    for (o, g) in out.iter_mut().zip(&line.weight) {
                        *o += g * c;
                    }
                }
                out
            }
            KernelForm::ExponentialDecay { amplitude, tau_c } => {
                let f = libm::exp(-tau.abs() / tau_c);
                amplitude.iter().map(|a| a * f).collect()
            }
            KernelForm::WhiteApprox { diffusion, cutoff } => {
                let f = if tau == 0.0 {
                    cutoff / PI
                } else {
                    libm::sin(cutoff * tau) / (PI * tau)
                };
                diffusion.iter().map(|a| a * f).collect()
            }
            KernelForm::GridTabulated { tau: grid, samples } => {
                let x = tau.abs();
                let last = grid.len() - 1;
                if x > grid[last] {
                    return vec![0.0; d * d];
                }
                let i = grid.partition_point(|&g| g <= x).clamp(1, last);
                let (t0, t1) = (grid[i - 1], grid[i]);
                let w = (x - t0) / (t1 - t0);
                let mut out: Vec<f64> =
                    samples[i - 1].iter().zip(&samples[i]).map(|(a, b)| a * (1.0 - w) + b * w).collect();
                if tau < 0.0 {
                    transpose_in_place(d, &mut out);
                }
                out
            }
        }
    }

    /// Verify positive semi-definiteness of the block covariance
    /// `C[(n, j), (n', k)] = D_jk(t_n - t_n')` on `grid`.
    pub fn check_psd_on(&self, grid: &TimeGrid) -> Result<()> {
        let cov = block_covariance(self.channels, grid, |tau| self.value(tau));
        let eig = eigen::symmetric_eigen(self.channels * grid.len(), &cov);
        eigen::check_psd(&eig.values, BLOCK_PSD_TOL)
    }
}

fn transpose_in_place(d: usize, m: &mut [f64]) {
    for i in 0..d {
        for j in 0..i {
            m.swap(i * d + j, j * d + i);
        }
    }
}

/// Dense block covariance over a time grid, indexed `(n * D + j, n' * D + k)`.
pub(crate) fn block_covariance(d: usize, grid: &TimeGrid, value: impl Fn(f64) -> Vec<f64>) -> Vec<f64> {
    let n = grid.len();
    let size = n * d;
    let lags: Vec<Vec<f64>> = (0..n).map(|l| value(grid.t(l))).collect();
    let mut cov = vec![0.0; size * size];
    for a in 0..n {
        for b in 0..n {
            let (lag, flip) = if a >= b { (a - b, false) } else { (b - a, true) };
            let m = &lags[lag];
            for j in 0..d {
                for k in 0..d {
                    // D(t_a - t_b); negative lags are the transpose.
                    let v = if flip { m[k * d + j] } else { m[j * d + k] };
                    cov[(a * d + j) * size + b * d + k] = v;
                }
            }
        }
    }
    cov
}

/// `S(omega)` with `D(tau) = int_0^inf S(omega) cos(omega tau) d omega`,
/// rejected when not positive semi-definite within `1e-10`.
pub fn spectral_density(kernel: &StationaryKernel, omega: f64) -> Result<Vec<f64>> {
    let s = spectral_density_unchecked(kernel, omega)?;
    let d = kernel.channels;
    let eig = eigen::symmetric_eigen(d, &s);
    if let Some(&min) = eig.values.first() {
        if min < -SQRT_CLAMP {
            return Err(Error::NotPositiveSemiDefinite { min_eigenvalue: min });
        }
    }
    Ok(s)
}

/// The cosine transform without the positivity check. Truncated tabulated
/// kernels ring below zero away from their spectral peaks; this exposes the
/// raw estimate for inspection.
pub fn spectral_density_unchecked(kernel: &StationaryKernel, omega: f64) -> Result<Vec<f64>> {
    if !(omega.is_finite() && omega >= 0.0) {
        return Err(Error::invalid("frequency must be finite and >= 0"));
    }
    let d = kernel.channels;
    Ok(match &kernel.form {
        KernelForm::CosineSum(_) => return Err(Error::UseModeListDirectly),
        KernelForm::ExponentialDecay { amplitude, tau_c } => {
            let f = (2.0 / PI) * tau_c / (1.0 + omega * omega * tau_c * tau_c);
            amplitude.iter().map(|a| a * f).collect()
        }
        KernelForm::WhiteApprox { diffusion, cutoff } => {
            let f = if omega < *cutoff { 1.0 / PI } else { 0.0 };
            diffusion.iter().map(|a| a * f).collect()
        }
        KernelForm::GridTabulated { tau, samples } => {
            let mut out = vec![0.0; d * d];
            for i in 0..tau.len() - 1 {
                let h = tau[i + 1] - tau[i];
                let (c0, c1) = (libm::cos(omega * tau[i]), libm::cos(omega * tau[i + 1]));
                for (o, (a, b)) in out.iter_mut().zip(samples[i].iter().zip(&samples[i + 1])) {
                    *o += 0.5 * h * (a * c0 + b * c1);
                }
            }
            let mut s: Vec<f64> = out.iter().map(|x| x * 2.0 / PI).collect();
            for i in 0..d {
                for j in 0..i {
                    let avg = 0.5 * (s[i * d + j] + s[j * d + i]);
                    s[i * d + j] = avg;
                    s[j * d + i] = avg;
                }
            }
            s
        }
    })
}

/// Finite oscillator-mode factorization of a stationary kernel:
/// `D~_jk(tau) = sum_{l,m} kappa[m][j][l] kappa[m][k][l] cos(omega_m tau)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeDecomposition {
    channels: usize,
    omega: Vec<f64>,
    kappa: Vec<f64>,
    gram: Vec<f64>,
    d_omega: Option<f64>,
}

impl ModeDecomposition {
    /// Build from frequencies and couplings `kappa[m][k][l]` (flattened).
    pub fn new(channels: usize, omega: Vec<f64>, kappa: Vec<f64>, d_omega: Option<f64>) -> Result<Self> {
        let d = channels;
        if d == 0 || omega.is_empty() {
            return Err(Error::invalid("mode decomposition needs channels and modes"));
        }
        if kappa.len() != omega.len() * d * d {
            return Err(Error::shape(format!(
                "expected {} couplings for {} modes and {d} channels, got {}",
                omega.len() * d * d,
                omega.len(),
                kappa.len()
            )));
        }
        if omega.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("mode frequencies must be finite and >= 0"));
        }
        if kappa.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("couplings must be finite"));
        }
        let mut gram = vec![0.0; kappa.len()];
        for m in 0..omega.len() {
            let k = &kappa[m * d * d..(m + 1) * d * d];
            let g = &mut gram[m * d * d..(m + 1) * d * d];
            for i in 0..d {
                for j in 0..d {
                    g[i * d + j] = (0..d).map(|l| k[i * d + l] * k[j * d + l]).sum();
                }
            }
        }
        Ok(Self { channels, omega, kappa, gram, d_omega })
    }

    /// Scalar single mode `kappa cos(omega tau)` weight `kappa^2`.
    pub fn single(kappa: f64, omega: f64) -> Result<Self> {
        Self::new(1, vec![omega], vec![kappa], None)
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn modes(&self) -> usize {
        self.omega.len()
    }

    #[inline]
    pub fn omegas(&self) -> &[f64] {
        &self.omega
    }

    /// Frequency spacing of a midpoint grid; `None` for discrete lines.
    pub fn d_omega(&self) -> Option<f64> {
        self.d_omega
    }

    /// Flattened `kappa[m][k][l]`.
    #[inline]
    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    /// `kappa[m][k][l]`.
    #[inline]
    pub fn coupling(&self, m: usize, k: usize, l: usize) -> f64 {
        let d = self.channels;
        self.kappa[(m * d + k) * d + l]
    }

    /// `G_m = kappa_m kappa_m^T`, the weight of mode `m`.
    #[inline]
    pub fn mode_weight(&self, m: usize) -> &[f64] {
        let dd = self.channels * self.channels;
        &self.gram[m * dd..(m + 1) * dd]
    }

    /// Number of `(l, m)` pairs, each of which carries two oscillators.
    pub fn pairs(&self) -> usize {
        self.channels * self.modes()
    }
}

/// Factorize a kernel into `modes` oscillator modes on the midpoint grid
/// `omega_m = (m + 1/2) omega_max / modes`. Cosine sums map one mode per
/// line with `kappa = G^(1/2)` and ignore `modes` and `omega_max`.
pub fn factorize(kernel: &StationaryKernel, modes: usize, omega_max: f64) -> Result<ModeDecomposition> {
    let d = kernel.channels;
    if let KernelForm::CosineSum(lines) = &kernel.form {
        let mut omega = Vec::with_capacity(lines.len());
        let mut kappa = Vec::with_capacity(lines.len() * d * d);
        for line in lines {
            omega.push(line.omega);
            kappa.extend(eigen::psd_sqrt(d, &line.weight, SQRT_CLAMP)?);
        }
        return ModeDecomposition::new(d, omega, kappa, None);
    }
    if modes == 0 {
        return Err(Error::invalid("mode count must be at least 1"));
    }
    if !(omega_max.is_finite() && omega_max > 0.0) {
        return Err(Error::invalid("omega_max must be positive"));
    }
    let dw = omega_max / modes as f64;
    let mut omega = Vec::with_capacity(modes);
    let mut kappa = Vec::with_capacity(modes * d * d);
    for m in 0..modes {
        let w = (m as f64 + 0.5) * dw;
        let s = spectral_density(kernel, w)?;
        let root = eigen::psd_sqrt(d, &s, SQRT_CLAMP)?;
        let sdw = libm::sqrt(dw);
        omega.push(w);
        kappa.extend(root.iter().map(|x| x * sdw));
    }
    ModeDecomposition::new(d, omega, kappa, Some(dw))
}

/// `D~(tau)` of a mode decomposition; even in `tau`.
pub fn reconstruct(md: &ModeDecomposition, tau: f64) -> Vec<f64> {
    let dd = md.channels * md.channels;
    let mut out = vec![0.0; dd];
    for (m, &w) in md.omega.iter().enumerate() {
        let c = libm::cos(w * tau);
        for (o, g) in out.iter_mut().zip(md.mode_weight(m)) {
            *o += g * c;
        }
    }
    out
}

/// `D~(n dt)` for every lag on a grid, flattened `[lag][j][k]`.
#[derive(Debug, Clone)]
pub struct LagTable {
    channels: usize,
    values: Vec<f64>,
}

impl LagTable {
    pub fn new(md: &ModeDecomposition, grid: &TimeGrid) -> Self {
        let mut values = Vec::with_capacity(grid.len() * md.channels * md.channels);
        for n in 0..grid.len() {
            values.extend(reconstruct(md, grid.t(n)));
        }
        Self { channels: md.channels, values }
    }

    /// `D~_jk(lag dt)`; the table is symmetric in the channels and even in
    /// the lag.
    #[inline]
    pub fn get(&self, lag: usize, j: usize, k: usize) -> f64 {
        let d = self.channels;
        self.values[(lag * d + j) * d + k]
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }
}

/// Source of a double integral: an exact kernel or its mode approximation.
#[derive(Debug, Clone, Copy)]
pub enum KernelRef<'a> {
    Kernel(&'a StationaryKernel),
    Modes(&'a ModeDecomposition),
}

impl<'a> From<&'a StationaryKernel> for KernelRef<'a> {
    fn from(k: &'a StationaryKernel) -> Self {
        KernelRef::Kernel(k)
    }
}

impl<'a> From<&'a ModeDecomposition> for KernelRef<'a> {
    fn from(m: &'a ModeDecomposition) -> Self {
        KernelRef::Modes(m)
    }
}

/// `2 (1 - cos(w t)) / w^2`, the double integral of `cos(w (u - v))` over
/// the square `[0, t]^2`.
fn line_double_integral(w: f64, t: f64) -> f64 {
    let x = w * t;
    if x.abs() < 1e-4 {
        // Series of 2(1 - cos x)/x^2 avoids cancellation.
        t * t * (1.0 - x * x / 12.0 + x * x * x * x / 360.0)
    } else {
        let s = libm::sin(0.5 * x);
        // 2(1 - cos x) = 4 sin^2(x/2)
        4.0 * s * s / (w * w)
    }
}

/// `F_jk(t) = int_0^t int_0^t D_jk(u - v) du dv`.
pub fn double_integral<'a>(source: impl Into<KernelRef<'a>>, t: f64) -> Result<Vec<f64>> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::invalid("double integral needs t >= 0"));
    }
    Ok(match source.into() {
        KernelRef::Modes(md) => {
            let dd = md.channels * md.channels;
            let mut out = vec![0.0; dd];
            for (m, &w) in md.omega.iter().enumerate() {
                let f = line_double_integral(w, t);
                for (o, g) in out.iter_mut().zip(md.mode_weight(m)) {
                    *o += g * f;
                }
            }
            out
        }
        KernelRef::Kernel(k) => match &k.form {
            KernelForm::CosineSum(lines) => {
                let mut out = vec![0.0; k.channels * k.channels];
                for line in lines {
                    let f = line_double_integral(line.omega, t);
                    for (o, g) in out.iter_mut().zip(&line.weight) {
                        *o += g * f;
                    }
                }
                out
            }
            KernelForm::ExponentialDecay { amplitude, tau_c } => {
                let f = 2.0 * tau_c * (t - tau_c * -libm::expm1(-t / tau_c));
                amplitude.iter().map(|a| a * f).collect()
            }
            KernelForm::WhiteApprox { diffusion, cutoff } => {
                let x = cutoff * t;
                let f = (2.0 / PI) * (t * sine_integral(x) - (1.0 - libm::cos(x)) / cutoff);
                diffusion.iter().map(|a| a * f).collect()
            }
            KernelForm::GridTabulated { .. } => tabulated_double_integral(k, t),
        },
    })
}

/// `F(t) = int_0^t (t - tau) (D(tau) + D(tau)^T) d tau` by composite
/// Gauss-Legendre on the tabulation intervals.
fn tabulated_double_integral(k: &StationaryKernel, t: f64) -> Vec<f64> {
    let d = k.channels;
    let KernelForm::GridTabulated { tau, .. } = &k.form else { unreachable!() };
    let mut breaks: Vec<f64> = tau.iter().copied().filter(|&x| x < t).collect();
    breaks.push(t);
    let mut out = vec![0.0; d * d];
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for (&x, &wt) in GL8_NODES.iter().zip(&GL8_WEIGHTS) {
            for s in [-1.0, 1.0] {
                let u = mid + s * x * half;
                let v = k.value(u);
                for i in 0..d {
                    for j in 0..d {
                        out[i * d + j] += wt * half * (t - u) * (v[i * d + j] + v[j * d + i]);
                    }
                }
            }
        }
    }
    out
}

const GL8_NODES: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
const GL8_WEIGHTS: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];

/// Sine integral `Si(x) = int_0^x sin(u)/u du`.
pub fn sine_integral(x: f64) -> f64 {
    if x < 0.0 {
        return -sine_integral(-x);
    }
    if x > 1e4 {
        let (s, c) = (libm::sin(x), libm::cos(x));
        let x2 = x * x;
        return FRAC_PI_2 - c / x * (1.0 - 2.0 / x2 + 24.0 / (x2 * x2)) - s / x2 * (1.0 - 6.0 / x2);
    }
    let panels = libm::ceil(x).max(1.0) as usize;
    let h = x / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        for (&n, &w) in GL8_NODES.iter().zip(&GL8_WEIGHTS) {
            for s in [-1.0, 1.0] {
                let u = mid + s * n * 0.5 * h;
                acc += w * 0.5 * h * sinc(u);
            }
        }
    }
    acc
}

#[inline]
fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-8 {
        1.0 - u * u / 6.0
    } else {
        libm::sin(u) / u
    }
}

/// `sup_{tau in taus} max_jk |D~_jk(tau) - D_jk(tau)|`.
pub fn reconstruction_error(kernel: &StationaryKernel, md: &ModeDecomposition, taus: &[f64]) -> f64 {
    taus.iter()
        .map(|&tau| {
            reconstruct(md, tau)
                .iter()
                .zip(kernel.value(tau))
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        })
        .fold(0.0, f64::max)
}
