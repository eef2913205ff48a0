//! Gaussian noise fields: Born-rule hidden variables, the linear map from
//! hidden variables to the noise, a dense-covariance sampler and covariance
//! estimation.
//!
//! Hidden variables are indexed by the pair `p = l * M + m` (bath index `l`,
//! mode `m`). Noise values are stored time-major: `values[n * D + k]`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::kernel::{self, ModeDecomposition, StationaryKernel};
use crate::quantum::eigen;
use crate::{rng, Error, Result, TimeGrid};

const DENSE_PSD_TOL: f64 = 1e-8;

/// Quadratures `x+` and `x-` of every bath mode pair.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenVariables {
    pub xplus: Vec<f64>,
    pub xminus: Vec<f64>,
}

impl HiddenVariables {
    pub fn new(xplus: Vec<f64>, xminus: Vec<f64>) -> Result<Self> {
        if xplus.len() != xminus.len() {
            return Err(Error::shape("x+ and x- have different lengths"));
        }
        if xplus.iter().chain(&xminus).any(|x| !x.is_finite()) {
            return Err(Error::invalid("hidden variables must be finite"));
        }
        Ok(Self { xplus, xminus })
    }

    pub fn zeros(pairs: usize) -> Self {
        Self { xplus: vec![0.0; pairs], xminus: vec![0.0; pairs] }
    }

    #[inline]
    pub fn pairs(&self) -> usize {
        self.xplus.len()
    }

    fn ensure_fits(&self, md: &ModeDecomposition) -> Result<()> {
        if self.pairs() != md.pairs() {
            return Err(Error::shape(format!(
                "{} hidden-variable pairs for a decomposition with {} pairs",
                self.pairs(),
                md.pairs()
            )));
        }
        Ok(())
    }
}

/// Draw every quadrature independently from the vacuum position law,
/// Gaussian with mean 0 and variance 1/2.
pub fn sample_hidden<R: Rng + ?Sized>(md: &ModeDecomposition, rng: &mut R) -> HiddenVariables {
    let s = core::f64::consts::FRAC_1_SQRT_2;
    let n = md.pairs();
    let xplus = (0..n).map(|_| s * rng::standard_normal(rng)).collect();
    let xminus = (0..n).map(|_| s * rng::standard_normal(rng)).collect();
    HiddenVariables { xplus, xminus }
}

/// [`sample_hidden`] on stream `index` of `seed`.
pub fn sample_hidden_seeded(md: &ModeDecomposition, seed: u64, index: u64) -> HiddenVariables {
    sample_hidden(md, &mut rng::stream(seed, index))
}

/// Vector noise sampled on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrajectory {
    grid: TimeGrid,
    channels: usize,
    values: Vec<f64>,
}

impl NoiseTrajectory {
    /// `values[n * channels + k] = w_k(t_n)`.
    pub fn new(grid: TimeGrid, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || values.len() != grid.len() * channels {
            return Err(Error::shape(format!(
                "expected {} noise values for {} grid points and {channels} channels, got {}",
                grid.len() * channels,
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("noise values must be finite"));
        }
        Ok(Self { grid, channels, values })
    }

    pub fn zeros(grid: TimeGrid, channels: usize) -> Self {
        Self { grid, channels, values: vec![0.0; grid.len() * channels] }
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
    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.values[n * self.channels + k]
    }

    #[inline]
    pub fn at(&self, n: usize) -> &[f64] {
        &self.values[n * self.channels..(n + 1) * self.channels]
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// `w_k(s) = sqrt(2) sum_{l,m} kappa[m][k][l] (cos(omega_m s) x+_{l,m} + sin(omega_m s) x-_{l,m})`.
pub fn noise_at(x: &HiddenVariables, md: &ModeDecomposition, s: f64) -> Result<Vec<f64>> {
    x.ensure_fits(md)?;
    let mut w = vec![0.0; md.channels()];
    accumulate_noise(x, md, s, &mut w);
    Ok(w)
}

fn accumulate_noise(x: &HiddenVariables, md: &ModeDecomposition, s: f64, w: &mut [f64]) {
    let d = md.channels();
    let modes = md.modes();
    let r2 = core::f64::consts::SQRT_2;
    for (m, &om) in md.omegas().iter().enumerate() {
        let (sn, cs) = libm::sincos(om * s);
        for l in 0..d {
            let p = l * modes + m;
            let q = r2 * (cs * x.xplus[p] + sn * x.xminus[p]);
            for (k, wk) in w.iter_mut().enumerate() {
                *wk += md.coupling(m, k, l) * q;
            }
        }
    }
}

/// The noise field generated by hidden variables, sampled on `grid`.
pub fn noise_from_hidden(x: &HiddenVariables, md: &ModeDecomposition, grid: &TimeGrid) -> Result<NoiseTrajectory> {
    x.ensure_fits(md)?;
    let d = md.channels();
    let mut values = vec![0.0; grid.len() * d];
    for n in 0..grid.len() {
        accumulate_noise(x, md, grid.t(n), &mut values[n * d..(n + 1) * d]);
    }
    Ok(NoiseTrajectory { grid: *grid, channels: d, values })
}

/// Samples `N(0, C)` for the block covariance of a kernel on a grid through
/// a dense eigen-factorization `C = L L^T`. Only the columns of `L` with
/// nonzero weight are kept.
#[derive(Debug, Clone)]
pub struct DenseNoiseSampler {
    grid: TimeGrid,
    channels: usize,
    rank: usize,
    /// `size x rank`, row-major.
    factor: Vec<f64>,
}

impl DenseNoiseSampler {
    /// Covariance `D_jk(t_n - t_n')` of an exact kernel.
    pub fn from_kernel(k: &StationaryKernel, grid: &TimeGrid) -> Result<Self> {
        Self::build(k.channels(), grid, kernel::block_covariance(k.channels(), grid, |t| k.value(t)))
    }

    /// Covariance `D~_jk(t_n - t_n')` of a mode decomposition.
    pub fn from_modes(md: &ModeDecomposition, grid: &TimeGrid) -> Result<Self> {
        let cov = kernel::block_covariance(md.channels(), grid, |t| kernel::reconstruct(md, t));
        Self::build(md.channels(), grid, cov)
    }

    fn build(channels: usize, grid: &TimeGrid, cov: Vec<f64>) -> Result<Self> {
        let size = channels * grid.len();
        let l = eigen::psd_factor(size, &cov, DENSE_PSD_TOL)?;
        let keep: Vec<usize> = (0..size).filter(|&c| (0..size).any(|r| l[r * size + c] != 0.0)).collect();
        let rank = keep.len();
        let mut factor = vec![0.0; size * rank];
        for r in 0..size {
            for (j, &c) in keep.iter().enumerate() {
                factor[r * rank + j] = l[r * size + c];
            }
        }
        Ok(Self { grid: *grid, channels, rank, factor })
    }

    /// Numerical rank of the covariance.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> NoiseTrajectory {
        let z: Vec<f64> = (0..self.rank).map(|_| rng::standard_normal(rng)).collect();
        let values = self
            .factor
            .chunks_exact(self.rank.max(1))
            .map(|row| row.iter().zip(&z).map(|(a, b)| a * b).sum())
            .collect::<Vec<f64>>();
        let values = if self.rank == 0 { vec![0.0; self.grid.len() * self.channels] } else { values };
        NoiseTrajectory { grid: self.grid, channels: self.channels, values }
    }
}

/// One draw from the dense Gaussian with the kernel's covariance on `grid`.
pub fn sample_noise_dense(k: &StationaryKernel, grid: &TimeGrid, seed: u64) -> Result<NoiseTrajectory> {
    Ok(DenseNoiseSampler::from_kernel(k, grid)?.sample(&mut rng::stream(seed, 0)))
}

/// Where ensemble noises come from: Born-sampled hidden variables of a mode
/// decomposition, or a dense Gaussian sampler.
#[derive(Debug, Clone, Copy)]
pub enum NoiseSource<'a> {
    Modes(&'a ModeDecomposition),
    Dense(&'a DenseNoiseSampler),
}

impl NoiseSource<'_> {
    /// Draw number `index` of the ensemble keyed by `seed`.
    pub fn draw(&self, grid: &TimeGrid, seed: u64, index: u64) -> Result<NoiseTrajectory> {
        match self {
            NoiseSource::Modes(md) => noise_from_hidden(&sample_hidden_seeded(md, seed, index), md, grid),
            NoiseSource::Dense(s) => {
                s.grid.ensure_matches(grid)?;
                Ok(s.sample(&mut rng::stream(seed, index)))
            }
        }
    }
}

/// Empirical mean and covariance of noise trajectories over the flattened
/// index `n * D + k`, with per-entry standard errors.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub size: usize,
    pub samples: usize,
    pub mean: Vec<f64>,
    /// `size x size`, row-major.
    pub covariance: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl CovarianceEstimate {
    #[inline]
    pub fn cov(&self, a: usize, b: usize) -> f64 {
        self.covariance[a * self.size + b]
    }

    #[inline]
    pub fn err(&self, a: usize, b: usize) -> f64 {
        self.stderr[a * self.size + b]
    }
}

/// Plug-in covariance `(1/n) sum (x - mean)(x - mean)^T`. The standard error
/// of each entry is the sample standard deviation of the centered products
/// over `sqrt(n)`.
pub fn estimate_covariance(trajs: &[NoiseTrajectory]) -> Result<CovarianceEstimate> {
    if trajs.len() < 2 {
        return Err(Error::invalid("covariance estimation needs at least two trajectories"));
    }
    let first = &trajs[0];
    for t in &trajs[1..] {
        first.grid.ensure_matches(&t.grid)?;
        if t.channels != first.channels {
            return Err(Error::shape("trajectories have different channel counts"));
        }
    }
    let size = first.values.len();
    let n = trajs.len() as f64;
    let mut mean = vec![0.0; size];
    for t in trajs {
        for (m, v) in mean.iter_mut().zip(&t.values) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut sum = vec![0.0; size * size];
    let mut sum_sq = vec![0.0; size * size];
    let mut centered = vec![0.0; size];
    for t in trajs {
        for ((c, v), m) in centered.iter_mut().zip(&t.values).zip(&mean) {
            *c = v - m;
        }
        for a in 0..size {
            let ca = centered[a];
            let row = a * size;
            for b in a..size {
                let p = ca * centered[b];
                sum[row + b] += p;
                sum_sq[row + b] += p * p;
            }
        }
    }
    let mut covariance = vec![0.0; size * size];
    let mut stderr = vec![0.0; size * size];
    for a in 0..size {
        for b in a..size {
            let i = a * size + b;
            let c = sum[i] / n;
            let var = ((sum_sq[i] / n - c * c) * n / (n - 1.0)).max(0.0);
            let e = libm::sqrt(var / n);
            covariance[i] = c;
            covariance[b * size + a] = c;
            stderr[i] = e;
            stderr[b * size + a] = e;
        }
    }
    Ok(CovarianceEstimate { size, samples: trajs.len(), mean, covariance, stderr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::factorize;
    use crate::stats;

    fn two_channel_modes() -> ModeDecomposition {
        ModeDecomposition::new(2, vec![0.7, 2.1], vec![0.8, 0.1, -0.2, 0.5, 0.3, 0.0, 0.4, 0.6], None).unwrap()
    }

    #[test]
    fn hidden_variance_is_one_half() {
        let md = ModeDecomposition::single(1.0, 1.0).unwrap();
        let mut r = rng::stream(17, 0);
        let mut xs = Vec::with_capacity(100_000);
        let mut prod = Vec::with_capacity(100_000);
        for _ in 0..100_000 {
            let h = sample_hidden(&md, &mut r);
            xs.push(h.xplus[0] * h.xplus[0]);
            prod.push(h.xplus[0] * h.xminus[0]);
        }
        let var = stats::mean_stderr(&xs).mean;
        assert!((var - 0.5).abs() < 0.005, "variance {var}");
        assert!(stats::mean_stderr(&prod).z_score(0.0) < 3.0);
    }

    #[test]
    fn hidden_sampling_is_deterministic() {
        let md = two_channel_modes();
        assert_eq!(sample_hidden_seeded(&md, 5, 3), sample_hidden_seeded(&md, 5, 3));
        assert_ne!(sample_hidden_seeded(&md, 5, 3), sample_hidden_seeded(&md, 5, 4));
    }

    #[test]
    fn zero_hidden_variables_give_zero_noise() {
        let md = two_channel_modes();
        let grid = TimeGrid::new(0.1, 20).unwrap();
        let w = noise_from_hidden(&HiddenVariables::zeros(md.pairs()), &md, &grid).unwrap();
        assert!(w.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_mode_noise_is_a_cosine() {
        let om = 1.7;
        let md = ModeDecomposition::single(1.0, om).unwrap();
        let grid = TimeGrid::new(0.05, 40).unwrap();
        let x = HiddenVariables::new(vec![1.0], vec![0.0]).unwrap();
        let w = noise_from_hidden(&x, &md, &grid).unwrap();
        for n in 0..grid.len() {
            let expected = core::f64::consts::SQRT_2 * libm::cos(om * grid.t(n));
            assert!((w.get(n, 0) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn noise_rejects_shape_mismatch() {
        let md = two_channel_modes();
        let grid = TimeGrid::new(0.1, 3).unwrap();
        assert!(matches!(
            noise_from_hidden(&HiddenVariables::zeros(3), &md, &grid),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn noise_is_linear_in_hidden_variables() {
        let md = two_channel_modes();
        let grid = TimeGrid::new(0.1, 30).unwrap();
        let x1 = sample_hidden_seeded(&md, 1, 0);
        let x2 = sample_hidden_seeded(&md, 2, 0);
        let (a, b) = (0.75, -1.5);
        let combo = HiddenVariables::new(
            x1.xplus.iter().zip(&x2.xplus).map(|(p, q)| a * p + b * q).collect(),
            x1.xminus.iter().zip(&x2.xminus).map(|(p, q)| a * p + b * q).collect(),
        )
        .unwrap();
        let w1 = noise_from_hidden(&x1, &md, &grid).unwrap();
        let w2 = noise_from_hidden(&x2, &md, &grid).unwrap();
        let w = noise_from_hidden(&combo, &md, &grid).unwrap();
        for i in 0..w.values().len() {
            let expected = a * w1.values()[i] + b * w2.values()[i];
            assert!((w.values()[i] - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn mode_noise_covariance_matches_reconstruction() {
        let md = two_channel_modes();
        let grid = TimeGrid::new(0.3, 7).unwrap();
        let trajs: Vec<NoiseTrajectory> = (0..4000)
            .map(|i| noise_from_hidden(&sample_hidden_seeded(&md, 99, i), &md, &grid).unwrap())
            .collect();
        let est = estimate_covariance(&trajs).unwrap();
        let d = 2;
        let mut worst: f64 = 0.0;
        for a in 0..est.size {
            for b in 0..est.size {
                let (na, j) = (a / d, a % d);
                let (nb, k) = (b / d, b % d);
                let target = kernel::reconstruct(&md, grid.t(na) - grid.t(nb))[j * d + k];
                worst = worst.max((est.cov(a, b) - target).abs() / est.err(a, b));
            }
        }
        assert!(worst < 5.0, "max z {worst}");
    }

    #[test]
    fn dense_sampler_matches_kernel_covariance() {
        let k = StationaryKernel::exponential(1.0, 0.5).unwrap();
        let grid = TimeGrid::new(0.2, 9).unwrap();
        let sampler = DenseNoiseSampler::from_kernel(&k, &grid).unwrap();
        let mut r = rng::stream(4, 0);
        let trajs: Vec<NoiseTrajectory> = (0..4000).map(|_| sampler.sample(&mut r)).collect();
        let est = estimate_covariance(&trajs).unwrap();
        for a in 0..est.size {
            for b in 0..est.size {
                let target = k.value(grid.t(a) - grid.t(b))[0];
                assert!((est.cov(a, b) - target).abs() < 5.0 * est.err(a, b));
            }
        }
    }

    #[test]
    fn dense_white_samples_are_uncorrelated() {
        // Nyquist cutoff: sin(pi n)/(pi n dt) vanishes at every nonzero lag.
        let dt = 1e-3;
        let k = StationaryKernel::white(1.0, core::f64::consts::PI / dt).unwrap();
        let grid = TimeGrid::new(dt, 5).unwrap();
        let sampler = DenseNoiseSampler::from_kernel(&k, &grid).unwrap();
        let mut r = rng::stream(8, 0);
        let trajs: Vec<NoiseTrajectory> = (0..3000).map(|_| sampler.sample(&mut r)).collect();
        let est = estimate_covariance(&trajs).unwrap();
        for a in 0..est.size {
            for b in 0..a {
                assert!(est.cov(a, b).abs() < 5.0 * est.err(a, b));
            }
        }
    }

    #[test]
    fn dense_and_mode_samplers_agree_in_law() {
        let k = StationaryKernel::exponential(1.0, 1.0).unwrap();
        let md = factorize(&k, 256, 64.0).unwrap();
        let grid = TimeGrid::new(0.25, 8).unwrap();
        let sampler = DenseNoiseSampler::from_modes(&md, &grid).unwrap();
        let mut r = rng::stream(12, 0);
        let dense: Vec<NoiseTrajectory> = (0..3000).map(|_| sampler.sample(&mut r)).collect();
        let modes: Vec<NoiseTrajectory> = (0..3000)
            .map(|i| noise_from_hidden(&sample_hidden_seeded(&md, 13, i), &md, &grid).unwrap())
            .collect();
        for n in [1, 6] {
            let a: Vec<f64> = dense.iter().map(|w| w.get(n, 0)).collect();
            let b: Vec<f64> = modes.iter().map(|w| w.get(n, 0)).collect();
            assert!(stats::ks_two_sample(&a, &b).p_value > 0.01);
        }
    }

    #[test]
    fn covariance_examples() {
        let grid = TimeGrid::new(1.0, 1).unwrap();
        let c = NoiseTrajectory::new(grid, 1, vec![2.0, 2.0]).unwrap();
        let est = estimate_covariance(&[c.clone(), c.clone(), c]).unwrap();
        assert!(est.covariance.iter().all(|&x| x == 0.0));
        let p = NoiseTrajectory::new(grid, 1, vec![3.0, 3.0]).unwrap();
        let m = NoiseTrajectory::new(grid, 1, vec![-3.0, -3.0]).unwrap();
        let est = estimate_covariance(&[p, m]).unwrap();
        assert_eq!(est.mean, vec![0.0, 0.0]);
        assert_eq!(est.cov(0, 0), 9.0);
        assert_eq!(est.cov(0, 1), 9.0);
    }

    #[test]
    fn covariance_of_known_variance() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let mut r = rng::stream(21, 0);
        let s = libm::sqrt(2.0);
        let trajs: Vec<NoiseTrajectory> = (0..5000)
            .map(|_| NoiseTrajectory::new(grid, 1, (0..3).map(|_| s * rng::standard_normal(&mut r)).collect()).unwrap())
            .collect();
        let est = estimate_covariance(&trajs).unwrap();
        for a in 0..3 {
            assert!((est.cov(a, a) - 2.0).abs() < 5.0 * est.err(a, a));
        }
    }

    #[test]
    fn covariance_requires_common_grid() {
        let a = NoiseTrajectory::zeros(TimeGrid::new(0.1, 3).unwrap(), 1);
        let b = NoiseTrajectory::zeros(TimeGrid::new(0.2, 3).unwrap(), 1);
        assert!(matches!(estimate_covariance(&[a.clone(), b]), Err(Error::GridMismatch)));
        assert!(estimate_covariance(&[a]).is_err());
    }
}
