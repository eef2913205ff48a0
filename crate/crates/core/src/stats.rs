//! Small statistical helpers for Monte Carlo checks.

use alloc::vec;
use alloc::vec::Vec;

use crate::quantum::{MixedState, Operator};
use crate::C64;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    /// `|mean - target| / stderr`; infinite when the standard error vanishes
    /// and the mean differs from the target.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if self.stderr > 0.0 {
            d / self.stderr
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Mean and standard error (unbiased variance) of `xs`, summed in order.
pub fn mean_stderr(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate { mean: f64::NAN, stderr: f64::NAN, n };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Estimate { mean, stderr: f64::INFINITY, n };
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    Estimate { mean, stderr: libm::sqrt(var / n as f64), n }
}

/// z-score of the difference of two paired samples `a_i - b_i`.
pub fn paired_z(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    mean_stderr(&diff).z_score(0.0)
}

/// Two-sample Kolmogorov–Smirnov statistic and its asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = libm::sqrt(ne);
    // Stephens' small-sample correction of the Kolmogorov argument.
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    KsResult { statistic: d, p_value: kolmogorov_q(lambda) }
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut xs = xs.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sq = libm::sqrt(n);
    KsResult { statistic: d, p_value: kolmogorov_q((sq + 0.12 + 0.11 / sq) * d) }
}

/// `Q(l) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 l^2)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = libm::exp(-2.0 * kf * kf * lambda * lambda);
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Number of binomial standard deviations between `successes / n` and `p`.
pub fn binomial_z(successes: usize, n: usize, p: f64) -> f64 {
    let sigma = libm::sqrt(p * (1.0 - p) / n as f64);
    let d = (successes as f64 / n as f64 - p).abs();
    if sigma > 0.0 {
        d / sigma
    } else if d == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Running sums of projectors `w |a><a|` at a fixed set of time points.
#[derive(Debug, Clone)]
pub struct DensityAccumulator {
    dim: usize,
    points: usize,
    count: usize,
    sum: Vec<C64>,
    sq: Vec<f64>,
}

impl DensityAccumulator {
    pub fn new(dim: usize, points: usize) -> Self {
        Self {
            dim,
            points,
            count: 0,
            sum: vec![C64::new(0.0, 0.0); dim * dim * points],
            sq: vec![0.0; dim * dim * points],
        }
    }

    /// Add `weight |a><a|` at time point `point`.
    pub fn add(&mut self, point: usize, amps: &[C64], weight: f64) {
        let n = self.dim;
        let base = point * n * n;
        for i in 0..n {
            for j in 0..n {
                let v = amps[i] * amps[j].conj() * weight;
                self.sum[base + i * n + j] += v;
                self.sq[base + i * n + j] += v.norm_sqr();
            }
        }
    }

    /// Count one more trajectory. Call once per trajectory after its points
    /// have been added.
    pub fn finish_trajectory(&mut self) {
        self.count += 1;
    }

    pub fn merge(&mut self, other: &DensityAccumulator) {
        assert_eq!((self.dim, self.points), (other.dim, other.points), "accumulator shapes differ");
        self.count += other.count;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sq.iter_mut().zip(&other.sq) {
            *a += b;
        }
    }

    pub fn estimate(&self) -> DensityEstimate {
        let n = self.count.max(1) as f64;
        let dd = self.dim * self.dim;
        let mut mean = Vec::with_capacity(self.points);
        let mut stderr = Vec::with_capacity(self.points);
        for p in 0..self.points {
            let s = &self.sum[p * dd..(p + 1) * dd];
            let q = &self.sq[p * dd..(p + 1) * dd];
            let m: Vec<C64> = s.iter().map(|z| z / n).collect();
            let e: Vec<f64> = m
                .iter()
                .zip(q)
                .map(|(mz, qz)| {
                    let var = ((qz / n - mz.norm_sqr()) * n / (n - 1.0).max(1.0)).max(0.0);
                    libm::sqrt(var / n)
                })
                .collect();
            // Sums of projectors are Hermitian to the last bit.
            let op = Operator::from_parts_unchecked(self.dim, m, true);
            mean.push(MixedState::from_operator_unchecked(op));
            stderr.push(e);
        }
        DensityEstimate { samples: self.count, mean, stderr }
    }
}

/// Ensemble-averaged density matrices with per-entry standard errors.
#[derive(Debug, Clone)]
pub struct DensityEstimate {
    pub samples: usize,
    pub mean: Vec<MixedState>,
    /// Standard error of `|rho_ij|` per time point, row-major.
    pub stderr: Vec<Vec<f64>>,
}

impl DensityEstimate {
    /// Standard error of the trace distance to a fixed state, from the
    /// Frobenius norm of the entry errors (exact scaling for a qubit).
    pub fn trace_distance_stderr(&self, point: usize) -> f64 {
        libm::sqrt(self.stderr[point].iter().map(|e| e * e).sum::<f64>() / 2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn mean_and_stderr_of_small_sample() {
        let e = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        // unbiased variance 5/3, stderr sqrt(5/12)
        assert!((e.stderr - libm::sqrt(5.0 / 12.0)).abs() < 1e-15);
    }

    #[test]
    fn z_score_edge_cases() {
        let e = Estimate { mean: 1.0, stderr: 0.0, n: 3 };
        assert_eq!(e.z_score(1.0), 0.0);
        assert_eq!(e.z_score(2.0), f64::INFINITY);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Q(1.358) is the classic 5% critical value.
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.628) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn ks_accepts_same_law_and_rejects_shift() {
        let mut r = rng::stream(3, 0);
        let a: Vec<f64> = (0..2000).map(|_| rng::standard_normal(&mut r)).collect();
        let b: Vec<f64> = (0..2000).map(|_| rng::standard_normal(&mut r)).collect();
        assert!(ks_two_sample(&a, &b).p_value > 0.01);
        let c: Vec<f64> = b.iter().map(|x| x + 0.3).collect();
        assert!(ks_two_sample(&a, &c).p_value < 1e-6);
        assert_eq!(ks_two_sample(&a, &a).statistic, 0.0);
    }

    #[test]
    fn ks_one_sample_against_normal_cdf() {
        let mut r = rng::stream(5, 0);
        let a: Vec<f64> = (0..3000).map(|_| rng::standard_normal(&mut r)).collect();
        let cdf = |x: f64| 0.5 * libm::erfc(-x / core::f64::consts::SQRT_2);
        assert!(ks_one_sample(&a, cdf).p_value > 0.01);
        let b: Vec<f64> = a.iter().map(|x| 1.3 * x).collect();
        assert!(ks_one_sample(&b, cdf).p_value < 1e-4);
    }

    #[test]
    fn binomial_z_examples() {
        assert_eq!(binomial_z(50, 100, 0.5), 0.0);
        assert!((binomial_z(60, 100, 0.5) - 2.0).abs() < 1e-12);
    }
}
