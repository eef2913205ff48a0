//! Pass/fail checks shared by the runner and the acceptance suite.

use collapsar_core::bath::BohmTrajectory;
use collapsar_core::kernel::{reconstruct, ModeDecomposition};
use collapsar_core::noise::{noise_at, CovarianceEstimate, NoiseTrajectory};
use collapsar_core::nonmarkov::{InteractionOps, PhysicalTrajectory};
use collapsar_core::quantum::fidelity;
use collapsar_core::stats::{ks_two_sample, DensityAccumulator, DensityEstimate};
use collapsar_core::{Result, TimeGrid};
use serde::Serialize;

/// One named comparison against a threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// Stable machine-readable identifier of the identity being checked.
    pub tag: String,
    pub value: f64,
    pub threshold: f64,
    /// `"<="` or `">="`.
    pub relation: String,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: &str, tag: &str, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            tag: tag.into(),
            value,
            threshold,
            relation: "<=".into(),
            passed: value <= threshold,
        }
    }

    pub fn at_least(name: &str, tag: &str, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            tag: tag.into(),
            value,
            threshold,
            relation: ">=".into(),
            passed: value >= threshold,
        }
    }
}

/// Largest `|cov - D~| / stderr` over all pairs of the flattened grid index
/// `n * D + k`, with the location `(a, b)` where it occurs.
pub fn max_covariance_z(est: &CovarianceEstimate, md: &ModeDecomposition, grid: &TimeGrid) -> (f64, usize, usize) {
    let d = md.channels();
    let mut worst = (0.0, 0, 0);
    for a in 0..est.size {
        for b in a..est.size {
            let (na, ka, nb, kb) = (a / d, a % d, b / d, b % d);
            let target = reconstruct(md, grid.t(na) - grid.t(nb))[ka * d + kb];
            let err = est.err(a, b);
            let z = if err > 0.0 {
                (est.cov(a, b) - target).abs() / err
            } else if (est.cov(a, b) - target).abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            };
            if z > worst.0 {
                worst = (z, a, b);
            }
        }
    }
    worst
}

/// Smallest two-sample Kolmogorov–Smirnov p-value over the marginals at
/// every flattened index.
pub fn min_marginal_p_value(a: &[NoiseTrajectory], b: &[NoiseTrajectory]) -> f64 {
    let size = a.first().map_or(0, |t| t.values().len());
    (0..size)
        .map(|i| {
            let xa: Vec<f64> = a.iter().map(|t| t.values()[i]).collect();
            let xb: Vec<f64> = b.iter().map(|t| t.values()[i]).collect();
            ks_two_sample(&xa, &xb).p_value
        })
        .fold(1.0, f64::min)
}

/// Worst mismatch between the central difference of `w_k(x(t), s)` along a
/// guided trajectory and `2 sqrt(gamma) sum_l D~_kl(t - s) <A_l>_t`,
/// relative to the largest right-hand side at the same `t`. Probes every
/// `stride`-th interior grid point and `probes` values of `s` spread over the
/// grid.
pub fn dictionary_error(tr: &BohmTrajectory, md: &ModeDecomposition, gamma: f64, stride: usize, probes: usize) -> Result<f64> {
    let grid = &tr.grid;
    let d = md.channels();
    let dt = grid.dt();
    let sg = gamma.sqrt();
    let end = tr.aborted_at.unwrap_or(grid.steps());
    let mut worst: f64 = 0.0;
    let mut n = stride.max(1);
    while n < end {
        let t = grid.t(n);
        let mut scale: f64 = 0.0;
        let mut err: f64 = 0.0;
        for i in 0..probes.max(1) {
            let s = grid.t_final() * i as f64 / (probes.max(2) - 1) as f64;
            let wp = noise_at(&tr.x[n + 1], md, s)?;
            let wm = noise_at(&tr.x[n - 1], md, s)?;
            let dtilde = reconstruct(md, t - s);
            for k in 0..d {
                let fd = (wp[k] - wm[k]) / (2.0 * dt);
                let rhs: f64 = 2.0 * sg * (0..d).map(|l| dtilde[k * d + l] * tr.expectations[n * d + l]).sum::<f64>();
                scale = scale.max(rhs.abs());
                err = err.max((fd - rhs).abs());
            }
        }
        if scale > 0.0 {
            worst = worst.max(err / scale);
        }
        n += stride.max(1);
    }
    Ok(worst)
}

/// Fidelity between the conditional states of a guided trajectory and a
/// normalized collapse trajectory at every grid point.
pub fn trajectory_fidelity(bohm: &BohmTrajectory, phys: &PhysicalTrajectory, iops: &InteractionOps) -> Result<Vec<f64>> {
    let end = bohm.aborted_at.unwrap_or(bohm.grid.len());
    (0..end.min(phys.states.len()))
        .map(|n| {
            let s = iops.to_schrodinger(n, &phys.states[n])?;
            fidelity(&bohm.states[n], &s)
        })
        .collect()
}

/// `E[|psi><psi|]` over normalized trajectories at every grid point, in the
/// picture the states are stored in.
pub fn physical_density(trajs: &[PhysicalTrajectory], dim: usize) -> DensityEstimate {
    let points = trajs.first().map_or(0, |t| t.states.len());
    let mut acc = DensityAccumulator::new(dim, points);
    for tr in trajs {
        for (n, s) in tr.states.iter().enumerate() {
            acc.add(n, s.amplitudes(), 1.0);
        }
        acc.finish_trajectory();
    }
    acc.estimate()
}
