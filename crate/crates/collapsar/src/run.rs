//! Scenario execution: one function per task, each writing its data files
//! into the output directory and returning the checks it evaluated.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use collapsar_core::bath::{conditional_projector_average, integrate_bohm_many, trace_out_bath, BathConfig, BohmRun};
use collapsar_core::kernel::{reconstruct, ModeDecomposition};
use collapsar_core::markov::{lindblad_trajectory, run_markov_ensemble};
use collapsar_core::noise::{
    estimate_covariance, noise_from_hidden, sample_hidden_seeded, DenseNoiseSampler, NoiseSource, NoiseTrajectory,
};
use collapsar_core::nonmarkov::{run_linear_ensemble, LinearPropagator, PhysicalTrajectory};
use collapsar_core::oracle::{compare_density, dephasing_coherence, SuperPropagator};
use collapsar_core::quantum::MixedState;
use collapsar_core::stats::mean_stderr;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::checks::{self, Check};
use crate::io::{self, CsvWriter};
use crate::scenario::{Mode, Scenario, ScenarioError, Setup};

/// Largest grid on which the dense sampler is built for the marginal
/// comparison.
const DENSE_COMPARE_POINTS: usize = 64;

/// What to run. `Mode` tasks follow the scenario's run modes; the kernel
/// factorization stands alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    FactorizeKernel,
    Mode(Mode),
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::FactorizeKernel => "factorize-kernel",
            Task::Mode(m) => m.name(),
        }
    }
}

#[derive(Debug)]
pub enum RunError {
    Config(String),
    Numerical(String),
}

impl RunError {
    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "configuration error: {m}"),
            RunError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ScenarioError> for RunError {
    fn from(e: ScenarioError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<collapsar_core::Error> for RunError {
    fn from(e: collapsar_core::Error) -> Self {
        RunError::Numerical(e.to_string())
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> RunError + '_ {
    move |e| RunError::Config(format!("{}: {e}", path.display()))
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct Report {
    pub task: Task,
    pub files: Vec<String>,
    pub checks: Vec<Check>,
    /// Extra scalar results recorded in the manifest.
    pub summary: serde_json::Map<String, Value>,
    pub manifest: PathBuf,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Out {
    dir: PathBuf,
    files: Vec<String>,
    checks: Vec<Check>,
    summary: serde_json::Map<String, Value>,
}

impl Out {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.into());
        self.dir.join(name)
    }

    fn csv(&mut self, name: &str, header: Vec<String>) -> Result<CsvWriter, RunError> {
        let p = self.path(name);
        CsvWriter::create(&p, &header).map_err(io_err(&p))
    }

    fn json(&mut self, name: &str, v: &Value) -> Result<(), RunError> {
        let p = self.path(name);
        io::write_json(&p, v).map_err(io_err(&p))
    }

    fn note(&mut self, key: &str, v: impl Into<Value>) {
        self.summary.insert(key.into(), v.into());
    }
}

fn finish(w: CsvWriter) -> Result<(), RunError> {
    w.finish().map_err(|e| RunError::Config(e.to_string()))
}

/// Run `task` for `sc`, writing into `sc.output.dir`, and write the manifest.
/// `threads` is recorded in the manifest only; the caller owns the pool.
pub fn run(sc: &Scenario, task: Task, threads: usize) -> Result<Report, RunError> {
    let started = Instant::now();
    let setup = sc.build()?;
    let dir = PathBuf::from(&sc.output.dir);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut out = Out { dir, files: Vec::new(), checks: Vec::new(), summary: serde_json::Map::new() };
    match task {
        Task::FactorizeKernel => factorize_kernel(&setup, &mut out)?,
        Task::Mode(Mode::NoiseStats) => noise_stats(sc, &setup, &mut out)?,
        Task::Mode(Mode::Markov) => markov(sc, &setup, &mut out)?,
        Task::Mode(Mode::Nonmarkov) => nonmarkov(sc, &setup, &mut out)?,
        Task::Mode(Mode::Oracle) => oracle(&setup, &mut out)?,
        Task::Mode(Mode::Bohm) => bohm(sc, &setup, &mut out, false)?,
        Task::Mode(Mode::Compare) => bohm(sc, &setup, &mut out, true)?,
    }
    let manifest_path = out.dir.join("manifest.json");
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let all_passed = out.checks.iter().all(|c| c.passed);
    let manifest = json!({
        "command": task.name(),
        "scenario": sc,
        "seed": sc.run.seed,
        "versions": {
            "collapsar": env!("CARGO_PKG_VERSION"),
            "collapsar-core": collapsar_core::VERSION,
        },
        "threads": threads,
        "started_unix": timestamp,
        "wall_time_s": started.elapsed().as_secs_f64(),
        "files": out.files,
        "checks": out.checks,
        "all_checks_passed": all_passed,
        "summary": out.summary,
    });
    io::write_json(&manifest_path, &manifest).map_err(io_err(&manifest_path))?;
    Ok(Report { task, files: out.files, checks: out.checks, summary: out.summary, manifest: manifest_path })
}

fn factorize_kernel(setup: &Setup, out: &mut Out) -> Result<(), RunError> {
    let md = setup.modes()?;
    out.json("modes.json", &io::modes_json(md))?;
    let d = md.channels();
    let mut header = vec!["tau".to_string()];
    let exact = setup.kernel.is_some();
    for j in 0..d {
        for k in 0..d {
            if exact {
                header.push(format!("exact_{j}{k}"));
            }
            header.push(format!("modes_{j}{k}"));
        }
    }
    let mut w = out.csv("reconstruction.csv", header)?;
    let mut worst: f64 = 0.0;
    for tau in setup.grid.times() {
        let rec = reconstruct(md, tau);
        let ex = setup.kernel.as_ref().map(|k| k.value(tau));
        let mut row = vec![tau];
        for i in 0..d * d {
            if let Some(e) = &ex {
                row.push(e[i]);
                worst = worst.max((e[i] - rec[i]).abs());
            }
            row.push(rec[i]);
        }
        w.row(&row).map_err(|e| RunError::Config(e.to_string()))?;
    }
    finish(w)?;
    out.note("modes", md.modes());
    if exact {
        out.note("max_reconstruction_error", worst);
    }
    Ok(())
}

fn draw_all(source: NoiseSource<'_>, grid: &collapsar_core::TimeGrid, seed: u64, n: usize) -> Result<Vec<NoiseTrajectory>, RunError> {
    (0..n)
        .into_par_iter()
        .map(|i| source.draw(grid, seed, i as u64))
        .collect::<collapsar_core::Result<Vec<_>>>()
        .map_err(RunError::from)
}

fn noise_stats(sc: &Scenario, setup: &Setup, out: &mut Out) -> Result<(), RunError> {
    let md = setup.modes()?;
    let grid = &setup.grid;
    let seed = sc.run.seed;
    let d = md.channels();
    let samples = draw_all(NoiseSource::Modes(md), grid, seed, sc.run.n_traj)?;
    let mut header = vec!["t".to_string()];
    for i in 0..sc.run.export {
        header.extend((0..d).map(|k| format!("w{i}_{k}")));
    }
    let mut w = out.csv("noise_samples.csv", header)?;
    for n in 0..grid.len() {
        let mut row = vec![grid.t(n)];
        for s in &samples[..sc.run.export] {
            row.extend_from_slice(s.at(n));
        }
        w.row(&row).map_err(|e| RunError::Config(e.to_string()))?;
    }
    finish(w)?;
    if samples.len() < 2 {
        return Ok(());
    }
    let est = estimate_covariance(&samples)?;
    let (z, a, b) = checks::max_covariance_z(&est, md, grid);
    let mut header = vec!["t".to_string()];
    for k in 0..d {
        for l in 0..d {
            header.extend([format!("cov_{k}{l}"), format!("target_{k}{l}"), format!("stderr_{k}{l}")]);
        }
    }
    let mut w = out.csv("noise_covariance.csv", header)?;
    for n in 0..grid.len() {
        let target = reconstruct(md, -grid.t(n));
        let mut row = vec![grid.t(n)];
        for k in 0..d {
            for l in 0..d {
                row.extend([est.cov(k, n * d + l), target[k * d + l], est.err(k, n * d + l)]);
            }
        }
        w.row(&row).map_err(|e| RunError::Config(e.to_string()))?;
    }
    finish(w)?;
    out.note("max_covariance_z_at", json!({ "t_a": grid.t(a / d), "t_b": grid.t(b / d), "k": a % d, "l": b % d }));
    out.checks.push(Check::at_most("covariance within 5 standard errors", "noise/hidden-variable-covariance", z, 5.0));
    let small = grid.truncated(grid.steps().min(DENSE_COMPARE_POINTS - 1));
    let dense = DenseNoiseSampler::from_modes(md, &small)?;
    let from_modes = draw_all(NoiseSource::Modes(md), &small, seed, sc.run.n_traj)?;
    let from_dense = draw_all(NoiseSource::Dense(&dense), &small, seed.wrapping_add(1), sc.run.n_traj)?;
    let p = checks::min_marginal_p_value(&from_modes, &from_dense);
    let family = small.len() * d;
    out.note("marginal_tests", family);
    out.checks.push(Check::at_least(
        "mode and dense marginals agree (1% familywise)",
        "noise/mode-vs-dense-marginals",
        p,
        0.01 / family as f64,
    ));
    Ok(())
}

fn markov(sc: &Scenario, setup: &Setup, out: &mut Out) -> Result<(), RunError> {
    let grid = &setup.grid;
    let sys = &setup.system;
    let d = sys.channels();
    let dim = sys.dim();
    let ens = run_markov_ensemble(sys, &setup.psi0, grid, sc.run.n_traj, sc.run.seed)?;
    for (i, ex) in ens.expectations.iter().take(sc.run.export).enumerate() {
        let mut header = vec!["t".to_string()];
        header.extend(io::expectation_columns(d));
        let mut w = out.csv(&format!("markov_traj_{i:04}.csv"), header)?;
        for n in 0..grid.len() {
            let mut row = vec![grid.t(n)];
            row.extend_from_slice(&ex[n * d..(n + 1) * d]);
            w.row(&row).map_err(|e| RunError::Config(e.to_string()))?;
        }
        finish(w)?;
    }
    let rho0 = MixedState::from_pure(&setup.psi0)?;
    let lind = lindblad_trajectory(&rho0, sys, grid)?;
    let mut header = vec!["t".to_string()];
    header.extend(io::density_columns(dim).into_iter().map(|c| format!("ensemble_{c}")));
    header.extend(io::density_columns(dim).into_iter().map(|c| format!("lindblad_{c}")));
    header.extend(["trace_distance".to_string(), "bound".to_string()]);
    let mut w = out.csv("markov_vs_lindblad.csv", header)?;
    let mut worst: f64 = 0.0;
    for n in 0..grid.len() {
        let td = compare_density(&ens.density.mean[n], &lind[n])?.trace_distance;
        let bound = 3.0 * (ens.density.trace_distance_stderr(n) + 2.0 * grid.dt());
        worst = worst.max(td / bound);
        let mut row = vec![grid.t(n)];
        row.extend(io::density_row(&ens.density.mean[n]));
        row.extend(io::density_row(&lind[n]));
        row.extend([td, bound]);
        w.row(&row).map_err(|e| RunError::Config(e.to_string()))?;
    }
    finish(w)?;
    out.checks.push(Check::at_most(
        "ensemble matches Lindblad (trace distance / 3(stderr + 2dt))",
        "markov/ito-ensemble-vs-lindblad",
        worst,
        1.0,
    ));
    Ok(())
}

fn physical_trajectories(prop: &LinearPropagator, md: &ModeDecomposition, setup: &Setup, seed: u64, n: usize) -> Result<Vec<PhysicalTrajectory>, RunError> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let w0 = noise_from_hidden(&sample_hidden_seeded(md, seed, i as u64), md, &setup.grid)?;
            prop.nonlinear_trajectory(&w0, &setup.psi0)
        })
        .collect::<collapsar_core::Result<Vec<_>>>()
        .map_err(RunError::from)
}

fn write_physical(out: &mut Out, name: &str, tr: &PhysicalTrajectory) -> Result<(), RunError> {
    let d = tr.channels;
    let mut header = vec!["t".to_string()];
    header.extend(io::expectation_columns(d));
    header.push("norm_linear".into());
    let mut w = out.csv(name, header)?;
    for n in 0..tr.grid.len() {
        let mut row = vec![tr.grid.t(n)];
        row.extend_from_slice(&tr.expectations[n * d..(n + 1) * d]);
        row.push(tr.linear_norms[n]);
        w.row(&row).map_err(|e| RunError::Config(e.to_string()))?;
    }
    finish(w)
}

fn nonmarkov(sc: &Scenario, setup: &Setup, out: &mut Out) -> Result<(), RunError> {
    let md = setup.modes()?;
    let grid = &setup.grid;
    let sys = &setup.system;
    let prop = LinearPropagator::new(sys, md, grid)?;
    let trajs = physical_trajectories(&prop, md, setup, sc.run.seed, sc.run.n_traj)?;
    for (i, tr) in trajs.iter().take(sc.run.export).enumerate() {
        write_physical(out, &format!("nonmarkov_traj_{i:04}.csv"), tr)?;
    }
    let dim = sys.dim();
    let ens = checks::physical_density(&trajs, dim);
    let sup = SuperPropagator::new(sys, md, grid)?;
    let oracle = sup.propagate(&MixedState::from_pure(&setup.psi0)?)?;
    let mut header = vec!["t".to_string()];
    header.extend(io::density_columns(dim).into_iter().map(|c| format!("ensemble_{c}")));
    header.extend(io::density_columns(dim).into_iter().map(|c| format!("oracle_{c}")));
    header.extend(["trace_distance".to_string(), "bound".to_string()]);
    let mut w = out.csv("nonmarkov_vs_oracle.csv", header)?;
    let mut worst: f64 = 0.0;
    for n in 0..grid.len() {
        let e = sup.to_schrodinger(n, &ens.mean[n])?;
        let o = sup.to_schrodinger(n, &oracle[n])?;
        let td = compare_density(&e, &o)?.trace_distance;
        let bound = 3.0 * (ens.trace_distance_stderr(n) + 2.0 * grid.dt());
        worst = worst.max(td / bound);
        let mut row = vec![grid.t(n)];
        row.extend(io::density_row(&e));
        row.extend(io::density_row(&o));
        row.extend([td, bound]);
        w.row(&row).map_err(|e| RunError::Config(e.to_string()))?;
    }
    finish(w)?;
    out.checks.push(Check::at_most(
        "physical ensemble matches the master map (trace distance / 3(stderr + 2dt))",
        "nonmarkov/physical-ensemble-vs-influence-map",
        worst,
        1.0,
    ));
    let steps = grid.steps();
    let points: Vec<usize> = [steps / 4, steps / 2, steps].into_iter().filter(|&p| p > 0).collect();
    let lin = run_linear_ensemble(&prop, &setup.psi0, NoiseSource::Modes(md), &points, sc.run.n_traj, sc.run.seed)?;
    let mut worst_z: f64 = 0.0;
    let mut norms = Vec::new();
    for (p, &n) in points.iter().enumerate() {
        let e = mean_stderr(&lin.weights[p]);
        worst_z = worst_z.max(e.z_score(1.0).abs());
        norms.push(json!({ "t": grid.t(n), "mean": e.mean, "stderr": e.stderr }));
    }
    out.note("linear_norms", norms);
    out.checks.push(Check::at_most(
        "linear norms average to one (|z|)",
        "nonmarkov/linear-sse-trace-preservation",
        worst_z,
        3.0,
    ));
    Ok(())
}

fn oracle(setup: &Setup, out: &mut Out) -> Result<(), RunError> {
    let md = setup.modes()?;
    let grid = &setup.grid;
    let sys = &setup.system;
    let dim = sys.dim();
    let d = sys.channels();
    let sup = SuperPropagator::new(sys, md, grid)?;
    let states = sup.propagate(&MixedState::from_pure(&setup.psi0)?)?;
    let mut header = vec!["t".to_string()];
    header.extend(io::density_columns(dim));
    header.extend(io::expectation_columns(d));
    let mut w = out.csv("oracle.csv", header)?;
    let mut trace_err: f64 = 0.0;
    let mut schrodinger = Vec::with_capacity(grid.len());
    for (n, rho) in states.iter().enumerate() {
        let s = sup.to_schrodinger(n, rho)?;
        trace_err = trace_err.max((s.trace() - 1.0).abs());
        let mut row = vec![grid.t(n)];
        row.extend(io::density_row(&s));
        for a in sys.collapse_ops() {
            row.push(s.expectation(a)?);
        }
        w.row(&row).map_err(|e| RunError::Config(e.to_string()))?;
        schrodinger.push(s);
    }
    finish(w)?;
    out.json("oracle_final.json", &io::density_json(schrodinger.last().expect("grid is never empty")))?;
    out.checks.push(Check::at_most("trace preserved", "oracle/trace-preservation", trace_err, 1e-9));
    if dim <= 8 {
        let min = sup.choi_min_eigenvalue()?;
        out.checks.push(Check::at_least("Choi matrix positive", "oracle/complete-positivity", min, -1e-9));
    }
    if let Some(err) = dephasing_closed_form_error(setup, &schrodinger)? {
        out.checks.push(Check::at_most(
            "coherence matches the closed form (max error / dt)",
            "oracle/dephasing-closed-form",
            err / grid.dt(),
            1.0,
        ));
    }
    Ok(())
}

/// For `H = 0` and one diagonal collapse operator the coherence between
/// levels `i, j` decays as `exp(-gamma (a_i - a_j)^2 F(t) / 2)`; returns the
/// largest deviation of the `(0, 1)` entry from that law.
fn dephasing_closed_form_error(setup: &Setup, states: &[MixedState]) -> Result<Option<f64>, RunError> {
    let sys = &setup.system;
    let md = setup.modes()?;
    let dim = sys.dim();
    if sys.channels() != 1 || dim < 2 || sys.hamiltonian().max_abs() != 0.0 {
        return Ok(None);
    }
    let a = &sys.collapse_ops()[0];
    let off_diagonal = (0..dim).any(|i| (0..dim).any(|j| i != j && a.get(i, j).norm() != 0.0));
    if off_diagonal {
        return Ok(None);
    }
    let gap = a.get(0, 0).re - a.get(1, 1).re;
    let rho0 = states[0].get(0, 1).norm();
    if rho0 == 0.0 {
        return Ok(None);
    }
    let mut worst: f64 = 0.0;
    for (n, s) in states.iter().enumerate() {
        // dephasing_coherence is the sigma_z law exp(-2 gamma F), gap 2.
        let base = dephasing_coherence(md, sys.gamma(), setup.grid.t(n))?;
        let expected = rho0 * base.powf(gap * gap / 4.0);
        worst = worst.max((s.get(0, 1).norm() - expected).abs());
    }
    Ok(Some(worst))
}

fn bohm(sc: &Scenario, setup: &Setup, out: &mut Out, compare: bool) -> Result<(), RunError> {
    let md = setup.modes()?;
    let grid = &setup.grid;
    let sys = &setup.system;
    let d = sys.channels();
    let bc = BathConfig::new(md.clone(), sc.discretization.n_max)?;
    let x0: Vec<_> = (0..sc.run.n_traj).map(|i| sample_hidden_seeded(md, sc.run.seed, i as u64)).collect();
    let run = integrate_bohm_many(sys, &bc, &setup.psi0, &x0, grid)?;
    let prop = LinearPropagator::new(sys, md, grid)?;
    let collapse_count = if compare { sc.run.n_traj } else { sc.run.export };
    let collapse = physical_trajectories(&prop, md, setup, sc.run.seed, collapse_count)?;
    let fidelities = run
        .trajectories
        .iter()
        .zip(&collapse)
        .map(|(b, c)| checks::trajectory_fidelity(b, c, prop.interaction_ops()))
        .collect::<collapsar_core::Result<Vec<_>>>()?;
    for i in 0..sc.run.export {
        write_bohm(out, &format!("bohm_traj_{i:04}.csv"), &run, i, &fidelities[i])?;
    }
    let p = out.path("joint_state.bin");
    io::write_joint_state(&p, &run.final_state, &bc).map_err(io_err(&p))?;
    let aborted = run.trajectories.iter().filter(|t| t.aborted_at.is_some()).count();
    out.note("aborted_trajectories", aborted);
    out.note("max_top_population", run.max_top_population);
    out.checks.push(Check::at_most(
        "top Fock level population",
        "bath/truncation",
        run.max_top_population,
        collapsar_core::bath::TRUNCATION_WARNING,
    ));
    out.checks.push(Check::at_most("joint norm drift", "bath/unitarity", run.max_norm_drift, 1e-8));
    let bath = trace_out_bath(&run.final_state);
    let sup = SuperPropagator::new(sys, md, grid)?;
    let oracle = sup.propagate(&MixedState::from_pure(&setup.psi0)?)?;
    let last = grid.steps();
    let oracle_final = sup.to_schrodinger(last, &oracle[last])?;
    let td = compare_density(&bath, &oracle_final)?.trace_distance;
    out.checks.push(Check::at_most("bath trace matches the master map", "bath/trace-vs-influence-map", td, 1e-3));
    let mc = conditional_projector_average(&run.final_state, md, sc.run.projector_samples, sc.run.seed)?;
    let td_mc = compare_density(&bath, &mc.mean[0])?.trace_distance;
    out.checks.push(Check::at_most(
        "bath trace matches the conditional-projector average (trace distance / 3 stderr)",
        "bath/conditional-projector-average",
        td_mc / (3.0 * mc.trace_distance_stderr(0)),
        1.0,
    ));
    out.json(
        "bath_density.json",
        &json!({
            "t": grid.t_final(),
            "trace_out_bath": io::density_json(&bath),
            "influence_map": io::density_json(&oracle_final),
            "projector_average": io::density_json(&mc.mean[0]),
        }),
    )?;
    if !compare {
        return Ok(());
    }
    let mut header = vec!["traj".to_string(), "min_fidelity".to_string()];
    header.extend((0..d).map(|k| format!("bohm_final_<A_{k}>")));
    header.extend((0..d).map(|k| format!("collapse_final_<A_{k}>")));
    let mut w = out.csv("compare.csv", header)?;
    let mut worst = f64::INFINITY;
    for (i, (f, c)) in fidelities.iter().zip(&collapse).enumerate() {
        let min = f.iter().copied().fold(1.0, f64::min);
        worst = worst.min(min);
        let b = &run.trajectories[i];
        let nb = b.aborted_at.unwrap_or(grid.steps());
        let mut row = vec![i as f64, min];
        row.extend_from_slice(&b.expectations[nb * d..(nb + 1) * d]);
        row.extend_from_slice(&c.expectations[last * d..(last + 1) * d]);
        w.row(&row).map_err(|e| RunError::Config(e.to_string()))?;
    }
    finish(w)?;
    if aborted > 0 {
        worst = 0.0;
    }
    out.checks.push(Check::at_least(
        "guided conditional states match collapse trajectories",
        "equivalence/conditional-vs-collapse-fidelity",
        worst,
        1.0 - 1e-3,
    ));
    let stride = (grid.steps() / 20).max(1);
    let dict = run
        .trajectories
        .iter()
        .map(|t| checks::dictionary_error(t, md, sys.gamma(), stride, 5))
        .collect::<collapsar_core::Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    out.checks.push(Check::at_most(
        "noise along guided trajectories follows the dictionary (relative)",
        "equivalence/noise-dictionary",
        dict,
        1e-2,
    ));
    Ok(())
}

fn write_bohm(out: &mut Out, name: &str, run: &BohmRun, i: usize, fidelity: &[f64]) -> Result<(), RunError> {
    let tr = &run.trajectories[i];
    let d = tr.channels;
    let pairs = tr.x[0].pairs();
    let mut header = vec!["t".to_string()];
    header.extend((0..pairs).map(|p| format!("xplus_{p}")));
    header.extend((0..pairs).map(|p| format!("xminus_{p}")));
    header.extend(io::expectation_columns(d));
    header.push("fidelity_vs_collapse".into());
    let mut w = out.csv(name, header)?;
    let end = tr.aborted_at.map_or(tr.grid.len(), |a| a + 1).min(tr.x.len());
    for n in 0..end {
        let mut row = vec![tr.grid.t(n)];
        row.extend_from_slice(&tr.x[n].xplus);
        row.extend_from_slice(&tr.x[n].xminus);
        row.extend_from_slice(&tr.expectations[n * d..(n + 1) * d]);
        row.push(fidelity.get(n).copied().unwrap_or(f64::NAN));
        w.row(&row).map_err(|e| RunError::Config(e.to_string()))?;
    }
    finish(w)
}
