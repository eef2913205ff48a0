//! Scenario files: one JSON document describing a system, a noise kernel, a
//! time grid and what to run.
//!
//! Every optional field has a default, and [`Scenario`] serializes back with
//! all of them filled in, so a manifest echo is a complete record of the run.

use std::fmt;
use std::path::Path;

use collapsar_core::kernel::{factorize, CosineLine, KernelForm, ModeDecomposition, StationaryKernel};
use collapsar_core::markov::CollapseSystem;
use collapsar_core::quantum::{Operator, PureState};
use collapsar_core::{TimeGrid, C64};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub system: SystemSpec,
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    #[serde(default)]
    pub discretization: Discretization,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_hamiltonian")]
    pub hamiltonian: OperatorSpec,
    pub collapse: Vec<OperatorSpec>,
    pub gamma: f64,
    #[serde(default = "default_state")]
    pub initial_state: StateSpec,
}

/// A named preset (`sigma_x`, `sigma_y`, `sigma_z`, `zero`, `identity`,
/// `number`), a real matrix as rows, or a complex matrix as `re`/`im` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorSpec {
    Preset(String),
    Real(Vec<Vec<f64>>),
    Complex(ComplexMatrix),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexMatrix {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

/// `uniform`, `up`/`down` (basis states 0 and 1), `plus`, or explicit
/// amplitudes; amplitudes are normalized on build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Named(String),
    Real(Vec<f64>),
    Complex { re: Vec<f64>, im: Vec<f64> },
}

/// A `D x D` real matrix, or a bare number when `D = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    CosineSum { lines: Vec<LineSpec> },
    Exponential { amplitude: MatrixSpec, tau_c: f64 },
    White { diffusion: MatrixSpec, cutoff: f64 },
    Tabulated { tau: Vec<f64>, samples: Vec<MatrixSpec> },
    /// Oscillator modes given directly: `kappa[m]` is `D x D`.
    Modes { omega: Vec<f64>, kappa: Vec<MatrixSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub weight: MatrixSpec,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretization {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    /// Mode count for kernel factorization.
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default = "default_omega_max")]
    pub omega_max: f64,
    /// Fock levels per bath oscillator.
    #[serde(default = "default_n_max")]
    pub n_max: usize,
}

impl Default for Discretization {
    fn default() -> Self {
        Discretization {
            dt: default_dt(),
            t_final: default_t_final(),
            modes: default_modes(),
            omega_max: default_omega_max(),
            n_max: default_n_max(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Markov,
    Nonmarkov,
    Bohm,
    Compare,
    Oracle,
    NoiseStats,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Markov => "markov",
            Mode::Nonmarkov => "nonmarkov",
            Mode::Bohm => "bohm",
            Mode::Compare => "compare",
            Mode::Oracle => "oracle",
            Mode::NoiseStats => "noise-stats",
        }
    }

    fn needs_kernel(self) -> bool {
        self != Mode::Markov
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    #[serde(default)]
    pub seed: u64,
    /// Trajectories written to individual CSV files.
    #[serde(default = "default_export")]
    pub export: usize,
    /// Monte Carlo samples for the conditional-projector average.
    #[serde(default = "default_projector_samples")]
    pub projector_samples: usize,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            mode: default_mode(),
            n_traj: default_n_traj(),
            seed: 0,
            export: default_export(),
            projector_samples: default_projector_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_out_dir")]
    pub dir: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: default_out_dir() }
    }
}

fn default_name() -> String {
    "scenario".into()
}
fn default_dim() -> usize {
    2
}
fn default_hamiltonian() -> OperatorSpec {
    OperatorSpec::Preset("zero".into())
}
fn default_state() -> StateSpec {
    StateSpec::Named("uniform".into())
}
fn default_dt() -> f64 {
    1e-3
}
fn default_t_final() -> f64 {
    1.0
}
fn default_modes() -> usize {
    64
}
fn default_omega_max() -> f64 {
    16.0
}
fn default_n_max() -> usize {
    10
}
fn default_mode() -> Mode {
    Mode::Nonmarkov
}
fn default_n_traj() -> usize {
    100
}
fn default_export() -> usize {
    1
}
fn default_projector_samples() -> usize {
    2000
}
fn default_out_dir() -> String {
    "collapsar-out".into()
}

/// One failed validation rule, located by its dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioError {
    /// Malformed JSON or an unknown/mistyped key.
    Parse { line: usize, column: usize, message: String },
    /// Well-formed but semantically invalid; lists every violation.
    Invalid(Vec<Violation>),
    Io(String),
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::Parse { line, column, message } => {
                write!(f, "scenario parse error at line {line}, column {column}: {message}")
            }
            ScenarioError::Invalid(v) => {
                write!(f, "scenario has {} violation(s):", v.len())?;
                for x in v {
                    write!(f, "\n  {x}")?;
                }
                Ok(())
            }
            ScenarioError::Io(m) => write!(f, "cannot read scenario: {m}"),
        }
    }
}

impl std::error::Error for ScenarioError {}

/// Parse and validate scenario JSON.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let sc: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let v = sc.violations();
    if v.is_empty() {
        Ok(sc)
    } else {
        Err(ScenarioError::Invalid(v))
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text)
}

/// Core objects built from a valid scenario.
#[derive(Debug, Clone)]
pub struct Setup {
    pub system: CollapseSystem,
    pub psi0: PureState,
    pub grid: TimeGrid,
    pub kernel: Option<StationaryKernel>,
    pub modes: Option<ModeDecomposition>,
}

impl Setup {
    pub fn modes(&self) -> Result<&ModeDecomposition, ScenarioError> {
        self.modes.as_ref().ok_or_else(|| invalid("kernel", "a kernel is required for this mode"))
    }
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(vec![Violation { field: field.into(), message: message.into() }])
}

impl Scenario {
    /// Every rule the scenario breaks; empty when valid.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut bad = |field: String, message: String| out.push(Violation { field, message });
        let s = &self.system;
        let dim = s.dim;
        if dim == 0 {
            bad("system.dim".into(), "must be at least 1".into());
        }
        if !(s.gamma.is_finite() && s.gamma >= 0.0) {
            bad("system.gamma".into(), format!("must be finite and non-negative, got {}", s.gamma));
        }
        if s.collapse.is_empty() {
            bad("system.collapse".into(), "needs at least one collapse operator".into());
        }
        if dim > 0 {
            if let Err(m) = operator_matrix(&s.hamiltonian, dim) {
                bad("system.hamiltonian".into(), m);
            }
            for (i, a) in s.collapse.iter().enumerate() {
                if let Err(m) = operator_matrix(a, dim) {
                    bad(format!("system.collapse[{i}]"), m);
                }
            }
            if let Err(m) = state_amplitudes(&s.initial_state, dim) {
                bad("system.initial_state".into(), m);
            }
        }
        let d = &self.discretization;
        if !(d.dt.is_finite() && d.dt > 0.0) {
            bad("discretization.dt".into(), format!("must be positive, got {}", d.dt));
        }
        if !(d.t_final.is_finite() && d.t_final >= d.dt) {
            bad("discretization.t_final".into(), format!("must be at least dt, got {}", d.t_final));
        }
        if d.modes == 0 {
            bad("discretization.modes".into(), "must be at least 1".into());
        }
        if !(d.omega_max.is_finite() && d.omega_max > 0.0) {
            bad("discretization.omega_max".into(), format!("must be positive, got {}", d.omega_max));
        }
        if d.n_max < 2 {
            bad("discretization.n_max".into(), format!("must be at least 2, got {}", d.n_max));
        }
        let r = &self.run;
        if r.n_traj == 0 {
            bad("run.n_traj".into(), "must be at least 1".into());
        }
        if r.export > r.n_traj {
            bad("run.export".into(), format!("cannot exceed run.n_traj ({})", r.n_traj));
        }
        if r.projector_samples < 2 {
            bad("run.projector_samples".into(), "must be at least 2".into());
        }
        match &self.kernel {
            None if r.mode.needs_kernel() => {
                bad("kernel".into(), format!("required for mode {}", r.mode.name()));
            }
            None => {}
            Some(k) => {
                let channels = s.collapse.len().max(1);
                for (field, m) in kernel_violations(k, channels) {
                    bad(field, m);
                }
            }
        }
        out
    }

    /// Build the core objects. Errors here are configuration errors that
    /// only show up once matrices are assembled (non-Hermitian operators,
    /// indefinite kernels).
    pub fn build(&self) -> Result<Setup, ScenarioError> {
        let v = self.violations();
        if !v.is_empty() {
            return Err(ScenarioError::Invalid(v));
        }
        let s = &self.system;
        let op = |spec: &OperatorSpec, field: String| -> Result<Operator, ScenarioError> {
            let data = operator_matrix(spec, s.dim).map_err(|m| invalid(&field, m))?;
            Operator::hermitian(s.dim, data).map_err(|e| invalid(&field, e.to_string()))
        };
        let h = op(&s.hamiltonian, "system.hamiltonian".into())?;
        let a = s
            .collapse
            .iter()
            .enumerate()
            .map(|(i, x)| op(x, format!("system.collapse[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let system = CollapseSystem::new(h, a, s.gamma).map_err(|e| invalid("system", e.to_string()))?;
        let amps = state_amplitudes(&s.initial_state, s.dim).map_err(|m| invalid("system.initial_state", m))?;
        let psi0 = PureState::new(amps)
            .and_then(|p| p.normalized())
            .map_err(|e| invalid("system.initial_state", e.to_string()))?;
        let d = &self.discretization;
        let grid = TimeGrid::covering(d.t_final, d.dt).map_err(|e| invalid("discretization", e.to_string()))?;
        let channels = s.collapse.len();
        let (kernel, modes) = match &self.kernel {
            None => (None, None),
            Some(KernelSpec::Modes { omega, kappa }) => {
                let flat = kappa.iter().flat_map(|m| matrix_flat(m, channels).unwrap_or_default()).collect();
                let md = ModeDecomposition::new(channels, omega.clone(), flat, None)
                    .map_err(|e| invalid("kernel", e.to_string()))?;
                (None, Some(md))
            }
            Some(spec) => {
                let k = build_kernel(spec, channels).map_err(|e| invalid("kernel", e))?;
                let md = factorize(&k, d.modes, d.omega_max).map_err(|e| invalid("kernel", e.to_string()))?;
                (Some(k), Some(md))
            }
        };
        Ok(Setup { system, psi0, grid, kernel, modes })
    }
}

fn build_kernel(spec: &KernelSpec, d: usize) -> Result<StationaryKernel, String> {
    let flat = |m: &MatrixSpec| matrix_flat(m, d);
    let form = match spec {
        KernelSpec::CosineSum { lines } => KernelForm::CosineSum(
            lines
                .iter()
                .map(|l| Ok(CosineLine { weight: flat(&l.weight)?, omega: l.omega }))
                .collect::<Result<_, String>>()?,
        ),
        KernelSpec::Exponential { amplitude, tau_c } => {
            KernelForm::ExponentialDecay { amplitude: flat(amplitude)?, tau_c: *tau_c }
        }
        KernelSpec::White { diffusion, cutoff } => KernelForm::WhiteApprox { diffusion: flat(diffusion)?, cutoff: *cutoff },
        KernelSpec::Tabulated { tau, samples } => KernelForm::GridTabulated {
            tau: tau.clone(),
            samples: samples.iter().map(flat).collect::<Result<_, _>>()?,
        },
        KernelSpec::Modes { .. } => return Err("mode lists are not kernels".into()),
    };
    StationaryKernel::new(d, form).map_err(|e| e.to_string())
}

fn kernel_violations(k: &KernelSpec, d: usize) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut check = |field: String, m: &MatrixSpec| {
        if let Err(e) = matrix_flat(m, d) {
            out.push((field, e));
        }
    };
    match k {
        KernelSpec::CosineSum { lines } => {
            for (i, l) in lines.iter().enumerate() {
                check(format!("kernel.lines[{i}].weight"), &l.weight);
            }
        }
        KernelSpec::Exponential { amplitude, .. } => check("kernel.amplitude".into(), amplitude),
        KernelSpec::White { diffusion, .. } => check("kernel.diffusion".into(), diffusion),
        KernelSpec::Tabulated { samples, .. } => {
            for (i, m) in samples.iter().enumerate() {
                check(format!("kernel.samples[{i}]"), m);
            }
        }
        KernelSpec::Modes { kappa, .. } => {
            for (i, m) in kappa.iter().enumerate() {
                check(format!("kernel.kappa[{i}]"), m);
            }
        }
    }
    match k {
        KernelSpec::CosineSum { lines } if lines.is_empty() => out.push(("kernel.lines".into(), "must not be empty".into())),
        KernelSpec::Exponential { tau_c, .. } if !(tau_c.is_finite() && *tau_c > 0.0) => {
            out.push(("kernel.tau_c".into(), format!("must be positive, got {tau_c}")));
        }
        KernelSpec::White { cutoff, .. } if !(cutoff.is_finite() && *cutoff > 0.0) => {
            out.push(("kernel.cutoff".into(), format!("must be positive, got {cutoff}")));
        }
        KernelSpec::Tabulated { tau, samples } if tau.len() != samples.len() => {
            out.push(("kernel.samples".into(), format!("expected {} samples, got {}", tau.len(), samples.len())));
        }
        KernelSpec::Modes { omega, kappa } if omega.len() != kappa.len() => {
            out.push(("kernel.kappa".into(), format!("expected {} matrices, got {}", omega.len(), kappa.len())));
        }
        _ => {}
    }
    out
}

fn matrix_flat(m: &MatrixSpec, d: usize) -> Result<Vec<f64>, String> {
    match m {
        MatrixSpec::Scalar(x) if d == 1 => Ok(vec![*x]),
        MatrixSpec::Scalar(_) => Err(format!("shape mismatch: expected a {d}x{d} matrix, got a scalar")),
        MatrixSpec::Rows(rows) => {
            check_rows(rows, d)?;
            Ok(rows.concat())
        }
    }
}

fn check_rows(rows: &[Vec<f64>], d: usize) -> Result<(), String> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(format!("shape mismatch: expected {d}x{d}, got {}x{}", rows.len(), cols));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err("entries must be finite".into());
    }
    Ok(())
}

fn operator_matrix(spec: &OperatorSpec, d: usize) -> Result<Vec<C64>, String> {
    let real = |v: Vec<f64>| v.into_iter().map(|x| C64::new(x, 0.0)).collect::<Vec<_>>();
    match spec {
        OperatorSpec::Preset(name) => {
            let pauli = |m: Operator| {
                if d == 2 {
                    Ok(m.entries().to_vec())
                } else {
                    Err(format!("shape mismatch: preset {name} is 2x2 but the system dimension is {d}"))
                }
            };
            match name.as_str() {
                "sigma_x" => pauli(Operator::pauli_x()),
                "sigma_y" => pauli(Operator::pauli_y()),
                "sigma_z" => pauli(Operator::pauli_z()),
                "zero" => Ok(Operator::zeros(d).entries().to_vec()),
                "identity" => Ok(Operator::identity(d).entries().to_vec()),
                "number" => Ok(Operator::diagonal(&(0..d).map(|i| i as f64).collect::<Vec<_>>()).entries().to_vec()),
                other => Err(format!("unknown preset {other:?}")),
            }
        }
        OperatorSpec::Real(rows) => {
            check_rows(rows, d)?;
            Ok(real(rows.concat()))
        }
        OperatorSpec::Complex(c) => {
            check_rows(&c.re, d)?;
            check_rows(&c.im, d)?;
            Ok(c.re.concat().into_iter().zip(c.im.concat()).map(|(r, i)| C64::new(r, i)).collect())
        }
    }
}

fn state_amplitudes(spec: &StateSpec, d: usize) -> Result<Vec<C64>, String> {
    let amps: Vec<C64> = match spec {
        StateSpec::Named(name) => match name.as_str() {
            "uniform" => vec![C64::new(1.0, 0.0); d],
            "up" => basis(d, 0),
            "down" if d >= 2 => basis(d, 1),
            "plus" if d == 2 => vec![C64::new(1.0, 0.0); 2],
            "down" | "plus" => return Err(format!("state {name:?} needs dimension 2, got {d}")),
            other => return Err(format!("unknown state {other:?}")),
        },
        StateSpec::Real(v) => v.iter().map(|&x| C64::new(x, 0.0)).collect(),
        StateSpec::Complex { re, im } => {
            if re.len() != im.len() {
                return Err("re and im have different lengths".into());
            }
            re.iter().zip(im).map(|(&r, &i)| C64::new(r, i)).collect()
        }
    };
    if amps.len() != d {
        return Err(format!("shape mismatch: expected {d} amplitudes, got {}", amps.len()));
    }
    if amps.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
        return Err("amplitudes must be finite".into());
    }
    if amps.iter().all(|a| a.norm_sqr() == 0.0) {
        return Err("state has zero norm".into());
    }
    Ok(amps)
}

fn basis(d: usize, i: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); d];
    v[i] = C64::new(1.0, 0.0);
    v
}
