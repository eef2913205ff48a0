use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use collapsar::{load_scenario, run, Mode, Task};

/// Collapse-model trajectories, their Bohmian bath picture, and the
/// density-matrix oracles that tie them together.
#[derive(Parser)]
#[command(name = "collapsar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Factorize the scenario kernel into oscillator modes.
    FactorizeKernel(Common),
    /// Sample hidden-variable noises and check their covariance.
    SampleNoise(Common),
    /// White-noise collapse trajectories against the Lindblad oracle.
    RunMarkov(Common),
    /// Normalized colored-noise collapse trajectories.
    RunNonmarkov(Common),
    /// Joint system and bath evolution with guided hidden variables.
    RunBohm(Common),
    /// Influence-functional density-matrix propagation.
    RunOracle(Common),
    /// Guided conditional states against collapse trajectories.
    Compare(Common),
    /// Run whatever `run.mode` the scenario names.
    Run(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    scenario: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for trajectory ensembles.
    #[arg(long, env = "COLLAPSAR_THREADS")]
    threads: Option<usize>,
    /// Exit with status 4 when any check fails.
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, common) = match cli.command {
        Command::FactorizeKernel(c) => (Some(Task::FactorizeKernel), c),
        Command::SampleNoise(c) => (Some(Task::Mode(Mode::NoiseStats)), c),
        Command::RunMarkov(c) => (Some(Task::Mode(Mode::Markov)), c),
        Command::RunNonmarkov(c) => (Some(Task::Mode(Mode::Nonmarkov)), c),
        Command::RunBohm(c) => (Some(Task::Mode(Mode::Bohm)), c),
        Command::RunOracle(c) => (Some(Task::Mode(Mode::Oracle)), c),
        Command::Compare(c) => (Some(Task::Mode(Mode::Compare)), c),
        Command::Run(c) => (None, c),
    };
    let mut sc = match load_scenario(&common.scenario) {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = common.seed {
        sc.run.seed = seed;
    }
    if let Some(out) = &common.out {
        sc.output.dir = out.display().to_string();
    }
    let task = task.unwrap_or(Task::Mode(sc.run.mode));
    let threads = common.threads.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {threads} worker threads: {e}");
            return ExitCode::from(2);
        }
    };
    let used = pool.current_num_threads();
    match pool.install(|| run(&sc, task, used)) {
        Ok(report) => {
            for c in &report.checks {
                let status = if c.passed { "PASS" } else { "FAIL" };
                println!("{status} {}: {:e} {} {:e}", c.name, c.value, c.relation, c.threshold);
            }
            println!("manifest: {}", report.manifest.display());
            if common.check && !report.all_passed() {
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
