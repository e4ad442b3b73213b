//! `twogrid`: command-line driver for single runs, convergence studies and
//! two-grid versus one-grid benchmarks.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use twogrid_core::config::{apply_config, ConfigError, LevelSpec, StudyPlan};
use twogrid_core::study::{self, ConvergenceReport, LevelResult, StudyError};

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "twogrid", version, about = "Two-grid P2-P0 solver for transient Navier-Stokes on the unit square")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single simulation and report errors at the final time.
    Solve {
        #[command(flatten)]
        opts: PlanArgs,
        /// Fine subdivisions (defaults to the last entry of the level list).
        #[arg(long)]
        n_fine: Option<usize>,
        /// Coarse subdivisions (defaults to the nearest integer to sqrt(n_fine)).
        #[arg(long)]
        n_coarse: Option<usize>,
    },
    /// Run a convergence study over a ladder of meshes.
    Study {
        #[command(flatten)]
        opts: PlanArgs,
    },
    /// Compare the two-grid and one-grid methods level by level.
    Bench {
        #[command(flatten)]
        opts: PlanArgs,
    },
}

#[derive(Args)]
struct PlanArgs {
    /// key=value configuration file; flags override its settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Manufactured solution: 1 or 2.
    #[arg(long)]
    example: Option<String>,
    /// Comma-separated fine subdivisions, e.g. 4,8,16.
    #[arg(long)]
    levels: Option<String>,
    /// Time step rule: h2, h or fixed:<value>.
    #[arg(long)]
    krule: Option<String>,
    #[arg(long)]
    tfinal: Option<String>,
    #[arg(long)]
    nu: Option<String>,
    /// twogrid or onegrid.
    #[arg(long)]
    mode: Option<String>,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// parallel or sequential.
    #[arg(long)]
    exec: Option<String>,
}

enum Failure {
    Config(String),
    Solver(String),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<StudyError> for Failure {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Config(c) => Failure::Config(c.to_string()),
            e @ StudyError::Level { .. } => Failure::Solver(e.to_string()),
            e => Failure::Io(e.to_string()),
        }
    }
}

fn build_plan(opts: &PlanArgs) -> Result<StudyPlan, Failure> {
    let mut plan = StudyPlan::default();
    if let Some(path) = &opts.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        apply_config(&mut plan, &text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    }
    let overrides = [
        ("example", &opts.example),
        ("levels", &opts.levels),
        ("krule", &opts.krule),
        ("tfinal", &opts.tfinal),
        ("nu", &opts.nu),
        ("mode", &opts.mode),
        ("exec", &opts.exec),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            plan.set(key, v).map_err(|e| Failure::Config(format!("--{key}: {e}")))?;
        }
    }
    if let Some(out) = &opts.out {
        plan.out = Some(out.clone());
    }
    plan.level_specs()?;
    Ok(plan)
}

fn print_level(r: &LevelResult) {
    eprintln!(
        "level {} (n_H={}, n_h={}, {} steps): L2(u)={:.4e} H1(u)={:.4e} L2(p)={:.4e} max|Bu|={:.2e} in {:.2}s",
        r.level,
        r.spec.n_coarse,
        r.spec.n_fine,
        r.steps,
        r.errors.l2_velocity,
        r.errors.h1_velocity,
        r.errors.l2_pressure,
        r.max_divergence,
        r.wall_seconds
    );
}

fn write_report(plan: &StudyPlan, report: &ConvergenceReport) -> Result<(), Failure> {
    if let Some(path) = &plan.out {
        report.save_csv(path).map_err(|e| Failure::Io(e.to_string()))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn solve(opts: &PlanArgs, n_fine: Option<usize>, n_coarse: Option<usize>) -> Result<(), Failure> {
    let mut plan = build_plan(opts)?;
    let n_fine = n_fine.unwrap_or(*plan.levels.last().expect("validated plan has levels"));
    plan.levels = vec![n_fine];
    let mut spec = plan.level_specs()?[0];
    if let Some(nc) = n_coarse {
        spec = LevelSpec { n_coarse: nc, ..spec };
        plan.simulation_config(&spec).validate().map_err(|e| Failure::Config(e.to_string()))?;
    }
    let (outcome, errors) = study::run_level(&plan, &spec).map_err(|e| Failure::Solver(e.to_string()))?;
    let row = LevelResult {
        level: 1,
        spec,
        unknowns: study::unknowns(spec.n_fine),
        errors,
        rates: None,
        wall_seconds: outcome.wall_seconds,
        max_divergence: outcome.max_divergence(),
        max_pressure_mean: outcome.max_pressure_mean(),
        newton_iterations: outcome.newton_iterations(),
        fine_factorizations: outcome.fine_factorizations(),
        steps: outcome.records.len(),
    };
    let report = ConvergenceReport { rows: vec![row] };
    print!("{}", report.table());
    println!(
        "steps={} newton_iterations={} fine_factorizations={} max_divergence={:.3e} max_pressure_mean={:.3e}",
        report.rows[0].steps,
        report.rows[0].newton_iterations,
        report.rows[0].fine_factorizations,
        report.rows[0].max_divergence,
        report.rows[0].max_pressure_mean
    );
    write_report(&plan, &report)
}

fn run_study(opts: &PlanArgs) -> Result<(), Failure> {
    let plan = build_plan(opts)?;
    let report = study::run_study_with(&plan, print_level)?;
    print!("{}", report.table());
    write_report(&plan, &report)
}

fn bench(opts: &PlanArgs) -> Result<(), Failure> {
    let plan = build_plan(opts)?;
    let report = study::run_benchmark(&plan)?;
    print!("{}", report.table());
    if let Some(path) = &plan.out {
        let file = std::fs::File::create(path).map_err(|e| Failure::Io(e.to_string()))?;
        report.write_csv(file).map_err(|e| Failure::Io(e.to_string()))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve { opts, n_fine, n_coarse } => solve(opts, *n_fine, *n_coarse),
        Command::Study { opts } => run_study(opts),
        Command::Bench { opts } => bench(opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("solver failure: {m}");
            ExitCode::from(EXIT_SOLVER)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::FAILURE
        }
    }
}
