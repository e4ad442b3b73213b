//! Convergence studies over a ladder of meshes, and two-grid versus one-grid
//! comparisons.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::config::{ConfigError, LevelSpec, StudyPlan};
use crate::mms::{convergence_rate, error_norms, ErrorNorms, ManufacturedCase};
use crate::twogrid::{Mode, RunOutcome, SolverError, TwoGridSolver};

pub const CSV_HEADER: [&str; 14] = [
    "level",
    "n_H",
    "n_h",
    "H",
    "h",
    "k",
    "N",
    "err_l2_vel",
    "rate_l2_vel",
    "err_h1_vel",
    "rate_h1_vel",
    "err_l2_p",
    "rate_l2_p",
    "wall_seconds",
];

#[derive(Debug, Error)]
pub enum StudyError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("level {level} (n_h = {n_fine}): {source}")]
    Level {
        level: usize,
        n_fine: usize,
        #[source]
        source: SolverError,
    },
    #[error("writing report: {0}")]
    Io(#[from] io::Error),
    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),
}

impl StudyError {
    /// Whether the failure came from a solver rather than the input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, StudyError::Level { .. })
    }
}

/// Fine-grid unknowns: interior velocity DOFs plus pressure DOFs.
pub fn unknowns(n: usize) -> usize {
    2 * (2 * n - 1) * (2 * n - 1) + 2 * n * n
}

#[derive(Debug, Clone)]
pub struct LevelResult {
    pub level: usize,
    pub spec: LevelSpec,
    pub unknowns: usize,
    pub errors: ErrorNorms,
    /// Rates against the previous level: `[l2_vel, h1_vel, l2_p]`.
    pub rates: Option<[f64; 3]>,
    pub wall_seconds: f64,
    pub max_divergence: f64,
    pub max_pressure_mean: f64,
    pub newton_iterations: usize,
    pub fine_factorizations: usize,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub rows: Vec<LevelResult>,
}

fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

impl ConvergenceReport {
    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        for r in &self.rows {
            let rate = |i: usize| r.rates.map(|x| sci(x[i])).unwrap_or_default();
            out.write_record([
                r.level.to_string(),
                r.spec.n_coarse.to_string(),
                r.spec.n_fine.to_string(),
                sci(1.0 / r.spec.n_coarse as f64),
                sci(1.0 / r.spec.n_fine as f64),
                sci(r.spec.dt),
                r.unknowns.to_string(),
                sci(r.errors.l2_velocity),
                rate(0),
                sci(r.errors.h1_velocity),
                rate(1),
                sci(r.errors.l2_pressure),
                rate(2),
                sci(r.wall_seconds),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), StudyError> {
        self.write_csv(std::fs::File::create(path)?)?;
        Ok(())
    }

    /// Human-readable table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>5} {:>4} {:>4} {:>10} {:>7} {:>11} {:>6} {:>11} {:>6} {:>11} {:>6} {:>9}",
            "level", "n_H", "n_h", "k", "N", "L2(u)", "rate", "H1(u)", "rate", "L2(p)", "rate", "wall[s]"
        );
        for r in &self.rows {
            let rate = |i: usize| r.rates.map(|x| format!("{:.3}", x[i])).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "{:>5} {:>4} {:>4} {:>10.3e} {:>7} {:>11.4e} {:>6} {:>11.4e} {:>6} {:>11.4e} {:>6} {:>9.2}",
                r.level,
                r.spec.n_coarse,
                r.spec.n_fine,
                r.spec.dt,
                r.unknowns,
                r.errors.l2_velocity,
                rate(0),
                r.errors.h1_velocity,
                rate(1),
                r.errors.l2_pressure,
                rate(2),
                r.wall_seconds
            );
        }
        s
    }

    /// Rates between the last two levels.
    pub fn last_rates(&self) -> Option<[f64; 3]> {
        self.rows.last().and_then(|r| r.rates)
    }
}

/// Runs one level and measures the errors of the final fine solution at `T`.
pub fn run_level(plan: &StudyPlan, spec: &LevelSpec) -> Result<(RunOutcome, ErrorNorms), SolverError> {
    let case = ManufacturedCase::new(plan.example, plan.nu);
    let solver = TwoGridSolver::new(plan.simulation_config(spec))?;
    let outcome = solver.run(&case)?;
    let fine = &outcome.state.fine;
    let errors = error_norms(&fine.velocity, &fine.pressure, &case, outcome.state.t);
    Ok((outcome, errors))
}

/// Runs every level of `plan` in order and computes observed rates.
pub fn run_study(plan: &StudyPlan) -> Result<ConvergenceReport, StudyError> {
    run_study_with(plan, |_| {})
}

/// [`run_study`] with a callback after each completed level.
pub fn run_study_with(plan: &StudyPlan, mut on_level: impl FnMut(&LevelResult)) -> Result<ConvergenceReport, StudyError> {
    let specs = plan.level_specs()?;
    let mut rows: Vec<LevelResult> = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let level = i + 1;
        let (outcome, errors) =
            run_level(plan, spec).map_err(|source| StudyError::Level { level, n_fine: spec.n_fine, source })?;
        let rates = rows.last().map(|p| {
            let (hc, hf) = (1.0 / p.spec.n_fine as f64, 1.0 / spec.n_fine as f64);
            [
                convergence_rate(p.errors.l2_velocity, errors.l2_velocity, hc, hf),
                convergence_rate(p.errors.h1_velocity, errors.h1_velocity, hc, hf),
                convergence_rate(p.errors.l2_pressure, errors.l2_pressure, hc, hf),
            ]
        });
        let row = LevelResult {
            level,
            spec: *spec,
            unknowns: unknowns(spec.n_fine),
            errors,
            rates,
            wall_seconds: outcome.wall_seconds,
            max_divergence: outcome.max_divergence(),
            max_pressure_mean: outcome.max_pressure_mean(),
            newton_iterations: outcome.newton_iterations(),
            fine_factorizations: outcome.fine_factorizations(),
            steps: outcome.records.len(),
        };
        on_level(&row);
        rows.push(row);
    }
    Ok(ConvergenceReport { rows })
}

/// Two-grid and one-grid results for one level.
#[derive(Debug, Clone)]
pub struct BenchmarkRow {
    pub spec: LevelSpec,
    pub two_grid_seconds: f64,
    pub one_grid_seconds: f64,
    pub two_grid_errors: ErrorNorms,
    pub one_grid_errors: ErrorNorms,
    pub steps: usize,
    pub two_grid_factorizations: usize,
    pub one_grid_factorizations: usize,
    /// Newton iterations per step of the one-grid method.
    pub one_grid_newton_mean: f64,
    /// Fine-mesh time of the two-grid method (steps 2 and 3 only).
    pub two_grid_fine_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
}

impl BenchmarkReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>4} {:>4} {:>10} {:>11} {:>11} {:>8} {:>10} {:>10} {:>9} {:>9}",
            "n_H", "n_h", "k", "L2 2grid", "L2 1grid", "ratio", "fact/step", "newton/st", "2grid[s]", "1grid[s]"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>4} {:>4} {:>10.3e} {:>11.4e} {:>11.4e} {:>8.3} {:>4}/{:<5.2} {:>10.2} {:>9.2} {:>9.2}",
                r.spec.n_coarse,
                r.spec.n_fine,
                r.spec.dt,
                r.two_grid_errors.l2_velocity,
                r.one_grid_errors.l2_velocity,
                r.two_grid_errors.l2_velocity / r.one_grid_errors.l2_velocity,
                r.two_grid_factorizations / r.steps.max(1),
                r.one_grid_factorizations as f64 / r.steps.max(1) as f64,
                r.one_grid_newton_mean,
                r.two_grid_seconds,
                r.one_grid_seconds
            );
        }
        s
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "n_H",
            "n_h",
            "k",
            "steps",
            "err_l2_vel_twogrid",
            "err_l2_vel_onegrid",
            "err_h1_vel_twogrid",
            "err_h1_vel_onegrid",
            "err_l2_p_twogrid",
            "err_l2_p_onegrid",
            "fine_factorizations_twogrid",
            "fine_factorizations_onegrid",
            "wall_seconds_twogrid",
            "wall_seconds_onegrid",
        ])?;
        for r in &self.rows {
            out.write_record([
                r.spec.n_coarse.to_string(),
                r.spec.n_fine.to_string(),
                sci(r.spec.dt),
                r.steps.to_string(),
                sci(r.two_grid_errors.l2_velocity),
                sci(r.one_grid_errors.l2_velocity),
                sci(r.two_grid_errors.h1_velocity),
                sci(r.one_grid_errors.h1_velocity),
                sci(r.two_grid_errors.l2_pressure),
                sci(r.one_grid_errors.l2_pressure),
                r.two_grid_factorizations.to_string(),
                r.one_grid_factorizations.to_string(),
                sci(r.two_grid_seconds),
                sci(r.one_grid_seconds),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs every level of `plan` with both methods. The plan's mode is ignored.
pub fn run_benchmark(plan: &StudyPlan) -> Result<BenchmarkReport, StudyError> {
    let two = StudyPlan { mode: Mode::TwoGrid, ..plan.clone() };
    let one = StudyPlan { mode: Mode::OneGrid, ..plan.clone() };
    let specs = two.level_specs()?;
    let mut rows = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let fail = |source| StudyError::Level { level: i + 1, n_fine: spec.n_fine, source };
        let (tg, tg_err) = run_level(&two, spec).map_err(fail)?;
        let one_spec = LevelSpec { n_coarse: spec.n_fine, ..*spec };
        let (og, og_err) = run_level(&one, &one_spec).map_err(fail)?;
        let steps = og.records.len();
        rows.push(BenchmarkRow {
            spec: *spec,
            two_grid_seconds: tg.wall_seconds,
            one_grid_seconds: og.wall_seconds,
            two_grid_errors: tg_err,
            one_grid_errors: og_err,
            steps,
            two_grid_factorizations: tg.fine_factorizations(),
            one_grid_factorizations: og.fine_factorizations(),
            one_grid_newton_mean: og.newton_iterations() as f64 / steps.max(1) as f64,
            two_grid_fine_seconds: tg.fine_seconds(),
        });
    }
    Ok(BenchmarkReport { rows })
}
