//! Backward Euler two-grid driver.
//!
//! Each time level `t_n = n k` runs three solves:
//!
//! 1. the full nonlinear problem on the coarse mesh (Newton),
//! 2. one Newton step on the fine mesh linearized at the coarse solution,
//! 3. a correction on the fine mesh with the operator of step 2.
//!
//! Steps 2 and 3 share a single factorization. The one-grid mode runs step 1
//! on the fine mesh instead and serves as the reference method.
//!
//! Velocities carry homogeneous Dirichlet data; pressures are normalized to
//! zero mean.

use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::assembly::{AssembledForms, Assembler};
use crate::linalg::{LinalgError, SaddleFactorization, SaddleSystem, SparseMatrix};
use crate::mesh::MeshError;
use crate::par::Execution;
use crate::space::{FeSpace, PressureField, Probe, SpaceError, VelocityField, VelocitySamples};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("Newton iteration failed after {iterations} iterations (last residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },
    #[error("time step {step} (t = {t}): {source}")]
    AtStep {
        step: usize,
        t: f64,
        #[source]
        source: Box<SolverError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    TwoGrid,
    OneGrid,
}

/// A flow problem with homogeneous boundary data.
pub trait FlowProblem: Sync {
    fn initial_velocity(&self, p: [f64; 2]) -> [f64; 2];
    fn forcing(&self, t: f64, p: [f64; 2]) -> [f64; 2];
}

/// Unforced flow from a given initial velocity.
#[derive(Debug, Clone, Copy)]
pub struct FreeDecay<F>(pub F);

impl<F> FlowProblem for FreeDecay<F>
where
    F: Fn([f64; 2]) -> [f64; 2] + Sync,
{
    fn initial_velocity(&self, p: [f64; 2]) -> [f64; 2] {
        (self.0)(p)
    }

    fn forcing(&self, _t: f64, _p: [f64; 2]) -> [f64; 2] {
        [0.0, 0.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    pub nu: f64,
    pub t_final: f64,
    pub dt: f64,
    pub n_coarse: usize,
    pub n_fine: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub mode: Mode,
    pub exec: Execution,
}

impl SimulationConfig {
    pub fn new(n_coarse: usize, n_fine: usize, dt: f64, t_final: f64) -> Self {
        Self {
            nu: 1.0,
            t_final,
            dt,
            n_coarse,
            n_fine,
            newton_tol: 1e-10,
            newton_max_iter: 25,
            mode: Mode::TwoGrid,
            exec: Execution::default(),
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    /// Number of time steps; `t_final` must be an integer multiple of `dt`.
    pub fn n_steps(&self) -> Result<usize, SolverError> {
        self.validate()?;
        Ok((self.t_final / self.dt).round() as usize)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::Config(m));
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("viscosity must be positive, got {}", self.nu));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("time step must be positive, got {}", self.dt));
        }
        if !(self.t_final >= self.dt && self.t_final.is_finite()) {
            return bad(format!("final time {} is shorter than the time step {}", self.t_final, self.dt));
        }
        let steps = (self.t_final / self.dt).round();
        if (steps * self.dt - self.t_final).abs() > 1e-9 * self.t_final {
            return bad(format!("final time {} is not a multiple of the time step {}", self.t_final, self.dt));
        }
        if self.n_coarse < 1 || self.n_fine < self.n_coarse {
            return bad(format!("need n_fine >= n_coarse >= 1, got n_coarse={} n_fine={}", self.n_coarse, self.n_fine));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return bad("Newton tolerance and iteration limit must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub velocity: VelocityField,
    pub pressure: PressureField,
}

impl FlowState {
    pub fn zeros(space: &Arc<FeSpace>) -> Self {
        Self { velocity: VelocityField::zeros(space), pressure: PressureField::zeros(space) }
    }
}

/// Solution at time level `step`. In one-grid mode only `fine` is present.
#[derive(Debug, Clone)]
pub struct TimeStepState {
    pub step: usize,
    pub t: f64,
    pub coarse: Option<FlowState>,
    /// Fine solution of the linearized step.
    pub star: Option<FlowState>,
    /// Final fine solution (corrected in two-grid mode).
    pub fine: FlowState,
}

#[derive(Debug, Clone, Default)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Residual norm before every iteration and after the last one.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub newton_iterations: usize,
    pub newton_residuals: Vec<f64>,
    pub fine_factorizations: usize,
    /// Largest `||B u||` over the velocities computed in this step.
    pub divergence: f64,
    /// Largest `|mean p|` over the pressures computed in this step.
    pub pressure_mean: f64,
    pub coarse_seconds: f64,
    pub fine_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: TimeStepState,
    pub records: Vec<StepRecord>,
    /// Wall time of the time loop.
    pub wall_seconds: f64,
}

impl RunOutcome {
    pub fn max_divergence(&self) -> f64 {
        self.records.iter().map(|r| r.divergence).fold(0.0, f64::max)
    }

    pub fn max_pressure_mean(&self) -> f64 {
        self.records.iter().map(|r| r.pressure_mean).fold(0.0, f64::max)
    }

    pub fn fine_factorizations(&self) -> usize {
        self.records.iter().map(|r| r.fine_factorizations).sum()
    }

    pub fn newton_iterations(&self) -> usize {
        self.records.iter().map(|r| r.newton_iterations).sum()
    }

    pub fn fine_seconds(&self) -> f64 {
        self.records.iter().map(|r| r.fine_seconds).sum()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn gather(full: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| full[i]).collect()
}

/// Per-mesh operators: static forms and the saddle pattern with its symbolic
/// factorization.
#[derive(Debug)]
pub struct Level {
    assembler: Assembler,
    forms: AssembledForms,
    saddle: SaddleSystem,
}

impl Level {
    pub fn new(n: usize, exec: Execution) -> Result<Self, SolverError> {
        let space = FeSpace::structured(n, exec)?;
        let assembler = Assembler::new(&space);
        let forms = assembler.assemble_static();
        let saddle = SaddleSystem::new(
            assembler.velocity_pattern().clone(),
            &forms.divergence,
            &space.cell_areas(),
            &space.dofs().interior_velocity_dofs,
        )?;
        Ok(Self { assembler, forms, saddle })
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        self.assembler.space()
    }

    pub fn assembler(&self) -> &Assembler {
        &self.assembler
    }

    pub fn forms(&self) -> &AssembledForms {
        &self.forms
    }

    fn interior(&self) -> &[usize] {
        &self.space().dofs().interior_velocity_dofs
    }

    /// `||B u||` over all cells.
    pub fn divergence_norm(&self, u: &VelocityField) -> f64 {
        norm(&self.forms.divergence.mul_vec(u.coeffs()))
    }

    pub fn load<P: FlowProblem + ?Sized>(&self, problem: &P, t: f64) -> Vec<f64> {
        self.assembler.load_vector(|p| problem.forcing(t, p))
    }

    fn state_from(&self, sol: crate::linalg::SaddleSolution) -> Result<FlowState, SolverError> {
        Ok(FlowState {
            velocity: VelocityField::from_interior(self.space(), &sol.velocity)?,
            pressure: PressureField::from_coeffs(self.space(), sol.pressure)?,
        })
    }

    /// Discretely divergence-free `L2` projection of `u0`; the pressure slot
    /// holds the multiplier of the divergence constraint.
    pub fn project<F>(&self, u0: F) -> Result<FlowState, SolverError>
    where
        F: Fn([f64; 2]) -> [f64; 2] + Sync + Send,
    {
        let rhs = self.assembler.load_vector(u0);
        let fact = self.saddle.factorize(&self.forms.mass)?;
        let zero = vec![0.0; self.saddle.n_pressure()];
        self.state_from(fact.solve(&gather(&rhs, self.interior()), &zero, 0.0)?)
    }

    /// Momentum residual of the backward Euler step over all velocity DOFs:
    /// `M (u - u_prev) / k + nu A u + b(u, u, .) - B^T p - load`.
    pub fn momentum_residual(
        &self,
        prev: &VelocityField,
        state: &FlowState,
        load: &[f64],
        dt: f64,
        nu: f64,
    ) -> Result<Vec<f64>, SolverError> {
        let u = &state.velocity;
        let s = self.assembler.sample(u)?;
        Ok(self.residual_sampled(prev, state, &s, load, dt, nu))
    }

    fn residual_sampled(
        &self,
        prev: &VelocityField,
        state: &FlowState,
        samples: &VelocitySamples,
        load: &[f64],
        dt: f64,
        nu: f64,
    ) -> Vec<f64> {
        let u = state.velocity.coeffs();
        let du: Vec<f64> = u.iter().zip(prev.coeffs()).map(|(a, b)| (a - b) / dt).collect();
        let m = self.forms.mass.mul_vec(&du);
        let a = self.forms.stiffness.mul_vec(u);
        let c = self.assembler.trilinear_vector_sampled(samples, samples);
        let bp = self.forms.divergence.mul_transpose_vec(state.pressure.coeffs());
        (0..u.len()).map(|i| m[i] + nu * a[i] + c[i] - bp[i] - load[i]).collect()
    }

    /// Jacobian of [`Self::momentum_residual`] with respect to the velocity:
    /// `M / k + nu A + N1(u) + N2(u)`.
    pub fn jacobian(&self, u: &VelocityField, dt: f64, nu: f64) -> Result<SparseMatrix, SolverError> {
        let conv = self.assembler.trilinear_matrices(u)?;
        Ok(self.assembler.oseen_operator(&self.forms, &conv, dt, nu)?)
    }

    /// Solves the nonlinear backward Euler step by Newton's method starting
    /// from `guess`.
    pub fn newton(
        &self,
        prev: &VelocityField,
        guess: FlowState,
        load: &[f64],
        config: &SimulationConfig,
    ) -> Result<(FlowState, NewtonReport), SolverError> {
        let (dt, nu) = (config.dt, config.nu);
        let interior = self.interior();
        let m_prev = self.forms.mass.mul_vec(prev.coeffs());
        let scale = 1.0 + norm(&gather(&m_prev.iter().zip(load).map(|(m, f)| m / dt + f).collect::<Vec<_>>(), interior));

        let mut state = guess;
        let mut report = NewtonReport::default();
        let mut increases = 0;
        loop {
            let samples = self.assembler.sample(&state.velocity)?;
            let r = gather(&self.residual_sampled(prev, &state, &samples, load, dt, nu), interior);
            let div = self.forms.divergence.mul_vec(state.velocity.coeffs());
            let rn = (norm(&r).powi(2) + norm(&div).powi(2)).sqrt();
            if !rn.is_finite() {
                return Err(SolverError::NewtonDiverged { iterations: report.iterations, residual: rn });
            }
            if let Some(&last) = report.residuals.last() {
                increases = if rn > last { increases + 1 } else { 0 };
            }
            report.residuals.push(rn);
            if rn <= config.newton_tol * scale {
                return Ok((state, report));
            }
            if report.iterations >= config.newton_max_iter || increases >= 3 {
                return Err(SolverError::NewtonDiverged { iterations: report.iterations, residual: rn });
            }
            let conv = self.assembler.trilinear_matrices_sampled(&samples);
            let jac = self.assembler.oseen_operator(&self.forms, &conv, dt, nu)?;
            let f: Vec<f64> = r.iter().map(|v| -v).collect();
            let g: Vec<f64> = div.iter().map(|v| -v).collect();
            let sol = self.saddle.factorize(&jac)?.solve(&f, &g, -state.pressure.mean())?;
            for (&d, dv) in interior.iter().zip(&sol.velocity) {
                state.velocity.coeffs_mut()[d] += dv;
            }
            for (p, dp) in state.pressure.coeffs_mut().iter_mut().zip(&sol.pressure) {
                *p += dp;
            }
            report.iterations += 1;
        }
    }
}

/// The step-2 operator on the fine mesh together with the coarse velocity
/// sampled at fine quadrature points; step 3 reuses both.
#[derive(Debug)]
pub struct FineLinearization {
    pub operator: SparseMatrix,
    factorization: SaddleFactorization,
    coarse_samples: VelocitySamples,
}

fn combine(a: &VelocitySamples, b: &VelocitySamples, sb: f64) -> VelocitySamples {
    let mut out = a.clone();
    for (v, w) in out.values.iter_mut().zip(&b.values) {
        v[0] += sb * w[0];
        v[1] += sb * w[1];
    }
    for (g, h) in out.gradients.iter_mut().zip(&b.gradients) {
        for i in 0..2 {
            for j in 0..2 {
                g[i][j] += sb * h[i][j];
            }
        }
    }
    out
}

#[derive(Debug)]
pub struct TwoGridSolver {
    config: SimulationConfig,
    coarse: Option<Level>,
    fine: Level,
    probe: Option<Probe>,
}

impl TwoGridSolver {
    pub fn new(config: SimulationConfig) -> Result<Self, SolverError> {
        config.validate()?;
        let fine = Level::new(config.n_fine, config.exec)?;
        let (coarse, probe) = match config.mode {
            Mode::OneGrid => (None, None),
            Mode::TwoGrid => {
                let coarse = Level::new(config.n_coarse, config.exec)?;
                let probe = if coarse.space().same_mesh(fine.space()) {
                    None
                } else {
                    Some(Probe::new(coarse.space(), fine.space(), fine.assembler().table())?)
                };
                (Some(coarse), probe)
            }
        };
        Ok(Self { config, coarse, fine, probe })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn coarse(&self) -> Option<&Level> {
        self.coarse.as_ref()
    }

    pub fn fine(&self) -> &Level {
        &self.fine
    }

    fn coarse_level(&self) -> &Level {
        self.coarse.as_ref().expect("two-grid mode has a coarse level")
    }

    /// Projected initial data on every mesh in use.
    pub fn initial_state<P: FlowProblem + ?Sized>(&self, problem: &P) -> Result<TimeStepState, SolverError> {
        let u0 = |p| problem.initial_velocity(p);
        let fine = self.fine.project(u0)?;
        let coarse = match &self.coarse {
            Some(level) => Some(level.project(u0)?),
            None => None,
        };
        let star = coarse.as_ref().map(|_| fine.clone());
        Ok(TimeStepState { step: 0, t: 0.0, coarse, star, fine })
    }

    /// Samples a coarse velocity at the fine quadrature points.
    pub fn coarse_on_fine(&self, u: &VelocityField) -> Result<VelocitySamples, SolverError> {
        Ok(match &self.probe {
            Some(probe) => probe.sample(u),
            None => self.fine.assembler().sample(u)?,
        })
    }

    /// Step 1: nonlinear solve on the coarse mesh, warm-started from the
    /// previous coarse solution.
    pub fn step1_coarse(&self, prev: &FlowState, load: &[f64]) -> Result<(FlowState, NewtonReport), SolverError> {
        self.coarse_level().newton(&prev.velocity, prev.clone(), load, &self.config)
    }

    /// Step 2: one Newton step on the fine mesh around the coarse solution.
    pub fn step2_fine(
        &self,
        prev_star: &VelocityField,
        coarse: &VelocityField,
        load: &[f64],
    ) -> Result<(FlowState, FineLinearization), SolverError> {
        let fine = &self.fine;
        let asm = fine.assembler();
        let s = self.coarse_on_fine(coarse)?;
        let conv = asm.trilinear_matrices_sampled(&s);
        let operator = asm.oseen_operator(fine.forms(), &conv, self.config.dt, self.config.nu)?;
        let factorization = fine.saddle.factorize(&operator)?;
        let mut rhs = self.inertia(prev_star, load);
        for (r, c) in rhs.iter_mut().zip(asm.trilinear_vector_sampled(&s, &s)) {
            *r += c;
        }
        let state = self.fine_solve(&factorization, &rhs)?;
        Ok((state, FineLinearization { operator, factorization, coarse_samples: s }))
    }

    /// Step 3: correction on the fine mesh with the step-2 factorization.
    pub fn step3_fine(
        &self,
        lin: &FineLinearization,
        prev_fine: &VelocityField,
        star: &VelocityField,
        load: &[f64],
    ) -> Result<FlowState, SolverError> {
        let asm = self.fine.assembler();
        let sc = &lin.coarse_samples;
        let ss = asm.sample(star)?;
        let diff = combine(sc, &ss, -1.0);
        let mut rhs = self.inertia(prev_fine, load);
        let c1 = asm.trilinear_vector_sampled(sc, &ss);
        let c2 = asm.trilinear_vector_sampled(&ss, &diff);
        for ((r, a), b) in rhs.iter_mut().zip(c1).zip(c2) {
            *r += a + b;
        }
        self.fine_solve(&lin.factorization, &rhs)
    }

    fn inertia(&self, prev: &VelocityField, load: &[f64]) -> Vec<f64> {
        let m = self.fine.forms().mass.mul_vec(prev.coeffs());
        m.iter().zip(load).map(|(m, f)| m / self.config.dt + f).collect()
    }

    fn fine_solve(&self, fact: &SaddleFactorization, rhs: &[f64]) -> Result<FlowState, SolverError> {
        let zero = vec![0.0; self.fine.saddle.n_pressure()];
        self.fine.state_from(fact.solve(&gather(rhs, self.fine.interior()), &zero, 0.0)?)
    }

    /// Nonlinear solve on the fine mesh (the one-grid method).
    pub fn one_grid_baseline(&self, prev: &FlowState, load: &[f64]) -> Result<(FlowState, NewtonReport), SolverError> {
        self.fine.newton(&prev.velocity, prev.clone(), load, &self.config)
    }

    fn check(&self, level: &Level, s: &FlowState, rec: &mut StepRecord) {
        rec.divergence = rec.divergence.max(level.divergence_norm(&s.velocity));
        rec.pressure_mean = rec.pressure_mean.max(s.pressure.mean().abs());
    }

    /// Advances one time level.
    pub fn advance<P: FlowProblem + ?Sized>(
        &self,
        state: &TimeStepState,
        problem: &P,
    ) -> Result<(TimeStepState, StepRecord), SolverError> {
        let step = state.step + 1;
        let n_steps = self.config.n_steps()?;
        let t = if step == n_steps { self.config.t_final } else { step as f64 * self.config.dt };
        let mut rec = StepRecord {
            step,
            t,
            newton_iterations: 0,
            newton_residuals: Vec::new(),
            fine_factorizations: 0,
            divergence: 0.0,
            pressure_mean: 0.0,
            coarse_seconds: 0.0,
            fine_seconds: 0.0,
        };
        let fine_load = self.fine.load(problem, t);
        let next = match self.config.mode {
            Mode::OneGrid => {
                let clock = Instant::now();
                let (fine, report) = self.one_grid_baseline(&state.fine, &fine_load)?;
                rec.fine_seconds = clock.elapsed().as_secs_f64();
                rec.newton_iterations = report.iterations;
                rec.fine_factorizations = report.iterations;
                rec.newton_residuals = report.residuals;
                self.check(&self.fine, &fine, &mut rec);
                TimeStepState { step, t, coarse: None, star: None, fine }
            }
            Mode::TwoGrid => {
                let coarse_prev = state.coarse.as_ref().expect("two-grid state has a coarse solution");
                let star_prev = state.star.as_ref().expect("two-grid state has a step-2 solution");
                let clock = Instant::now();
                let level = self.coarse_level();
                let (coarse, report) = self.step1_coarse(coarse_prev, &level.load(problem, t))?;
                rec.coarse_seconds = clock.elapsed().as_secs_f64();
                rec.newton_iterations = report.iterations;
                rec.newton_residuals = report.residuals;

                let clock = Instant::now();
                let (star, lin) = self.step2_fine(&star_prev.velocity, &coarse.velocity, &fine_load)?;
                let fine = self.step3_fine(&lin, &state.fine.velocity, &star.velocity, &fine_load)?;
                rec.fine_seconds = clock.elapsed().as_secs_f64();
                rec.fine_factorizations = 1;
                self.check(level, &coarse, &mut rec);
                self.check(&self.fine, &star, &mut rec);
                self.check(&self.fine, &fine, &mut rec);
                TimeStepState { step, t, coarse: Some(coarse), star: Some(star), fine }
            }
        };
        Ok((next, rec))
    }

    /// Runs all `T / k` steps from the projected initial data.
    pub fn run<P: FlowProblem + ?Sized>(&self, problem: &P) -> Result<RunOutcome, SolverError> {
        self.run_with(problem, |_, _| {})
    }

    /// [`Self::run`] with a callback after every step.
    pub fn run_with<P, C>(&self, problem: &P, mut observe: C) -> Result<RunOutcome, SolverError>
    where
        P: FlowProblem + ?Sized,
        C: FnMut(&TimeStepState, &StepRecord),
    {
        let n_steps = self.config.n_steps()?;
        let mut state = self.initial_state(problem)?;
        let mut records = Vec::with_capacity(n_steps);
        let clock = Instant::now();
        while state.step < n_steps {
            let (step, t) = (state.step + 1, (state.step + 1) as f64 * self.config.dt);
            let (next, rec) = self
                .advance(&state, problem)
                .map_err(|e| SolverError::AtStep { step, t, source: Box::new(e) })?;
            observe(&next, &rec);
            records.push(rec);
            state = next;
        }
        Ok(RunOutcome { state, records, wall_seconds: clock.elapsed().as_secs_f64() })
    }
}

/// Convenience wrapper: builds the solver for `config` and runs `problem`.
pub fn run<P: FlowProblem + ?Sized>(config: SimulationConfig, problem: &P) -> Result<RunOutcome, SolverError> {
    TwoGridSolver::new(config)?.run(problem)
}
