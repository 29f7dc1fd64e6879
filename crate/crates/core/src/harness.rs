//! Convergence and timing experiments.
//!
//! [`run_convergence`] integrates a registered problem with every requested
//! solver over a ladder of step sizes, scoring each run by the trajectory
//! l2 error against the problem's reference solution (closed form where one
//! exists, a tiny-step radau3 semi-discrete reference for the PDE problem,
//! which additionally reports its final-time error against the analytic
//! field). [`fit_order`] extracts observed convergence orders from the rows.

use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;

use crate::classical::{rk_integrate, RkScheme};
use crate::error::{Error, Result};
use crate::par::{indexed_map, indexed_map_seq};
use crate::problems::{
    build_fd_diffusion_reaction, dahlquist, diffusion_reaction_field, example1_nonnormal,
    DiffusionReactionSpec,
};
use crate::stepper::{
    step_linear_coupled, step_linear_diagonalizable, LinearProblem, StepConfig, Trajectory,
};

/// The eight benchmark solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverId {
    PirpnnM3,
    PirpnnM10,
    BackwardEuler,
    ImplicitMidpoint,
    Trapezoidal,
    Gauss2,
    Radau2,
    Radau3,
}

impl SolverId {
    pub fn all() -> [SolverId; 8] {
        [
            SolverId::PirpnnM3,
            SolverId::PirpnnM10,
            SolverId::BackwardEuler,
            SolverId::ImplicitMidpoint,
            SolverId::Trapezoidal,
            SolverId::Gauss2,
            SolverId::Radau2,
            SolverId::Radau3,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            SolverId::PirpnnM3 => "pirpnn-m3",
            SolverId::PirpnnM10 => "pirpnn-m10",
            SolverId::BackwardEuler => "backward-euler",
            SolverId::ImplicitMidpoint => "implicit-midpoint",
            SolverId::Trapezoidal => "trapezoidal",
            SolverId::Gauss2 => "gauss2",
            SolverId::Radau2 => "radau2",
            SolverId::Radau3 => "radau3",
        }
    }

    pub fn parse(name: &str) -> Result<SolverId> {
        SolverId::all()
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown solver '{name}'")))
    }
}

/// Problem selector with the knobs the benchmarks expose.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemId {
    Dahlquist { lambda: f64, u0: f64, t_end: f64 },
    Example1,
    DiffReac(DiffusionReactionSpec),
}

impl ProblemId {
    pub fn parse(name: &str, lambda: f64) -> Result<ProblemId> {
        match name {
            "dahlquist" => Ok(ProblemId::Dahlquist {
                lambda,
                u0: 1.0,
                t_end: 1.0,
            }),
            "example1" => Ok(ProblemId::Example1),
            "diffreac" => Ok(ProblemId::DiffReac(DiffusionReactionSpec::default())),
            other => Err(Error::Config(format!("unknown problem '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProblemId::Dahlquist { .. } => "dahlquist",
            ProblemId::Example1 => "example1",
            ProblemId::DiffReac(_) => "diffreac",
        }
    }
}

/// One experiment: a problem, a solver list, a step ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub problem: ProblemId,
    pub solvers: Vec<SolverId>,
    /// Positive, decreasing.
    pub h_values: Vec<f64>,
    /// Timing repetitions; 0 disables timing (wall_seconds reported as 0).
    pub timing_reps: usize,
    pub seed: u64,
    /// PI-RPNN regularization; 0 selects the pseudoinverse path.
    pub delta: f64,
}

/// Benchmark default for the PI-RPNN ridge weight: small enough that the
/// PDE saturation floor stays at the spatial-truncation level (~1e-8), large
/// enough that trajectory errors stay above f64 roundoff across the step
/// ladder. `delta = 0` gives the pure pseudoinverse scheme.
pub const BENCH_DEFAULT_DELTA: f64 = 1e-10;

impl ExperimentSpec {
    pub fn new(problem: ProblemId) -> ExperimentSpec {
        ExperimentSpec {
            problem,
            solvers: SolverId::all().to_vec(),
            h_values: default_h_ladder(),
            timing_reps: 0,
            seed: crate::stepper::DEFAULT_SEED,
            delta: BENCH_DEFAULT_DELTA,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() || self.h_values.is_empty() {
            return Err(Error::Config("need at least one solver and one h".into()));
        }
        for w in self.h_values.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::Config("h_values must be strictly decreasing".into()));
            }
        }
        if !(self.h_values[self.h_values.len() - 1] > 0.0) {
            return Err(Error::Config("h_values must be positive".into()));
        }
        Ok(())
    }
}

/// Default ladder `h = 2^-1 .. 2^-10`.
pub fn default_h_ladder() -> Vec<f64> {
    (1..=10).map(|k| 0.5f64.powi(k)).collect()
}

/// One (solver, h) outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub solver: String,
    pub h: f64,
    /// Trajectory l2 error against the problem reference.
    pub l2_error: f64,
    /// Median wall seconds over the timing repetitions (0 when untimed).
    pub wall_seconds: f64,
    pub steps: usize,
    /// diffreac only: final-time spatial l2 error against the analytic PDE
    /// field (the saturating column).
    pub l2_error_field: Option<f64>,
}

/// Integrate one solver; PI-RPNN runs prefer the eigen path and fall back to
/// the coupled path when the eigenbasis is ill-conditioned.
pub fn integrate_solver(
    solver: SolverId,
    problem: &LinearProblem,
    h: f64,
    seed: u64,
    delta: f64,
) -> Result<Trajectory> {
    match solver {
        SolverId::PirpnnM3 | SolverId::PirpnnM10 => {
            let m = if solver == SolverId::PirpnnM3 { 3 } else { 10 };
            let mut cfg = StepConfig::new(m, h);
            cfg.seed = seed;
            cfg.delta = delta;
            match step_linear_diagonalizable(problem, &cfg) {
                Err(Error::IllConditionedEigenbasis { .. }) => step_linear_coupled(problem, &cfg),
                other => other,
            }
        }
        SolverId::BackwardEuler => rk_integrate(&RkScheme::backward_euler(), problem, h),
        SolverId::ImplicitMidpoint => rk_integrate(&RkScheme::implicit_midpoint(), problem, h),
        SolverId::Trapezoidal => rk_integrate(&RkScheme::trapezoidal(), problem, h),
        SolverId::Gauss2 => rk_integrate(&RkScheme::gauss2(), problem, h),
        SolverId::Radau2 => rk_integrate(&RkScheme::radau2(), problem, h),
        SolverId::Radau3 => rk_integrate(&RkScheme::radau3(), problem, h),
    }
}

/// Build the registered linear problem.
pub fn build_problem(id: &ProblemId) -> Result<(LinearProblem, ReferenceSolution)> {
    match id {
        ProblemId::Dahlquist { lambda, u0, t_end } => {
            let (p, exact) = dahlquist(*lambda, *u0, 0.0, *t_end)?;
            Ok((p, ReferenceSolution::Closed(Box::new(move |t| exact.at(t)))))
        }
        ProblemId::Example1 => {
            let (p, exact) = example1_nonnormal();
            Ok((p, ReferenceSolution::Closed(Box::new(move |t| exact.at(t)))))
        }
        ProblemId::DiffReac(spec) => {
            let (p, _field) = build_fd_diffusion_reaction(spec)?;
            Ok((p, ReferenceSolution::SemiDiscrete { spec: spec.clone() }))
        }
    }
}

/// What a solver is scored against.
pub enum ReferenceSolution {
    /// Closed-form solution evaluated at arbitrary times.
    Closed(Box<dyn Fn(f64) -> DVector<f64> + Sync>),
    /// Tiny-step radau3 run on the semi-discrete system, recomputed per h so
    /// it lands exactly on the solver grid; the analytic field supplies the
    /// separate saturating column.
    SemiDiscrete { spec: DiffusionReactionSpec },
}

/// Reference substep target for the semi-discrete radau3 run.
const SEMI_DISCRETE_REF_STEP: f64 = 1.0 / 4096.0;

fn trajectory_l2_error(traj: &Trajectory, reference: &[DVector<f64>]) -> f64 {
    debug_assert_eq!(traj.states.len(), reference.len());
    let sum: f64 = traj
        .states
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).norm_squared())
        .sum();
    (sum / traj.states.len() as f64).sqrt()
}

fn reference_states(
    problem: &LinearProblem,
    reference: &ReferenceSolution,
    times: &[f64],
    h: f64,
) -> Result<Vec<DVector<f64>>> {
    match reference {
        ReferenceSolution::Closed(f) => Ok(times.iter().map(|&t| f(t)).collect()),
        ReferenceSolution::SemiDiscrete { .. } => {
            // radau3 with an integer number of substeps per solver step.
            let substeps = (h / SEMI_DISCRETE_REF_STEP).ceil().max(1.0) as usize;
            let h_ref = h / substeps as f64;
            let fine = rk_integrate(&RkScheme::radau3(), problem, h_ref)?;
            let mut out = Vec::with_capacity(times.len());
            for &t in times {
                let idx = ((t - problem.t0) / h_ref).round() as usize;
                let idx = idx.min(fine.states.len() - 1);
                if ((problem.t0 + idx as f64 * h_ref) - t).abs() > 1e-9 * (1.0 + t.abs()) {
                    return Err(Error::Numerical(format!(
                        "reference grid misaligned at t = {t}"
                    )));
                }
                out.push(fine.states[idx].clone());
            }
            Ok(out)
        }
    }
}

/// Run the experiment: one row per (solver, h). Accuracy runs are parallel
/// over rows; timing runs (reps >= 1) execute sequentially, discard one
/// warm-up, and report the median of the repetitions.
pub fn run_convergence(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let (problem, reference) = build_problem(&spec.problem)?;
    let field_spec = match &spec.problem {
        ProblemId::DiffReac(s) => Some(s.clone()),
        _ => None,
    };

    let jobs: Vec<(SolverId, f64)> = spec
        .solvers
        .iter()
        .flat_map(|&s| spec.h_values.iter().map(move |&h| (s, h)))
        .collect();

    let eval = |k: usize| -> Result<ResultRow> {
        let (solver, h) = jobs[k];
        let traj = integrate_solver(solver, &problem, h, spec.seed, spec.delta)?;
        let refs = reference_states(&problem, &reference, &traj.times, h)?;
        let l2_error = trajectory_l2_error(&traj, &refs);
        let l2_error_field = field_spec.as_ref().map(|s| {
            let t_end = *traj.times.last().unwrap();
            (traj.final_state() - diffusion_reaction_field(s, t_end)).norm()
        });
        let wall_seconds = if spec.timing_reps >= 1 {
            let mut samples = Vec::with_capacity(spec.timing_reps);
            let _ = integrate_solver(solver, &problem, h, spec.seed, spec.delta)?; // warm-up
            for _ in 0..spec.timing_reps {
                let t0 = Instant::now();
                let _ = integrate_solver(solver, &problem, h, spec.seed, spec.delta)?;
                samples.push(t0.elapsed().as_secs_f64());
            }
            samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
            samples[samples.len() / 2]
        } else {
            0.0
        };
        Ok(ResultRow {
            solver: solver.name().to_string(),
            h,
            l2_error,
            wall_seconds,
            steps: traj.times.len() - 1,
            l2_error_field,
        })
    };

    let rows = if spec.timing_reps >= 1 {
        indexed_map_seq(jobs.len(), eval)
    } else {
        indexed_map(jobs.len(), eval)
    };
    rows.into_iter().collect()
}

/// Least-squares slope of `log(error)` vs `log(h)` over the pre-saturation
/// range: rows within 10x of the detected saturation floor are excluded, and
/// the fit uses at most the six finest surviving step sizes (large-h rows sit
/// outside the asymptotic regime on stiff problems).
pub fn fit_order(rows: &[ResultRow]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::InsufficientData("no rows".into()));
    }
    let mut pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.l2_error)).collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap()); // ascending h

    // Saturation floor: the maximal small-h prefix where the pairwise
    // observed order drops below 1/2.
    let mut floor = 0.0f64;
    let mut saturated = 0usize;
    for i in 0..pts.len().saturating_sub(1) {
        let (h0, e0) = pts[i];
        let (h1, e1) = pts[i + 1];
        if e0 <= 0.0 || e1 <= 0.0 {
            saturated = i + 1;
            floor = floor.max(e0.max(0.0));
            continue;
        }
        let p = (e1 / e0).ln() / (h1 / h0).ln();
        if p < 0.5 {
            saturated = i + 1;
            floor = floor.max(e0.max(e1));
        } else {
            break;
        }
    }
    let usable: Vec<(f64, f64)> = pts
        .iter()
        .skip(saturated)
        .filter(|&&(_, e)| e > 10.0 * floor && e.is_finite() && e > 0.0)
        .cloned()
        .collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} usable rows after floor exclusion; need 3",
            usable.len()
        )));
    }
    let window = &usable[..usable.len().min(6)];
    let n = window.len() as f64;
    let sx: f64 = window.iter().map(|p| p.0.ln()).sum();
    let sy: f64 = window.iter().map(|p| p.1.ln()).sum();
    let sxx: f64 = window.iter().map(|p| p.0.ln().powi(2)).sum();
    let sxy: f64 = window.iter().map(|p| p.0.ln() * p.1.ln()).sum();
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

/// CSV rows `solver,h,l2_error,wall_seconds,steps` with a trailing
/// `l2_error_field` column when any row carries one (the diffreac runs).
pub fn write_results_csv<W: Write>(rows: &[ResultRow], out: &mut W) -> std::io::Result<()> {
    let with_field = rows.iter().any(|r| r.l2_error_field.is_some());
    if with_field {
        writeln!(out, "solver,h,l2_error,wall_seconds,steps,l2_error_field")?;
    } else {
        writeln!(out, "solver,h,l2_error,wall_seconds,steps")?;
    }
    for r in rows {
        if with_field {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.solver,
                r.h,
                r.l2_error,
                r.wall_seconds,
                r.steps,
                r.l2_error_field.unwrap_or(f64::NAN)
            )?;
        } else {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.solver, r.h, r.l2_error, r.wall_seconds, r.steps
            )?;
        }
    }
    Ok(())
}
