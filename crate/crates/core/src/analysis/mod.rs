//! Worst-case studies built on the PEP pipeline: bound reports with their
//! closed-form comparators, theorem checks, step-size search, randomized
//! sequence comparison and numeric replay of extracted instances.

mod checks;
mod closed_form;
mod random;
mod replay;
mod steps;
mod suite;

pub use checks::{
    descent_lemma_constant, lower_bound_ccd, quadratic_descent_ratio, verify_radius_homogeneity, verify_residual_bound,
    verify_scale_invariance, verify_two_block_descent, CheckReport,
};
pub use closed_form::{
    am_bound, beck_ccd_bound, beck_descent_constant, blowup_example, blowup_function, racd_comparator_init,
    racd_expected_bound, semi_analytic_bound, BlowupReport,
};
pub use random::{canonical_relabeling, racd_compare, random_worst_case, SequenceRow};
pub use replay::{numeric_replay, replay_instance, GradientOracle, InstanceOracle, Quadratic, ReplayReport};
pub use steps::{default_grid, optimal_step_search, StepPoint, StepSearch, DEFAULT_GRID};
pub use suite::{counterexample_fixture, run_suite, Fault, SuiteConfig, SuiteReport};

use serde::Serialize;

use crate::algos::{run_method, MethodKind, MethodSpec};
use crate::error::{PepError, Result};
use crate::expr::LipschitzVector;
use crate::par::{self, Execution};
use crate::pep::{assemble_pep, solve, Criterion, Setting, SolverOptions, SolverResult, SolverStatus};

/// Slack allowed when comparing a PEP value against a closed-form bound.
pub const BOUND_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub method: MethodKind,
    pub p: usize,
    pub steps: usize,
    pub cycles: Option<usize>,
    pub order: String,
    pub lipschitz: Vec<f64>,
    pub gamma: Option<Vec<f64>>,
    pub setting: String,
    pub radius: Option<f64>,
    pub criterion: Criterion,
    /// PEP optimal value; NaN when the solver did not reach optimality.
    pub bound: f64,
    pub safe_bound: f64,
    pub beck_bound: Option<f64>,
    pub am_bound: Option<f64>,
    pub racd_bound: Option<f64>,
    pub lower_bound: Option<f64>,
    /// Whether the value sits between the attached comparators.
    pub sandwich_ok: Option<bool>,
    pub solver_status: SolverStatus,
    pub solve_seconds: f64,
    pub iterations: u32,
    pub tol: f64,
}

impl BoundReport {
    pub fn value(&self) -> Result<f64> {
        if self.solver_status == SolverStatus::Optimal {
            Ok(self.bound)
        } else {
            Err(PepError::Solver(format!("solver status {}", self.solver_status)))
        }
    }
}

fn is_standard_cyclic(spec: &MethodSpec) -> bool {
    let p = spec.blocks.p();
    spec.order.iter().enumerate().all(|(i, b)| *b == i % p) && spec.order.len() % p == 0
}

fn relative_steps(spec: &MethodSpec, l: &LipschitzVector) -> Option<Vec<f64>> {
    spec.schedule.as_ref().map(|s| s.relative_to(l))
}

/// Solves the PEP of `spec` and attaches the comparators whose hypotheses hold.
pub fn worst_case_with(
    spec: &MethodSpec,
    setting: &Setting,
    criterion: Criterion,
    l: &LipschitzVector,
    options: &SolverOptions,
) -> Result<BoundReport> {
    let traj = run_method(spec)?;
    let problem = assemble_pep(&traj, setting, criterion, l)?;
    let result = solve_retrying(&problem, options)?;
    let p = spec.blocks.p();
    let optimal = result.is_optimal();
    let mut report = BoundReport {
        method: spec.kind,
        p,
        steps: spec.steps(),
        cycles: spec.cycles(),
        order: spec.order_string(),
        lipschitz: l.as_slice().to_vec(),
        gamma: spec.gamma().map(|g| g.to_vec()),
        setting: setting.to_string(),
        radius: setting.radius(),
        criterion,
        bound: result.value,
        safe_bound: if optimal { result.safe_bound() } else { f64::NAN },
        beck_bound: None,
        am_bound: None,
        racd_bound: None,
        lower_bound: None,
        sandwich_ok: None,
        solver_status: result.status,
        solve_seconds: result.solve_seconds,
        iterations: result.iterations,
        tol: result.tolerance,
    };
    if criterion == Criterion::FinalValueGap {
        attach_comparators(&mut report, spec, setting, l, options)?;
    }
    Ok(report)
}

/// Final-gap worst case with solver options taken from the environment.
pub fn worst_case(spec: &MethodSpec, setting: &Setting, l: &LipschitzVector) -> Result<BoundReport> {
    worst_case_with(spec, setting, Criterion::FinalValueGap, l, &SolverOptions::from_env()?)
}

fn attach_comparators(
    report: &mut BoundReport,
    spec: &MethodSpec,
    setting: &Setting,
    l: &LipschitzVector,
    options: &SolverOptions,
) -> Result<()> {
    let p = spec.blocks.p();
    let rel = relative_steps(spec, l);
    let unit_steps = rel.as_ref().is_some_and(|r| r.iter().all(|g| (g - 1.0).abs() < 1e-12));
    match (spec.kind, setting) {
        (MethodKind::Ccd, Setting::All { radius, .. }) => {
            if let (true, Some(k)) = (unit_steps, spec.cycles()) {
                report.beck_bound = Some(beck_ccd_bound(p, k, l, *radius));
            }
        }
        (MethodKind::Ccd, Setting::Init { radius }) => {
            if is_standard_cyclic(spec) {
                let k = spec.steps() / p;
                let rel = rel.expect("ccd has a schedule");
                report.lower_bound = Some(radius * radius * lower_bound_ccd(p, k, &rel, options)?);
            }
        }
        (MethodKind::Am, Setting::All { radius, .. }) => {
            if let (2, Some(k)) = (p, spec.cycles()) {
                if k >= 2 {
                    report.am_bound = Some(am_bound(k, l, *radius)?);
                }
            }
        }
        _ => {}
    }
    if report.solver_status == SolverStatus::Optimal {
        let upper = report.beck_bound.or(report.am_bound);
        if upper.is_some() || report.lower_bound.is_some() {
            let above = report.lower_bound.is_none_or(|lb| report.bound >= lb - BOUND_SLACK);
            let below = upper.is_none_or(|ub| report.bound <= ub + BOUND_SLACK);
            report.sandwich_ok = Some(above && below);
        }
    }
    Ok(())
}

/// One point of a batch of independent worst-case solves.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub spec: MethodSpec,
    pub setting: Setting,
    pub criterion: Criterion,
    pub lipschitz: LipschitzVector,
}

/// Solves every job; results come back in input order.
pub fn worst_case_batch(jobs: &[Job], options: &SolverOptions, exec: Execution) -> Vec<Result<BoundReport>> {
    par::map(exec, jobs, |j| worst_case_with(&j.spec, &j.setting, j.criterion, &j.lipschitz, options))
}

/// Loosest tolerance an inaccurate solve is retried at.
pub const RETRY_TOLERANCE_CAP: f64 = 1e-7;

/// Solves a problem; an inaccurate solve is retried once at ten times the
/// tolerance, capped at [`RETRY_TOLERANCE_CAP`]. The result records the
/// tolerance used.
pub(crate) fn solve_retrying(problem: &crate::pep::SdpProblem, options: &SolverOptions) -> Result<SolverResult> {
    let r = solve(problem, options)?;
    let looser = 10.0 * options.tolerance;
    if r.status == SolverStatus::Inaccurate && looser <= RETRY_TOLERANCE_CAP {
        return solve(problem, &options.clone().with_tolerance(looser));
    }
    Ok(r)
}

/// As [`solve_retrying`], failing unless the status is optimal.
pub(crate) fn solve_optimal(problem: &crate::pep::SdpProblem, options: &SolverOptions) -> Result<SolverResult> {
    let r = solve_retrying(problem, options)?;
    r.require_optimal()?;
    Ok(r)
}
