//! Batch run of the invariant checks, with optional fault injection.

use serde::{Deserialize, Serialize};

use super::checks::scale_invariance_inner;
use super::{
    beck_ccd_bound, solve_retrying, verify_residual_bound, verify_two_block_descent, CheckReport, BOUND_SLACK,
};
use crate::algos::{run_ccd, MethodSpec, StepSchedule};
use crate::error::Result;
use crate::expr::LipschitzVector;
use crate::interp::{NumericTriplet, TripletSet};
use crate::par::{self, Execution};
use crate::pep::{assemble_pep, Criterion, Setting, SolverOptions};

/// Deliberate error injected into a named check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Fault {
    /// Assemble the named check with a perturbed Lipschitz vector.
    WrongLipschitz(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub blocks: Vec<usize>,
    pub cycles: Vec<usize>,
    pub fault: Option<Fault>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { blocks: vec![2, 3], cycles: vec![1, 2], fault: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub passed: bool,
    pub checks: Vec<CheckReport>,
    pub failed: Vec<String>,
}

/// Three-point set that passes the pairwise conditions without being
/// interpolable by a block-smooth convex function.
pub fn counterexample_fixture() -> TripletSet {
    let t = |x: f64, g: [f64; 2], f: f64| NumericTriplet {
        x: vec![vec![x], vec![0.0]],
        g: vec![vec![g[0]], vec![g[1]]],
        f,
    };
    TripletSet {
        l: vec![1.0, 1.0],
        points: vec![t(-1.0, [-1.0, 0.0], 0.5), t(0.0, [0.0, -1.0], 0.0), t(1.0, [1.0, 0.0], 0.5)],
    }
}

#[derive(Debug, Clone)]
enum Task {
    Scale { p: usize, k: usize, l: Vec<f64> },
    Sandwich { p: usize, k: usize },
    Descent { l: f64 },
    Residual { k: usize },
    Counterexample,
}

impl Task {
    fn name(&self) -> &'static str {
        match self {
            Task::Scale { .. } => "scale-invariance",
            Task::Sandwich { .. } => "sandwich",
            Task::Descent { .. } => "two-block-descent",
            Task::Residual { .. } => "residual-bound",
            Task::Counterexample => "counterexample",
        }
    }
}

fn perturb(l: &LipschitzVector, on: bool) -> Result<LipschitzVector> {
    if !on {
        return Ok(l.clone());
    }
    let mut v = l.as_slice().to_vec();
    v[0] *= 2.0;
    LipschitzVector::new(v)
}

fn scale_lipschitz(p: usize) -> Vec<f64> {
    (0..p).map(|i| if p == 2 { [1.0, 4.0][i] } else { 1.0 + 2.0 * i as f64 }).collect()
}

fn run_task(task: &Task, faulty: bool, options: &SolverOptions) -> Result<CheckReport> {
    match task {
        Task::Scale { p, k, l } => {
            let l = LipschitzVector::new(l.clone())?;
            scale_invariance_inner(*p, *k, &[1.0], &l, &perturb(&l, faulty)?, options)
        }
        Task::Sandwich { p, k } => {
            let l = LipschitzVector::uniform(*p, 1.0)?;
            let wrong = perturb(&l, faulty)?;
            let traj = run_ccd(&MethodSpec::ccd(*p, *k, StepSchedule::inverse_lipschitz(&l))?)?;
            let init =
                solve_retrying(&assemble_pep(&traj, &Setting::init(1.0), Criterion::FinalValueGap, &wrong)?, options)?;
            let all =
                solve_retrying(&assemble_pep(&traj, &Setting::all(1.0), Criterion::FinalValueGap, &wrong)?, options)?;
            let lower = *p as f64 / (4.0 * (*p * *k) as f64 + 2.0);
            let upper = beck_ccd_bound(*p, *k, &l, 1.0);
            let ok = init.is_optimal()
                && all.is_optimal()
                && init.value >= lower - BOUND_SLACK
                && all.value <= upper + BOUND_SLACK;
            Ok(CheckReport {
                name: task.name().into(),
                value: init.value,
                reference: lower,
                deviation: lower - init.value,
                passed: ok,
                detail: format!(
                    "p={p} K={k} init={:.6} lower={lower:.6} all={:.6} beck={upper:.4}",
                    init.value, all.value
                ),
            })
        }
        Task::Descent { l } => {
            let lv = LipschitzVector::new(vec![*l, 1.0])?;
            let mut r = verify_two_block_descent(&perturb(&lv, faulty)?, 0, options)?;
            r.reference = 1.0 / (2.0 * l);
            r.passed = r.value >= r.reference - BOUND_SLACK;
            Ok(r)
        }
        Task::Residual { k } => {
            verify_residual_bound(*k, &perturb(&LipschitzVector::uniform(2, 1.0)?, faulty)?, options)
        }
        Task::Counterexample => {
            let set = counterexample_fixture();
            let l = perturb(&set.lipschitz()?, faulty)?;
            let r = crate::interp::check_finite_set(&set.points, &l, 0.0)?;
            Ok(CheckReport {
                name: task.name().into(),
                value: r.min_residual,
                reference: 0.0,
                deviation: -r.min_residual,
                passed: r.passed,
                detail: "pairwise conditions hold; necessary-only, the set is not interpolable".into(),
            })
        }
    }
}

pub fn run_suite(config: &SuiteConfig, options: &SolverOptions, exec: Execution) -> Result<SuiteReport> {
    let mut tasks = Vec::new();
    for &p in &config.blocks {
        tasks.push(Task::Scale { p, k: 1, l: scale_lipschitz(p) });
        for &k in &config.cycles {
            tasks.push(Task::Sandwich { p, k });
        }
    }
    tasks.push(Task::Descent { l: 1.0 });
    tasks.push(Task::Descent { l: 2.0 });
    for &k in &config.cycles {
        tasks.push(Task::Residual { k });
    }
    tasks.push(Task::Counterexample);
    let faulty_name = match &config.fault {
        Some(Fault::WrongLipschitz(name)) => Some(name.clone()),
        None => None,
    };
    let results = par::map(exec, &tasks, |t| {
        let faulty = faulty_name.as_deref() == Some(t.name());
        run_task(t, faulty, options).unwrap_or_else(|e| CheckReport {
            name: t.name().into(),
            value: f64::NAN,
            reference: f64::NAN,
            deviation: f64::NAN,
            passed: false,
            detail: e.to_string(),
        })
    });
    let mut failed: Vec<String> = results.iter().filter(|r| !r.passed).map(|r| r.name.clone()).collect();
    failed.dedup();
    Ok(SuiteReport { passed: failed.is_empty(), checks: results, failed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_passes_pairwise() {
        let r = counterexample_fixture().check(0.0).unwrap();
        assert!(r.passed);
        assert_eq!(r.checked, 2 * 3 * 2);
    }

    #[test]
    fn fault_names_the_check() {
        let config = SuiteConfig {
            blocks: vec![2],
            cycles: vec![1],
            fault: Some(Fault::WrongLipschitz("scale-invariance".into())),
        };
        let r = run_suite(&config, &SolverOptions::default(), Execution::Parallel).unwrap();
        assert!(!r.passed);
        assert_eq!(r.failed, vec!["scale-invariance".to_string()]);
    }
}
