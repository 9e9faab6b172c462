//! Subcommand implementations.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use pepbcd::algos::{build_sequence_tree, run_method, StepDistribution};
use pepbcd::analysis::{
    descent_lemma_constant, racd_comparator_init, racd_compare, random_worst_case, run_suite, semi_analytic_bound,
    worst_case_batch, BoundReport, Fault, Job, SuiteConfig,
};
use pepbcd::par::{self, Execution};
use pepbcd::pep::{assemble_pep, assemble_random_pep, sdpa, Criterion, SdpProblem, Setting, SolverStatus};
use pepbcd::{PepError, Result};
use serde::Serialize;

use crate::config::{ExperimentConfig, Format, Method};
use crate::output::{emit, emit_json, join, BoundRow};

/// Whether every solve reached optimality.
pub type Success = bool;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Cycles,
    Blocks,
    StepSize,
    Sequence,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Inclusive range `a..b` (unused for the sequence axis).
    #[arg(long)]
    pub range: Option<String>,
    /// Increment along the range (1 for integer axes, 0.05 for step sizes).
    #[arg(long)]
    pub step: Option<f64>,
    /// Largest number of sequences the sequence axis may enumerate.
    #[arg(long, default_value_t = 81)]
    pub cap: usize,
}

#[derive(Debug, Clone, Args)]
pub struct RacdArgs {
    #[arg(long, default_value_t = 81)]
    pub cap: usize,
    /// Keep sequences that only differ by a relabeling of the blocks.
    #[arg(long)]
    pub no_dedup: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DescentArgs {
    /// Also tabulate the semi-analytic bound at this constant.
    #[arg(long)]
    pub constant: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 3])]
    pub suite_blocks: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2])]
    pub suite_cycles: Vec<usize>,
    /// Assemble the named check with a wrong Lipschitz vector.
    #[arg(long)]
    pub inject_fault: Option<String>,
}

fn exec() -> Execution {
    Execution::Parallel
}

fn problem_for(cfg: &ExperimentConfig) -> Result<SdpProblem> {
    let l = cfg.lipschitz()?;
    match cfg.method() {
        Method::Racd => {
            let n = racd_steps(cfg);
            let tree = build_sequence_tree(cfg.p(), n, &cfg.schedule(&l)?, &StepDistribution::uniform(cfg.p(), n))?;
            assemble_random_pep(&tree, &Setting::init(cfg.radius()), Criterion::FinalValueGap, &l)
        }
        _ => assemble_pep(&run_method(&cfg.method_spec()?)?, &cfg.setting(), cfg.criterion(), &l),
    }
}

fn racd_steps(cfg: &ExperimentConfig) -> usize {
    cfg.steps.unwrap_or(cfg.p() * cfg.k())
}

fn job(cfg: &ExperimentConfig) -> Result<Job> {
    Ok(Job {
        spec: cfg.method_spec()?,
        setting: cfg.setting(),
        criterion: cfg.criterion(),
        lipschitz: cfg.lipschitz()?,
    })
}

/// Solves the jobs, writes every available row and reports failures on stderr.
fn run_jobs(cfg: &ExperimentConfig, jobs: &[Job]) -> Result<Success> {
    let options = cfg.solver_options()?;
    let results = par::with_jobs(cfg.jobs, || worst_case_batch(jobs, &options, exec()));
    let mut ok = true;
    let mut reports: Vec<BoundReport> = Vec::new();
    for r in results {
        match r {
            Ok(rep) => {
                if rep.solver_status != SolverStatus::Optimal {
                    eprintln!(
                        "warning: {} p={} order {}: solver status {}",
                        rep.method, rep.p, rep.order, rep.solver_status
                    );
                    ok = false;
                }
                reports.push(rep);
            }
            Err(e) => {
                eprintln!("error: {e}");
                ok = false;
            }
        }
    }
    let rows: Vec<BoundRow> = reports.iter().map(BoundRow::from).collect();
    emit(cfg.format(), cfg.out.as_deref(), &rows, &reports)?;
    Ok(ok)
}

#[derive(Debug, Serialize)]
struct RacdReport {
    p: usize,
    steps: usize,
    lipschitz: Vec<f64>,
    gamma: Vec<f64>,
    radius: f64,
    bound: f64,
    racd_bound: f64,
    solver_status: SolverStatus,
    solve_seconds: f64,
    tol: f64,
}

pub fn bound(cfg: &ExperimentConfig) -> Result<Success> {
    if let Some(path) = &cfg.export_sdpa {
        sdpa::export_sdpa(&problem_for(cfg)?, path)?;
    }
    if cfg.method() != Method::Racd {
        return run_jobs(cfg, &[job(cfg)?]);
    }
    let (p, n, l) = (cfg.p(), racd_steps(cfg), cfg.lipschitz()?);
    let schedule = cfg.schedule(&l)?;
    let options = cfg.solver_options()?;
    let r = random_worst_case(p, n, &schedule, &StepDistribution::uniform(p, n), &l, cfg.radius(), &options)?;
    let report = RacdReport {
        p,
        steps: n,
        lipschitz: l.as_slice().to_vec(),
        gamma: schedule.gamma().to_vec(),
        radius: cfg.radius(),
        bound: r.value,
        racd_bound: racd_comparator_init(p, n, cfg.radius())?,
        solver_status: r.status,
        solve_seconds: r.solve_seconds,
        tol: options.tolerance,
    };
    let row = BoundRow {
        method: "racd".into(),
        p,
        k: None,
        order: "random".into(),
        lipschitz: join(&report.lipschitz),
        gamma: join(&report.gamma),
        setting: "init".into(),
        radius: Some(report.radius),
        criterion: Criterion::FinalValueGap.to_string(),
        bound: report.bound,
        beck_bound: None,
        lower_bound: None,
        solver_status: report.solver_status.to_string(),
        solve_seconds: report.solve_seconds,
        tol: report.tol,
    };
    emit(cfg.format(), cfg.out.as_deref(), &[row], &[&report])?;
    Ok(r.is_optimal())
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let bad = || PepError::InvalidInput(format!("range must look like a..b, got {s:?}"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(a.is_finite() && b.is_finite() && a <= b) {
        return Err(bad());
    }
    Ok((a, b))
}

/// Points `a, a + h, …` not exceeding `b` (up to rounding).
pub fn range_points(a: f64, b: f64, h: f64) -> Result<Vec<f64>> {
    if !(h.is_finite() && h > 0.0) {
        return Err(PepError::InvalidInput("--step must be positive".into()));
    }
    let n = ((b - a) / h + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| a + i as f64 * h).collect())
}

fn uniform_lipschitz(cfg: &ExperimentConfig) -> Result<Option<Vec<f64>>> {
    match &cfg.lipschitz {
        None => Ok(None),
        Some(v) if v.windows(2).all(|w| w[0] == w[1]) => Ok(Some(vec![v[0]])),
        Some(_) => Err(PepError::InvalidInput("a block sweep needs a single Lipschitz constant".into())),
    }
}

fn all_orders(p: usize, n: usize, cap: usize) -> Result<Vec<Vec<usize>>> {
    let count = (p as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(PepError::Refused(format!(
            "{p}^{n} = {count} sequences exceed the cap of {cap}; lower N or p, or raise --cap"
        )));
    }
    Ok((0..count as usize)
        .map(|mut code| {
            let mut s = vec![0; n];
            for slot in s.iter_mut().rev() {
                *slot = code % p + 1;
                code /= p;
            }
            s
        })
        .collect())
}

pub fn sweep_configs(cfg: &ExperimentConfig, args: &SweepArgs) -> Result<Vec<ExperimentConfig>> {
    if cfg.method() == Method::Racd {
        return Err(PepError::InvalidInput("use racd-compare for the randomized method".into()));
    }
    if args.axis != Axis::Sequence && args.axis != Axis::StepSize && cfg.order.is_some() {
        return Err(PepError::InvalidInput("--order cannot be combined with a cycles or blocks sweep".into()));
    }
    let range = || {
        let r =
            args.range.as_deref().ok_or_else(|| PepError::InvalidInput("--range is required for this axis".into()))?;
        parse_range(r)
    };
    let integers = |pts: Vec<f64>| -> Result<Vec<usize>> {
        pts.into_iter()
            .map(|x| {
                if x >= 1.0 && (x - x.round()).abs() < 1e-9 {
                    Ok(x.round() as usize)
                } else {
                    Err(PepError::InvalidInput(format!("{x} is not a positive integer")))
                }
            })
            .collect()
    };
    let out = match args.axis {
        Axis::Cycles => {
            let (a, b) = range()?;
            integers(range_points(a, b, args.step.unwrap_or(1.0))?)?
                .into_iter()
                .map(|k| ExperimentConfig { cycles: Some(k), ..cfg.clone() })
                .collect()
        }
        Axis::Blocks => {
            let (a, b) = range()?;
            let l = uniform_lipschitz(cfg)?;
            integers(range_points(a, b, args.step.unwrap_or(1.0))?)?
                .into_iter()
                .map(|p| ExperimentConfig { blocks: Some(p), lipschitz: l.clone(), ..cfg.clone() })
                .collect()
        }
        Axis::StepSize => {
            let (a, b) = range()?;
            range_points(a, b, args.step.unwrap_or(0.05))?
                .into_iter()
                .map(|g| ExperimentConfig { gamma: None, gamma_rel: Some(vec![g]), ..cfg.clone() })
                .collect()
        }
        Axis::Sequence => {
            let n = cfg.steps.unwrap_or(cfg.p() * cfg.k());
            all_orders(cfg.p(), n, args.cap)?
                .into_iter()
                .map(|o| ExperimentConfig { order: Some(o), ..cfg.clone() })
                .collect()
        }
    };
    Ok(out)
}

pub fn sweep(cfg: &ExperimentConfig, args: &SweepArgs) -> Result<Success> {
    let jobs = sweep_configs(cfg, args)?.iter().map(job).collect::<Result<Vec<_>>>()?;
    run_jobs(cfg, &jobs)
}

#[derive(Debug, Serialize)]
struct TableRow {
    k: usize,
    constant: f64,
    bound: f64,
}

#[derive(Debug, Serialize)]
struct DescentReport {
    p: usize,
    lipschitz: Vec<f64>,
    c_opt: f64,
    radius: f64,
    table: Vec<TableRow>,
}

pub fn descent_lemma(cfg: &ExperimentConfig, args: &DescentArgs) -> Result<Success> {
    let (p, l) = (cfg.p(), cfg.lipschitz()?);
    let c_opt = descent_lemma_constant(p, &l, &cfg.solver_options()?)?;
    let mut table = Vec::new();
    let mut constants = vec![c_opt];
    constants.extend(args.constant);
    for c in constants {
        for (i, bound) in semi_analytic_bound(c, p, cfg.k(), &l, cfg.radius())?.into_iter().enumerate() {
            table.push(TableRow { k: i + 1, constant: c, bound });
        }
    }
    if cfg.format() == Format::Csv {
        eprintln!("C_opt = {c_opt:.6}");
    }
    let report = DescentReport { p, lipschitz: l.as_slice().to_vec(), c_opt, radius: cfg.radius(), table };
    emit(cfg.format(), cfg.out.as_deref(), &report.table, &report)?;
    Ok(true)
}

pub fn racd(cfg: &ExperimentConfig, args: &RacdArgs) -> Result<Success> {
    let (p, l) = (cfg.p(), cfg.lipschitz()?);
    let n = racd_steps(cfg);
    let options = cfg.solver_options()?;
    let schedule = cfg.schedule(&l)?;
    let rows = par::with_jobs(cfg.jobs, || {
        racd_compare(p, n, &l, &schedule, cfg.radius(), args.cap, !args.no_dedup, &options, exec())
    })?;
    let ok = rows.iter().all(|r| r.status == SolverStatus::Optimal);
    emit(cfg.format(), cfg.out.as_deref(), &rows, &rows)?;
    Ok(ok)
}

pub fn verify(cfg: &ExperimentConfig, args: &VerifyArgs) -> Result<Success> {
    let config = SuiteConfig {
        blocks: args.suite_blocks.clone(),
        cycles: args.suite_cycles.clone(),
        fault: args.inject_fault.clone().map(Fault::WrongLipschitz),
    };
    let options = cfg.solver_options()?;
    let report = par::with_jobs(cfg.jobs, || run_suite(&config, &options, exec()))?;
    emit_json(cfg.out.as_deref(), &report)?;
    Ok(report.passed)
}

#[derive(Debug, Serialize)]
struct ExportStats {
    path: PathBuf,
    constraints: usize,
    block_sizes: Vec<i64>,
}

pub fn export(cfg: &ExperimentConfig) -> Result<Success> {
    let path =
        cfg.export_sdpa.clone().ok_or_else(|| PepError::InvalidInput("export needs --export-sdpa PATH".into()))?;
    let sdp = sdpa::SdpaProblem::from_problem(&problem_for(cfg)?)?;
    std::fs::write(&path, sdp.to_sdpa_string())?;
    let stats = ExportStats { path, constraints: sdp.num_constraints(), block_sizes: sdp.block_sizes.clone() };
    emit_json(cfg.out.as_deref(), &stats)?;
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1..4").unwrap(), (1.0, 4.0));
        assert!(parse_range("4..1").is_err());
        assert!(parse_range("1-4").is_err());
        assert_eq!(range_points(0.5, 1.0, 0.25).unwrap(), vec![0.5, 0.75, 1.0]);
        // rounding must not drop the end point
        assert_eq!(range_points(0.1, 0.3, 0.1).unwrap().len(), 3);
    }

    #[test]
    fn orders_enumerated_and_capped() {
        let o = all_orders(2, 3, 81).unwrap();
        assert_eq!(o.len(), 8);
        assert_eq!(o[0], vec![1, 1, 1]);
        assert_eq!(o[5], vec![2, 1, 2]);
        assert!(matches!(all_orders(3, 5, 81), Err(PepError::Refused(_))));
    }

    #[test]
    fn sweep_axes() {
        let cfg = ExperimentConfig::default();
        let args = |axis, range: &str| SweepArgs { axis, range: Some(range.into()), step: None, cap: 81 };
        let c = sweep_configs(&cfg, &args(Axis::Cycles, "1..3")).unwrap();
        assert_eq!(c.iter().map(|c| c.k()).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(sweep_configs(&cfg, &args(Axis::Cycles, "0.5..2")).is_err());
        let c = sweep_configs(&cfg, &args(Axis::StepSize, "0.5..0.6")).unwrap();
        assert_eq!(c.len(), 3);
        let mixed = ExperimentConfig { lipschitz: Some(vec![1.0, 2.0]), ..Default::default() };
        assert!(sweep_configs(&mixed, &args(Axis::Blocks, "2..3")).is_err());
        let seq = ExperimentConfig { steps: Some(3), ..Default::default() };
        assert_eq!(sweep_configs(&seq, &args(Axis::Sequence, "")).unwrap().len(), 8);
    }
}
