//! Search for the uniform relative step minimizing the cyclic worst case.

use serde::Serialize;

use super::solve_retrying;

use crate::algos::{run_ccd, MethodSpec, StepSchedule};
use crate::error::{invalid, Result};
use crate::expr::LipschitzVector;
use crate::par::{self, Execution};
use crate::pep::{assemble_pep, Criterion, Setting, SolverOptions, SolverStatus};

/// Grid `0.10, 0.15, …, 2.00`.
pub const DEFAULT_GRID: (f64, f64, f64) = (0.1, 2.0, 0.05);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepPoint {
    pub gamma: f64,
    /// NaN when the solve failed.
    pub bound: f64,
    pub status: SolverStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSearch {
    pub p: usize,
    pub k: usize,
    pub gamma_star: f64,
    pub bound_star: f64,
    /// Grid points followed by refinement points.
    pub table: Vec<StepPoint>,
}

pub fn default_grid() -> Vec<f64> {
    let (lo, hi, h) = DEFAULT_GRID;
    let n = ((hi - lo) / h).round() as usize;
    (0..=n).map(|i| lo + i as f64 * h).collect()
}

fn evaluate(p: usize, k: usize, gamma: f64, options: &SolverOptions) -> StepPoint {
    let run = || -> Result<(f64, SolverStatus)> {
        let l = LipschitzVector::uniform(p, 1.0)?;
        let traj = run_ccd(&MethodSpec::ccd(p, k, StepSchedule::relative(&[gamma], &l)?)?)?;
        let prob = assemble_pep(&traj, &Setting::init(1.0), Criterion::FinalValueGap, &l)?;
        let r = solve_retrying(&prob, options)?;
        Ok((if r.is_optimal() { r.value } else { f64::NAN }, r.status))
    };
    match run() {
        Ok((bound, status)) => StepPoint { gamma, bound, status },
        Err(_) => StepPoint { gamma, bound: f64::NAN, status: SolverStatus::Failed },
    }
}

/// Vertex of the parabola through three points, if it opens upward.
fn parabola_vertex(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> Option<f64> {
    let num = (b.0 - a.0).powi(2) * (b.1 - c.1) - (b.0 - c.0).powi(2) * (b.1 - a.1);
    let den = (b.0 - a.0) * (b.1 - c.1) - (b.0 - c.0) * (b.1 - a.1);
    if den.abs() < 1e-300 {
        return None;
    }
    let v = b.0 - 0.5 * num / den;
    // upward opening iff the middle point lies below the chord
    let chord = a.1 + (c.1 - a.1) * (b.0 - a.0) / (c.0 - a.0);
    (v.is_finite() && b.1 <= chord).then_some(v)
}

/// Evaluates the grid (in parallel), then refines around the best point with
/// repeated three-point parabolic fits on a shrinking bracket.
pub fn optimal_step_search(
    p: usize,
    k: usize,
    grid: &[f64],
    options: &SolverOptions,
    exec: Execution,
) -> Result<StepSearch> {
    if grid.len() < 3 || grid.windows(2).any(|w| w[1] <= w[0]) || grid[0] <= 0.0 {
        return invalid("the step grid needs at least three increasing positive points");
    }
    let mut table = par::map(exec, grid, |g| evaluate(p, k, *g, options));
    let finite: Vec<usize> = (0..table.len()).filter(|i| table[*i].bound.is_finite()).collect();
    let best = *finite
        .iter()
        .min_by(|a, b| table[**a].bound.total_cmp(&table[**b].bound))
        .ok_or_else(|| crate::error::PepError::Solver("no grid point solved".into()))?;
    let mut b = (table[best].gamma, table[best].bound);
    let neighbours = (best > 0 && best + 1 < table.len())
        .then(|| ((table[best - 1].gamma, table[best - 1].bound), (table[best + 1].gamma, table[best + 1].bound)));
    if let Some((mut a, mut c)) = neighbours.filter(|(a, c)| a.1.is_finite() && c.1.is_finite()) {
        for _ in 0..30 {
            if c.0 - a.0 < 1e-4 {
                break;
            }
            let golden = if b.0 - a.0 > c.0 - b.0 { b.0 - 0.382 * (b.0 - a.0) } else { b.0 + 0.382 * (c.0 - b.0) };
            let mut v = parabola_vertex(a, b, c).unwrap_or(golden);
            let margin = 1e-3 * (c.0 - a.0);
            if v <= a.0 + margin || v >= c.0 - margin || (v - b.0).abs() < margin {
                v = golden;
            }
            let pt = evaluate(p, k, v, options);
            let fv = pt.bound;
            table.push(pt);
            if !fv.is_finite() {
                break;
            }
            if fv < b.1 {
                if v < b.0 {
                    c = b;
                } else {
                    a = b;
                }
                b = (v, fv);
            } else if v < b.0 {
                a = (v, fv);
            } else {
                c = (v, fv);
            }
        }
    }
    Ok(StepSearch { p, k, gamma_star: b.0, bound_star: b.1, table })
}
