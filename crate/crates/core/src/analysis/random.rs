//! Randomized accelerated method against every fixed block sequence.

use serde::Serialize;

use super::{racd_comparator_init, solve_retrying};
use crate::algos::{build_sequence_tree, run_cacd, MethodSpec, StepDistribution, StepSchedule};
use crate::error::{invalid, PepError, Result};
use crate::expr::LipschitzVector;
use crate::par::{self, Execution};
use crate::pep::{
    assemble_pep, assemble_random_pep, Criterion, Setting, SolverOptions, SolverResult, SolverStatus,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceRow {
    /// 1-based block sequence, or `random`.
    pub order: String,
    pub random: bool,
    pub bound: f64,
    pub status: SolverStatus,
    /// Closed-form expectation bound (random row only).
    pub comparator: Option<f64>,
    pub solve_seconds: f64,
}

/// Expected final gap of the randomized accelerated method under the
/// `L`-weighted initial ball of radius `r_i`.
pub fn random_worst_case(
    p: usize,
    n: usize,
    schedule: &StepSchedule,
    probabilities: &StepDistribution,
    l: &LipschitzVector,
    r_i: f64,
    options: &SolverOptions,
) -> Result<SolverResult> {
    let tree = build_sequence_tree(p, n, schedule, probabilities)?;
    let prob = assemble_random_pep(&tree, &Setting::init(r_i), Criterion::FinalValueGap, l)?;
    solve_retrying(&prob, options)
}

/// Relabels blocks in order of first appearance, e.g. `2,1,1,2 → 1,2,2,1`.
pub fn canonical_relabeling(order: &[usize], p: usize) -> Vec<usize> {
    let mut map = vec![usize::MAX; p];
    let mut next = 0;
    order
        .iter()
        .map(|b| {
            if map[*b] == usize::MAX {
                map[*b] = next;
                next += 1;
            }
            map[*b]
        })
        .collect()
}

fn all_sequences(p: usize, n: usize) -> Vec<Vec<usize>> {
    let total = p.pow(n as u32);
    (0..total)
        .map(|mut code| {
            let mut s = vec![0; n];
            for slot in s.iter_mut().rev() {
                *slot = code % p;
                code /= p;
            }
            s
        })
        .collect()
}

/// One row per fixed sequence (deduplicated by block relabeling when `dedup`
/// is set and the blocks are interchangeable) plus the randomized row, sorted
/// ascending by bound.
#[allow(clippy::too_many_arguments)]
pub fn racd_compare(
    p: usize,
    n: usize,
    l: &LipschitzVector,
    schedule: &StepSchedule,
    r_i: f64,
    cap: usize,
    dedup: bool,
    options: &SolverOptions,
    exec: Execution,
) -> Result<Vec<SequenceRow>> {
    if n == 0 {
        return invalid("at least one step is required");
    }
    let count = (p as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(PepError::Refused(format!(
            "{p}^{n} = {count} sequences exceed the cap of {cap}; lower N or p, or raise --cap"
        )));
    }
    let interchangeable = {
        let g = schedule.gamma();
        l.as_slice().windows(2).all(|w| w[0] == w[1]) && g.windows(2).all(|w| w[0] == w[1])
    };
    let mut seqs = all_sequences(p, n);
    if dedup && interchangeable {
        seqs.retain(|s| canonical_relabeling(s, p) == *s);
    }
    let spec0 = MethodSpec::cacd(p, 1, schedule.clone())?;
    let setting = Setting::init(r_i);
    let mut rows: Vec<SequenceRow> = par::map(exec, &seqs, |s| {
        let solved = spec0
            .with_order(s.clone())
            .and_then(|spec| run_cacd(&spec))
            .and_then(|t| assemble_pep(&t, &setting, Criterion::FinalValueGap, l))
            .and_then(|prob| solve_retrying(&prob, options));
        let order = s.iter().map(|b| (b + 1).to_string()).collect::<Vec<_>>().join(",");
        match solved {
            Ok(r) => SequenceRow {
                order,
                random: false,
                bound: if r.is_optimal() { r.value } else { f64::NAN },
                status: r.status,
                comparator: None,
                solve_seconds: r.solve_seconds,
            },
            Err(_) => SequenceRow {
                order,
                random: false,
                bound: f64::NAN,
                status: SolverStatus::Failed,
                comparator: None,
                solve_seconds: 0.0,
            },
        }
    });
    let r = random_worst_case(p, n, schedule, &StepDistribution::uniform(p, n), l, r_i, options)?;
    rows.push(SequenceRow {
        order: "random".into(),
        random: true,
        bound: if r.is_optimal() { r.value } else { f64::NAN },
        status: r.status,
        comparator: Some(racd_comparator_init(p, n, r_i)?),
        solve_seconds: r.solve_seconds,
    });
    rows.sort_by(|a, b| a.bound.total_cmp(&b.bound));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pep::solve;

    #[test]
    fn relabeling() {
        assert_eq!(canonical_relabeling(&[1, 0, 0, 1], 2), vec![0, 1, 1, 0]);
        assert_eq!(canonical_relabeling(&[2, 2, 0, 1], 3), vec![0, 0, 1, 2]);
        let canon = all_sequences(2, 4).into_iter().filter(|s| canonical_relabeling(s, 2) == *s).count();
        assert_eq!(canon, 8);
        assert_eq!(all_sequences(3, 2).len(), 9);
    }

    #[test]
    fn cap_refusal() {
        let l = LipschitzVector::uniform(3, 1.0).unwrap();
        let s = StepSchedule::inverse_lipschitz(&l);
        let r = racd_compare(3, 5, &l, &s, 1.0, 81, true, &SolverOptions::default(), Execution::Sequential);
        assert!(matches!(r, Err(PepError::Refused(_))));
    }

    #[test]
    fn degenerate_distribution_reproduces_fixed_sequence() {
        let l = LipschitzVector::uniform(2, 1.0).unwrap();
        let s = StepSchedule::inverse_lipschitz(&l);
        let dist = StepDistribution::constant(vec![1.0, 0.0], 3).unwrap();
        let r = random_worst_case(2, 3, &s, &dist, &l, 1.0, &SolverOptions::default()).unwrap();
        let spec = MethodSpec::cacd(2, 1, s).unwrap().with_order(vec![0, 0, 0]).unwrap();
        let t = run_cacd(&spec).unwrap();
        let det = solve(
            &assemble_pep(&t, &Setting::init(1.0), Criterion::FinalValueGap, &l).unwrap(),
            &SolverOptions::default(),
        )
        .unwrap();
        assert!((r.value - det.value).abs() < 1e-6, "{} vs {}", r.value, det.value);
    }

    #[test]
    fn two_steps_table() {
        let l = LipschitzVector::uniform(2, 1.0).unwrap();
        let s = StepSchedule::inverse_lipschitz(&l);
        let rows = racd_compare(2, 2, &l, &s, 1.0, 81, true, &SolverOptions::default(), Execution::Parallel).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.windows(2).all(|w| w[0].bound <= w[1].bound));
        let all = racd_compare(2, 2, &l, &s, 1.0, 81, false, &SolverOptions::default(), Execution::Parallel).unwrap();
        assert_eq!(all.len(), 5);
    }
}
