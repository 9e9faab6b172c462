use std::collections::BTreeMap;

use nalgebra::SymmetricEigen;
use serde::Serialize;

use super::{SdpProblem, SolverResult};
use crate::algos::Trajectory;
use crate::error::{PepError, Result};
use crate::expr::{LipschitzVector, NumericAssignment, PointLabel, Triplet, ValueSymbol};
use crate::interp::{check_finite_set, InterpReport, NumericTriplet};

pub const RANK_THRESHOLD: f64 = 1e-9;
const INDEFINITE_FLOOR: f64 = 1e-6;

/// Explicit finite data set recovered from an optimal Gram solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstCaseInstance {
    pub lipschitz: LipschitzVector,
    /// Numerical rank of each Gram block, i.e. the block dimension.
    pub block_dims: Vec<usize>,
    pub labels: Vec<PointLabel>,
    pub points: Vec<NumericTriplet>,
    /// Main iterates `x_0..x_N` in explicit coordinates.
    pub iterates: Vec<Vec<Vec<f64>>>,
    pub objective_value: f64,
    #[serde(skip)]
    pub assignment: NumericAssignment,
}

impl WorstCaseInstance {
    pub fn point(&self, label: PointLabel) -> Option<&NumericTriplet> {
        self.labels.iter().position(|l| *l == label).map(|k| &self.points[k])
    }

    pub fn check(&self, tol: f64) -> Result<InterpReport> {
        check_finite_set(&self.points, &self.lipschitz, tol)
    }
}

/// Coordinates `V` with `G ≈ VᵀV`, one column per basis label.
fn factor_blocks(result: &SolverResult, problem: &SdpProblem) -> Result<NumericAssignment> {
    let mut assignment = NumericAssignment::default();
    for (b, g) in result.gram_blocks.iter().enumerate() {
        let sym = (g + g.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let trace: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        let min = eig.eigenvalues.min();
        if min < -INDEFINITE_FLOOR * trace.max(1.0) {
            return Err(PepError::Refused(format!(
                "Gram block {} is indefinite: smallest eigenvalue {min:.3e}, trace {trace:.3e}",
                b + 1
            )));
        }
        let keep: Vec<usize> =
            (0..eig.eigenvalues.len()).filter(|&k| eig.eigenvalues[k] > RANK_THRESHOLD * trace).collect();
        let mut vectors = BTreeMap::new();
        for (idx, label) in problem.basis.labels().iter().enumerate() {
            let v: Vec<f64> = keep.iter().map(|&k| eig.eigenvalues[k].sqrt() * eig.eigenvectors[(idx, k)]).collect();
            vectors.insert(*label, v);
        }
        assignment.dims.push(keep.len());
        assignment.vectors.push(vectors);
    }
    for (k, f) in result.fvals.iter().enumerate() {
        assignment.values.insert(ValueSymbol(k), *f);
    }
    Ok(assignment)
}

fn numeric(t: &Triplet, a: &NumericAssignment) -> Result<NumericTriplet> {
    Ok(NumericTriplet {
        x: t.point.evaluate(a)?,
        g: t.gradient.evaluate(a)?,
        f: match t.value {
            Some(s) => a.value(s)?,
            None => 0.0,
        },
    })
}

/// Recovers explicit points, gradients and values for the given triplets.
pub fn extract_from_triplets(
    result: &SolverResult,
    problem: &SdpProblem,
    triplets: &[Triplet],
) -> Result<WorstCaseInstance> {
    if !result.is_optimal() {
        return Err(PepError::Refused(format!("no instance for solver status {}", result.status)));
    }
    let assignment = factor_blocks(result, problem)?;
    let mut labels = Vec::new();
    let mut points = Vec::new();
    for t in triplets.iter().filter(|t| problem.points.is_empty() || problem.points.contains(&t.label)) {
        labels.push(t.label);
        points.push(numeric(t, &assignment)?);
    }
    let objective_value = problem.objective.evaluate(&assignment)?;
    Ok(WorstCaseInstance {
        lipschitz: problem.lipschitz.clone(),
        block_dims: assignment.dims.clone(),
        labels,
        points,
        iterates: Vec::new(),
        objective_value,
        assignment,
    })
}

pub fn extract_worst_case(result: &SolverResult, problem: &SdpProblem, traj: &Trajectory) -> Result<WorstCaseInstance> {
    let mut inst = extract_from_triplets(result, problem, &traj.triplets)?;
    inst.iterates = traj.iterates.iter().map(|x| x.evaluate(&inst.assignment)).collect::<Result<_>>()?;
    Ok(inst)
}
