use nalgebra::SymmetricEigen;
use serde::Serialize;

use super::{ConstraintKind, SdpProblem, Sense, SolverResult};
use crate::error::{PepError, Result};

/// Aggregation check of the solver's multipliers.
///
/// With `s = −1` for maximization and `+1` for minimization, the form
/// `s·objective − Σ_k λ_k·constraint_k` must have vanishing value
/// coefficients and a PSD Gram part on every block (restricted to the face
/// when the block was reduced). Its constant then certifies the bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub certified_bound: f64,
    pub value: f64,
    pub value_coefficient_residual: f64,
    pub min_eigenvalues: Vec<f64>,
    pub min_inequality_multiplier: f64,
    pub residual: f64,
    pub passed: bool,
}

pub const CERTIFICATE_TOL: f64 = 1e-6;
pub const MULTIPLIER_FLOOR: f64 = -1e-8;

pub fn dual_certificate(result: &SolverResult, problem: &SdpProblem) -> Result<Certificate> {
    if !result.is_optimal() {
        return Err(PepError::Refused(format!("no certificate for solver status {}", result.status)));
    }
    if result.duals.len() != problem.constraints.len() {
        return Err(PepError::Structural("multiplier count differs from constraint count".into()));
    }
    let sign = match problem.sense {
        Sense::Maximize => -1.0,
        Sense::Minimize => 1.0,
    };
    let mut agg = problem.objective.scaled(sign);
    let mut min_mult = f64::INFINITY;
    for (k, c) in problem.constraints.iter().enumerate() {
        if result.reduced.get(k).copied().unwrap_or(false) {
            continue;
        }
        let z = result.duals[k];
        if c.kind == ConstraintKind::NonNegative {
            min_mult = min_mult.min(z);
        }
        agg.axpy(-z, &c.expr);
    }
    let value_res = agg.value_terms().values().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut min_eigs = Vec::with_capacity(problem.blocks.p());
    for b in 0..problem.blocks.p() {
        let m = agg.block_matrix(b, &problem.basis)?;
        let m = match &result.faces[b] {
            Some(v) => v.transpose() * m * v,
            None => m,
        };
        let e = if m.nrows() == 0 { 0.0 } else { SymmetricEigen::new(m).eigenvalues.min() };
        min_eigs.push(e);
    }
    let psd_res = min_eigs.iter().fold(0.0f64, |a, e| a.max(-e));
    let certified = sign * agg.constant_term();
    let residual = value_res.max(psd_res);
    let min_mult = if min_mult.is_finite() { min_mult } else { 0.0 };
    Ok(Certificate {
        certified_bound: certified,
        value: result.value,
        value_coefficient_residual: value_res,
        min_eigenvalues: min_eigs,
        min_inequality_multiplier: min_mult,
        residual,
        passed: residual <= CERTIFICATE_TOL
            && min_mult >= MULTIPLIER_FLOOR
            && (certified - result.value).abs() <= CERTIFICATE_TOL,
    })
}
