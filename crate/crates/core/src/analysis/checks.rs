//! Executable checks of the structural results: scale invariance, lower
//! bounds, descent constants and gradient-residual bounds.

use serde::Serialize;

use super::{solve_optimal, BOUND_SLACK};
use crate::algos::{run_ccd, run_method, MethodSpec, StepSchedule, Trajectory};
use crate::error::{invalid, Result};
use crate::expr::{weighted_norm_sq, Basis, BlockVectorExpr, LipschitzVector, PointLabel, ScalarExpr, ValueSymbol};
use crate::interp::generate_interp_constraints;
use crate::pep::{assemble_pep, ConstraintKind, ConstraintTag, Criterion, SdpProblem, Sense, Setting, SolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub value: f64,
    /// Reference the value is compared against.
    pub reference: f64,
    pub deviation: f64,
    pub passed: bool,
    pub detail: String,
}

fn unit(p: usize) -> Result<LipschitzVector> {
    LipschitzVector::uniform(p, 1.0)
}

fn gap_value(spec: &MethodSpec, setting: &Setting, l: &LipschitzVector, options: &SolverOptions) -> Result<f64> {
    let traj = run_method(spec)?;
    let prob = assemble_pep(&traj, setting, Criterion::FinalValueGap, l)?;
    Ok(solve_optimal(&prob, options)?.value)
}

/// `p · W_GD`, where `W_GD` is the single-block worst case of `pK` gradient
/// steps cycling through the relative steps, with `L = 1` and unit radius.
pub fn lower_bound_ccd(p: usize, k: usize, gamma_rel: &[f64], options: &SolverOptions) -> Result<f64> {
    if p == 0 || k == 0 {
        return invalid("p and K must be positive");
    }
    let rel: Vec<f64> = match gamma_rel.len() {
        1 => vec![gamma_rel[0]; p],
        n if n == p => gamma_rel.to_vec(),
        n => return invalid(format!("{n} relative steps for {p} blocks")),
    };
    let steps: Vec<f64> = (0..p * k).map(|i| rel[i % p]).collect();
    let spec = MethodSpec::custom_from_steps(1, vec![0; p * k], &steps)?;
    Ok(p as f64 * gap_value(&spec, &Setting::init(1.0), &unit(1)?, options)?)
}

/// Solves the cyclic-descent PEP with `(L, γ_ℓ/L_ℓ)` and with `(1, γ_ℓ)` under
/// the `L`-weighted initial ball; the values must agree.
pub fn verify_scale_invariance(
    p: usize,
    k: usize,
    gamma_rel: &[f64],
    l: &LipschitzVector,
    options: &SolverOptions,
) -> Result<CheckReport> {
    scale_invariance_inner(p, k, gamma_rel, l, l, options)
}

/// As above, with the scaled problem assembled using `assembly_l` (used for fault injection).
pub(crate) fn scale_invariance_inner(
    p: usize,
    k: usize,
    gamma_rel: &[f64],
    l: &LipschitzVector,
    assembly_l: &LipschitzVector,
    options: &SolverOptions,
) -> Result<CheckReport> {
    l.check_blocks(crate::expr::BlockStructure::new(p)?)?;
    let scaled = MethodSpec::ccd(p, k, StepSchedule::relative(gamma_rel, l)?)?;
    let plain = MethodSpec::ccd(p, k, StepSchedule::relative(gamma_rel, &unit(p)?)?)?;
    let a = gap_value(&scaled, &Setting::init(1.0), assembly_l, options)?;
    let b = gap_value(&plain, &Setting::init(1.0), &unit(p)?, options)?;
    let rel = (a - b).abs() / b.abs().max(1e-12);
    Ok(CheckReport {
        name: "scale-invariance".into(),
        value: a,
        reference: b,
        deviation: rel,
        passed: rel <= 1e-6,
        detail: format!("p={p} K={k} L={:?}", l.as_slice()),
    })
}

/// Worst case at radius `c·R` against `c²` times the worst case at `R`.
pub fn verify_radius_homogeneity(
    spec: &MethodSpec,
    setting: &Setting,
    l: &LipschitzVector,
    c: f64,
    options: &SolverOptions,
) -> Result<CheckReport> {
    let r = match setting.radius() {
        Some(r) => r,
        None => return invalid("radius homogeneity needs a radius setting"),
    };
    let a = gap_value(spec, setting, l, options)?;
    let b = gap_value(spec, &setting.with_radius(c * r), l, options)?;
    let rel = (b - c * c * a).abs() / (c * c * a).abs().max(1e-12);
    Ok(CheckReport {
        name: "radius-homogeneity".into(),
        value: b,
        reference: c * c * a,
        deviation: rel,
        passed: rel <= 1e-6,
        detail: format!("{} c={c}", spec.kind),
    })
}

/// Optimal constant in `f(x_0) − f(x_p) ≥ C ‖∇f(x_0)‖²` over one cycle with `γ_ℓ = 1/L_ℓ`.
pub fn descent_lemma_constant(p: usize, l: &LipschitzVector, options: &SolverOptions) -> Result<f64> {
    let traj = run_ccd(&MethodSpec::ccd(p, 1, StepSchedule::inverse_lipschitz(l))?)?;
    let prob = assemble_pep(&traj, &Setting::GradNormalized, Criterion::CycleDecrease, l)?;
    Ok(solve_optimal(&prob, options)?.value)
}

/// Smallest ratio `(f(x_0) − f(x_2)) / ‖∇f(x_0)‖²` of one unit-step two-block
/// cycle on `f(x) = ½xᵀ[[1, a], [a, 1]]x`, scanning `samples` start directions.
pub fn quadratic_descent_ratio(a: f64, samples: usize) -> f64 {
    let f = |x: f64, y: f64| 0.5 * (x * x + 2.0 * a * x * y + y * y);
    let mut best = f64::INFINITY;
    for s in 0..samples {
        let t = std::f64::consts::PI * s as f64 / samples as f64;
        let (x0, y0) = (t.cos(), t.sin());
        let (gx, gy) = (x0 + a * y0, a * x0 + y0);
        let norm = gx * gx + gy * gy;
        if norm < 1e-12 {
            continue;
        }
        let x1 = x0 - gx;
        let y1 = y0 - (a * x1 + y0);
        best = best.min((f(x0, y0) - f(x1, y1)) / norm);
    }
    best
}

/// Problem over the trajectory's non-optimal points with the given objective.
fn problem_without_minimizer(
    traj: &Trajectory,
    l: &LipschitzVector,
    objective: ScalarExpr,
    sense: Sense,
    value_names: Vec<String>,
) -> Result<SdpProblem> {
    let basis = Basis::new(traj.basis.iter().copied())?;
    let mut prob = SdpProblem::new(traj.blocks, basis, l.clone(), value_names, objective, sense)?;
    let triplets: Vec<_> = traj.triplets.iter().filter(|t| t.label != PointLabel::Optimal).cloned().collect();
    prob.points = triplets.iter().map(|t| t.label).collect();
    for c in generate_interp_constraints(&triplets, l)? {
        prob.add_constraint(
            c.expr,
            ConstraintKind::NonNegative,
            ConstraintTag::Interpolation { i: c.i, j: c.j, block: c.block },
        )?;
    }
    // Only differences enter, so pinning x_0 = 0 loses nothing and removes
    // a direction along which the Gram feasible set is unbounded.
    let blocks = traj.blocks;
    for b in 0..blocks.p() {
        let mut w = vec![0.0; blocks.p()];
        w[b] = 1.0;
        prob.add_constraint(
            weighted_norm_sq(&traj.iterates[0], &w)?,
            ConstraintKind::Zero,
            ConstraintTag::Custom(format!("anchor x0 block {}", b + 1)),
        )?;
    }
    Ok(prob)
}

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("f{i}")).collect()
}

/// Problem behind the two-block descent check: minimize `f(x_0) − f(x_1)` over
/// one step on `block` with `‖g_0^ℓ‖² + ‖g_1^ℓ‖² = 1`.
pub(crate) fn two_block_descent_problem(
    l: &LipschitzVector,
    block: usize,
    normalized: &[BlockVectorExpr],
) -> Result<SdpProblem> {
    if l.len() != 2 || block >= 2 {
        return invalid("the two-block descent check needs p = 2 and block ∈ {1, 2}");
    }
    let spec = MethodSpec::ccd(2, 1, StepSchedule::inverse_lipschitz(l))?.with_order(vec![block])?;
    let traj = run_ccd(&spec)?;
    let blocks = traj.blocks;
    let mut obj = ScalarExpr::value(blocks, ValueSymbol(0));
    obj.axpy(-1.0, &ScalarExpr::value(blocks, ValueSymbol(1)));
    let mut prob = problem_without_minimizer(&traj, l, obj, Sense::Minimize, names(traj.num_values))?;
    let mut weights = vec![0.0; 2];
    weights[block] = 1.0;
    let mut e = ScalarExpr::constant(blocks, -1.0);
    for g in normalized {
        e.axpy(1.0, &weighted_norm_sq(g, &weights)?);
    }
    prob.add_constraint(e, ConstraintKind::Zero, ConstraintTag::Normalization)?;
    Ok(prob)
}

/// Checks `f(x_0) − f(x_1) ≥ 1/(2L_ℓ)` for one step on `block` under
/// `‖g_0^ℓ‖² + ‖g_1^ℓ‖² = 1`; no minimizer is assumed.
pub fn verify_two_block_descent(l: &LipschitzVector, block: usize, options: &SolverOptions) -> Result<CheckReport> {
    let blocks = crate::expr::BlockStructure::new(2)?;
    let g = |i| BlockVectorExpr::basis(blocks, crate::expr::BasisLabel::Gradient(i));
    let prob = two_block_descent_problem(l, block, &[g(0), g(1)])?;
    let value = solve_optimal(&prob, options)?.value;
    let reference = 1.0 / (2.0 * l.get(block));
    Ok(CheckReport {
        name: "two-block-descent".into(),
        value,
        reference,
        deviation: reference - value,
        passed: value >= reference - BOUND_SLACK,
        detail: format!("block {} L={:?}", block + 1, l.as_slice()),
    })
}

/// Checks `max min_{1≤i≤2K−1} ‖∇f(x_i)‖*²_L ≤ 2/(2K − 1)` over `K` two-block
/// cycles with `γ_ℓ = 1/L_ℓ` and `f(x_0) − f(x_{2K}) ≤ 1`.
pub fn verify_residual_bound(k: usize, l: &LipschitzVector, options: &SolverOptions) -> Result<CheckReport> {
    if l.len() != 2 || k == 0 {
        return invalid("the residual check needs p = 2 and K ≥ 1");
    }
    let traj = run_ccd(&MethodSpec::ccd(2, k, StepSchedule::inverse_lipschitz(l))?)?;
    let blocks = traj.blocks;
    let n = traj.steps();
    let t = ValueSymbol(traj.num_values);
    let mut value_names = names(traj.num_values);
    value_names.push("t".into());
    let mut prob = problem_without_minimizer(&traj, l, ScalarExpr::value(blocks, t), Sense::Maximize, value_names)?;
    for i in 1..n {
        let e = weighted_norm_sq(traj.gradient_at(i)?, &l.inverse())?.try_sub(&ScalarExpr::value(blocks, t))?;
        prob.add_constraint(e, ConstraintKind::NonNegative, ConstraintTag::Epigraph(i))?;
    }
    let mut budget = ScalarExpr::constant(blocks, 1.0);
    budget.axpy(-1.0, &ScalarExpr::value(blocks, traj.value_at(0)?));
    budget.axpy(1.0, &ScalarExpr::value(blocks, traj.value_at(n)?));
    prob.add_constraint(budget, ConstraintKind::NonNegative, ConstraintTag::Custom("decrease budget".into()))?;
    let value = solve_optimal(&prob, options)?.value;
    let reference = 2.0 / (2.0 * k as f64 - 1.0);
    Ok(CheckReport {
        name: "residual-bound".into(),
        value,
        reference,
        deviation: value - reference,
        passed: value <= reference + BOUND_SLACK,
        detail: format!("K={k} L={:?}", l.as_slice()),
    })
}
