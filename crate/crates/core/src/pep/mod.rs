//! Assembly of performance estimation problems into semidefinite programs,
//! solving through a conic backend, SDPA export and post-processing.

mod certificate;
mod extract;
pub mod sdpa;
mod solver;

pub use certificate::{dual_certificate, Certificate};
pub use extract::{extract_from_triplets, extract_worst_case, WorstCaseInstance};
pub use solver::{
    solve, solve_with, ClarabelSolver, ConicProblem, ConicSolution, ConicSolver, LinearRow, SolverOptions,
    SolverResult, SolverStatus,
};

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::algos::{SequenceTree, Trajectory};
use crate::error::{invalid, PepError, Result};
use crate::expr::{
    weighted_norm_sq, Basis, BasisLabel, BlockStructure, LipschitzVector, PointLabel, ScalarExpr, Triplet, ValueSymbol,
};
use crate::interp::generate_interp_constraints;

/// Initial-condition / normalization model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Setting {
    /// `‖x_{pk} − x_*‖ ≤ R_a` at every cycle end (and optionally at `k = 0`).
    All { radius: f64, include_start: bool },
    /// `‖x_0 − x_*‖_L ≤ R_i`.
    Init { radius: f64 },
    /// `‖∇f(x_0)‖² = 1`, no minimizer in the point set.
    GradNormalized,
}

impl Setting {
    pub fn all(radius: f64) -> Self {
        Setting::All { radius, include_start: false }
    }

    pub fn init(radius: f64) -> Self {
        Setting::Init { radius }
    }

    pub fn radius(&self) -> Option<f64> {
        match self {
            Setting::All { radius, .. } | Setting::Init { radius } => Some(*radius),
            Setting::GradNormalized => None,
        }
    }

    pub fn with_radius(&self, r: f64) -> Self {
        match *self {
            Setting::All { include_start, .. } => Setting::All { radius: r, include_start },
            Setting::Init { .. } => Setting::Init { radius: r },
            Setting::GradNormalized => Setting::GradNormalized,
        }
    }

    fn validate(&self) -> Result<()> {
        match self.radius() {
            Some(r) if !(r.is_finite() && r > 0.0) => invalid(format!("radius must be positive, got {r}")),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Setting::All { .. } => f.write_str("all"),
            Setting::Init { .. } => f.write_str("init"),
            Setting::GradNormalized => f.write_str("gradnorm"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// Maximize `f(x_N) − f_*`.
    FinalValueGap,
    /// Minimize `f(x_0) − f(x_p)`.
    CycleDecrease,
    /// Maximize `min_{1≤i≤N−1} ‖∇f(x_i)‖*²_L`.
    MinGradDualNorm,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criterion::FinalValueGap => f.write_str("gap"),
            Criterion::CycleDecrease => f.write_str("decrease"),
            Criterion::MinGradDualNorm => f.write_str("min-grad"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// `expr ≥ 0` or `expr = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintKind {
    NonNegative,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConstraintTag {
    Interpolation { i: usize, j: usize, block: usize },
    Structural(usize),
    Setting(usize),
    Normalization,
    Epigraph(usize),
    Custom(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub expr: ScalarExpr,
    pub kind: ConstraintKind,
    pub tag: ConstraintTag,
}

/// Solver-facing problem: one PSD Gram matrix per block over a shared basis,
/// a vector of free scalar symbols, linear constraints and a linear objective.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub blocks: BlockStructure,
    pub basis: Basis,
    pub lipschitz: LipschitzVector,
    pub value_names: Vec<String>,
    pub constraints: Vec<Constraint>,
    pub objective: ScalarExpr,
    pub sense: Sense,
    /// Labels of the interpolated points.
    pub points: Vec<PointLabel>,
    pub description: String,
}

impl SdpProblem {
    pub fn new(
        blocks: BlockStructure,
        basis: Basis,
        lipschitz: LipschitzVector,
        value_names: Vec<String>,
        objective: ScalarExpr,
        sense: Sense,
    ) -> Result<Self> {
        lipschitz.check_blocks(blocks)?;
        let p = Self {
            blocks,
            basis,
            lipschitz,
            value_names,
            constraints: Vec::new(),
            objective,
            sense,
            points: Vec::new(),
            description: String::new(),
        };
        p.check_expr(&p.objective)?;
        Ok(p)
    }

    pub fn num_values(&self) -> usize {
        self.value_names.len()
    }

    pub fn gram_dims(&self) -> Vec<usize> {
        vec![self.basis.len(); self.blocks.p()]
    }

    pub fn add_value_symbol(&mut self, name: impl Into<String>) -> ValueSymbol {
        self.value_names.push(name.into());
        ValueSymbol(self.value_names.len() - 1)
    }

    fn check_expr(&self, e: &ScalarExpr) -> Result<()> {
        if e.p() != self.blocks.p() {
            return Err(PepError::Structural("expression block count differs from problem".into()));
        }
        for b in 0..e.p() {
            for (x, y) in e.gram_terms(b).keys() {
                if !self.basis.contains(*x) || !self.basis.contains(*y) {
                    return Err(PepError::Structural(format!("undeclared basis label in ⟨{x}, {y}⟩")));
                }
            }
        }
        if let Some(s) = e.value_terms().keys().find(|s| s.0 >= self.num_values()) {
            return Err(PepError::Structural(format!("undeclared value symbol {}", s.0)));
        }
        Ok(())
    }

    /// Adds a constraint; a constant constraint that fails (e.g. `1 = 0`) is infeasible.
    pub fn add_constraint(&mut self, expr: ScalarExpr, kind: ConstraintKind, tag: ConstraintTag) -> Result<()> {
        self.check_expr(&expr)?;
        if expr.is_constant() {
            let c = expr.constant_term();
            let ok = match kind {
                ConstraintKind::NonNegative => c >= 0.0,
                ConstraintKind::Zero => c == 0.0,
            };
            if !ok {
                return Err(PepError::Infeasible(format!(
                    "constraint {tag:?} reduces to a false constant relation ({c})"
                )));
            }
            return Ok(());
        }
        self.constraints.push(Constraint { expr, kind, tag });
        Ok(())
    }

    pub fn count_tagged(&self, pred: impl Fn(&ConstraintTag) -> bool) -> usize {
        self.constraints.iter().filter(|c| pred(&c.tag)).count()
    }

    /// Same problem with the constraints at `indices` removed.
    pub fn without_constraints(&self, indices: &BTreeSet<usize>) -> Self {
        let mut out = self.clone();
        out.constraints =
            self.constraints.iter().enumerate().filter(|(i, _)| !indices.contains(i)).map(|(_, c)| c.clone()).collect();
        out
    }
}

fn value_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("f{i}")).collect()
}

fn add_interpolation(problem: &mut SdpProblem, triplets: &[Triplet], l: &LipschitzVector) -> Result<()> {
    for c in generate_interp_constraints(triplets, l)? {
        problem.add_constraint(
            c.expr,
            ConstraintKind::NonNegative,
            ConstraintTag::Interpolation { i: c.i, j: c.j, block: c.block },
        )?;
    }
    Ok(())
}

/// `radius² − ‖v‖²_w ≥ 0`.
fn ball(v: &crate::expr::BlockVectorExpr, weights: &[f64], radius: f64) -> Result<ScalarExpr> {
    let mut e = weighted_norm_sq(v, weights)?.scaled(-1.0);
    e.add_constant(radius * radius);
    Ok(e)
}

fn add_setting(problem: &mut SdpProblem, traj: &Trajectory, setting: &Setting, l: &LipschitzVector) -> Result<()> {
    let p = traj.blocks.p();
    match *setting {
        Setting::All { radius, include_start } => {
            let ends = traj.cycle_end_iterates()?;
            let ones = vec![1.0; p];
            let mut k = 0;
            if include_start {
                problem.add_constraint(
                    ball(&traj.iterates[0], &ones, radius)?,
                    ConstraintKind::NonNegative,
                    ConstraintTag::Setting(k),
                )?;
            }
            for x in ends {
                k += 1;
                problem.add_constraint(
                    ball(x, &ones, radius)?,
                    ConstraintKind::NonNegative,
                    ConstraintTag::Setting(k),
                )?;
            }
        }
        Setting::Init { radius } => {
            problem.add_constraint(
                ball(&traj.iterates[0], l.as_slice(), radius)?,
                ConstraintKind::NonNegative,
                ConstraintTag::Setting(0),
            )?;
        }
        Setting::GradNormalized => {
            let g0 = traj.gradient_at(0)?;
            let mut e = weighted_norm_sq(g0, &vec![1.0; p])?;
            e.add_constant(-1.0);
            problem.add_constraint(e, ConstraintKind::Zero, ConstraintTag::Normalization)?;
        }
    }
    Ok(())
}

/// Builds the relaxed PEP for a deterministic trajectory.
pub fn assemble_pep(
    traj: &Trajectory,
    setting: &Setting,
    criterion: Criterion,
    l: &LipschitzVector,
) -> Result<SdpProblem> {
    setting.validate()?;
    l.check_blocks(traj.blocks)?;
    let blocks = traj.blocks;
    let p = blocks.p();
    let n = traj.steps();
    let basis = Basis::new(traj.basis.iter().copied())?;
    let triplets: Vec<Triplet> = match setting {
        Setting::GradNormalized => traj.triplets.iter().filter(|t| t.label != PointLabel::Optimal).cloned().collect(),
        _ => traj.triplets.clone(),
    };

    let (objective, sense, names) = match criterion {
        Criterion::FinalValueGap => {
            if matches!(setting, Setting::GradNormalized) {
                return Err(PepError::Refused(
                    "the final gap is unbounded without a minimizer; use the cycle-decrease criterion".into(),
                ));
            }
            (ScalarExpr::value(blocks, traj.value_at(n)?), Sense::Maximize, value_names(traj.num_values))
        }
        Criterion::CycleDecrease => {
            if n < p {
                return Err(PepError::Refused(format!("cycle decrease needs at least {p} steps")));
            }
            let mut e = ScalarExpr::value(blocks, traj.value_at(0)?);
            e.axpy(-1.0, &ScalarExpr::value(blocks, traj.value_at(p)?));
            (e, Sense::Minimize, value_names(traj.num_values))
        }
        Criterion::MinGradDualNorm => {
            if n < 2 {
                return Err(PepError::Refused("the gradient criterion needs interior iterates (N ≥ 2)".into()));
            }
            let mut names = value_names(traj.num_values);
            names.push("t".into());
            (ScalarExpr::value(blocks, ValueSymbol(traj.num_values)), Sense::Maximize, names)
        }
    };
    let mut problem = SdpProblem::new(blocks, basis, l.clone(), names, objective, sense)?;
    problem.description = format!("{} p={} N={} setting={} criterion={}", traj.method, p, n, setting, criterion);

    problem.points = triplets.iter().map(|t| t.label).collect();
    add_interpolation(&mut problem, &triplets, l)?;
    for (k, s) in traj.structural.iter().enumerate() {
        problem.add_constraint(s.clone(), ConstraintKind::Zero, ConstraintTag::Structural(k))?;
    }
    add_setting(&mut problem, traj, setting, l)?;
    if criterion == Criterion::MinGradDualNorm {
        let t = ScalarExpr::value(blocks, ValueSymbol(traj.num_values));
        for i in 1..n {
            let g = traj.gradient_at(i)?;
            let e = weighted_norm_sq(g, &l.inverse())?.try_sub(&t)?;
            problem.add_constraint(e, ConstraintKind::NonNegative, ConstraintTag::Epigraph(i))?;
        }
    }
    Ok(problem)
}

/// Builds the PEP of the expected final gap over every block sequence of a
/// randomized accelerated run. Only nodes reached with positive probability
/// are interpolated.
pub fn assemble_random_pep(
    tree: &SequenceTree,
    setting: &Setting,
    criterion: Criterion,
    l: &LipschitzVector,
) -> Result<SdpProblem> {
    setting.validate()?;
    if criterion != Criterion::FinalValueGap {
        return Err(PepError::Refused(format!("random PEP supports the final-gap criterion only, got {criterion}")));
    }
    let blocks = tree.blocks;
    l.check_blocks(blocks)?;
    let p = blocks.p();
    let live: Vec<&crate::algos::TreeNode> = tree.nodes.iter().filter(|n| n.reach_probability > 0.0).collect();
    let mut labels: Vec<BasisLabel> = live.iter().map(|n| BasisLabel::Gradient(n.id)).collect();
    labels.push(BasisLabel::InitialPoint);
    let basis = Basis::new(labels)?;

    let mut objective = ScalarExpr::zero(blocks);
    for leaf in live.iter().filter(|n| n.depth == tree.depth) {
        objective.add_value(ValueSymbol(leaf.id), leaf.reach_probability);
    }
    let names = (0..tree.node_count()).map(|i| format!("f{i}")).collect();
    let mut problem = SdpProblem::new(blocks, basis, l.clone(), names, objective, Sense::Maximize)?;
    problem.description = format!("random-accelerated p={} N={} setting={}", p, tree.depth, setting);

    let mut triplets: Vec<Triplet> = live.iter().map(|n| (*n.triplet).clone()).collect();
    triplets.push(Triplet::optimal(blocks));
    problem.points = triplets.iter().map(|t| t.label).collect();
    add_interpolation(&mut problem, &triplets, l)?;
    match *setting {
        Setting::Init { radius } => {
            problem.add_constraint(
                ball(&tree.x0, l.as_slice(), radius)?,
                ConstraintKind::NonNegative,
                ConstraintTag::Setting(0),
            )?;
        }
        _ => return Err(PepError::Refused(format!("random PEP supports setting init only, got {setting}"))),
    }
    Ok(problem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algos::{build_sequence_tree, run_am, run_ccd, MethodSpec, StepDistribution, StepSchedule};

    fn unit(p: usize) -> LipschitzVector {
        LipschitzVector::uniform(p, 1.0).unwrap()
    }

    fn ccd(p: usize, k: usize) -> Trajectory {
        run_ccd(&MethodSpec::ccd(p, k, StepSchedule::inverse_lipschitz(&unit(p))).unwrap()).unwrap()
    }

    #[test]
    fn init_counts() {
        let prob = assemble_pep(&ccd(2, 1), &Setting::init(1.0), Criterion::FinalValueGap, &unit(2)).unwrap();
        assert_eq!(prob.count_tagged(|t| matches!(t, ConstraintTag::Setting(_))), 1);
        assert_eq!(prob.count_tagged(|t| matches!(t, ConstraintTag::Interpolation { .. })), 2 * 4 * 3);
        assert_eq!(prob.gram_dims(), vec![4, 4]);
    }

    #[test]
    fn all_counts() {
        let prob = assemble_pep(&ccd(2, 3), &Setting::all(1.0), Criterion::FinalValueGap, &unit(2)).unwrap();
        assert_eq!(prob.count_tagged(|t| matches!(t, ConstraintTag::Setting(_))), 3);
        let with_start = Setting::All { radius: 1.0, include_start: true };
        let prob = assemble_pep(&ccd(2, 3), &with_start, Criterion::FinalValueGap, &unit(2)).unwrap();
        assert_eq!(prob.count_tagged(|t| matches!(t, ConstraintTag::Setting(_))), 4);
    }

    #[test]
    fn grad_normalized_equality() {
        let prob = assemble_pep(&ccd(2, 1), &Setting::GradNormalized, Criterion::CycleDecrease, &unit(2)).unwrap();
        let norm: Vec<&Constraint> =
            prob.constraints.iter().filter(|c| c.tag == ConstraintTag::Normalization).collect();
        assert_eq!(norm.len(), 1);
        let e = &norm[0].expr;
        assert_eq!(norm[0].kind, ConstraintKind::Zero);
        assert_eq!(e.constant_term(), -1.0);
        for b in 0..2 {
            assert_eq!(e.gram_coefficient(b, BasisLabel::Gradient(0), BasisLabel::Gradient(0)), 1.0);
        }
        // no minimizer: three points only
        assert_eq!(prob.count_tagged(|t| matches!(t, ConstraintTag::Interpolation { .. })), 2 * 3 * 2);
        assert_eq!(prob.sense, Sense::Minimize);
    }

    #[test]
    fn all_refused_for_unaligned_order() {
        let spec =
            MethodSpec::ccd(2, 1, StepSchedule::inverse_lipschitz(&unit(2))).unwrap().with_order(vec![0, 0]).unwrap();
        let t = run_ccd(&spec).unwrap();
        assert!(matches!(
            assemble_pep(&t, &Setting::all(1.0), Criterion::FinalValueGap, &unit(2)),
            Err(PepError::Refused(_))
        ));
    }

    #[test]
    fn am_gram_size() {
        let t = run_am(&MethodSpec::am(2, 1).unwrap()).unwrap();
        let prob = assemble_pep(&t, &Setting::all(1.0), Criterion::FinalValueGap, &unit(2)).unwrap();
        assert_eq!(prob.gram_dims(), vec![6, 6]);
        assert_eq!(prob.count_tagged(|t| matches!(t, ConstraintTag::Structural(_))), 4);
    }

    #[test]
    fn random_gram_size() {
        let s = StepSchedule::inverse_lipschitz(&unit(2));
        let tree = build_sequence_tree(2, 4, &s, &StepDistribution::uniform(2, 4)).unwrap();
        let prob = assemble_random_pep(&tree, &Setting::init(1.0), Criterion::FinalValueGap, &unit(2)).unwrap();
        assert_eq!(prob.gram_dims(), vec![32, 32]);
        assert_eq!(prob.objective.value_terms().len(), 16);
        assert!(assemble_random_pep(&tree, &Setting::init(1.0), Criterion::CycleDecrease, &unit(2)).is_err());
    }

    #[test]
    fn false_constant_constraint_is_infeasible() {
        let mut prob = assemble_pep(&ccd(1, 1), &Setting::init(1.0), Criterion::FinalValueGap, &unit(1)).unwrap();
        let blocks = prob.blocks;
        let zero = crate::expr::BlockVectorExpr::zero(blocks);
        let mut e = weighted_norm_sq(&zero, &[1.0]).unwrap();
        e.add_constant(-1.0);
        assert!(matches!(
            prob.add_constraint(e, ConstraintKind::Zero, ConstraintTag::Normalization),
            Err(PepError::Infeasible(_))
        ));
    }

    #[test]
    fn undeclared_labels_rejected() {
        let mut prob = assemble_pep(&ccd(1, 1), &Setting::init(1.0), Criterion::FinalValueGap, &unit(1)).unwrap();
        let v = crate::expr::BlockVectorExpr::basis(prob.blocks, BasisLabel::Iterate(7));
        let e = weighted_norm_sq(&v, &[1.0]).unwrap();
        assert!(matches!(
            prob.add_constraint(e, ConstraintKind::NonNegative, ConstraintTag::Custom("x".into())),
            Err(PepError::Structural(_))
        ));
    }
}
