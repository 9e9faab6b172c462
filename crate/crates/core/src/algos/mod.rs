//! Symbolic executors: run a block method on basis symbols and record every
//! point, gradient and function value it touches.

mod tree;

pub use tree::{build_sequence_tree, SequenceTree, StepDistribution, TreeNode};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, PepError, Result};
use crate::expr::{
    inner_product, BasisLabel, BlockStructure, BlockVectorExpr, LipschitzVector, PointLabel, ScalarExpr, Triplet,
    ValueSymbol,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    Ccd,
    Cacd,
    Am,
    CustomFixedStep,
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MethodKind::Ccd => "ccd",
            MethodKind::Cacd => "cacd",
            MethodKind::Am => "am",
            MethodKind::CustomFixedStep => "custom",
        };
        f.write_str(s)
    }
}

/// Per-block step sizes `γ_ℓ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    gamma: Vec<f64>,
}

impl StepSchedule {
    pub fn absolute(gamma: Vec<f64>) -> Result<Self> {
        if gamma.is_empty() || gamma.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return invalid("step sizes must be positive and finite");
        }
        Ok(Self { gamma })
    }

    /// `γ_ℓ = rel_ℓ / L_ℓ`; a single relative step is broadcast to all blocks.
    pub fn relative(rel: &[f64], l: &LipschitzVector) -> Result<Self> {
        let rel: Vec<f64> = match rel.len() {
            1 => vec![rel[0]; l.len()],
            n if n == l.len() => rel.to_vec(),
            n => return invalid(format!("{n} relative steps for {} blocks", l.len())),
        };
        Self::absolute(rel.iter().zip(l.as_slice()).map(|(r, li)| r / li).collect())
    }

    pub fn inverse_lipschitz(l: &LipschitzVector) -> Self {
        Self { gamma: l.inverse() }
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// `γ_ℓ · L_ℓ`.
    pub fn relative_to(&self, l: &LipschitzVector) -> Vec<f64> {
        self.gamma.iter().zip(l.as_slice()).map(|(g, li)| g * li).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { gamma: self.gamma.iter().map(|g| g * c).collect() }
    }
}

/// Full description of a deterministic block method run.
///
/// `order[i]` is the 0-based block updated at step `i`. `step_matrix[i][k]`
/// (custom methods) is `α_{i+1,k}` in `x_{i+1} = x_0 − Σ_{k≤i} α_{i+1,k} U_{t(k)} g_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub kind: MethodKind,
    pub blocks: BlockStructure,
    pub order: Vec<usize>,
    pub schedule: Option<StepSchedule>,
    pub step_matrix: Option<Vec<Vec<f64>>>,
}

fn cyclic(p: usize, cycles: usize) -> Vec<usize> {
    (0..p * cycles).map(|i| i % p).collect()
}

impl MethodSpec {
    pub fn ccd(p: usize, cycles: usize, schedule: StepSchedule) -> Result<Self> {
        Self::new(MethodKind::Ccd, BlockStructure::new(p)?, cyclic(p, cycles), Some(schedule), None)
    }

    pub fn cacd(p: usize, cycles: usize, schedule: StepSchedule) -> Result<Self> {
        Self::new(MethodKind::Cacd, BlockStructure::new(p)?, cyclic(p, cycles), Some(schedule), None)
    }

    pub fn am(p: usize, cycles: usize) -> Result<Self> {
        Self::new(MethodKind::Am, BlockStructure::new(p)?, cyclic(p, cycles), None, None)
    }

    pub fn custom(p: usize, order: Vec<usize>, step_matrix: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(MethodKind::CustomFixedStep, BlockStructure::new(p)?, order, None, Some(step_matrix))
    }

    /// Custom method taking one plain step `steps[i]` on block `order[i]` at step `i`.
    pub fn custom_from_steps(p: usize, order: Vec<usize>, steps: &[f64]) -> Result<Self> {
        if steps.len() != order.len() {
            return invalid("one step size per step required");
        }
        let matrix = (0..order.len()).map(|i| steps[..=i].to_vec()).collect();
        Self::custom(p, order, matrix)
    }

    pub fn new(
        kind: MethodKind,
        blocks: BlockStructure,
        order: Vec<usize>,
        schedule: Option<StepSchedule>,
        step_matrix: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let spec = Self { kind, blocks, order, schedule, step_matrix };
        spec.validate()?;
        Ok(spec)
    }

    /// Replace the update order, keeping everything else.
    pub fn with_order(&self, order: Vec<usize>) -> Result<Self> {
        let mut s = self.clone();
        s.order = order;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.blocks.p();
        if self.order.is_empty() {
            return invalid("at least one step is required");
        }
        if let Some(b) = self.order.iter().find(|b| **b >= p) {
            return invalid(format!("order references block {} but p = {p}", b + 1));
        }
        match self.kind {
            MethodKind::Ccd | MethodKind::Cacd => {
                let s =
                    self.schedule.as_ref().ok_or_else(|| PepError::InvalidInput("step schedule required".into()))?;
                if s.gamma.len() != p {
                    return invalid(format!("{} step sizes for {p} blocks", s.gamma.len()));
                }
            }
            MethodKind::Am => {}
            MethodKind::CustomFixedStep => {
                let m = self
                    .step_matrix
                    .as_ref()
                    .ok_or_else(|| PepError::InvalidInput("custom method requires a step matrix".into()))?;
                if m.len() != self.order.len() {
                    return invalid("step matrix needs one row per step");
                }
                for (i, row) in m.iter().enumerate() {
                    if row.len() != i + 1 {
                        return invalid(format!("step matrix row {} must have {} entries", i + 1, i + 1));
                    }
                    if row.iter().any(|a| !a.is_finite()) {
                        return invalid("step matrix entries must be finite");
                    }
                }
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.order.len()
    }

    /// `Some(K)` when the order splits into `K` windows of `p` steps that each
    /// touch every block once.
    pub fn cycles(&self) -> Option<usize> {
        let p = self.blocks.p();
        if self.order.len() % p != 0 {
            return None;
        }
        let aligned = self.order.chunks(p).all(|w| {
            let mut seen = vec![false; p];
            w.iter().all(|b| !std::mem::replace(&mut seen[*b], true))
        });
        aligned.then_some(self.order.len() / p)
    }

    pub fn gamma(&self) -> Option<&[f64]> {
        self.schedule.as_ref().map(|s| s.gamma())
    }

    /// Order in 1-based notation, e.g. `1,2,2,1`.
    pub fn order_string(&self) -> String {
        self.order.iter().map(|b| (b + 1).to_string()).collect::<Vec<_>>().join(",")
    }
}

/// Symbolic execution record consumed by PEP assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub method: MethodKind,
    pub blocks: BlockStructure,
    pub basis: Vec<BasisLabel>,
    /// Interpolated points; the minimizer (if present) is last.
    pub triplets: Vec<Triplet>,
    /// Method-specific equalities `expr = 0`.
    pub structural: Vec<ScalarExpr>,
    /// Main iterates `x_0, …, x_N`.
    pub iterates: Vec<BlockVectorExpr>,
    pub iterate_values: Vec<Option<ValueSymbol>>,
    pub iterate_gradients: Vec<Option<BlockVectorExpr>>,
    pub order: Vec<usize>,
    pub cycles: Option<usize>,
    pub num_values: usize,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.order.len()
    }

    pub fn triplet_index(&self, label: PointLabel) -> Option<usize> {
        self.triplets.iter().position(|t| t.label == label)
    }

    /// Value symbol of `f(x_i)`; only available where the method evaluates `f`.
    pub fn value_at(&self, i: usize) -> Result<ValueSymbol> {
        self.iterate_values
            .get(i)
            .copied()
            .flatten()
            .ok_or_else(|| PepError::Refused(format!("f(x{i}) is not part of this trajectory")))
    }

    pub fn gradient_at(&self, i: usize) -> Result<&BlockVectorExpr> {
        self.iterate_gradients
            .get(i)
            .and_then(|g| g.as_ref())
            .ok_or_else(|| PepError::Refused(format!("∇f(x{i}) is not part of this trajectory")))
    }

    /// Iterates `x_{pk}` for `k = 1..K`; refused when steps are not cycle-aligned.
    pub fn cycle_end_iterates(&self) -> Result<Vec<&BlockVectorExpr>> {
        let k =
            self.cycles.ok_or_else(|| PepError::Refused("setting ALL needs a cycle-aligned update order".into()))?;
        let p = self.blocks.p();
        Ok((1..=k).map(|c| &self.iterates[c * p]).collect())
    }
}

fn gradient(blocks: BlockStructure, i: usize) -> BlockVectorExpr {
    BlockVectorExpr::basis(blocks, BasisLabel::Gradient(i))
}

fn gradient_basis(n: usize) -> Vec<BasisLabel> {
    let mut b: Vec<BasisLabel> = (0..=n).map(BasisLabel::Gradient).collect();
    b.push(BasisLabel::InitialPoint);
    b
}

fn fixed_step_trajectory(spec: &MethodSpec, iterates: Vec<BlockVectorExpr>) -> Trajectory {
    let blocks = spec.blocks;
    let n = spec.steps();
    let mut triplets: Vec<Triplet> = iterates
        .iter()
        .enumerate()
        .map(|(i, x)| Triplet {
            label: PointLabel::X(i),
            point: x.clone(),
            gradient: gradient(blocks, i),
            value: Some(ValueSymbol(i)),
        })
        .collect();
    triplets.push(Triplet::optimal(blocks));
    Trajectory {
        method: spec.kind,
        blocks,
        basis: gradient_basis(n),
        triplets,
        structural: Vec::new(),
        iterate_values: (0..=n).map(|i| Some(ValueSymbol(i))).collect(),
        iterate_gradients: (0..=n).map(|i| Some(gradient(blocks, i))).collect(),
        iterates,
        order: spec.order.clone(),
        cycles: spec.cycles(),
        num_values: n + 1,
    }
}

fn require(spec: &MethodSpec, kind: MethodKind) -> Result<()> {
    spec.validate()?;
    if spec.kind != kind {
        return invalid(format!("expected a {kind} method, got {}", spec.kind));
    }
    Ok(())
}

/// Cyclic (or fixed-order) block gradient steps `x_{i+1} = x_i − γ_ℓ U_ℓ g_i`.
pub fn run_ccd(spec: &MethodSpec) -> Result<Trajectory> {
    require(spec, MethodKind::Ccd)?;
    let gamma = spec.gamma().expect("validated");
    let blocks = spec.blocks;
    let mut iterates = vec![BlockVectorExpr::basis(blocks, BasisLabel::InitialPoint)];
    for (i, &l) in spec.order.iter().enumerate() {
        let mut next = iterates[i].clone();
        next.axpy_block(l, -gamma[l], &gradient(blocks, i));
        iterates.push(next);
    }
    Ok(fixed_step_trajectory(spec, iterates))
}

/// General fixed-step block method given by its step matrix.
pub fn run_custom(spec: &MethodSpec) -> Result<Trajectory> {
    require(spec, MethodKind::CustomFixedStep)?;
    let m = spec.step_matrix.as_ref().expect("validated");
    let blocks = spec.blocks;
    let x0 = BlockVectorExpr::basis(blocks, BasisLabel::InitialPoint);
    let mut iterates = vec![x0.clone()];
    for row in m {
        let mut next = x0.clone();
        for (k, alpha) in row.iter().enumerate() {
            next.axpy_block(spec.order[k], -alpha, &gradient(blocks, k));
        }
        iterates.push(next);
    }
    Ok(fixed_step_trajectory(spec, iterates))
}

/// `θ_0 = 1/p`, `θ_{i+1} = (√(θ_i⁴ + 4θ_i²) − θ_i²)/2`, for `i = 0..n`.
pub fn theta_schedule(p: usize, n: usize) -> Vec<f64> {
    let mut t = vec![1.0 / p as f64];
    for i in 0..n {
        let th = t[i];
        t.push(((th.powi(4) + 4.0 * th * th).sqrt() - th * th) / 2.0);
    }
    t
}

/// One accelerated coordinate step: returns `(y, z_next, x_next)` from `(x, z)`.
pub(crate) fn accelerated_step(
    x: &BlockVectorExpr,
    z: &BlockVectorExpr,
    theta: f64,
    p: usize,
    block: usize,
    gamma: f64,
    grad_at_y: &BlockVectorExpr,
) -> (BlockVectorExpr, BlockVectorExpr, BlockVectorExpr) {
    let mut y = x.scaled(1.0 - theta);
    y.axpy(theta, z);
    let mut z_next = z.clone();
    z_next.axpy_block(block, -gamma / (p as f64 * theta), grad_at_y);
    let mut x_next = y.clone();
    let dz = &z_next - z;
    x_next.axpy(p as f64 * theta, &dz);
    (y, z_next, x_next)
}

/// Accelerated block method with the fixed update order; gradients are taken
/// at the extrapolated points `y_k` and at `x_N`.
pub fn run_cacd(spec: &MethodSpec) -> Result<Trajectory> {
    require(spec, MethodKind::Cacd)?;
    let gamma = spec.gamma().expect("validated");
    let blocks = spec.blocks;
    let p = blocks.p();
    let n = spec.steps();
    let theta = theta_schedule(p, n);
    let x0 = BlockVectorExpr::basis(blocks, BasisLabel::InitialPoint);
    let mut x = x0.clone();
    let mut z = x0.clone();
    let mut iterates = vec![x0];
    let mut triplets = Vec::with_capacity(n + 2);
    for (k, &l) in spec.order.iter().enumerate() {
        let g = gradient(blocks, k);
        let (y, z_next, x_next) = accelerated_step(&x, &z, theta[k], p, l, gamma[l], &g);
        // y_0 coincides with x_0 and shares its triplet
        let point = if k == 0 { iterates[0].clone() } else { y };
        triplets.push(Triplet { label: PointLabel::Y(k), point, gradient: g, value: Some(ValueSymbol(k)) });
        x = x_next;
        z = z_next;
        iterates.push(x.clone());
    }
    triplets.push(Triplet {
        label: PointLabel::X(n),
        point: x,
        gradient: gradient(blocks, n),
        value: Some(ValueSymbol(n)),
    });
    triplets.push(Triplet::optimal(blocks));
    let mut iterate_values = vec![None; n + 1];
    let mut iterate_gradients = vec![None; n + 1];
    iterate_values[0] = Some(ValueSymbol(0));
    iterate_values[n] = Some(ValueSymbol(n));
    iterate_gradients[0] = Some(gradient(blocks, 0));
    iterate_gradients[n] = Some(gradient(blocks, n));
    Ok(Trajectory {
        method: MethodKind::Cacd,
        blocks,
        basis: gradient_basis(n),
        triplets,
        structural: Vec::new(),
        iterates,
        iterate_values,
        iterate_gradients,
        order: spec.order.clone(),
        cycles: spec.cycles(),
        num_values: n + 1,
    })
}

/// Exact block minimization. Iterates are free symbols; each step imposes
/// stationarity on the updated block and immobility of the others.
pub fn run_am(spec: &MethodSpec) -> Result<Trajectory> {
    require(spec, MethodKind::Am)?;
    let blocks = spec.blocks;
    let n = spec.steps();
    let point = |i: usize| {
        if i == 0 {
            BlockVectorExpr::basis(blocks, BasisLabel::InitialPoint)
        } else {
            BlockVectorExpr::basis(blocks, BasisLabel::Iterate(i))
        }
    };
    let iterates: Vec<BlockVectorExpr> = (0..=n).map(point).collect();
    let mut structural = Vec::new();
    for (step, &l) in spec.order.iter().enumerate() {
        let i = step + 1;
        let g = gradient(blocks, i);
        structural.push(inner_product(&g, &g, Some(l))?);
        let dx = &iterates[i] - &iterates[i - 1];
        for s in (0..blocks.p()).filter(|s| *s != l) {
            structural.push(inner_product(&dx, &dx, Some(s))?);
        }
    }
    let mut basis = gradient_basis(n);
    basis.extend((1..=n).map(BasisLabel::Iterate));
    let mut triplets: Vec<Triplet> = iterates
        .iter()
        .enumerate()
        .map(|(i, x)| Triplet {
            label: PointLabel::X(i),
            point: x.clone(),
            gradient: gradient(blocks, i),
            value: Some(ValueSymbol(i)),
        })
        .collect();
    triplets.push(Triplet::optimal(blocks));
    Ok(Trajectory {
        method: MethodKind::Am,
        blocks,
        basis,
        triplets,
        structural,
        iterate_values: (0..=n).map(|i| Some(ValueSymbol(i))).collect(),
        iterate_gradients: (0..=n).map(|i| Some(gradient(blocks, i))).collect(),
        iterates,
        order: spec.order.clone(),
        cycles: spec.cycles(),
        num_values: n + 1,
    })
}

/// Dispatch on the method kind.
pub fn run_method(spec: &MethodSpec) -> Result<Trajectory> {
    match spec.kind {
        MethodKind::Ccd => run_ccd(spec),
        MethodKind::Cacd => run_cacd(spec),
        MethodKind::Am => run_am(spec),
        MethodKind::CustomFixedStep => run_custom(spec),
    }
}
