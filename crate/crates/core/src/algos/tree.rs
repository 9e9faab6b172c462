use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::expr::{BasisLabel, BlockStructure, BlockVectorExpr, PointLabel, Triplet, ValueSymbol};

use super::{accelerated_step, theta_schedule, StepSchedule};

/// Block-selection probabilities for each of the `N` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    per_step: Vec<Vec<f64>>,
}

impl StepDistribution {
    pub fn uniform(p: usize, n: usize) -> Self {
        Self { per_step: vec![vec![1.0 / p as f64; p]; n] }
    }

    pub fn constant(probs: Vec<f64>, n: usize) -> Result<Self> {
        Self::per_step(vec![probs; n])
    }

    pub fn per_step(per_step: Vec<Vec<f64>>) -> Result<Self> {
        for (k, row) in per_step.iter().enumerate() {
            if row.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
                return invalid(format!("step {}: probabilities must be non-negative", k + 1));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return invalid(format!("step {}: probabilities sum to {s}", k + 1));
            }
        }
        Ok(Self { per_step })
    }

    pub fn steps(&self) -> usize {
        self.per_step.len()
    }

    pub fn prob(&self, step: usize, block: usize) -> f64 {
        self.per_step[step][block]
    }
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub id: usize,
    pub depth: usize,
    pub parent: Option<usize>,
    /// Block chosen on the edge from the parent.
    pub choice: Option<usize>,
    pub path: Vec<usize>,
    pub reach_probability: f64,
    /// Extrapolated point `y` for inner nodes, final iterate for leaves.
    pub triplet: Arc<Triplet>,
    pub children: Vec<usize>,
}

/// All block sequences of length `N` of the randomized accelerated method,
/// with shared prefixes stored once. Node ids are breadth-first, and node `k`
/// owns gradient symbol `g_k` and value symbol `f_k`.
#[derive(Debug, Clone)]
pub struct SequenceTree {
    pub blocks: BlockStructure,
    pub depth: usize,
    pub nodes: Vec<TreeNode>,
    pub x0: BlockVectorExpr,
}

impl SequenceTree {
    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(move |n| n.depth == self.depth)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Triplets met along one block sequence, root to leaf.
    pub fn sequence(&self, path: &[usize]) -> Result<Vec<Arc<Triplet>>> {
        if path.len() != self.depth {
            return invalid(format!("sequence of length {} in a depth-{} tree", path.len(), self.depth));
        }
        let mut node = 0;
        let mut out = vec![self.nodes[0].triplet.clone()];
        for b in path {
            let next = self.nodes[node].children.iter().copied().find(|c| self.nodes[*c].choice == Some(*b));
            match next {
                Some(c) => {
                    node = c;
                    out.push(self.nodes[c].triplet.clone());
                }
                None => return invalid(format!("block {} not available at depth {}", b + 1, self.nodes[node].depth)),
            }
        }
        Ok(out)
    }
}

pub fn build_sequence_tree(
    p: usize,
    n: usize,
    schedule: &StepSchedule,
    probabilities: &StepDistribution,
) -> Result<SequenceTree> {
    let blocks = BlockStructure::new(p)?;
    if n == 0 {
        return invalid("at least one step is required");
    }
    if schedule.gamma().len() != p {
        return invalid(format!("{} step sizes for {p} blocks", schedule.gamma().len()));
    }
    if probabilities.steps() != n || probabilities.per_step.iter().any(|r| r.len() != p) {
        return invalid("probabilities must give p entries for each of the N steps");
    }
    let gamma = schedule.gamma();
    let theta = theta_schedule(p, n);
    let x0 = BlockVectorExpr::basis(blocks, BasisLabel::InitialPoint);
    let grad = |id: usize| BlockVectorExpr::basis(blocks, BasisLabel::Gradient(id));

    let root = TreeNode {
        id: 0,
        depth: 0,
        parent: None,
        choice: None,
        path: Vec::new(),
        reach_probability: 1.0,
        triplet: Arc::new(Triplet {
            label: PointLabel::Node(0),
            point: x0.clone(),
            gradient: grad(0),
            value: Some(ValueSymbol(0)),
        }),
        children: Vec::new(),
    };
    let mut nodes = vec![root];
    // per-node accelerated state (x, z) at the start of its step
    let mut states = vec![(x0.clone(), x0.clone())];
    let mut frontier = vec![0usize];
    for depth in 0..n {
        let mut next_frontier = Vec::with_capacity(frontier.len() * p);
        for &parent in &frontier {
            let (x, z) = states[parent].clone();
            let g = nodes[parent].triplet.gradient.clone();
            for b in 0..p {
                let (_, z_next, x_next) = accelerated_step(&x, &z, theta[depth], p, b, gamma[b], &g);
                let id = nodes.len();
                let point = if depth + 1 == n {
                    x_next.clone()
                } else {
                    let mut y = x_next.scaled(1.0 - theta[depth + 1]);
                    y.axpy(theta[depth + 1], &z_next);
                    y
                };
                let mut path = nodes[parent].path.clone();
                path.push(b);
                let reach = nodes[parent].reach_probability * probabilities.prob(depth, b);
                nodes.push(TreeNode {
                    id,
                    depth: depth + 1,
                    parent: Some(parent),
                    choice: Some(b),
                    path,
                    reach_probability: reach,
                    triplet: Arc::new(Triplet {
                        label: PointLabel::Node(id),
                        point,
                        gradient: grad(id),
                        value: Some(ValueSymbol(id)),
                    }),
                    children: Vec::new(),
                });
                nodes[parent].children.push(id);
                states.push((x_next, z_next));
                next_frontier.push(id);
            }
        }
        frontier = next_frontier;
    }
    Ok(SequenceTree { blocks, depth: n, nodes, x0 })
}
