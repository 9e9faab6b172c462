use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, PSDTriangleConeT,
    SolverStatus as ClarabelStatus, SupportedConeT, ZeroConeT,
};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{ConstraintKind, SdpProblem, Sense};
use crate::error::{PepError, Result};

pub const TOLERANCE_ENV: &str = "PEPBCD_SOLVER_TOL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iter: u32,
    /// Restrict Gram blocks to the face forced by homogeneous PSD equalities.
    pub facial_reduction: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iter: 200, facial_reduction: true }
    }
}

impl SolverOptions {
    /// Defaults, with the tolerance taken from `PEPBCD_SOLVER_TOL` when set.
    pub fn from_env() -> Result<Self> {
        let mut o = Self::default();
        if let Ok(v) = std::env::var(TOLERANCE_ENV) {
            o.tolerance =
                v.trim().parse().map_err(|_| PepError::InvalidInput(format!("{TOLERANCE_ENV}={v} is not a number")))?;
        }
        o.validate()?;
        Ok(o)
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(PepError::InvalidInput(format!("solver tolerance must be positive, got {}", self.tolerance)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Inaccurate,
    Failed,
}

impl std::fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolverStatus::Optimal => "optimal",
            SolverStatus::Infeasible => "infeasible",
            SolverStatus::Unbounded => "unbounded",
            SolverStatus::Inaccurate => "inaccurate",
            SolverStatus::Failed => "failed",
        };
        f.write_str(s)
    }
}

/// `Σ coeffs·x + constant` is `≥ 0` or `= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub constant: f64,
    pub kind: ConstraintKind,
}

/// Standard form handed to a conic backend: minimize `objective·x + constant`
/// over PSD blocks (upper triangle, column-major, unscaled entries) followed
/// by free scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    pub psd_dims: Vec<usize>,
    pub num_free: usize,
    pub rows: Vec<LinearRow>,
    pub objective: Vec<(usize, f64)>,
    pub objective_constant: f64,
}

pub fn tri_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Position of entry `(i, j)`, `i ≤ j`, in the column-major upper triangle.
pub fn tri_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    j * (j + 1) / 2 + i
}

impl ConicProblem {
    pub fn psd_offset(&self, block: usize) -> usize {
        self.psd_dims[..block].iter().map(|n| tri_len(*n)).sum()
    }

    pub fn free_offset(&self) -> usize {
        self.psd_offset(self.psd_dims.len())
    }

    pub fn num_vars(&self) -> usize {
        self.free_offset() + self.num_free
    }

    /// Symmetric matrix of PSD block `block` from a variable vector.
    pub fn block_matrix(&self, x: &[f64], block: usize) -> DMatrix<f64> {
        let n = self.psd_dims[block];
        let off = self.psd_offset(block);
        DMatrix::from_fn(n, n, |i, j| x[off + tri_index(i, j)])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolverStatus,
    pub x: Vec<f64>,
    /// One multiplier per row, in row order (nonnegative for inequalities).
    pub row_duals: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: u32,
    pub solve_seconds: f64,
}

/// Any conic solver that accepts PSD blocks, free scalars and linear rows.
/// Implementations must be safe to call concurrently.
pub trait ConicSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, problem: &ConicProblem, options: &SolverOptions) -> Result<ConicSolution>;
}

/// Interior-point backend.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClarabelSolver;

fn map_status(s: ClarabelStatus) -> SolverStatus {
    match s {
        ClarabelStatus::Solved => SolverStatus::Optimal,
        ClarabelStatus::AlmostSolved => SolverStatus::Inaccurate,
        ClarabelStatus::PrimalInfeasible | ClarabelStatus::AlmostPrimalInfeasible => SolverStatus::Infeasible,
        ClarabelStatus::DualInfeasible | ClarabelStatus::AlmostDualInfeasible => SolverStatus::Unbounded,
        _ => SolverStatus::Failed,
    }
}

impl ConicSolver for ClarabelSolver {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, problem: &ConicProblem, options: &SolverOptions) -> Result<ConicSolution> {
        options.validate()?;
        let n = problem.num_vars();
        let mut q = vec![0.0; n];
        for (k, c) in &problem.objective {
            q[*k] += c;
        }
        // rows: equalities, inequalities, then one PSD cone per block
        let eq: Vec<usize> =
            (0..problem.rows.len()).filter(|r| problem.rows[*r].kind == ConstraintKind::Zero).collect();
        let ineq: Vec<usize> =
            (0..problem.rows.len()).filter(|r| problem.rows[*r].kind == ConstraintKind::NonNegative).collect();
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        let mut b = Vec::new();
        for (row, &r) in eq.iter().chain(ineq.iter()).enumerate() {
            let lr = &problem.rows[r];
            for (k, c) in &lr.coeffs {
                entries.push((row, *k, -c));
            }
            b.push(lr.constant);
        }
        let mut row = eq.len() + ineq.len();
        let sqrt2 = std::f64::consts::SQRT_2;
        for (blk, &dim) in problem.psd_dims.iter().enumerate() {
            let off = problem.psd_offset(blk);
            for j in 0..dim {
                for i in 0..=j {
                    let scale = if i == j { 1.0 } else { sqrt2 };
                    entries.push((row, off + tri_index(i, j), -scale));
                    b.push(0.0);
                    row += 1;
                }
            }
        }
        let m = row;
        entries.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut colptr = vec![0usize; n + 1];
        let mut rowval = Vec::with_capacity(entries.len());
        let mut nzval = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *nzval.last_mut().expect("entry exists") += v;
                continue;
            }
            colptr[c + 1] += 1;
            rowval.push(r);
            nzval.push(v);
            last = Some((r, c));
        }
        for c in 0..n {
            colptr[c + 1] += colptr[c];
        }
        let a = CscMatrix::new(m, n, colptr, rowval, nzval);
        let p = CscMatrix::zeros((n, n));
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        if !eq.is_empty() {
            cones.push(ZeroConeT(eq.len()));
        }
        if !ineq.is_empty() {
            cones.push(NonnegativeConeT(ineq.len()));
        }
        for &dim in &problem.psd_dims {
            if dim > 0 {
                cones.push(PSDTriangleConeT(dim));
            }
        }
        let tol = options.tolerance;
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(options.max_iter)
            .tol_gap_abs(tol)
            .tol_gap_rel(tol)
            .tol_feas(tol)
            .tol_infeas_abs(tol)
            .tol_infeas_rel(tol)
            .reduced_tol_gap_abs(tol.sqrt().min(1e-5))
            .reduced_tol_gap_rel(tol.sqrt().min(1e-5))
            .reduced_tol_feas(tol.sqrt().min(1e-5))
            .build()
            .map_err(|e| PepError::Solver(format!("invalid settings: {e:?}")))?;
        let start = Instant::now();
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| PepError::Solver(format!("problem rejected by backend: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let mut row_duals = vec![0.0; problem.rows.len()];
        for (k, &r) in eq.iter().chain(ineq.iter()).enumerate() {
            row_duals[r] = sol.z[k];
        }
        Ok(ConicSolution {
            status: map_status(sol.status),
            x: sol.x.clone(),
            row_duals,
            primal_objective: sol.obj_val + problem.objective_constant,
            dual_objective: sol.obj_val_dual + problem.objective_constant,
            primal_residual: sol.r_prim,
            dual_residual: sol.r_dual,
            iterations: sol.iterations,
            solve_seconds: start.elapsed().as_secs_f64(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub status: SolverStatus,
    pub sense: Sense,
    /// Optimal value of the PEP (NaN unless a solution was returned).
    pub value: f64,
    pub gram_blocks: Vec<DMatrix<f64>>,
    pub fvals: Vec<f64>,
    /// One multiplier per problem constraint; zero for constraints absorbed
    /// by facial reduction.
    pub duals: Vec<f64>,
    pub reduced: Vec<bool>,
    /// Face basis `V` with `G = V H Vᵀ`, when the block was reduced.
    pub faces: Vec<Option<DMatrix<f64>>>,
    pub tolerance: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
    pub iterations: u32,
    pub solve_seconds: f64,
    pub backend: &'static str,
}

impl SolverResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolverStatus::Optimal
    }

    /// Value pushed outward by ten times the solver tolerance.
    pub fn safe_bound(&self) -> f64 {
        match self.sense {
            Sense::Maximize => self.value + 10.0 * self.tolerance,
            Sense::Minimize => self.value - 10.0 * self.tolerance,
        }
    }

    /// Fails unless the status is optimal.
    pub fn require_optimal(&self) -> Result<f64> {
        if self.is_optimal() {
            Ok(self.value)
        } else {
            Err(PepError::Solver(format!("solver status {}", self.status)))
        }
    }
}

struct Lowering {
    conic: ConicProblem,
    faces: Vec<Option<DMatrix<f64>>>,
    reduced: Vec<bool>,
    /// Problem constraint index for each conic row.
    row_source: Vec<usize>,
}

fn symmetric_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(m.clone())
}

/// Face bases from homogeneous single-block equalities whose coefficient
/// matrix is semidefinite: such a constraint forces `G` into the nullspace.
fn find_faces(problem: &SdpProblem) -> Result<(Vec<Option<DMatrix<f64>>>, Vec<bool>)> {
    let p = problem.blocks.p();
    let n = problem.basis.len();
    let mut sums: Vec<Option<DMatrix<f64>>> = vec![None; p];
    let mut reduced = vec![false; problem.constraints.len()];
    for (k, c) in problem.constraints.iter().enumerate() {
        if c.kind != ConstraintKind::Zero || !c.expr.value_terms().is_empty() || c.expr.constant_term() != 0.0 {
            continue;
        }
        let blocks = c.expr.gram_blocks();
        if blocks.len() != 1 {
            continue;
        }
        let b = blocks[0];
        let m = c.expr.block_matrix(b, &problem.basis)?;
        let eig = symmetric_eigen(&m);
        let max = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if max == 0.0 {
            continue;
        }
        let lo = eig.eigenvalues.min();
        let hi = eig.eigenvalues.max();
        let signed = if lo >= -1e-12 * max {
            m
        } else if hi <= 1e-12 * max {
            -m
        } else {
            continue;
        };
        reduced[k] = true;
        match &mut sums[b] {
            Some(s) => *s += signed,
            slot => *slot = Some(signed),
        }
    }
    let faces = sums
        .into_iter()
        .map(|s| {
            s.map(|s| {
                let eig = symmetric_eigen(&s);
                let max = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] <= 1e-9 * max).collect();
                DMatrix::from_fn(n, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])])
            })
        })
        .collect();
    Ok((faces, reduced))
}

fn lower(problem: &SdpProblem, options: &SolverOptions) -> Result<Lowering> {
    let p = problem.blocks.p();
    let n = problem.basis.len();
    let (faces, reduced) = if options.facial_reduction {
        find_faces(problem)?
    } else {
        (vec![None; p], vec![false; problem.constraints.len()])
    };
    let psd_dims: Vec<usize> = faces.iter().map(|f| f.as_ref().map_or(n, |v| v.ncols())).collect();
    let mut conic = ConicProblem {
        psd_dims,
        num_free: problem.num_values(),
        rows: Vec::new(),
        objective: Vec::new(),
        objective_constant: 0.0,
    };
    let offsets: Vec<usize> = (0..p).map(|b| conic.psd_offset(b)).collect();
    let free = conic.free_offset();

    let linearize = |e: &crate::expr::ScalarExpr| -> Result<Vec<(usize, f64)>> {
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        for b in 0..p {
            match &faces[b] {
                None => {
                    for (&(x, y), &c) in e.gram_terms(b) {
                        let i = problem.basis.index_of(x).expect("checked on insertion");
                        let j = problem.basis.index_of(y).expect("checked on insertion");
                        coeffs.push((offsets[b] + tri_index(i, j), c));
                    }
                }
                Some(v) => {
                    if e.gram_terms(b).is_empty() {
                        continue;
                    }
                    let c = v.transpose() * e.block_matrix(b, &problem.basis)? * v;
                    let scale = c.iter().fold(0.0f64, |a, x| a.max(x.abs()));
                    for j in 0..c.ncols() {
                        for i in 0..=j {
                            let coef = if i == j { c[(i, i)] } else { 2.0 * c[(i, j)] };
                            if coef.abs() > 1e-14 * scale {
                                coeffs.push((offsets[b] + tri_index(i, j), coef));
                            }
                        }
                    }
                }
            }
        }
        for (s, c) in e.value_terms() {
            coeffs.push((free + s.0, *c));
        }
        Ok(coeffs)
    };

    let mut row_source = Vec::new();
    for (k, c) in problem.constraints.iter().enumerate() {
        if reduced[k] {
            continue;
        }
        conic.rows.push(LinearRow { coeffs: linearize(&c.expr)?, constant: c.expr.constant_term(), kind: c.kind });
        row_source.push(k);
    }
    let sign = match problem.sense {
        Sense::Maximize => -1.0,
        Sense::Minimize => 1.0,
    };
    conic.objective = linearize(&problem.objective)?.into_iter().map(|(k, c)| (k, sign * c)).collect();
    conic.objective_constant = sign * problem.objective.constant_term();
    Ok(Lowering { conic, faces, reduced, row_source })
}

/// Solves with the default interior-point backend.
pub fn solve(problem: &SdpProblem, options: &SolverOptions) -> Result<SolverResult> {
    solve_with(problem, &ClarabelSolver, options)
}

pub fn solve_with(problem: &SdpProblem, backend: &dyn ConicSolver, options: &SolverOptions) -> Result<SolverResult> {
    options.validate()?;
    let low = lower(problem, options)?;
    let sol = backend.solve(&low.conic, options)?;
    let p = problem.blocks.p();
    let has_point = matches!(sol.status, SolverStatus::Optimal | SolverStatus::Inaccurate);
    let mut gram_blocks = Vec::with_capacity(p);
    for b in 0..p {
        let h = low.conic.block_matrix(&sol.x, b);
        let g = match &low.faces[b] {
            Some(v) => v * h * v.transpose(),
            None => h,
        };
        gram_blocks.push(g);
    }
    let free = low.conic.free_offset();
    let fvals: Vec<f64> = sol.x[free..free + problem.num_values()].to_vec();
    let mut duals = vec![0.0; problem.constraints.len()];
    for (r, &k) in low.row_source.iter().enumerate() {
        duals[k] = sol.row_duals[r];
    }
    let value =
        if has_point { problem.objective.evaluate_gram(&problem.basis, &gram_blocks, &fvals)? } else { f64::NAN };
    Ok(SolverResult {
        status: sol.status,
        sense: problem.sense,
        value,
        gram_blocks,
        fvals,
        duals,
        reduced: low.reduced,
        faces: low.faces,
        tolerance: options.tolerance,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        duality_gap: (sol.primal_objective - sol.dual_objective).abs(),
        iterations: sol.iterations,
        solve_seconds: sol.solve_seconds,
        backend: backend.name(),
    })
}
