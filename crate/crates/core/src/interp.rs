//! Interpolation conditions for convex functions with block-wise Lipschitz
//! gradients, symbolic and numeric, and the explicit two-point interpolant.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, PepError, Result};
use crate::expr::{inner_product, LipschitzVector, ScalarExpr, Triplet};

/// Explicit point, gradient and value, split by block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericTriplet {
    pub x: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub f: f64,
}

impl NumericTriplet {
    pub fn p(&self) -> usize {
        self.x.len()
    }

    fn validate(&self, p: usize, idx: usize) -> Result<()> {
        if self.x.len() != p || self.g.len() != p {
            return invalid(format!("point {idx}: expected {p} blocks"));
        }
        for b in 0..p {
            if self.x[b].len() != self.g[b].len() {
                return invalid(format!("point {idx}: block {} point and gradient lengths differ", b + 1));
            }
        }
        Ok(())
    }
}

/// One generated condition: `expr ≥ 0` for ordered pair `(i, j)` on `block`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpConstraint {
    pub i: usize,
    pub j: usize,
    pub block: usize,
    pub expr: ScalarExpr,
}

/// `f_i − f_j − ⟨g_j, x_i − x_j⟩ − ‖g_i^(ℓ) − g_j^(ℓ)‖² / (2 L_ℓ) ≥ 0` for every
/// ordered pair `i ≠ j` and block `ℓ`; `p·n·(n−1)` conditions in total.
pub fn generate_interp_constraints(triplets: &[Triplet], l: &LipschitzVector) -> Result<Vec<InterpConstraint>> {
    let Some(first) = triplets.first() else {
        return Ok(Vec::new());
    };
    let p = first.point.p();
    if l.len() != p {
        return invalid(format!("{} Lipschitz constants for {} blocks", l.len(), p));
    }
    let mut seen = BTreeSet::new();
    for t in triplets {
        if !seen.insert(t.label) {
            return Err(PepError::Structural(format!("duplicate triplet label {}", t.label)));
        }
        if t.point.p() != p || t.gradient.p() != p {
            return Err(PepError::Structural(format!("triplet {} has inconsistent block count", t.label)));
        }
    }
    let n = triplets.len();
    let mut out = Vec::with_capacity(p * n * n.saturating_sub(1));
    for (i, ti) in triplets.iter().enumerate() {
        for (j, tj) in triplets.iter().enumerate() {
            if i == j {
                continue;
            }
            let mut common = ti.value_expr();
            common.axpy(-1.0, &tj.value_expr());
            let dx = ti.point.try_sub(&tj.point)?;
            common.axpy(-1.0, &inner_product(&tj.gradient, &dx, None)?);
            let dg = ti.gradient.try_sub(&tj.gradient)?;
            for b in 0..p {
                let mut expr = common.clone();
                expr.axpy(-1.0 / (2.0 * l.get(b)), &inner_product(&dg, &dg, Some(b))?);
                out.push(InterpConstraint { i, j, block: b, expr });
            }
        }
    }
    Ok(out)
}

fn dot(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>()).sum()
}

fn diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter().zip(b).map(|(u, v)| u.iter().zip(v).map(|(x, y)| x - y).collect()).collect()
}

fn block_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Numeric residual of the condition for ordered pair `(ti, tj)` on `block`.
pub fn pair_residual(ti: &NumericTriplet, tj: &NumericTriplet, block: usize, l: &LipschitzVector) -> f64 {
    let dx = diff(&ti.x, &tj.x);
    let dg: Vec<f64> = ti.g[block].iter().zip(&tj.g[block]).map(|(a, b)| a - b).collect();
    ti.f - tj.f - dot(&tj.g, &dx) - block_sq(&dg) / (2.0 * l.get(block))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairViolation {
    pub i: usize,
    pub j: usize,
    pub block: usize,
    pub residual: f64,
}

/// Outcome of the pairwise check. Passing is necessary, not sufficient, for
/// membership in the function class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterpReport {
    pub passed: bool,
    pub checked: usize,
    pub min_residual: f64,
    pub violations: Vec<PairViolation>,
}

pub fn check_finite_set(points: &[NumericTriplet], l: &LipschitzVector, tol: f64) -> Result<InterpReport> {
    let p = l.len();
    for (k, t) in points.iter().enumerate() {
        t.validate(p, k)?;
    }
    let mut report = InterpReport { passed: true, checked: 0, min_residual: f64::INFINITY, violations: Vec::new() };
    for (i, ti) in points.iter().enumerate() {
        for (j, tj) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            for b in 0..p {
                let r = pair_residual(ti, tj, b, l);
                report.checked += 1;
                report.min_residual = report.min_residual.min(r);
                if r < -tol {
                    report.passed = false;
                    report.violations.push(PairViolation { i, j, block: b, residual: r });
                }
            }
        }
    }
    Ok(report)
}

/// Document form `{"L": [...], "points": [{"x": ..., "g": ..., "f": ...}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletSet {
    #[serde(rename = "L")]
    pub l: Vec<f64>,
    pub points: Vec<NumericTriplet>,
}

impl TripletSet {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn lipschitz(&self) -> Result<LipschitzVector> {
        LipschitzVector::new(self.l.clone())
    }

    pub fn check(&self, tol: f64) -> Result<InterpReport> {
        check_finite_set(&self.points, &self.lipschitz()?, tol)
    }
}

/// Explicit function interpolating two triplets, built as the conjugate of a
/// one-dimensional quadratic on the gradient segment `[g1, g2]`.
///
/// With `g_λ = g1 + λ(g2 − g1)`, `f(x) = max_{λ∈[0,1]} ⟨x, g_λ⟩ − φ(λ)` where
/// `φ(λ) = aλ² + bλ + c`. The pair is ordered so that
/// `a = f1 − f2 − ⟨g2, x1 − x2⟩` is the smaller of the two directional gaps,
/// which makes `x1 ∈ ∂f*(g1)` and `x2 ∈ ∂f*(g2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPointInterpolant {
    pub t1: NumericTriplet,
    pub t2: NumericTriplet,
    pub lipschitz: LipschitzVector,
    a: f64,
    b: f64,
    c: f64,
    swapped: bool,
}

pub fn interpolate_two_points(
    t1: &NumericTriplet,
    t2: &NumericTriplet,
    l: &LipschitzVector,
) -> Result<TwoPointInterpolant> {
    let p = l.len();
    t1.validate(p, 0)?;
    t2.validate(p, 1)?;
    let report = check_finite_set(&[t1.clone(), t2.clone()], l, 1e-12)?;
    if !report.passed {
        let v = &report.violations[0];
        return Err(PepError::Refused(format!(
            "pair violates the interpolation condition (i={}, j={}, block {}, residual {:.3e})",
            v.i,
            v.j,
            v.block + 1,
            v.residual
        )));
    }
    let gap = |u: &NumericTriplet, w: &NumericTriplet| u.f - w.f - dot(&w.g, &diff(&u.x, &w.x));
    let forward = gap(t1, t2);
    let backward = gap(t2, t1);
    let (u, w, swapped) = if forward <= backward { (t1, t2, false) } else { (t2, t1, true) };
    let a = gap(u, w).max(0.0);
    let dg = diff(&w.g, &u.g);
    let b = dot(&u.x, &dg);
    let c = dot(&u.g, &u.x) - u.f;
    Ok(TwoPointInterpolant { t1: u.clone(), t2: w.clone(), lipschitz: l.clone(), a, b, c, swapped })
}

impl TwoPointInterpolant {
    /// True when the inputs were reordered to satisfy the construction.
    pub fn swapped(&self) -> bool {
        self.swapped
    }

    fn maximizer(&self, x: &[Vec<f64>]) -> f64 {
        let dg = diff(&self.t2.g, &self.t1.g);
        let slope = dot(x, &dg) - self.b;
        if self.a > 0.0 {
            (slope / (2.0 * self.a)).clamp(0.0, 1.0)
        } else if slope > 0.0 {
            1.0
        } else {
            0.0
        }
    }

    /// Function value and gradient at `x`.
    pub fn eval(&self, x: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
        let lam = self.maximizer(x);
        let g: Vec<Vec<f64>> = self
            .t1
            .g
            .iter()
            .zip(&self.t2.g)
            .map(|(u, w)| u.iter().zip(w).map(|(a, b)| a + lam * (b - a)).collect())
            .collect();
        let phi = self.a * lam * lam + self.b * lam + self.c;
        (dot(x, &g) - phi, g)
    }

    pub fn value(&self, x: &[Vec<f64>]) -> f64 {
        self.eval(x).0
    }
}
