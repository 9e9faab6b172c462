//! Numeric execution of block methods on explicit functions, and replay of
//! extracted worst-case instances.

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::algos::{theta_schedule, MethodKind, MethodSpec};
use crate::error::{PepError, Result};
use crate::expr::PointLabel;
use crate::pep::WorstCaseInstance;

/// First-order access to a block-structured function.
pub trait GradientOracle {
    /// Value and per-block gradient at `x`.
    fn evaluate(&self, x: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)>;

    /// Exact minimizer over block `block` with the other blocks fixed.
    fn block_minimize(&self, _x: &[Vec<f64>], _block: usize) -> Result<Vec<f64>> {
        Err(PepError::Refused("this oracle cannot minimize over a block".into()))
    }
}

/// `f(x) = ½xᵀQx + bᵀx` over concatenated blocks of the given sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub dims: Vec<usize>,
    pub q: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Quadratic {
    pub fn new(dims: Vec<usize>, q: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n: usize = dims.iter().sum();
        if q.nrows() != n || q.ncols() != n || b.len() != n {
            return Err(PepError::InvalidInput(format!(
                "quadratic of size {n} needs a {n}×{n} matrix and length-{n} vector"
            )));
        }
        Ok(Self { dims, q: (&q + q.transpose()) * 0.5, b })
    }

    fn offset(&self, block: usize) -> usize {
        self.dims[..block].iter().sum()
    }

    fn flatten(&self, x: &[Vec<f64>]) -> Result<DVector<f64>> {
        if x.len() != self.dims.len() || x.iter().zip(&self.dims).any(|(v, d)| v.len() != *d) {
            return Err(PepError::InvalidInput("point does not match the block sizes".into()));
        }
        Ok(DVector::from_iterator(self.b.len(), x.iter().flatten().copied()))
    }

    fn split(&self, v: &DVector<f64>) -> Vec<Vec<f64>> {
        (0..self.dims.len()).map(|b| v.rows(self.offset(b), self.dims[b]).iter().copied().collect()).collect()
    }

    /// Largest eigenvalue of each diagonal block of `Q`.
    pub fn block_lipschitz(&self) -> Vec<f64> {
        (0..self.dims.len())
            .map(|b| {
                let (o, d) = (self.offset(b), self.dims[b]);
                self.q.view((o, o), (d, d)).clone_owned().symmetric_eigenvalues().max()
            })
            .collect()
    }
}

impl GradientOracle for Quadratic {
    fn evaluate(&self, x: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
        let v = self.flatten(x)?;
        let qv = &self.q * &v;
        let f = 0.5 * v.dot(&qv) + self.b.dot(&v);
        Ok((f, self.split(&(qv + &self.b))))
    }

    fn block_minimize(&self, x: &[Vec<f64>], block: usize) -> Result<Vec<f64>> {
        let v = self.flatten(x)?;
        let (o, d) = (self.offset(block), self.dims[block]);
        let qll = self.q.view((o, o), (d, d)).clone_owned();
        let mut rhs = -self.b.rows(o, d).clone_owned();
        let mut rest = v.clone();
        rest.rows_mut(o, d).fill(0.0);
        rhs -= self.q.rows(o, d) * rest;
        let sol = qll
            .cholesky()
            .ok_or_else(|| PepError::InvalidInput(format!("block {} is not strongly convex", block + 1)))?
            .solve(&rhs);
        Ok(sol.iter().copied().collect())
    }
}

/// Looks gradients up among the reconstructed points of an instance.
pub struct InstanceOracle<'a> {
    instance: &'a WorstCaseInstance,
    tol: f64,
    departure: Cell<f64>,
}

impl<'a> InstanceOracle<'a> {
    pub fn new(instance: &'a WorstCaseInstance, tol: f64) -> Self {
        Self { instance, tol, departure: Cell::new(0.0) }
    }

    /// Largest distance between a queried point and its matched instance point.
    pub fn max_departure(&self) -> f64 {
        self.departure.get()
    }
}

fn distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).flat_map(|(u, v)| u.iter().zip(v)).map(|(s, t)| (s - t) * (s - t)).sum::<f64>().sqrt()
}

fn norm(a: &[Vec<f64>]) -> f64 {
    a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

impl GradientOracle for InstanceOracle<'_> {
    fn evaluate(&self, x: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
        let (k, d) = self
            .instance
            .points
            .iter()
            .enumerate()
            .map(|(k, t)| (k, distance(&t.x, x)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or_else(|| PepError::Inconsistent("instance has no points".into()))?;
        if d > self.tol * norm(x).max(1.0) {
            return Err(PepError::Inconsistent(format!(
                "trajectory departs from the reconstructed points by {d:.3e} (nearest {})",
                self.instance.labels[k]
            )));
        }
        self.departure.set(self.departure.get().max(d));
        let t = &self.instance.points[k];
        Ok((t.f, t.g.clone()))
    }
}

/// Iterates of a numeric run and the final function value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NumericRun {
    pub iterates: Vec<Vec<Vec<f64>>>,
    pub final_value: f64,
}

/// Runs `spec` numerically from `x0` using `oracle`.
pub fn numeric_replay(spec: &MethodSpec, oracle: &dyn GradientOracle, x0: &[Vec<f64>]) -> Result<NumericRun> {
    spec.validate()?;
    let p = spec.blocks.p();
    if x0.len() != p {
        return Err(PepError::InvalidInput(format!("start point has {} blocks, method has {p}", x0.len())));
    }
    let mut iterates = vec![x0.to_vec()];
    match spec.kind {
        MethodKind::Ccd => {
            let gamma = spec.gamma().expect("validated");
            for &l in &spec.order {
                let mut x = iterates.last().expect("non-empty").clone();
                let (_, g) = oracle.evaluate(&x)?;
                x[l].iter_mut().zip(&g[l]).for_each(|(xi, gi)| *xi -= gamma[l] * gi);
                iterates.push(x);
            }
        }
        MethodKind::CustomFixedStep => {
            let m = spec.step_matrix.as_ref().expect("validated");
            let mut grads = Vec::new();
            for row in m {
                let (_, g) = oracle.evaluate(iterates.last().expect("non-empty"))?;
                grads.push(g);
                let mut x = x0.to_vec();
                for (k, alpha) in row.iter().enumerate() {
                    let l = spec.order[k];
                    x[l].iter_mut().zip(&grads[k][l]).for_each(|(xi, gi)| *xi -= alpha * gi);
                }
                iterates.push(x);
            }
        }
        MethodKind::Cacd => {
            let gamma = spec.gamma().expect("validated");
            let theta = theta_schedule(p, spec.steps());
            let mut x = x0.to_vec();
            let mut z = x0.to_vec();
            for (k, &l) in spec.order.iter().enumerate() {
                let th = theta[k];
                let y: Vec<Vec<f64>> = x
                    .iter()
                    .zip(&z)
                    .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (1.0 - th) * u + th * v).collect())
                    .collect();
                let (_, g) = oracle.evaluate(&y)?;
                let mut zn = z.clone();
                let scale = gamma[l] / (p as f64 * th);
                zn[l].iter_mut().zip(&g[l]).for_each(|(zi, gi)| *zi -= scale * gi);
                x = y;
                for (xi, (a, b)) in x[l].iter_mut().zip(zn[l].iter().zip(&z[l])) {
                    *xi += p as f64 * th * (a - b);
                }
                z = zn;
                iterates.push(x.clone());
            }
        }
        MethodKind::Am => {
            for &l in &spec.order {
                let mut x = iterates.last().expect("non-empty").clone();
                x[l] = oracle.block_minimize(&x, l)?;
                iterates.push(x);
            }
        }
    }
    let (final_value, _) = oracle.evaluate(iterates.last().expect("non-empty"))?;
    Ok(NumericRun { iterates, final_value })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub final_value: f64,
    pub pep_value: f64,
    pub deviation: f64,
    pub max_departure: f64,
    /// Largest updated-block gradient norm at alternating minimization steps.
    pub stationarity: Option<f64>,
    /// Largest movement of a block that should stay fixed.
    pub immobility: Option<f64>,
    pub passed: bool,
}

fn point<'a>(inst: &'a WorstCaseInstance, label: PointLabel) -> Result<&'a crate::interp::NumericTriplet> {
    inst.point(label).ok_or_else(|| PepError::Inconsistent(format!("instance has no point {label}")))
}

/// Replays `spec` on an extracted instance and compares the final gap with the PEP value.
pub fn replay_instance(spec: &MethodSpec, inst: &WorstCaseInstance, pep_value: f64, tol: f64) -> Result<ReplayReport> {
    let f_star = inst.point(PointLabel::Optimal).map_or(0.0, |t| t.f);
    let x0 = point(inst, if spec.kind == MethodKind::Cacd { PointLabel::Y(0) } else { PointLabel::X(0) })?.x.clone();
    let (final_value, max_departure, stationarity, immobility) = if spec.kind == MethodKind::Am {
        let mut stat = 0.0f64;
        let mut imm = 0.0f64;
        for (i, &l) in spec.order.iter().enumerate() {
            let cur = point(inst, PointLabel::X(i + 1))?;
            let prev = point(inst, PointLabel::X(i))?;
            stat = stat.max(cur.g[l].iter().map(|v| v * v).sum::<f64>().sqrt());
            for s in (0..spec.blocks.p()).filter(|s| *s != l) {
                imm = imm.max(distance(&[cur.x[s].clone()], &[prev.x[s].clone()]));
            }
        }
        (point(inst, PointLabel::X(spec.steps()))?.f, 0.0, Some(stat), Some(imm))
    } else {
        let oracle = InstanceOracle::new(inst, tol);
        let run = numeric_replay(spec, &oracle, &x0)?;
        (run.final_value, oracle.max_departure(), None, None)
    };
    let gap = final_value - f_star;
    let deviation = (gap - pep_value).abs();
    let passed = deviation <= tol && stationarity.is_none_or(|s| s <= tol) && immobility.is_none_or(|s| s <= tol);
    Ok(ReplayReport { final_value: gap, pep_value, deviation, max_departure, stationarity, immobility, passed })
}
