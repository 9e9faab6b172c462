//! Sparse SDPA text format (`.dat-s`).
//!
//! A problem is written in the dual standard form
//! `max ⟨F0, Y⟩ s.t. ⟨F_k, Y⟩ = c_k, Y ⪰ 0` with
//! `Y = diag(G_1, …, G_p, D)`. The diagonal block `D` holds the split value
//! variables `f⁺, f⁻` followed by one slack per inequality. The objective
//! sense and constant travel in comment lines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::solver::{tri_index, ConicProblem, ConicSolver, LinearRow, SolverOptions, SolverStatus};
use super::{ConstraintKind, SdpProblem, Sense};
use crate::error::{PepError, Result};
use crate::expr::ScalarExpr;

#[derive(Debug, Clone, PartialEq)]
pub struct SdpaProblem {
    /// Positive sizes are dense symmetric blocks, negative sizes diagonal ones.
    pub block_sizes: Vec<i64>,
    pub c: Vec<f64>,
    /// `(matno, blkno, i, j) → value`, 1-indexed with `i ≤ j`.
    pub entries: BTreeMap<(usize, usize, usize, usize), f64>,
    pub sense: Sense,
    pub objective_constant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpaSolution {
    pub status: SolverStatus,
    /// Optimal value of the original problem, sense and constant restored.
    pub value: f64,
}

impl SdpaProblem {
    pub fn num_constraints(&self) -> usize {
        self.c.len()
    }

    fn add(&mut self, mat: usize, blk: usize, i: usize, j: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        *self.entries.entry((mat, blk, i, j)).or_insert(0.0) += v;
    }

    pub fn from_problem(problem: &SdpProblem) -> Result<Self> {
        let p = problem.blocks.p();
        let n = problem.basis.len();
        let nv = problem.num_values();
        let n_ineq = problem.constraints.iter().filter(|c| c.kind == ConstraintKind::NonNegative).count();
        let diag = 2 * nv + n_ineq;
        let mut block_sizes = vec![n as i64; p];
        if diag > 0 {
            block_sizes.push(-(diag as i64));
        }
        let mut out = Self {
            block_sizes,
            c: Vec::with_capacity(problem.constraints.len()),
            entries: BTreeMap::new(),
            sense: problem.sense,
            objective_constant: problem.objective.constant_term(),
        };
        let dblk = p + 1;

        let put = |out: &mut Self, mat: usize, e: &ScalarExpr, scale: f64| -> Result<()> {
            for b in 0..p {
                for (&(x, y), &c) in e.gram_terms(b) {
                    let i = problem
                        .basis
                        .index_of(x)
                        .ok_or_else(|| PepError::Structural(format!("label {x} not in basis")))?;
                    let j = problem
                        .basis
                        .index_of(y)
                        .ok_or_else(|| PepError::Structural(format!("label {y} not in basis")))?;
                    let v = if i == j { c } else { c / 2.0 };
                    out.add(mat, b + 1, i + 1, j + 1, scale * v);
                }
            }
            for (s, &c) in e.value_terms() {
                out.add(mat, dblk, s.0 + 1, s.0 + 1, scale * c);
                out.add(mat, dblk, nv + s.0 + 1, nv + s.0 + 1, -scale * c);
            }
            Ok(())
        };

        let obj_sign = match problem.sense {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        };
        put(&mut out, 0, &problem.objective, obj_sign)?;
        let mut slack = 2 * nv;
        for (k, con) in problem.constraints.iter().enumerate() {
            let mat = k + 1;
            put(&mut out, mat, &con.expr, 1.0)?;
            if con.kind == ConstraintKind::NonNegative {
                slack += 1;
                out.add(mat, dblk, slack, slack, -1.0);
            }
            out.c.push(-con.expr.constant_term());
        }
        Ok(out)
    }

    pub fn to_sdpa_string(&self) -> String {
        let mut s = String::new();
        let sense = match self.sense {
            Sense::Maximize => "maximize",
            Sense::Minimize => "minimize",
        };
        let _ = writeln!(s, "* sense {sense}");
        let _ = writeln!(s, "* objective_constant {}", self.objective_constant);
        let _ = writeln!(s, "{}", self.c.len());
        let _ = writeln!(s, "{}", self.block_sizes.len());
        let sizes: Vec<String> = self.block_sizes.iter().map(|b| b.to_string()).collect();
        let _ = writeln!(s, "{}", sizes.join(" "));
        let c: Vec<String> = self.c.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", c.join(" "));
        for (&(m, b, i, j), v) in &self.entries {
            if *v != 0.0 {
                let _ = writeln!(s, "{m} {b} {i} {j} {v}");
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let err = |line: usize, msg: &str| PepError::Parse(format!("line {line}: {msg}"));
        let mut sense = Sense::Maximize;
        let mut objective_constant = 0.0;
        let mut header: Vec<(usize, String)> = Vec::new();
        let mut body: Vec<(usize, &str)> = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let ln = ln + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('*').or_else(|| line.strip_prefix('"')) {
                let mut it = rest.split_whitespace();
                match (it.next(), it.next()) {
                    (Some("sense"), Some("maximize")) => sense = Sense::Maximize,
                    (Some("sense"), Some("minimize")) => sense = Sense::Minimize,
                    (Some("objective_constant"), Some(v)) => {
                        objective_constant = v.parse().map_err(|_| err(ln, "bad objective constant"))?
                    }
                    _ => {}
                }
                continue;
            }
            if header.len() < 4 {
                let cleaned: String = line.chars().map(|ch| if "{}(),".contains(ch) { ' ' } else { ch }).collect();
                header.push((ln, cleaned));
            } else {
                body.push((ln, line));
            }
        }
        if header.len() < 3 {
            return Err(PepError::Parse("truncated header".into()));
        }
        let first = |(ln, s): &(usize, String)| -> Result<usize> {
            s.split_whitespace().next().and_then(|t| t.parse().ok()).ok_or_else(|| err(*ln, "expected an integer"))
        };
        let m = first(&header[0])?;
        let nblocks = first(&header[1])?;
        let block_sizes: Vec<i64> = header[2]
            .1
            .split_whitespace()
            .take(nblocks)
            .map(|t| t.parse::<i64>().map_err(|_| err(header[2].0, "bad block size")))
            .collect::<Result<_>>()?;
        if block_sizes.len() != nblocks || block_sizes.contains(&0) {
            return Err(err(header[2].0, "block size count mismatch"));
        }
        let c: Vec<f64> = match header.get(3) {
            Some((ln, s)) => s
                .split_whitespace()
                .take(m)
                .map(|t| t.parse::<f64>().map_err(|_| err(*ln, "bad objective vector")))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        if c.len() != m {
            return Err(PepError::Parse(format!("expected {m} entries in the c vector, got {}", c.len())));
        }
        let mut out = Self { block_sizes, c, entries: BTreeMap::new(), sense, objective_constant };
        for (ln, line) in body {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() < 5 {
                return Err(err(ln, "entry needs five fields"));
            }
            let idx: Vec<usize> =
                t[..4].iter().map(|x| x.parse().map_err(|_| err(ln, "bad index"))).collect::<Result<_>>()?;
            let v: f64 = t[4].parse().map_err(|_| err(ln, "bad value"))?;
            let (mat, blk, i, j) = (idx[0], idx[1], idx[2], idx[3]);
            if mat > m || blk == 0 || blk > nblocks {
                return Err(err(ln, "matrix or block index out of range"));
            }
            let size = out.block_sizes[blk - 1];
            let dim = size.unsigned_abs() as usize;
            if i == 0 || j == 0 || i > dim || j > dim || (size < 0 && i != j) {
                return Err(err(ln, "entry index out of range"));
            }
            out.add(mat, blk, i, j, v);
        }
        Ok(out)
    }

    /// Re-lowers the dual-form problem on its own: dense blocks become PSD
    /// cones, diagonal entries nonnegative scalars.
    pub fn to_conic(&self) -> ConicProblem {
        let psd: Vec<usize> = self.block_sizes.iter().filter(|b| **b > 0).map(|b| *b as usize).collect();
        let mut conic = ConicProblem {
            psd_dims: psd.clone(),
            num_free: 0,
            rows: Vec::new(),
            objective: Vec::new(),
            objective_constant: 0.0,
        };
        // variable index of (block, i, j)
        let mut psd_off = vec![usize::MAX; self.block_sizes.len()];
        let mut diag_off = vec![usize::MAX; self.block_sizes.len()];
        let mut k = 0;
        for (b, s) in self.block_sizes.iter().enumerate() {
            if *s > 0 {
                psd_off[b] = conic.psd_offset(k);
                k += 1;
            }
        }
        let mut free = conic.free_offset();
        for (b, s) in self.block_sizes.iter().enumerate() {
            if *s < 0 {
                diag_off[b] = free;
                free += s.unsigned_abs() as usize;
            }
        }
        conic.num_free = free - conic.free_offset();
        for v in conic.free_offset()..free {
            conic.rows.push(LinearRow { coeffs: vec![(v, 1.0)], constant: 0.0, kind: ConstraintKind::NonNegative });
        }
        let mut linear: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.c.len() + 1];
        for (&(m, b, i, j), &v) in &self.entries {
            let b = b - 1;
            let (var, coef) = if self.block_sizes[b] > 0 {
                (psd_off[b] + tri_index(i - 1, j - 1), if i == j { v } else { 2.0 * v })
            } else {
                (diag_off[b] + i - 1, v)
            };
            linear[m].push((var, coef));
        }
        conic.objective = linear[0].iter().map(|(k, c)| (*k, -c)).collect();
        for (m, row) in linear.into_iter().enumerate().skip(1) {
            conic.rows.push(LinearRow { coeffs: row, constant: -self.c[m - 1], kind: ConstraintKind::Zero });
        }
        conic
    }

    pub fn solve(&self, backend: &dyn ConicSolver, options: &SolverOptions) -> Result<SdpaSolution> {
        let sol = backend.solve(&self.to_conic(), options)?;
        let dual_value = -sol.primal_objective;
        let value = match self.sense {
            Sense::Maximize => dual_value,
            Sense::Minimize => -dual_value,
        } + self.objective_constant;
        Ok(SdpaSolution { status: sol.status, value })
    }
}

pub fn to_sdpa_string(problem: &SdpProblem) -> Result<String> {
    Ok(SdpaProblem::from_problem(problem)?.to_sdpa_string())
}

pub fn export_sdpa(problem: &SdpProblem, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_sdpa_string(problem)?)?;
    Ok(())
}

pub fn read_sdpa(path: impl AsRef<Path>) -> Result<SdpaProblem> {
    SdpaProblem::parse(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algos::{run_ccd, MethodSpec, StepSchedule};
    use crate::expr::LipschitzVector;
    use crate::pep::{assemble_pep, solve, ClarabelSolver, Criterion, Setting};

    fn ccd_problem(p: usize, k: usize, setting: Setting) -> SdpProblem {
        let l = LipschitzVector::uniform(p, 1.0).unwrap();
        let t = run_ccd(&MethodSpec::ccd(p, k, StepSchedule::inverse_lipschitz(&l)).unwrap()).unwrap();
        assemble_pep(&t, &setting, Criterion::FinalValueGap, &l).unwrap()
    }

    #[test]
    fn header_layout() {
        let prob = ccd_problem(1, 1, Setting::init(1.0));
        let text = to_sdpa_string(&prob).unwrap();
        let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('*')).collect();
        // interpolation over {x0, x1, x*}: 6 inequalities, plus the radius
        assert_eq!(lines[0], "7");
        assert_eq!(lines[1], "2");
        assert_eq!(lines[2], format!("{} -{}", prob.basis.len(), 2 * 2 + 7));
        for l in &lines[4..] {
            let f: Vec<&str> = l.split_whitespace().collect();
            assert_eq!(f.len(), 5);
            let i: usize = f[2].parse().unwrap();
            let j: usize = f[3].parse().unwrap();
            assert!(i <= j && i >= 1);
        }
    }

    #[test]
    fn reexport_is_byte_identical() {
        let prob = ccd_problem(2, 2, Setting::all(1.0));
        let text = to_sdpa_string(&prob).unwrap();
        let again = SdpaProblem::parse(&text).unwrap().to_sdpa_string();
        assert_eq!(text, again);
        assert_eq!(text, to_sdpa_string(&prob).unwrap());
    }

    #[test]
    fn round_trip_value() {
        let prob = ccd_problem(2, 1, Setting::init(1.0));
        let direct = solve(&prob, &SolverOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ccd.dat-s");
        export_sdpa(&prob, &path).unwrap();
        let read = read_sdpa(&path).unwrap();
        let sol = read.solve(&ClarabelSolver, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolverStatus::Optimal);
        assert!((sol.value - direct.value).abs() <= 1e-6, "{} vs {}", sol.value, direct.value);
    }

    #[test]
    fn gd_anchor_through_file() {
        let prob = ccd_problem(1, 1, Setting::init(1.0));
        let read = SdpaProblem::parse(&to_sdpa_string(&prob).unwrap()).unwrap();
        let sol = read.solve(&ClarabelSolver, &SolverOptions::default()).unwrap();
        assert!((sol.value - 1.0 / 6.0).abs() < 1e-6);
    }

    #[test]
    fn minimize_sense_round_trip() {
        let l = LipschitzVector::uniform(2, 1.0).unwrap();
        let t = run_ccd(&MethodSpec::ccd(2, 1, StepSchedule::inverse_lipschitz(&l)).unwrap()).unwrap();
        let prob = assemble_pep(&t, &Setting::GradNormalized, Criterion::CycleDecrease, &l).unwrap();
        let direct = solve(&prob, &SolverOptions::default()).unwrap();
        let read = SdpaProblem::parse(&to_sdpa_string(&prob).unwrap()).unwrap();
        assert_eq!(read.sense, Sense::Minimize);
        let sol = read.solve(&ClarabelSolver, &SolverOptions::default()).unwrap();
        assert!((sol.value - direct.value).abs() <= 1e-6, "{} vs {}", sol.value, direct.value);
    }

    #[test]
    fn malformed_input() {
        assert!(SdpaProblem::parse("1\n").is_err());
        assert!(SdpaProblem::parse("1\n1\n2\n1\n1 2 1 1 1\n").is_err());
        assert!(SdpaProblem::parse("1\n1\n-2\n1\n1 1 1 2 1\n").is_err());
        assert!(SdpaProblem::parse("2\n1\n2\n1\n").is_err());
        assert!(SdpaProblem::parse("1\n1\n2\n1\n1 1 1 1 1\n").is_ok());
    }
}
