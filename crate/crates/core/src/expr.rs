//! Symbolic block vectors and scalar forms over per-block Gram bases.
//!
//! Every vector in a performance estimation problem is a linear combination
//! of basis symbols (gradients and initial points), kept separately for each
//! coordinate block. Inner products of such combinations are linear in the
//! entries of one Gram matrix per block, which is what [`ScalarExpr`] stores.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, PepError, Result};

/// Number of coordinate blocks `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockStructure {
    p: usize,
}

impl BlockStructure {
    pub fn new(p: usize) -> Result<Self> {
        if p == 0 {
            return invalid("block count must be at least 1");
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn check_block(&self, block: usize) -> Result<()> {
        if block >= self.p {
            return Err(PepError::Structural(format!("block index {} out of range for p = {}", block + 1, self.p)));
        }
        Ok(())
    }
}

/// Block-wise Lipschitz constants `(L_1, …, L_p)`, all strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LipschitzVector(Vec<f64>);

impl LipschitzVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return invalid("Lipschitz vector is empty");
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return invalid(format!("Lipschitz constants must be positive and finite, got {bad}"));
        }
        Ok(Self(values))
    }

    pub fn uniform(p: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; p])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, block: usize) -> f64 {
        self.0[block]
    }

    pub fn max(&self) -> f64 {
        self.0.iter().cloned().fold(f64::MIN, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().cloned().fold(f64::MAX, f64::min)
    }

    pub fn inverse(&self) -> Vec<f64> {
        self.0.iter().map(|l| 1.0 / l).collect()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|l| l * c).collect())
    }

    pub fn check_blocks(&self, blocks: BlockStructure) -> Result<()> {
        if self.0.len() != blocks.p() {
            return invalid(format!(
                "Lipschitz vector has {} entries but the method has {} blocks",
                self.0.len(),
                blocks.p()
            ));
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for LipschitzVector {
    type Error = PepError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LipschitzVector> for Vec<f64> {
    fn from(l: LipschitzVector) -> Self {
        l.0
    }
}

/// Basis symbol. The derived order places gradients first (by index), then
/// the initial point, then extra iterates, which is the Gram row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BasisLabel {
    Gradient(usize),
    InitialPoint,
    Iterate(usize),
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisLabel::Gradient(i) => write!(f, "g{i}"),
            BasisLabel::InitialPoint => write!(f, "x0"),
            BasisLabel::Iterate(i) => write!(f, "x{i}"),
        }
    }
}

/// Ordered basis shared by every block, with label lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    labels: Vec<BasisLabel>,
    index: BTreeMap<BasisLabel, usize>,
}

impl Basis {
    pub fn new(labels: impl IntoIterator<Item = BasisLabel>) -> Result<Self> {
        let mut labels: Vec<BasisLabel> = labels.into_iter().collect();
        labels.sort();
        let before = labels.len();
        labels.dedup();
        if labels.len() != before {
            return Err(PepError::Structural("duplicate basis labels".into()));
        }
        let index = labels.iter().enumerate().map(|(i, l)| (*l, i)).collect();
        Ok(Self { labels, index })
    }

    pub fn labels(&self) -> &[BasisLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: BasisLabel) -> Option<usize> {
        self.index.get(&label).copied()
    }

    pub fn contains(&self, label: BasisLabel) -> bool {
        self.index.contains_key(&label)
    }
}

fn prune<K: Ord + Copy>(map: &mut BTreeMap<K, f64>) {
    map.retain(|_, v| *v != 0.0);
}

fn accumulate<K: Ord + Copy>(map: &mut BTreeMap<K, f64>, key: K, c: f64) {
    if c == 0.0 {
        return;
    }
    let e = map.entry(key).or_insert(0.0);
    *e += c;
    if *e == 0.0 {
        map.remove(&key);
    }
}

/// A vector split into `p` blocks, each a sparse combination of basis labels.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVectorExpr {
    blocks: Vec<BTreeMap<BasisLabel, f64>>,
}

impl BlockVectorExpr {
    pub fn zero(blocks: BlockStructure) -> Self {
        Self { blocks: vec![BTreeMap::new(); blocks.p()] }
    }

    /// The basis symbol `label` present in every block.
    pub fn basis(blocks: BlockStructure, label: BasisLabel) -> Self {
        let mut v = Self::zero(blocks);
        for b in &mut v.blocks {
            b.insert(label, 1.0);
        }
        v
    }

    pub fn p(&self) -> usize {
        self.blocks.len()
    }

    pub fn structure(&self) -> BlockStructure {
        BlockStructure { p: self.blocks.len() }
    }

    pub fn block(&self, block: usize) -> &BTreeMap<BasisLabel, f64> {
        &self.blocks[block]
    }

    pub fn coefficient(&self, block: usize, label: BasisLabel) -> f64 {
        self.blocks[block].get(&label).copied().unwrap_or(0.0)
    }

    pub fn set_coefficient(&mut self, block: usize, label: BasisLabel, c: f64) {
        if c == 0.0 {
            self.blocks[block].remove(&label);
        } else {
            self.blocks[block].insert(label, c);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|b| b.is_empty())
    }

    pub fn labels(&self) -> BTreeSet<BasisLabel> {
        self.blocks.iter().flat_map(|b| b.keys().copied()).collect()
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.p() != other.p() {
            return Err(PepError::Structural(format!("block vectors with {} and {} blocks", self.p(), other.p())));
        }
        Ok(())
    }

    /// `self += c · other` on every block.
    pub fn axpy(&mut self, c: f64, other: &Self) {
        assert_eq!(self.p(), other.p(), "block count mismatch");
        for (mine, theirs) in self.blocks.iter_mut().zip(&other.blocks) {
            for (label, v) in theirs {
                accumulate(mine, *label, c * v);
            }
        }
    }

    /// `self^(ℓ) += c · other^(ℓ)` on block `ℓ` only.
    pub fn axpy_block(&mut self, block: usize, c: f64, other: &Self) {
        assert_eq!(self.p(), other.p(), "block count mismatch");
        let theirs = other.blocks[block].clone();
        for (label, v) in theirs {
            accumulate(&mut self.blocks[block], label, c * v);
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for b in &mut out.blocks {
            for v in b.values_mut() {
                *v *= c;
            }
            prune(b);
        }
        out
    }

    /// Copy of block `ℓ` with every other block zeroed (`U_ℓ U_ℓᵀ v`).
    pub fn restrict(&self, block: usize) -> Self {
        let mut out = Self { blocks: vec![BTreeMap::new(); self.p()] };
        out.blocks[block] = self.blocks[block].clone();
        out
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut out = self.clone();
        out.axpy(1.0, other);
        Ok(out)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut out = self.clone();
        out.axpy(-1.0, other);
        Ok(out)
    }

    /// Numeric value given per-block coordinates of each basis label.
    pub fn evaluate(&self, assignment: &NumericAssignment) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(self.p());
        for (b, terms) in self.blocks.iter().enumerate() {
            let dim = assignment.block_dim(b);
            let mut acc = vec![0.0; dim];
            for (label, c) in terms {
                let v = assignment.vector(b, *label)?;
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += c * x;
                }
            }
            out.push(acc);
        }
        Ok(out)
    }
}

impl Add for &BlockVectorExpr {
    type Output = BlockVectorExpr;
    fn add(self, rhs: &BlockVectorExpr) -> BlockVectorExpr {
        self.try_add(rhs).expect("block count mismatch")
    }
}

impl Sub for &BlockVectorExpr {
    type Output = BlockVectorExpr;
    fn sub(self, rhs: &BlockVectorExpr) -> BlockVectorExpr {
        self.try_sub(rhs).expect("block count mismatch")
    }
}

impl Mul<&BlockVectorExpr> for f64 {
    type Output = BlockVectorExpr;
    fn mul(self, rhs: &BlockVectorExpr) -> BlockVectorExpr {
        rhs.scaled(self)
    }
}

impl Neg for &BlockVectorExpr {
    type Output = BlockVectorExpr;
    fn neg(self) -> BlockVectorExpr {
        self.scaled(-1.0)
    }
}

/// Scalar decision symbol: a function value or an auxiliary scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ValueSymbol(pub usize);

fn canonical(a: BasisLabel, b: BasisLabel) -> (BasisLabel, BasisLabel) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Linear form in the Gram entries, the value symbols and a constant.
///
/// Gram terms are keyed by the unordered label pair; the stored coefficient
/// multiplies the single Gram entry `G_ab = G_ba`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarExpr {
    gram: Vec<BTreeMap<(BasisLabel, BasisLabel), f64>>,
    values: BTreeMap<ValueSymbol, f64>,
    constant: f64,
}

impl ScalarExpr {
    pub fn zero(blocks: BlockStructure) -> Self {
        Self { gram: vec![BTreeMap::new(); blocks.p()], values: BTreeMap::new(), constant: 0.0 }
    }

    pub fn constant(blocks: BlockStructure, c: f64) -> Self {
        let mut e = Self::zero(blocks);
        e.constant = c;
        e
    }

    pub fn value(blocks: BlockStructure, symbol: ValueSymbol) -> Self {
        let mut e = Self::zero(blocks);
        e.values.insert(symbol, 1.0);
        e
    }

    pub fn p(&self) -> usize {
        self.gram.len()
    }

    pub fn gram_coefficient(&self, block: usize, a: BasisLabel, b: BasisLabel) -> f64 {
        self.gram[block].get(&canonical(a, b)).copied().unwrap_or(0.0)
    }

    pub fn gram_terms(&self, block: usize) -> &BTreeMap<(BasisLabel, BasisLabel), f64> {
        &self.gram[block]
    }

    pub fn value_terms(&self) -> &BTreeMap<ValueSymbol, f64> {
        &self.values
    }

    pub fn value_coefficient(&self, symbol: ValueSymbol) -> f64 {
        self.values.get(&symbol).copied().unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    pub fn add_gram(&mut self, block: usize, a: BasisLabel, b: BasisLabel, c: f64) {
        accumulate(&mut self.gram[block], canonical(a, b), c);
    }

    pub fn add_value(&mut self, symbol: ValueSymbol, c: f64) {
        accumulate(&mut self.values, symbol, c);
    }

    pub fn add_constant(&mut self, c: f64) {
        self.constant += c;
    }

    /// True when the form has no Gram or value terms.
    pub fn is_constant(&self) -> bool {
        self.values.is_empty() && self.gram.iter().all(|g| g.is_empty())
    }

    pub fn is_zero(&self) -> bool {
        self.is_constant() && self.constant == 0.0
    }

    /// Blocks carrying at least one Gram term.
    pub fn gram_blocks(&self) -> Vec<usize> {
        (0..self.p()).filter(|&b| !self.gram[b].is_empty()).collect()
    }

    pub fn axpy(&mut self, c: f64, other: &Self) {
        assert_eq!(self.p(), other.p(), "block count mismatch");
        for (mine, theirs) in self.gram.iter_mut().zip(&other.gram) {
            for (k, v) in theirs {
                accumulate(mine, *k, c * v);
            }
        }
        for (k, v) in &other.values {
            accumulate(&mut self.values, *k, c * v);
        }
        self.constant += c * other.constant;
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = Self::zero(BlockStructure { p: self.p() });
        out.axpy(c, self);
        out
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        if self.p() != other.p() {
            return Err(PepError::Structural("scalar forms over different block counts".into()));
        }
        let mut out = self.clone();
        out.axpy(1.0, other);
        Ok(out)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        if self.p() != other.p() {
            return Err(PepError::Structural("scalar forms over different block counts".into()));
        }
        let mut out = self.clone();
        out.axpy(-1.0, other);
        Ok(out)
    }

    /// Symmetric `C` with `⟨C, G^(ℓ)⟩` equal to the block-ℓ Gram part.
    pub fn block_matrix(&self, block: usize, basis: &Basis) -> Result<DMatrix<f64>> {
        let n = basis.len();
        let mut c = DMatrix::zeros(n, n);
        for (&(a, b), &v) in &self.gram[block] {
            let i = basis.index_of(a).ok_or_else(|| PepError::Structural(format!("label {a} not in basis")))?;
            let j = basis.index_of(b).ok_or_else(|| PepError::Structural(format!("label {b} not in basis")))?;
            if i == j {
                c[(i, i)] += v;
            } else {
                c[(i, j)] += 0.5 * v;
                c[(j, i)] += 0.5 * v;
            }
        }
        Ok(c)
    }

    /// Value at explicit Gram matrices and value assignments.
    pub fn evaluate_gram(&self, basis: &Basis, grams: &[DMatrix<f64>], values: &[f64]) -> Result<f64> {
        let mut acc = self.constant;
        for (b, terms) in self.gram.iter().enumerate() {
            for (&(x, y), &v) in terms {
                let i = basis.index_of(x).ok_or_else(|| PepError::Structural(format!("label {x} not in basis")))?;
                let j = basis.index_of(y).ok_or_else(|| PepError::Structural(format!("label {y} not in basis")))?;
                acc += v * grams[b][(i, j)];
            }
        }
        for (s, v) in &self.values {
            let f = values.get(s.0).ok_or_else(|| PepError::Structural(format!("value symbol {} unassigned", s.0)))?;
            acc += v * f;
        }
        Ok(acc)
    }

    /// Value at explicit basis coordinates.
    pub fn evaluate(&self, assignment: &NumericAssignment) -> Result<f64> {
        let mut acc = self.constant;
        for (b, terms) in self.gram.iter().enumerate() {
            for (&(x, y), &v) in terms {
                let u = assignment.vector(b, x)?;
                let w = assignment.vector(b, y)?;
                acc += v * u.iter().zip(w).map(|(p, q)| p * q).sum::<f64>();
            }
        }
        for (s, v) in &self.values {
            acc += v * assignment.value(*s)?;
        }
        Ok(acc)
    }

    /// Largest absolute coefficient difference to `other`.
    pub fn max_abs_difference(&self, other: &Self) -> f64 {
        let d = self.try_sub(other).expect("block count mismatch");
        let g = d.gram.iter().flat_map(|m| m.values()).fold(0.0f64, |a, v| a.max(v.abs()));
        let f = d.values.values().fold(0.0f64, |a, v| a.max(v.abs()));
        g.max(f).max(d.constant.abs())
    }
}

impl Add for &ScalarExpr {
    type Output = ScalarExpr;
    fn add(self, rhs: &ScalarExpr) -> ScalarExpr {
        self.try_add(rhs).expect("block count mismatch")
    }
}

impl Sub for &ScalarExpr {
    type Output = ScalarExpr;
    fn sub(self, rhs: &ScalarExpr) -> ScalarExpr {
        self.try_sub(rhs).expect("block count mismatch")
    }
}

impl Mul<&ScalarExpr> for f64 {
    type Output = ScalarExpr;
    fn mul(self, rhs: &ScalarExpr) -> ScalarExpr {
        rhs.scaled(self)
    }
}

/// Bilinear expansion of `⟨a, b⟩`, summed over blocks or on one block.
pub fn inner_product(a: &BlockVectorExpr, b: &BlockVectorExpr, block: Option<usize>) -> Result<ScalarExpr> {
    a.check_same(b)?;
    let structure = a.structure();
    if let Some(l) = block {
        structure.check_block(l)?;
    }
    let mut out = ScalarExpr::zero(structure);
    let blocks: Vec<usize> = match block {
        Some(l) => vec![l],
        None => (0..a.p()).collect(),
    };
    for l in blocks {
        for (la, ca) in &a.blocks[l] {
            for (lb, cb) in &b.blocks[l] {
                out.add_gram(l, *la, *lb, ca * cb);
            }
        }
    }
    Ok(out)
}

/// `Σ_ℓ w_ℓ ‖a^(ℓ)‖²`.
pub fn weighted_norm_sq(a: &BlockVectorExpr, weights: &[f64]) -> Result<ScalarExpr> {
    if weights.len() != a.p() {
        return invalid(format!("{} weights for {} blocks", weights.len(), a.p()));
    }
    let mut out = ScalarExpr::zero(a.structure());
    for (l, w) in weights.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        out.axpy(*w, &inner_product(a, a, Some(l))?);
    }
    Ok(out)
}

/// Name of a point in a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PointLabel {
    X(usize),
    Y(usize),
    Node(usize),
    Optimal,
}

impl fmt::Display for PointLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointLabel::X(i) => write!(f, "x{i}"),
            PointLabel::Y(i) => write!(f, "y{i}"),
            PointLabel::Node(i) => write!(f, "n{i}"),
            PointLabel::Optimal => write!(f, "x*"),
        }
    }
}

/// Point, gradient and function value of one interpolated point. A missing
/// value symbol stands for the constant 0 (used for the minimizer).
#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub label: PointLabel,
    pub point: BlockVectorExpr,
    pub gradient: BlockVectorExpr,
    pub value: Option<ValueSymbol>,
}

impl Triplet {
    pub fn optimal(blocks: BlockStructure) -> Self {
        Self {
            label: PointLabel::Optimal,
            point: BlockVectorExpr::zero(blocks),
            gradient: BlockVectorExpr::zero(blocks),
            value: None,
        }
    }

    pub fn value_expr(&self) -> ScalarExpr {
        match self.value {
            Some(s) => ScalarExpr::value(self.point.structure(), s),
            None => ScalarExpr::zero(self.point.structure()),
        }
    }
}

/// Explicit coordinates for basis labels (per block) and value symbols.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NumericAssignment {
    pub dims: Vec<usize>,
    pub vectors: Vec<BTreeMap<BasisLabel, Vec<f64>>>,
    pub values: BTreeMap<ValueSymbol, f64>,
}

impl NumericAssignment {
    pub fn block_dim(&self, block: usize) -> usize {
        self.dims[block]
    }

    pub fn vector(&self, block: usize, label: BasisLabel) -> Result<&[f64]> {
        self.vectors
            .get(block)
            .and_then(|m| m.get(&label))
            .map(|v| v.as_slice())
            .ok_or_else(|| PepError::Structural(format!("no coordinates for {label} in block {}", block + 1)))
    }

    pub fn value(&self, symbol: ValueSymbol) -> Result<f64> {
        self.values
            .get(&symbol)
            .copied()
            .ok_or_else(|| PepError::Structural(format!("value symbol {} unassigned", symbol.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two() -> BlockStructure {
        BlockStructure::new(2).unwrap()
    }

    #[test]
    fn gradient_norm_on_one_block() {
        let g = BlockVectorExpr::basis(two(), BasisLabel::Gradient(0));
        let e = inner_product(&g, &g, Some(0)).unwrap();
        assert_eq!(e.gram_coefficient(0, BasisLabel::Gradient(0), BasisLabel::Gradient(0)), 1.0);
        assert!(e.gram_terms(1).is_empty());
        assert!(e.value_terms().is_empty());
    }

    #[test]
    fn cross_term_is_symmetric() {
        let x = BlockVectorExpr::basis(two(), BasisLabel::InitialPoint);
        let g = BlockVectorExpr::basis(two(), BasisLabel::Gradient(1));
        let a = inner_product(&x, &g, None).unwrap();
        let b = inner_product(&g, &x, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.gram_coefficient(1, BasisLabel::Gradient(1), BasisLabel::InitialPoint), 1.0);
        assert_eq!(a.gram_coefficient(1, BasisLabel::InitialPoint, BasisLabel::Gradient(1)), 1.0);
    }

    #[test]
    fn mismatched_blocks_is_structural_error() {
        let a = BlockVectorExpr::basis(two(), BasisLabel::InitialPoint);
        let b = BlockVectorExpr::basis(BlockStructure::new(3).unwrap(), BasisLabel::InitialPoint);
        assert!(matches!(inner_product(&a, &b, None), Err(PepError::Structural(_))));
        assert!(matches!(inner_product(&a, &a, Some(2)), Err(PepError::Structural(_))));
    }

    #[test]
    fn block_matrix_splits_off_diagonal() {
        let basis = Basis::new([BasisLabel::Gradient(0), BasisLabel::InitialPoint]).unwrap();
        let x = BlockVectorExpr::basis(two(), BasisLabel::InitialPoint);
        let g = BlockVectorExpr::basis(two(), BasisLabel::Gradient(0));
        let e = inner_product(&(&x + &g), &(&x + &g), Some(0)).unwrap();
        let c = e.block_matrix(0, &basis).unwrap();
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
    }

    #[test]
    fn zero_coefficients_are_pruned() {
        let g = BlockVectorExpr::basis(two(), BasisLabel::Gradient(0));
        let d = &g - &g;
        assert!(d.is_zero());
        let e = inner_product(&g, &g, None).unwrap();
        assert!((&e - &e).is_zero());
    }

    #[test]
    fn lipschitz_rejects_non_positive() {
        assert!(LipschitzVector::new(vec![1.0, 0.0]).is_err());
        assert!(LipschitzVector::new(vec![]).is_err());
        assert!(LipschitzVector::new(vec![1.0, f64::NAN]).is_err());
    }

    fn labels() -> Vec<BasisLabel> {
        vec![BasisLabel::Gradient(0), BasisLabel::Gradient(1), BasisLabel::Gradient(2), BasisLabel::InitialPoint]
    }

    fn arb_vector() -> impl Strategy<Value = BlockVectorExpr> {
        proptest::collection::vec(proptest::collection::vec(-3i32..=3, 4), 2).prop_map(|rows| {
            let mut v = BlockVectorExpr::zero(BlockStructure::new(2).unwrap());
            for (b, row) in rows.iter().enumerate() {
                for (label, c) in labels().into_iter().zip(row) {
                    v.set_coefficient(b, label, *c as f64);
                }
            }
            v
        })
    }

    proptest! {
        #[test]
        fn bilinearity(a in arb_vector(), b in arb_vector(), c in arb_vector(), alpha in -4i32..4, beta in -4i32..4) {
            let (alpha, beta) = (alpha as f64, beta as f64);
            let mut lhs_vec = a.scaled(alpha);
            lhs_vec.axpy(beta, &b);
            let lhs = inner_product(&lhs_vec, &c, None).unwrap();
            let mut rhs = inner_product(&a, &c, None).unwrap().scaled(alpha);
            rhs.axpy(beta, &inner_product(&b, &c, None).unwrap());
            // integer coefficients keep every product exact
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn symmetry(a in arb_vector(), b in arb_vector(), block in 0usize..2) {
            prop_assert_eq!(inner_product(&a, &b, Some(block)).unwrap(), inner_product(&b, &a, Some(block)).unwrap());
        }

        #[test]
        fn block_sum_is_full_product(a in arb_vector(), b in arb_vector()) {
            let full = inner_product(&a, &b, None).unwrap();
            let mut sum = inner_product(&a, &b, Some(0)).unwrap();
            sum.axpy(1.0, &inner_product(&a, &b, Some(1)).unwrap());
            prop_assert_eq!(full, sum);
        }

        #[test]
        fn gram_evaluation_matches_coordinates(a in arb_vector(), b in arb_vector(),
                                               coords in proptest::collection::vec(-2.0f64..2.0, 24)) {
            let s = BlockStructure::new(2).unwrap();
            let basis = Basis::new(labels()).unwrap();
            let mut assignment = NumericAssignment { dims: vec![3, 3], vectors: vec![BTreeMap::new(), BTreeMap::new()], values: BTreeMap::new() };
            for blk in 0..2 {
                for (k, l) in labels().into_iter().enumerate() {
                    let off = blk * 12 + k * 3;
                    assignment.vectors[blk].insert(l, coords[off..off + 3].to_vec());
                }
            }
            let grams: Vec<DMatrix<f64>> = (0..2).map(|blk| {
                let m = DMatrix::from_fn(3, 4, |r, c| coords[blk * 12 + c * 3 + r]);
                m.transpose() * m
            }).collect();
            let e = inner_product(&a, &b, None).unwrap();
            let direct = e.evaluate(&assignment).unwrap();
            let via_gram = e.evaluate_gram(&basis, &grams, &[]).unwrap();
            let av = a.evaluate(&assignment).unwrap();
            let bv = b.evaluate(&assignment).unwrap();
            let explicit: f64 = av.iter().zip(&bv).map(|(u, w)| u.iter().zip(w).map(|(p, q)| p * q).sum::<f64>()).sum();
            prop_assert!((direct - explicit).abs() < 1e-9);
            prop_assert!((via_gram - explicit).abs() < 1e-9);
            let _ = s;
        }
    }
}
