//! Finite-propagation operators on `l2(X) (x) C^m`.
//!
//! Entries are `m x m` complex blocks keyed by point pairs `(y, z)`. A pair
//! is structurally nonzero iff it is stored; constructors never store a block
//! that is exactly zero, so propagation is read off the keys.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, LinearMap, NormMethod, SingularTriplet, C64};
use crate::space::FiniteMetricSpace;

pub type Block = DMatrix<C64>;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    #[default]
    Complex,
}

#[derive(Clone, Debug)]
pub struct BandedOperator {
    space: Arc<FiniteMetricSpace>,
    m: usize,
    entries: BTreeMap<(usize, usize), Block>,
}

impl PartialEq for BandedOperator {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m && self.entries == other.entries && same_space(&self.space, &other.space)
    }
}

fn same_space(a: &Arc<FiniteMetricSpace>, b: &Arc<FiniteMetricSpace>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

fn is_zero_block(b: &Block) -> bool {
    b.iter().all(|c| *c == ZERO)
}

impl BandedOperator {
    pub fn zero(space: Arc<FiniteMetricSpace>, m: usize) -> Self {
        assert!(m >= 1, "multiplicity must be positive");
        Self { space, m, entries: BTreeMap::new() }
    }

    pub fn identity(space: Arc<FiniteMetricSpace>, m: usize) -> Self {
        let mut op = Self::zero(space, m);
        for x in 0..op.space.len() {
            op.entries.insert((x, x), Block::identity(m, m));
        }
        op
    }

    /// Scalar operator with entry 1 on every pair at distance exactly 1; the
    /// adjacency matrix when the space is a graph metric.
    pub fn adjacency(space: Arc<FiniteMetricSpace>) -> Self {
        let mut op = Self::zero(space, 1);
        for [y, z] in op.space.unit_pairs() {
            op.entries.insert((y, z), scalar(C64::new(1.0, 0.0)));
            op.entries.insert((z, y), scalar(C64::new(1.0, 0.0)));
        }
        op
    }

    /// The rank-one partial isometry `e_{y,z}` sending `delta_z` to `delta_y`.
    pub fn matrix_unit(space: Arc<FiniteMetricSpace>, y: usize, z: usize) -> Result<Self> {
        space.check_point(y)?;
        space.check_point(z)?;
        let mut op = Self::zero(space, 1);
        op.entries.insert((y, z), scalar(C64::new(1.0, 0.0)));
        Ok(op)
    }

    /// Builds an operator from blocks; exact-zero blocks are discarded and
    /// repeated keys are summed.
    pub fn from_entries<I>(space: Arc<FiniteMetricSpace>, m: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = ((usize, usize), Block)>,
    {
        if m == 0 {
            return Err(Error::InvalidOperator("multiplicity must be positive".into()));
        }
        let mut op = Self::zero(space, m);
        for ((y, z), block) in entries {
            op.space.check_point(y)?;
            op.space.check_point(z)?;
            if block.shape() != (m, m) {
                return Err(Error::InvalidOperator(format!(
                    "block at ({y}, {z}) has shape {:?}, expected ({m}, {m})",
                    block.shape()
                )));
            }
            op.accumulate((y, z), block);
        }
        op.prune();
        Ok(op)
    }

    pub fn from_scalars<I>(space: Arc<FiniteMetricSpace>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = ((usize, usize), C64)>,
    {
        Self::from_entries(space, 1, entries.into_iter().map(|(k, v)| (k, scalar(v))))
    }

    /// Reads an `(n m) x (n m)` matrix with point-major indexing `y * m + i`.
    pub fn from_dense(space: Arc<FiniteMetricSpace>, m: usize, dense: &DMatrix<C64>) -> Result<Self> {
        let dim = space.len() * m;
        if dense.shape() != (dim, dim) {
            return Err(Error::InvalidOperator(format!("dense matrix has shape {:?}, expected ({dim}, {dim})", dense.shape())));
        }
        let n = space.len();
        let mut entries = Vec::new();
        for y in 0..n {
            for z in 0..n {
                let block = dense.view((y * m, z * m), (m, m)).into_owned();
                if !is_zero_block(&block) {
                    entries.push(((y, z), block));
                }
            }
        }
        Self::from_entries(space, m, entries)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let dim = self.dim();
        let m = self.m;
        let mut out = DMatrix::zeros(dim, dim);
        for (&(y, z), b) in &self.entries {
            out.view_mut((y * m, z * m), (m, m)).copy_from(b);
        }
        out
    }

    fn accumulate(&mut self, key: (usize, usize), block: Block) {
        match self.entries.get_mut(&key) {
            Some(existing) => *existing += block,
            None => {
                self.entries.insert(key, block);
            }
        }
    }

    fn prune(&mut self) {
        self.entries.retain(|_, b| !is_zero_block(b));
    }

    /// Sets one block; an exactly zero block removes the entry.
    pub fn insert(&mut self, y: usize, z: usize, block: Block) -> Result<()> {
        self.space.check_point(y)?;
        self.space.check_point(z)?;
        if block.shape() != (self.m, self.m) {
            return Err(Error::InvalidOperator(format!("block shape {:?} does not match multiplicity {}", block.shape(), self.m)));
        }
        if is_zero_block(&block) {
            self.entries.remove(&(y, z));
        } else {
            self.entries.insert((y, z), block);
        }
        Ok(())
    }

    pub fn space(&self) -> &Arc<FiniteMetricSpace> {
        &self.space
    }

    pub fn multiplicity(&self) -> usize {
        self.m
    }

    /// Hilbert-space dimension `n m`.
    pub fn dim(&self) -> usize {
        self.space.len() * self.m
    }

    pub fn entries(&self) -> &BTreeMap<(usize, usize), Block> {
        &self.entries
    }

    pub fn get(&self, y: usize, z: usize) -> Option<&Block> {
        self.entries.get(&(y, z))
    }

    /// Row `y` as `(z, block)` pairs in ascending `z`.
    pub fn row(&self, y: usize) -> impl Iterator<Item = (usize, &Block)> {
        self.entries.range((y, 0)..=(y, usize::MAX)).map(|(&(_, z), b)| (z, b))
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest `d(y, z)` over stored entries; 0 for the zero operator.
    pub fn propagation(&self) -> f64 {
        self.entries.keys().map(|&(y, z)| self.space.dist(y, z)).fold(0.0, f64::max)
    }

    /// `sup |a_{y,z}|`, with the block norm playing the role of `|.|` when `m > 1`.
    pub fn max_entry_norm(&self) -> f64 {
        self.entries
            .values()
            .map(|b| if self.m == 1 { b[(0, 0)].norm() } else { linalg::dense_spectral_norm(b) })
            .fold(0.0, f64::max)
    }

    pub fn adjoint(&self) -> Self {
        Self {
            space: self.space.clone(),
            m: self.m,
            entries: self.entries.iter().map(|(&(y, z), b)| ((z, y), b.adjoint())).collect(),
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.m != other.m || !same_space(&self.space, &other.space) {
            return Err(Error::SpaceMismatch);
        }
        Ok(())
    }

    /// Operator product `self * other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = Self::zero(self.space.clone(), self.m);
        for (&(y, w), a) in &self.entries {
            for (z, b) in other.row(w) {
                out.accumulate((y, z), a * b);
            }
        }
        out.prune();
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (&k, b) in &other.entries {
            out.accumulate(k, b.clone());
        }
        out.prune();
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, factor: C64) -> Self {
        let mut out = Self {
            space: self.space.clone(),
            m: self.m,
            entries: self.entries.iter().map(|(&k, b)| (k, b * factor)).collect(),
        };
        out.prune();
        out
    }

    /// Keeps only entries with `d(y, z) <= radius`.
    pub fn truncate_to_band(&self, radius: f64) -> Self {
        Self {
            space: self.space.clone(),
            m: self.m,
            entries: self
                .entries
                .iter()
                .filter(|(&(y, z), _)| self.space.dist(y, z) <= radius)
                .map(|(&k, b)| (k, b.clone()))
                .collect(),
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.dim()];
        self.apply_into(x, &mut out);
        out
    }

    pub fn apply_adjoint(&self, y: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.dim()];
        self.apply_adjoint_into(y, &mut out);
        out
    }

    pub fn operator_norm(&self) -> Result<f64> {
        self.operator_norm_with(NormMethod::Auto)
    }

    pub fn operator_norm_with(&self, method: NormMethod) -> Result<f64> {
        if self.is_zero() {
            return Ok(0.0);
        }
        match method.resolve(self.dim()) {
            NormMethod::PowerIteration => {
                Ok(linalg::power_iteration(self, linalg::POWER_TOLERANCE, linalg::POWER_MAX_ITERATIONS)?.value)
            }
            _ => Ok(linalg::dense_spectral_norm(&self.to_dense())),
        }
    }

    /// Top singular value with singular vectors in point-major layout.
    pub fn top_singular(&self, method: NormMethod) -> Result<SingularTriplet> {
        linalg::top_singular(self, || self.to_dense(), method)
    }
}

impl LinearMap for BandedOperator {
    fn rows(&self) -> usize {
        self.dim()
    }

    fn cols(&self) -> usize {
        self.dim()
    }

    fn apply_into(&self, x: &[C64], out: &mut [C64]) {
        let m = self.m;
        out.fill(ZERO);
        for (&(y, z), b) in &self.entries {
            for i in 0..m {
                let mut acc = ZERO;
                for j in 0..m {
                    acc += b[(i, j)] * x[z * m + j];
                }
                out[y * m + i] += acc;
            }
        }
    }

    fn apply_adjoint_into(&self, y: &[C64], out: &mut [C64]) {
        let m = self.m;
        out.fill(ZERO);
        for (&(r, c), b) in &self.entries {
            for j in 0..m {
                let mut acc = ZERO;
                for i in 0..m {
                    acc += b[(i, j)].conj() * y[r * m + i];
                }
                out[c * m + j] += acc;
            }
        }
    }
}

pub fn scalar(value: C64) -> Block {
    Block::from_element(1, 1, value)
}

/// Independent standard Gaussian entries (real and imaginary parts for
/// [`Field::Complex`]) on every position with `d(y, z) <= radius`, visited in
/// ascending `(y, z)` order.
pub fn random_banded(space: Arc<FiniteMetricSpace>, radius: f64, seed: u64, m: usize, field: Field) -> BandedOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = space.len();
    let mut op = BandedOperator::zero(space, m);
    for y in 0..n {
        for z in 0..n {
            if op.space.dist(y, z) > radius {
                continue;
            }
            let block = Block::from_fn(m, m, |_, _| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = match field {
                    Field::Real => 0.0,
                    Field::Complex => StandardNormal.sample(&mut rng),
                };
                C64::new(re, im)
            });
            op.entries.insert((y, z), block);
        }
    }
    op.prune();
    op
}

/// Per-sample seeds derived from one run seed.
pub fn derive_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.next_u64()).collect()
}

/// `count` seeded samples from `E_R`.
pub fn sample_band(space: &Arc<FiniteMetricSpace>, radius: f64, count: usize, seed: u64, m: usize, field: Field) -> Vec<BandedOperator> {
    derive_seeds(seed, count)
        .into_iter()
        .map(|s| random_banded(space.clone(), radius, s, m, field))
        .collect()
}

/// On-disk operator format. `m = 1` entries are `[y, z, re, im]`; for
/// `m > 1` each block element is `[y, z, i, j, re, im]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorFile {
    pub space: String,
    pub m: usize,
    pub entries: Vec<OperatorEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorEntry {
    Scalar(usize, usize, f64, f64),
    Block(usize, usize, usize, usize, f64, f64),
}

impl OperatorFile {
    pub fn from_operator(op: &BandedOperator, space_ref: impl Into<String>) -> Self {
        let mut entries = Vec::new();
        for (&(y, z), b) in op.entries() {
            if op.m == 1 {
                entries.push(OperatorEntry::Scalar(y, z, b[(0, 0)].re, b[(0, 0)].im));
            } else {
                for i in 0..op.m {
                    for j in 0..op.m {
                        let c = b[(i, j)];
                        if c != ZERO {
                            entries.push(OperatorEntry::Block(y, z, i, j, c.re, c.im));
                        }
                    }
                }
            }
        }
        Self { space: space_ref.into(), m: op.m, entries }
    }

    /// Rebuilds the operator on `space`; entries outside the space are rejected.
    pub fn into_operator(self, space: Arc<FiniteMetricSpace>) -> Result<BandedOperator> {
        let m = self.m;
        if m == 0 {
            return Err(Error::InvalidOperator("multiplicity must be positive".into()));
        }
        let mut blocks: BTreeMap<(usize, usize), Block> = BTreeMap::new();
        for entry in self.entries {
            let (y, z, i, j, re, im) = match entry {
                OperatorEntry::Scalar(y, z, re, im) if m == 1 => (y, z, 0, 0, re, im),
                OperatorEntry::Block(y, z, i, j, re, im) if i < m && j < m => (y, z, i, j, re, im),
                other => {
                    return Err(Error::InvalidOperator(format!("entry {other:?} does not fit multiplicity {m}")));
                }
            };
            space.check_point(y)?;
            space.check_point(z)?;
            blocks.entry((y, z)).or_insert_with(|| Block::zeros(m, m))[(i, j)] += C64::new(re, im);
        }
        BandedOperator::from_entries(space, m, blocks)
    }
}
