//! Ball compressions `psi_S` and localized-vector searches.
//!
//! `psi_S(a)` is the family of square submatrices `[a_{y,z}]` over the balls
//! `N(x, S)`. Its norm relative to `||a||` is the square ratio; the column
//! ratio instead measures `max_x ||a P_{N(x,S)}||`. For `a` of propagation
//! `R` these satisfy
//! `sigma_sq(S) <= sigma_col(S) <= sigma_sq(S + R)`.
//!
//! All radii here are ball radii. A vector supported in `N(x, S)` has support
//! diameter at most `2S`; reports carry that bound alongside the radius.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificates::VectorCertificate;
use crate::duality;
use crate::error::{Error, Result};
use crate::linalg::{self, vector_norm, NormMethod, SingularTriplet, C64};
use crate::operators::{self, random_banded, BandedOperator, Block, Field};
use crate::space::{BallCover, FiniteMetricSpace};

/// Slack allowed in the localization chain.
pub const CHAIN_SLACK: f64 = 1e-10;
/// Slack allowed in the power-trick ratio guarantee.
pub const POWER_TRICK_SLACK: f64 = 1e-10;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// The image `psi_S(a)`: one block per ball, stored sparsely with global
/// point keys so every block is an exact subread of the source operator.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockCompression {
    space: Arc<FiniteMetricSpace>,
    cover: Arc<BallCover>,
    m: usize,
    blocks: Vec<BTreeMap<(usize, usize), Block>>,
}

pub fn compress(a: &BandedOperator, radius: f64) -> BlockCompression {
    let cover = Arc::new(a.space().ball_cover(radius));
    compress_with(a, &cover)
}

/// Compression against a precomputed cover of `a`'s space.
pub fn compress_with(a: &BandedOperator, cover: &Arc<BallCover>) -> BlockCompression {
    let n = a.space().len();
    let mut blocks = vec![BTreeMap::new(); n];
    for (&(y, z), b) in a.entries() {
        // Centers containing y are exactly the points of N(y, S).
        for &x in cover.ball(y) {
            if cover.contains(x, z) {
                blocks[x].insert((y, z), b.clone());
            }
        }
    }
    BlockCompression { space: a.space().clone(), cover: cover.clone(), m: a.multiplicity(), blocks }
}

impl BlockCompression {
    pub fn radius(&self) -> f64 {
        self.cover.radius()
    }

    pub fn multiplicity(&self) -> usize {
        self.m
    }

    pub fn space(&self) -> &Arc<FiniteMetricSpace> {
        &self.space
    }

    pub fn cover(&self) -> &Arc<BallCover> {
        &self.cover
    }

    /// Nonzero entries of the block at `center`, keyed by global points.
    pub fn block_entries(&self, center: usize) -> &BTreeMap<(usize, usize), Block> {
        &self.blocks[center]
    }

    pub fn entry(&self, center: usize, y: usize, z: usize) -> Option<&Block> {
        self.blocks[center].get(&(y, z))
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|b| b.is_empty())
    }

    /// Block at `center` as a dense `|N(x,S)| m` square matrix indexed by
    /// ball position.
    pub fn block_dense(&self, center: usize) -> DMatrix<C64> {
        let ball = self.cover.ball(center);
        let m = self.m;
        let mut out = DMatrix::zeros(ball.len() * m, ball.len() * m);
        for (&(y, z), b) in &self.blocks[center] {
            let (i, j) = (position(ball, y), position(ball, z));
            out.view_mut((i * m, j * m), (m, m)).copy_from(b);
        }
        out
    }

    /// Norm in the product of matrix algebras: the largest block norm.
    pub fn block_norm(&self) -> f64 {
        self.block_norms().into_iter().map(|(_, v)| v).fold(0.0, f64::max)
    }

    /// Spectral norm of each distinct block, by first center.
    fn block_norms(&self) -> Vec<(usize, f64)> {
        // Identical balls carry identical blocks.
        let centers = distinct_balls(&self.cover);
        centers
            .into_par_iter()
            .map(|x| {
                let v = if self.blocks[x].is_empty() { 0.0 } else { linalg::dense_spectral_norm(&self.block_dense(x)) };
                (x, v)
            })
            .collect()
    }

    /// Center and top singular triplet of the block of largest norm; the
    /// first such center wins ties. `None` for an empty space.
    pub fn top_block(&self) -> Option<(usize, SingularTriplet)> {
        let (x, value) = first_max(&self.block_norms())?;
        let mut t = if value == 0.0 {
            unit_triplet(self.cover.ball(x).len() * self.m)
        } else {
            linalg::dense_top_singular(&self.block_dense(x))
        };
        t.value = value;
        Some((x, t))
    }

    pub fn adjoint(&self) -> Self {
        Self {
            space: self.space.clone(),
            cover: self.cover.clone(),
            m: self.m,
            blocks: self
                .blocks
                .iter()
                .map(|b| b.iter().map(|(&(y, z), v)| ((z, y), v.adjoint())).collect())
                .collect(),
        }
    }
}

fn position(ball: &[usize], point: usize) -> usize {
    ball.binary_search(&point).expect("point lies in the ball")
}

/// A vector supported in the ball `N(center, radius)`; `coords` holds `m`
/// fiber coordinates per ball point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalVector {
    pub center: usize,
    pub radius: f64,
    pub m: usize,
    pub points: Vec<usize>,
    pub coords: Vec<C64>,
}

impl LocalVector {
    pub fn to_dense(&self, n: usize) -> Vec<C64> {
        let mut out = vec![ZERO; n * self.m];
        for (k, &p) in self.points.iter().enumerate() {
            out[p * self.m..(p + 1) * self.m].copy_from_slice(&self.coords[k * self.m..(k + 1) * self.m]);
        }
        out
    }

    /// Points whose fiber is not identically zero.
    pub fn support(&self) -> Vec<usize> {
        self.points
            .iter()
            .enumerate()
            .filter(|(k, _)| self.coords[k * self.m..(k + 1) * self.m].iter().any(|c| *c != ZERO))
            .map(|(_, &p)| p)
            .collect()
    }

    pub fn norm(&self) -> f64 {
        vector_norm(&self.coords)
    }
}

/// Points whose fiber in a dense point-major vector is not identically zero.
pub fn dense_support(v: &[C64], m: usize) -> Vec<usize> {
    v.chunks(m)
        .enumerate()
        .filter(|(_, f)| f.iter().any(|c| *c != ZERO))
        .map(|(p, _)| p)
        .collect()
}

/// Unit vector supported in one ball maximizing `||a xi||`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizedVector {
    pub vector: LocalVector,
    /// `||a xi||` for the returned unit `xi`.
    pub value: f64,
    pub norm: f64,
    pub ratio: f64,
}

/// Column structure of an operator: for each `z`, the entries `(y, block)`.
fn columns(a: &BandedOperator) -> Vec<Vec<(usize, &Block)>> {
    let mut cols = vec![Vec::new(); a.space().len()];
    for (&(y, z), b) in a.entries() {
        cols[z].push((y, b));
    }
    cols
}

fn distinct_balls(cover: &BallCover) -> Vec<usize> {
    let mut seen: HashSet<&[usize]> = HashSet::new();
    (0..cover.len()).filter(|&x| seen.insert(cover.ball(x))).collect()
}

fn first_max(values: &[(usize, f64)]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for &(x, v) in values {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((x, v));
        }
    }
    best
}

fn unit_triplet(dim: usize) -> SingularTriplet {
    let mut right = vec![ZERO; dim];
    right[0] = C64::new(1.0, 0.0);
    SingularTriplet { value: 0.0, left: Vec::new(), right }
}

/// `a P_{ball}` restricted to its nonzero rows; `None` when it vanishes.
fn column_block(cols: &[Vec<(usize, &Block)>], m: usize, ball: &[usize]) -> Option<DMatrix<C64>> {
    let mut rows: Vec<usize> = ball.iter().flat_map(|&z| cols[z].iter().map(|(y, _)| *y)).collect();
    rows.sort_unstable();
    rows.dedup();
    if rows.is_empty() {
        return None;
    }
    let mut dense = DMatrix::zeros(rows.len() * m, ball.len() * m);
    for (j, &z) in ball.iter().enumerate() {
        for &(y, b) in &cols[z] {
            let i = position(&rows, y);
            dense.view_mut((i * m, j * m), (m, m)).copy_from(b);
        }
    }
    Some(dense)
}

/// Largest column-block singular value over all balls, with its center and
/// right singular vector (first center wins ties).
fn best_column(a: &BandedOperator, cover: &BallCover) -> (usize, SingularTriplet) {
    let cols = columns(a);
    let m = a.multiplicity();
    let values: Vec<(usize, f64)> = distinct_balls(cover)
        .into_par_iter()
        .map(|x| (x, column_block(&cols, m, cover.ball(x)).map(|d| linalg::dense_spectral_norm(&d)).unwrap_or(0.0)))
        .collect();
    let (x, value) = first_max(&values).expect("space has at least one point");
    let mut t = match column_block(&cols, m, cover.ball(x)) {
        Some(d) if value > 0.0 => linalg::dense_top_singular(&d),
        _ => unit_triplet(cover.ball(x).len() * m),
    };
    t.value = value;
    (x, t)
}

fn local_vector(cover: &BallCover, center: usize, m: usize, coords: Vec<C64>) -> LocalVector {
    LocalVector { center, radius: cover.radius(), m, points: cover.ball(center).to_vec(), coords }
}

pub fn best_localized_vector(a: &BandedOperator, radius: f64) -> Result<LocalizedVector> {
    let cover = a.space().ball_cover(radius);
    best_localized_vector_with(a, &cover, a.operator_norm()?)
}

fn best_localized_vector_with(a: &BandedOperator, cover: &BallCover, norm: f64) -> Result<LocalizedVector> {
    if a.is_zero() {
        return Err(Error::ZeroOperator);
    }
    let (center, t) = best_column(a, cover);
    Ok(LocalizedVector {
        vector: local_vector(cover, center, a.multiplicity(), t.right),
        value: t.value,
        norm,
        ratio: t.value / norm,
    })
}

/// One operator's localization ratios at one scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    /// Propagation of the operator.
    pub r: f64,
    /// Ball radius.
    pub s: f64,
    /// Support diameter bound `2S` implied by the ball radius.
    pub diameter_bound: f64,
    pub norm: f64,
    /// `||psi_S(a)|| / ||a||`.
    pub square_ratio: f64,
    /// `max_x ||a P_{N(x,S)}|| / ||a||`.
    pub column_ratio: f64,
    /// `||psi_{S+R}(a)|| / ||a||`.
    pub extended_square_ratio: f64,
    pub square_witness: LocalVector,
    pub column_witness: LocalVector,
    pub chain_holds: bool,
}

impl LocalizationReport {
    pub const CSV_HEADER: [&'static str; 7] = ["space", "n", "R", "S", "sigma_sq", "sigma_col", "sigma_sq_extended"];

    pub fn csv_record(&self, space_id: &str, n: usize) -> Vec<String> {
        vec![
            space_id.to_string(),
            n.to_string(),
            self.r.to_string(),
            self.s.to_string(),
            self.square_ratio.to_string(),
            self.column_ratio.to_string(),
            self.extended_square_ratio.to_string(),
        ]
    }
}

pub fn localization_report(a: &BandedOperator, radius: f64) -> Result<LocalizationReport> {
    if a.is_zero() {
        return Err(Error::ZeroOperator);
    }
    let norm = a.operator_norm()?;
    let r = a.propagation();
    let space = a.space();
    let cover = Arc::new(space.ball_cover(radius));
    let extended = Arc::new(space.ball_cover(radius + r));

    let (sq_center, sq) = compress_with(a, &cover).top_block().expect("nonempty space");
    let column = best_localized_vector_with(a, &cover, norm)?;
    let extended_value = compress_with(a, &extended).block_norm();

    let square_ratio = sq.value / norm;
    let extended_square_ratio = extended_value / norm;
    let chain_holds =
        square_ratio <= column.ratio + CHAIN_SLACK && column.ratio <= extended_square_ratio + CHAIN_SLACK;
    Ok(LocalizationReport {
        r,
        s: radius,
        diameter_bound: 2.0 * radius,
        norm,
        square_ratio,
        column_ratio: column.ratio,
        extended_square_ratio,
        square_witness: local_vector(&cover, sq_center, a.multiplicity(), sq.right),
        column_witness: column.vector,
        chain_holds,
    })
}

/// Output of the `(a a^*)^n` trick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerTrickWitness {
    pub power: usize,
    /// First stage `j` with `||(aa*)^{j+1} z|| / ||(aa*)^j z|| >= c_n^{1/n}`.
    pub stage: usize,
    /// Localization ratio `c_n` of `(a a^*)^n` at the ball radius.
    pub power_ratio: f64,
    /// `c_n^{1/n}`.
    pub target: f64,
    /// `||a z'|| / (||a|| ||z'||)` for `z' = a^* (aa*)^j z`.
    pub achieved: f64,
    /// Stage ratios `||(aa*)^{j+1} z|| / ||(aa*)^j z||`, `j = 0..n`.
    pub stage_ratios: Vec<f64>,
    pub center: usize,
    /// Dense point-major `z'`.
    pub vector: Vec<C64>,
    pub support: Vec<usize>,
    pub support_diameter: f64,
    /// `(2n - 1) R + 2S`: the bound with the odd-power count of the
    /// propagation steps, in the ball-radius convention.
    pub declared_bound: f64,
    /// `2S + 2(2j + 1) R`: the diameter of `N(x, S + (2j + 1) R)`, which
    /// contains the support of `z'` by construction.
    pub neighborhood_bound: f64,
    pub ratio_holds: bool,
}

pub fn power_trick_witness(a: &BandedOperator, radius: f64, power: usize) -> Result<PowerTrickWitness> {
    if power == 0 {
        return Err(Error::InvalidParams("power must be positive".into()));
    }
    if a.is_zero() {
        return Err(Error::ZeroOperator);
    }
    let r = a.propagation();
    let unit = a.scale(C64::new(1.0 / a.operator_norm()?, 0.0));
    let unit_adj = unit.adjoint();
    let gram = unit.compose(&unit_adj)?;
    let mut powered = gram.clone();
    for _ in 1..power {
        powered = powered.compose(&gram)?;
    }
    let cover = unit.space().ball_cover(radius);
    let localized = best_localized_vector_with(&powered, &cover, powered.operator_norm()?)?;
    let c_n = localized.ratio;
    let target = c_n.powf(1.0 / power as f64);

    let n = unit.space().len();
    let mut iterates = vec![localized.vector.to_dense(n)];
    for _ in 0..power {
        let next = gram.apply(iterates.last().unwrap());
        iterates.push(next);
    }
    let norms: Vec<f64> = iterates.iter().map(|v| vector_norm(v)).collect();
    let stage_ratios: Vec<f64> = norms.windows(2).map(|w| if w[0] == 0.0 { 0.0 } else { w[1] / w[0] }).collect();
    let stage = stage_ratios.iter().position(|&q| q >= target).unwrap_or_else(|| {
        // Rounding can leave every ratio a hair below the geometric mean.
        let mut best = 0;
        for (j, q) in stage_ratios.iter().enumerate() {
            if *q > stage_ratios[best] {
                best = j;
            }
        }
        best
    });
    let witness = unit_adj.apply(&iterates[stage]);
    let witness_norm = vector_norm(&witness);
    if witness_norm == 0.0 {
        return Err(Error::DegenerateWitness { stage });
    }
    let image_norm = vector_norm(&unit.apply(&witness));
    let achieved = image_norm / (unit.operator_norm()? * witness_norm);
    let support = dense_support(&witness, unit.multiplicity());
    let support_diameter = unit.space().set_diameter(&support);
    Ok(PowerTrickWitness {
        power,
        stage,
        power_ratio: c_n,
        target,
        achieved,
        stage_ratios,
        center: localized.vector.center,
        vector: witness,
        support,
        support_diameter,
        declared_bound: (2 * power - 1) as f64 * r + 2.0 * radius,
        neighborhood_bound: 2.0 * radius + 2.0 * (2 * stage + 1) as f64 * r,
        ratio_holds: achieved >= target - POWER_TRICK_SLACK,
    })
}

/// Result of compressing an amplified operator by fiberwise isometries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplificationReduction {
    pub epsilon: f64,
    pub input_norm: f64,
    /// `eta_1(x)`: `V delta_x = delta_x (x) eta_1(x)`.
    pub right_fibers: Vec<Vec<C64>>,
    /// `eta_2(x)`: `W delta_x = delta_x (x) eta_2(x)`.
    pub left_fibers: Vec<Vec<C64>>,
    #[serde(skip)]
    pub compressed: Option<BandedOperator>,
    pub compressed_norm: f64,
    /// `||W^* a V|| / ||a||`.
    pub fraction: f64,
    pub bound_holds: bool,
}

impl AmplificationReduction {
    pub fn operator(&self) -> &BandedOperator {
        self.compressed.as_ref().expect("reduction carries its operator")
    }
}

fn fibers(v: &[C64], m: usize) -> Vec<Vec<C64>> {
    v.chunks(m)
        .map(|f| {
            let norm = vector_norm(f);
            if norm == 0.0 {
                let mut e = vec![ZERO; m];
                e[0] = C64::new(1.0, 0.0);
                e
            } else {
                f.iter().map(|c| c / norm).collect()
            }
        })
        .collect()
}

/// Builds isometries `V, W: l2(X) -> l2(X) (x) C^m` from the top singular
/// vectors of `a` and returns `W^* a V`, an operator with `m = 1`.
pub fn vector_amplification_reduction(a: &BandedOperator, epsilon: f64) -> Result<AmplificationReduction> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParams(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if a.is_zero() {
        return Err(Error::ZeroOperator);
    }
    let m = a.multiplicity();
    let n = a.space().len();
    let (input_norm, right_fibers, left_fibers, compressed) = if m == 1 {
        let one = vec![vec![C64::new(1.0, 0.0)]; n];
        (a.operator_norm()?, one.clone(), one, a.clone())
    } else {
        let top = a.top_singular(NormMethod::Auto)?;
        let right = fibers(&top.right, m);
        let left = fibers(&top.left, m);
        let entries = a.entries().iter().map(|(&(y, z), b)| {
            let mut acc = ZERO;
            for i in 0..m {
                for j in 0..m {
                    acc += left[y][i].conj() * b[(i, j)] * right[z][j];
                }
            }
            ((y, z), acc)
        });
        let compressed = BandedOperator::from_scalars(a.space().clone(), entries.collect::<Vec<_>>())?;
        (top.value, right, left, compressed)
    };
    let compressed_norm = compressed.operator_norm()?;
    let fraction = compressed_norm / input_norm;
    Ok(AmplificationReduction {
        epsilon,
        input_norm,
        right_fibers,
        left_fibers,
        compressed: Some(compressed),
        compressed_norm,
        fraction,
        bound_holds: fraction >= 1.0 - epsilon / 2.0 && fraction <= 1.0 + 1e-12,
    })
}

/// An operator on `L2(X, nu)` realized on the counting-measure space over
/// `supp(nu)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedReduction {
    /// Points of positive weight, ascending; point `k` of the new space is `support[k]`.
    pub support: Vec<usize>,
    pub operator: BandedOperator,
}

/// `b` acts on `L2(X, nu)` by `(b eta)(y) = sum_z b_{y,z} eta(z)`. The
/// isometry `V eta = sum_x nu(x)^{1/2} delta_x eta(x)` carries it to
/// `V b V^*`, whose entries are `(nu(y) / nu(z))^{1/2} b_{y,z}`.
pub fn weighted_reduction(b: &BandedOperator, weights: &[f64]) -> Result<WeightedReduction> {
    let n = b.space().len();
    if weights.len() != n {
        return Err(Error::InvalidParams(format!("{} weights for {n} points", weights.len())));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::InvalidParams(format!("weight {w} is not a finite nonnegative number")));
    }
    let support: Vec<usize> = (0..n).filter(|&x| weights[x] > 0.0).collect();
    if support.is_empty() {
        return Err(Error::AllWeightsZero);
    }
    let mut index = vec![usize::MAX; n];
    for (k, &x) in support.iter().enumerate() {
        index[x] = k;
    }
    let space = Arc::new(b.space().restrict(&support)?);
    let entries: Vec<_> = b
        .entries()
        .iter()
        .filter(|(&(y, z), _)| weights[y] > 0.0 && weights[z] > 0.0)
        .map(|(&(y, z), block)| {
            let factor = (weights[y] / weights[z]).sqrt();
            ((index[y], index[z]), block * C64::new(factor, 0.0))
        })
        .collect();
    Ok(WeightedReduction { support, operator: BandedOperator::from_entries(space, b.multiplicity(), entries)? })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    #[default]
    Random,
    IdentityOnly,
}

#[derive(Clone, Debug)]
pub struct OnlProfileConfig {
    pub r: f64,
    pub s: f64,
    pub samples: usize,
    /// Ratio evaluations available to the adversarial search.
    pub search_budget: usize,
    pub seed: u64,
    pub mode: SampleMode,
    pub field: Field,
    /// Extra operators included in the sample set and reported individually.
    pub probes: Vec<BandedOperator>,
}

impl OnlProfileConfig {
    pub fn new(r: f64, s: f64, samples: usize, seed: u64) -> Self {
        Self { r, s, samples, search_budget: 200, seed, mode: SampleMode::Random, field: Field::Complex, probes: Vec::new() }
    }
}

/// Sampled and searched statistics of `||psi_S(a)|| / ||a||` over `E_R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlProfile {
    pub r: f64,
    pub s: f64,
    pub diameter_bound: f64,
    pub samples: usize,
    pub min_ratio: f64,
    pub mean_ratio: f64,
    pub max_ratio: f64,
    /// Smallest ratio seen anywhere: an upper bound on the infimum over `E_R`.
    pub adversarial_upper: f64,
    pub adversarial_evaluations: usize,
    /// `1 / adversarial_upper`: a lower bound on `||(psi_S|E_R)^{-1}||`.
    pub inverse_norm_lower: f64,
    /// `max(0, 1 - epsilon)` from a supplied certificate.
    pub certified_lower: Option<f64>,
    pub certified_epsilon: Option<f64>,
    /// `certified_lower <= adversarial_upper` (true when no certificate).
    pub bounds_ordered: bool,
    pub probes: Vec<LocalizationReport>,
}

impl OnlProfile {
    pub const CSV_HEADER: [&'static str; 13] = [
        "space",
        "n",
        "R",
        "S",
        "diam_bound",
        "samples",
        "min_ratio",
        "mean_ratio",
        "max_ratio",
        "adversarial_upper",
        "inverse_norm_lower",
        "certified_lower",
        "probe_sigma_sq",
    ];

    pub fn csv_record(&self, space_id: &str, n: usize) -> Vec<String> {
        vec![
            space_id.to_string(),
            n.to_string(),
            self.r.to_string(),
            self.s.to_string(),
            self.diameter_bound.to_string(),
            self.samples.to_string(),
            self.min_ratio.to_string(),
            self.mean_ratio.to_string(),
            self.max_ratio.to_string(),
            self.adversarial_upper.to_string(),
            self.inverse_norm_lower.to_string(),
            self.certified_lower.map(|v| v.to_string()).unwrap_or_default(),
            self.probes.iter().map(|p| p.square_ratio.to_string()).collect::<Vec<_>>().join(";"),
        ]
    }
}

/// `||psi_S(a)|| / ||a||` for nonzero `a`.
pub fn square_ratio(a: &BandedOperator, cover: &Arc<BallCover>) -> Result<f64> {
    let norm = a.operator_norm()?;
    if norm == 0.0 {
        return Err(Error::ZeroOperator);
    }
    Ok(compress_with(a, cover).block_norm() / norm)
}

pub fn onl_profile(space: &Arc<FiniteMetricSpace>, config: &OnlProfileConfig, certificate: Option<&VectorCertificate>) -> Result<OnlProfile> {
    let (r, s) = (config.r, config.s);
    if !(r > 0.0) {
        return Err(Error::InvalidRadii { r, s, reason: "R must be positive" });
    }
    if s < r {
        return Err(Error::InvalidRadii { r, s, reason: "S must be at least R" });
    }
    if config.mode == SampleMode::Random && config.samples == 0 {
        return Err(Error::InvalidParams("at least one sample is required".into()));
    }
    for p in &config.probes {
        if p.propagation() > r {
            return Err(Error::InvalidOperator(format!("probe has propagation {} > R = {r}", p.propagation())));
        }
    }
    let cover = Arc::new(space.ball_cover(s));
    let mut sample_set: Vec<BandedOperator> = match config.mode {
        SampleMode::IdentityOnly => vec![BandedOperator::identity(space.clone(), 1)],
        SampleMode::Random => operators::sample_band(space, r, config.samples, config.seed, 1, config.field),
    };
    sample_set.extend(config.probes.iter().cloned());
    let ratios = sample_set
        .par_iter()
        .filter(|a| !a.is_zero())
        .map(|a| square_ratio(a, &cover))
        .collect::<Result<Vec<f64>>>()?;
    if ratios.is_empty() {
        return Err(Error::ZeroOperator);
    }
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;

    let (searched, evaluations) = match config.mode {
        SampleMode::IdentityOnly => (f64::INFINITY, 0),
        SampleMode::Random => adversarial_search(space, r, &cover, config.search_budget, config.seed, config.field)?,
    };
    let adversarial_upper = min_ratio.min(searched);

    let (certified_lower, certified_epsilon) = match certificate {
        Some(cert) => {
            if cert.radius() > s {
                return Err(Error::InvalidCertificate(format!(
                    "certificate radius {} exceeds the ball radius S = {s}",
                    cert.radius()
                )));
            }
            let eps = duality::certified_epsilon(cert, r);
            (Some((1.0 - eps.value).max(0.0)), Some(eps.value))
        }
        None => (None, None),
    };
    let probes = config.probes.iter().map(|p| localization_report(p, s)).collect::<Result<Vec<_>>>()?;
    Ok(OnlProfile {
        r,
        s,
        diameter_bound: 2.0 * s,
        samples: ratios.len(),
        min_ratio,
        mean_ratio,
        max_ratio,
        adversarial_upper,
        adversarial_evaluations: evaluations,
        inverse_norm_lower: 1.0 / adversarial_upper,
        certified_lower,
        certified_epsilon,
        bounds_ordered: certified_lower.is_none_or(|c| c <= adversarial_upper + CHAIN_SLACK),
        probes,
    })
}

const SEARCH_RESTARTS: usize = 3;
const SEARCH_MIN_STEP: f64 = 1e-6;

/// Multi-start coordinate descent on the square ratio. Returns the smallest
/// ratio found (the first minimizer is kept on ties) and the number of
/// evaluations spent.
fn adversarial_search(
    space: &Arc<FiniteMetricSpace>,
    r: f64,
    cover: &Arc<BallCover>,
    budget: usize,
    seed: u64,
    field: Field,
) -> Result<(f64, usize)> {
    if budget == 0 {
        return Ok((f64::INFINITY, 0));
    }
    let n = space.len();
    let positions: Vec<(usize, usize)> =
        (0..n).flat_map(|y| (0..n).map(move |z| (y, z))).filter(|&(y, z)| space.dist(y, z) <= r).collect();
    let directions: Vec<C64> = match field {
        Field::Real => vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)],
        Field::Complex => vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0)],
    };
    let restarts = SEARCH_RESTARTS.min(budget);
    let start_seeds = operators::derive_seeds(seed ^ 0xadd5_ea7c_4000_0000, restarts);
    let mut best = f64::INFINITY;
    let mut evaluations = 0;
    for (k, &start_seed) in start_seeds.iter().enumerate() {
        let limit = budget * (k + 1) / restarts;
        let mut current = random_banded(space.clone(), r, start_seed, 1, field);
        let mut value = square_ratio(&current, cover)?;
        evaluations += 1;
        if value < best {
            best = value;
        }
        let mut step = 0.5;
        'descent: while evaluations < limit && step >= SEARCH_MIN_STEP {
            let mut improved = false;
            for &(y, z) in &positions {
                for &dir in &directions {
                    if evaluations >= limit {
                        break 'descent;
                    }
                    let old = current.get(y, z).map(|b| b[(0, 0)]).unwrap_or(ZERO);
                    let mut candidate = current.clone();
                    candidate.insert(y, z, operators::scalar(old + dir * step))?;
                    if candidate.is_zero() {
                        continue;
                    }
                    let v = square_ratio(&candidate, cover)?;
                    evaluations += 1;
                    if v < value {
                        current = candidate;
                        value = v;
                        improved = true;
                        if v < best {
                            best = v;
                        }
                        break;
                    }
                }
            }
            if !improved {
                step /= 2.0;
            }
        }
    }
    Ok((best, evaluations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Family;

    fn space(f: Family) -> Arc<FiniteMetricSpace> {
        Arc::new(f.generate(0).unwrap())
    }

    #[test]
    fn identity_compresses_to_identity_blocks() {
        let c6 = space(Family::Cycle { n: 6 });
        let c = compress(&BandedOperator::identity(c6, 1), 1.0);
        for x in 0..6 {
            assert_eq!(c.block_dense(x), DMatrix::identity(3, 3));
        }
        assert!((c.block_norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cycle_adjacency_blocks_are_path_adjacencies() {
        let c6 = space(Family::Cycle { n: 6 });
        let c = compress(&BandedOperator::adjacency(c6), 1.0);
        // Ball {x-1, x, x+1}: sorted indices differ per center but the block
        // is always the adjacency of a 3-vertex path up to relabeling.
        for x in 0..6 {
            assert_eq!(c.block_entries(x).len(), 4);
        }
        assert!((c.block_norm() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn far_matrix_unit_compresses_to_zero() {
        let c6 = space(Family::Cycle { n: 6 });
        let e = BandedOperator::matrix_unit(c6.clone(), 0, 3).unwrap();
        assert!(compress(&e, 1.0).is_zero());
        assert!(compress(&e, 1.0).is_zero() && !compress(&e, 2.0).is_zero());
        assert_eq!(compress(&BandedOperator::zero(c6, 1), 2.0).block_norm(), 0.0);
    }

    #[test]
    fn localized_vector_examples() {
        let c6 = space(Family::Cycle { n: 6 });
        let id = best_localized_vector(&BandedOperator::identity(c6.clone(), 1), 1.0).unwrap();
        assert!((id.ratio - 1.0).abs() < 1e-12);
        let e = BandedOperator::matrix_unit(c6.clone(), 2, 4).unwrap();
        let lv = best_localized_vector(&e, 0.0).unwrap();
        assert!((lv.ratio - 1.0).abs() < 1e-12);
        assert_eq!(lv.vector.support(), vec![4]);
        assert!(matches!(best_localized_vector(&BandedOperator::zero(c6, 1), 1.0), Err(Error::ZeroOperator)));
    }

    #[test]
    fn report_chain_on_cycle_adjacency() {
        let c6 = space(Family::Cycle { n: 6 });
        let rep = localization_report(&BandedOperator::adjacency(c6), 1.0).unwrap();
        assert!((rep.square_ratio - 2f64.sqrt() / 2.0).abs() < 1e-12);
        assert!((rep.extended_square_ratio - (std::f64::consts::PI / 6.0).cos()).abs() < 1e-12);
        assert!(rep.chain_holds);
        assert!(rep.square_ratio <= rep.column_ratio && rep.column_ratio <= rep.extended_square_ratio);
        let ball = [0usize, 1, 5];
        assert!(rep.column_witness.support().iter().all(|p| rep.column_witness.points.contains(p)));
        assert_eq!(rep.column_witness.points.len(), ball.len());
    }

    #[test]
    fn power_trick_on_matrix_unit() {
        let c6 = space(Family::Cycle { n: 6 });
        let e = BandedOperator::matrix_unit(c6, 1, 3).unwrap();
        let w = power_trick_witness(&e, 0.0, 2).unwrap();
        assert_eq!(w.stage, 0);
        assert_eq!(w.center, 1);
        assert_eq!(w.support, vec![3]);
        assert!((w.achieved - 1.0).abs() < 1e-12);
    }

    #[test]
    fn amplification_reduction_rank_one() {
        let c6 = space(Family::Cycle { n: 6 });
        let u = [C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
        let v = [C64::new(1.0, 0.0), C64::new(1.0, 1.0)];
        let block = Block::from_fn(2, 2, |i, j| u[i] * v[j].conj() * 3.0);
        let a = BandedOperator::from_entries(c6, 2, [((0, 1), block)]).unwrap();
        let red = vector_amplification_reduction(&a, 0.1).unwrap();
        assert!((red.compressed_norm - red.input_norm).abs() < 1e-12 * red.input_norm);
        assert!(red.operator().propagation() <= a.propagation());
        assert!(matches!(vector_amplification_reduction(&a, 1.0), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn weighted_reduction_cases() {
        let c6 = space(Family::Cycle { n: 6 });
        let b = random_banded(c6.clone(), 1.0, 4, 1, Field::Complex);
        let same = weighted_reduction(&b, &[1.0; 6]).unwrap();
        assert_eq!(same.operator, b);
        let dropped = weighted_reduction(&b, &[1.0, 1.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(dropped.support, vec![0, 1, 3, 4, 5]);
        assert_eq!(dropped.operator.space().len(), 5);
        assert_eq!(dropped.operator.get(0, 1), b.get(0, 1));
        assert!(matches!(weighted_reduction(&b, &[0.0; 6]), Err(Error::AllWeightsZero)));
    }

    #[test]
    fn profile_radii_validated() {
        let c6 = space(Family::Cycle { n: 6 });
        let cfg = OnlProfileConfig::new(2.0, 1.0, 5, 1);
        assert!(matches!(onl_profile(&c6, &cfg, None), Err(Error::InvalidRadii { .. })));
    }

    #[test]
    fn identity_profile_is_trivial() {
        let c6 = space(Family::Cycle { n: 6 });
        let mut cfg = OnlProfileConfig::new(1.0, 1.0, 1, 1);
        cfg.mode = SampleMode::IdentityOnly;
        let p = onl_profile(&c6, &cfg, None).unwrap();
        assert_eq!((p.min_ratio, p.mean_ratio, p.max_ratio, p.adversarial_upper), (1.0, 1.0, 1.0, 1.0));
    }
}
