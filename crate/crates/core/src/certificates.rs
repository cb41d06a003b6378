//! Property A certificates: subset families, unit vector families and
//! positive definite kernels.
//!
//! Coordinates of `l2(X x {0..m})` are pairs `(point, fiber)`. Vector
//! certificates built from subsets keep the indicator form so that Gram
//! values are ratios of intersection counts and stay exact.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, C64};
use crate::space::FiniteMetricSpace;

/// Allowed deviation of `||xi_x||` from 1.
pub const UNIT_TOLERANCE: f64 = 1e-12;
/// Allowed Hermitian defect before a table is rejected, relative to `max(1, max|k|)`.
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

pub type Coord = (usize, usize);

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

fn check_support(space: &FiniteMetricSpace, x: usize, radius: f64, m: usize, coord: Coord) -> Result<()> {
    space.check_point(coord.0)?;
    if coord.1 >= m {
        return Err(Error::InvalidCertificate(format!("fiber {} at point {x} exceeds multiplicity {m}", coord.1)));
    }
    if space.dist(x, coord.0) > radius {
        return Err(Error::InvalidCertificate(format!(
            "coordinate {coord:?} of point {x} lies outside N({x}, {radius})"
        )));
    }
    Ok(())
}

/// Finite sets `A_x` of `N(x, S) x {0..m}`, one per point.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetCertificate {
    space: Arc<FiniteMetricSpace>,
    radius: f64,
    m: usize,
    sets: Vec<Vec<Coord>>,
}

impl SubsetCertificate {
    pub fn new(space: Arc<FiniteMetricSpace>, radius: f64, m: usize, sets: Vec<Vec<Coord>>) -> Result<Self> {
        if sets.len() != space.len() {
            return Err(Error::InvalidCertificate(format!("{} sets for {} points", sets.len(), space.len())));
        }
        if m == 0 {
            return Err(Error::InvalidCertificate("multiplicity must be positive".into()));
        }
        let mut sorted = Vec::with_capacity(sets.len());
        for (x, mut set) in sets.into_iter().enumerate() {
            set.sort_unstable();
            set.dedup();
            if set.is_empty() {
                return Err(Error::EmptySubset { point: x });
            }
            for &c in &set {
                check_support(&space, x, radius, m, c)?;
            }
            sorted.push(set);
        }
        Ok(Self { space, radius, m, sets: sorted })
    }

    pub fn space(&self) -> &Arc<FiniteMetricSpace> {
        &self.space
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn multiplicity(&self) -> usize {
        self.m
    }

    pub fn set(&self, x: usize) -> &[Coord] {
        &self.sets[x]
    }

    pub fn sets(&self) -> &[Vec<Coord>] {
        &self.sets
    }

    /// `true` when every `|A_x|` is the same.
    pub fn equal_sizes(&self) -> bool {
        self.sets.windows(2).all(|w| w[0].len() == w[1].len())
    }

    /// `|A_y symmetric-difference A_z|` and `|A_y intersect A_z|`.
    pub fn overlap(&self, y: usize, z: usize) -> (usize, usize) {
        let common = intersection_count(&self.sets[y], &self.sets[z]);
        (self.sets[y].len() + self.sets[z].len() - 2 * common, common)
    }
}

fn intersection_count(a: &[Coord], b: &[Coord]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

fn integer_sqrt(v: u64) -> Option<u64> {
    let r = (v as f64).sqrt().round() as u64;
    (r.checked_mul(r) == Some(v)).then_some(r)
}

/// `count / sqrt(ny nz)`, with exact division when the sizes agree.
pub(crate) fn indicator_gram(count: usize, ny: usize, nz: usize) -> f64 {
    if ny == nz {
        count as f64 / ny as f64
    } else {
        count as f64 / ((ny as f64) * (nz as f64)).sqrt()
    }
}

/// Storage of the vectors `xi_x`.
#[derive(Clone, Debug, PartialEq)]
pub enum VectorForm {
    /// `xi_x = |A_x|^{-1/2} 1_{A_x}`.
    Indicator(Vec<Vec<Coord>>),
    /// Sparse coordinates sorted by `(point, fiber)`, no exact zeros.
    General(Vec<Vec<(Coord, C64)>>),
}

/// Unit vectors `xi_x` with `supp(xi_x)` inside `N(x, S) x {0..m}`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorCertificate {
    space: Arc<FiniteMetricSpace>,
    radius: f64,
    m: usize,
    form: VectorForm,
    provenance: String,
}

impl VectorCertificate {
    pub fn from_vectors(
        space: Arc<FiniteMetricSpace>,
        radius: f64,
        m: usize,
        vectors: Vec<Vec<(Coord, C64)>>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if vectors.len() != space.len() {
            return Err(Error::InvalidCertificate(format!("{} vectors for {} points", vectors.len(), space.len())));
        }
        if m == 0 {
            return Err(Error::InvalidCertificate("multiplicity must be positive".into()));
        }
        let mut cleaned = Vec::with_capacity(vectors.len());
        for (x, v) in vectors.into_iter().enumerate() {
            let mut v: Vec<(Coord, C64)> = v.into_iter().filter(|(_, c)| *c != ZERO).collect();
            v.sort_by_key(|(c, _)| *c);
            if v.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidCertificate(format!("vector {x} repeats a coordinate")));
            }
            for &(c, _) in &v {
                check_support(&space, x, radius, m, c)?;
            }
            let norm = v.iter().map(|(_, c)| c.norm_sqr()).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::InvalidCertificate(format!("vector {x} has norm {norm}")));
            }
            cleaned.push(v);
        }
        Ok(Self { space, radius, m, form: VectorForm::General(cleaned), provenance: provenance.into() })
    }

    pub fn space(&self) -> &Arc<FiniteMetricSpace> {
        &self.space
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn multiplicity(&self) -> usize {
        self.m
    }

    pub fn form(&self) -> &VectorForm {
        &self.form
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    /// Support coordinates of `xi_x`, ascending.
    pub fn support(&self, x: usize) -> Vec<Coord> {
        match &self.form {
            VectorForm::Indicator(sets) => sets[x].clone(),
            VectorForm::General(vs) => vs[x].iter().map(|(c, _)| *c).collect(),
        }
    }

    /// `xi_x` as sparse coordinates.
    pub fn vector(&self, x: usize) -> Vec<(Coord, C64)> {
        match &self.form {
            VectorForm::Indicator(sets) => {
                let value = C64::new(1.0 / (sets[x].len() as f64).sqrt(), 0.0);
                sets[x].iter().map(|&c| (c, value)).collect()
            }
            VectorForm::General(vs) => vs[x].clone(),
        }
    }

    /// `<xi_y, xi_z> = sum xi_y(c) conj(xi_z(c))`. The diagonal is exactly 1.
    pub fn gram(&self, y: usize, z: usize) -> C64 {
        match &self.form {
            VectorForm::Indicator(sets) => {
                let count = intersection_count(&sets[y], &sets[z]);
                C64::new(indicator_gram(count, sets[y].len(), sets[z].len()), 0.0)
            }
            VectorForm::General(vs) => {
                if y == z {
                    return C64::new(1.0, 0.0);
                }
                let raw = general_inner(&vs[y], &vs[z]);
                raw / (self.raw_norm_sqr(y) * self.raw_norm_sqr(z)).sqrt()
            }
        }
    }

    pub(crate) fn raw_norm_sqr(&self, x: usize) -> f64 {
        match &self.form {
            VectorForm::Indicator(sets) => sets[x].len() as f64,
            VectorForm::General(vs) => general_inner(&vs[x], &vs[x]).re,
        }
    }

    /// Exact Gram value when both vectors are indicators and
    /// `|A_y| |A_z|` is a perfect square.
    pub fn gram_exact(&self, y: usize, z: usize) -> Option<Ratio<u64>> {
        let VectorForm::Indicator(sets) = &self.form else {
            return None;
        };
        let count = intersection_count(&sets[y], &sets[z]) as u64;
        let root = integer_sqrt(sets[y].len() as u64 * sets[z].len() as u64)?;
        Some(Ratio::new(count, root))
    }

    /// Pairs `(y, z)` with `d(y, z) <= radius`.
    fn pairs_within(&self, radius: f64) -> Vec<(usize, usize)> {
        let n = self.len();
        (0..n).flat_map(|y| (0..n).map(move |z| (y, z))).filter(|&(y, z)| self.space.dist(y, z) <= radius).collect()
    }

    /// `max_{d(y,z) <= R} |1 - <xi_y, xi_z>|`, with its exact value when
    /// every Gram value in range is exact.
    pub fn gram_deficit(&self, r: f64) -> (f64, Option<Ratio<u64>>) {
        let pairs = self.pairs_within(r);
        let value = pairs
            .par_iter()
            .map(|&(y, z)| (C64::new(1.0, 0.0) - self.gram(y, z)).norm())
            .reduce(|| 0.0, f64::max);
        let one = Ratio::from_integer(1u64);
        let exact = pairs
            .iter()
            .map(|&(y, z)| self.gram_exact(y, z).filter(|g| *g <= one).map(|g| one - g))
            .try_fold(Ratio::from_integer(0u64), |acc, d| d.map(|d| acc.max(d)));
        (value, exact)
    }
}

fn general_inner(a: &[(Coord, C64)], b: &[(Coord, C64)]) -> C64 {
    let (mut i, mut j) = (0, 0);
    let mut acc = ZERO;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1.conj();
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

pub fn subset_to_vector(c: &SubsetCertificate) -> VectorCertificate {
    VectorCertificate {
        space: c.space.clone(),
        radius: c.radius,
        m: c.m,
        form: VectorForm::Indicator(c.sets.clone()),
        provenance: "subsets".into(),
    }
}

/// A kernel `k` on `X x X`, stored sparsely: absent pairs are exact zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelCertificate {
    n: usize,
    propagation_bound: f64,
    values: BTreeMap<(usize, usize), C64>,
    support_radius: f64,
}

impl KernelCertificate {
    /// Builds a kernel from nonzero values; `support_radius` is measured.
    pub fn new(space: &FiniteMetricSpace, propagation_bound: f64, values: BTreeMap<(usize, usize), C64>) -> Result<Self> {
        let n = space.len();
        let mut support_radius: f64 = 0.0;
        let mut kept = BTreeMap::new();
        for ((y, z), v) in values {
            space.check_point(y)?;
            space.check_point(z)?;
            if v == ZERO {
                continue;
            }
            let d = space.dist(y, z);
            if d > propagation_bound {
                return Err(Error::InvalidCertificate(format!(
                    "k({y}, {z}) is nonzero at distance {d} > {propagation_bound}"
                )));
            }
            support_radius = support_radius.max(d);
            kept.insert((y, z), v);
        }
        Ok(Self { n, propagation_bound, values: kept, support_radius })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, y: usize, z: usize) -> C64 {
        self.values.get(&(y, z)).copied().unwrap_or(ZERO)
    }

    pub fn values(&self) -> &BTreeMap<(usize, usize), C64> {
        &self.values
    }

    pub fn propagation_bound(&self) -> f64 {
        self.propagation_bound
    }

    /// Largest `d(y, z)` with `k(y, z) != 0`.
    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for (&(y, z), &v) in &self.values {
            out[(y, z)] = v;
        }
        out
    }

    pub fn unit_diagonal(&self) -> bool {
        (0..self.n).all(|x| self.get(x, x) == C64::new(1.0, 0.0))
    }

    /// Exact `k(z, y) = conj k(y, z)`.
    pub fn is_hermitian(&self) -> bool {
        self.values.iter().all(|(&(y, z), v)| self.get(z, y) == v.conj())
    }
}

/// `k(y, z) = <xi_y, xi_z>` on pairs with `d(y, z) <= 2S`.
pub fn vector_to_kernel(v: &VectorCertificate) -> KernelCertificate {
    let bound = 2.0 * v.radius;
    let values: BTreeMap<_, _> = v
        .pairs_within(bound)
        .into_par_iter()
        .map(|(y, z)| ((y, z), v.gram(y, z)))
        .filter(|(_, g)| *g != ZERO)
        .collect();
    KernelCertificate::new(&v.space, bound, values).expect("Gram supports lie within 2S")
}

/// `max_{d(y,z) <= R} |1 - k(y, z)|`.
pub fn kernel_deviation(k: &KernelCertificate, space: &FiniteMetricSpace, r: f64) -> f64 {
    let n = k.len();
    (0..n)
        .into_par_iter()
        .map(|y| {
            (0..n)
                .filter(|&z| space.dist(y, z) <= r)
                .map(|z| (C64::new(1.0, 0.0) - k.get(y, z)).norm())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// `max_{d(y,z) <= R} ||xi_y - xi_z||`, from coordinate differences.
pub fn vector_deviation(v: &VectorCertificate, r: f64) -> f64 {
    v.pairs_within(r)
        .into_par_iter()
        .map(|(y, z)| vector_distance(v, y, z))
        .reduce(|| 0.0, f64::max)
}

/// `||xi_y - xi_z||`.
pub fn vector_distance(v: &VectorCertificate, y: usize, z: usize) -> f64 {
    let (a, b) = (v.vector(y), v.vector(z));
    let (mut i, mut j) = (0, 0);
    let mut acc = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(p), Some(q)) if p.0 == q.0 => {
                i += 1;
                j += 1;
                p.1 - q.1
            }
            (Some(p), Some(q)) if p.0 < q.0 => {
                i += 1;
                p.1
            }
            (Some(p), None) => {
                i += 1;
                p.1
            }
            (_, Some(q)) => {
                j += 1;
                -q.1
            }
            (None, None) => unreachable!(),
        };
        acc += next.norm_sqr();
    }
    acc.sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdCheck {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
    pub tolerance: f64,
}

/// Dense smallest-eigenvalue test. The default tolerance is
/// `1e-8 n max|k|`.
pub fn check_positive_definite(k: &DMatrix<C64>, tol: Option<f64>) -> Result<PsdCheck> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::InvalidParams(format!("kernel table is {}x{}", n, k.ncols())));
    }
    let scale = k.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let allowed = HERMITIAN_TOLERANCE * scale.max(1.0);
    for y in 0..n {
        for z in y..n {
            let defect = (k[(y, z)] - k[(z, y)].conj()).norm();
            if defect > allowed {
                return Err(Error::NotHermitian { y, z, defect });
            }
        }
    }
    let tolerance = tol.unwrap_or(1e-8 * n as f64 * scale);
    let min_eigenvalue = if n == 0 {
        0.0
    } else {
        let sym = (k + k.adjoint()) * C64::new(0.5, 0.0);
        linalg::hermitian_eigenvalues(&sym)[0]
    };
    Ok(PsdCheck { is_psd: min_eigenvalue >= -tolerance, min_eigenvalue, tolerance })
}

/// `xi_x = |N(x,S)|^{-1/2} 1_{N(x,S)}`.
pub fn ball_indicator_certificate(space: &Arc<FiniteMetricSpace>, radius: f64) -> Result<VectorCertificate> {
    if !(radius >= 0.0) {
        return Err(Error::InvalidParams(format!("radius must be nonnegative, got {radius}")));
    }
    let cover = space.ball_cover(radius);
    let sets = cover.balls().iter().map(|b| b.iter().map(|&p| (p, 0)).collect()).collect();
    let subsets = SubsetCertificate::new(space.clone(), radius, 1, sets)?;
    Ok(subset_to_vector(&subsets).with_provenance(format!("ball_indicator(S={radius})")))
}

/// Parent of each vertex toward `root`, after checking that `space` is the
/// path metric of a tree.
pub fn tree_parents(space: &FiniteMetricSpace, root: usize) -> Result<Vec<Option<usize>>> {
    space.check_point(root)?;
    let n = space.len();
    let edges = space.unit_pairs();
    if edges.len() + 1 != n {
        return Err(Error::NotATree(format!("{} unit-distance pairs on {n} points", edges.len())));
    }
    let graph = FiniteMetricSpace::from_graph(n, &edges).map_err(|e| Error::NotATree(e.to_string()))?;
    if let Some((y, z)) = (0..n).flat_map(|y| (0..n).map(move |z| (y, z))).find(|&(y, z)| graph.dist(y, z) != space.dist(y, z)) {
        return Err(Error::NotATree(format!("d({y}, {z}) = {} is not a path length", space.dist(y, z))));
    }
    let mut parents = vec![None; n];
    for [a, b] in edges {
        let (child, parent) = if space.dist(a, root) > space.dist(b, root) { (a, b) } else { (b, a) };
        parents[child] = Some(parent);
    }
    Ok(parents)
}

/// `xi_x = L^{-1/2}` times the indicator of the first `L` vertices of the
/// geodesic from `x` toward `root`, padded with `(root, 1), (root, 2), ...`
/// once the root is reached. Multiplicity `L`, radius `L - 1`.
pub fn tree_ray_certificate(space: &Arc<FiniteMetricSpace>, root: usize, length: usize) -> Result<VectorCertificate> {
    if length == 0 {
        return Err(Error::InvalidParams("segment length must be at least 1".into()));
    }
    let parents = tree_parents(space, root)?;
    let sets = (0..space.len())
        .map(|x| {
            let mut set = Vec::with_capacity(length);
            let mut cur = x;
            set.push((cur, 0));
            while set.len() < length {
                match parents[cur] {
                    Some(p) => {
                        cur = p;
                        set.push((cur, 0));
                    }
                    None => {
                        let fiber = set.iter().filter(|(p, _)| *p == root).count();
                        set.push((root, fiber));
                    }
                }
            }
            set
        })
        .collect();
    let subsets = SubsetCertificate::new(space.clone(), (length - 1) as f64, length, sets)?;
    Ok(subset_to_vector(&subsets).with_provenance(format!("tree_ray(root={root}, L={length})")))
}

/// On-disk certificate: a form tag plus payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub space: String,
    #[serde(default)]
    pub provenance: String,
    #[serde(flatten)]
    pub body: CertificateBody,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum CertificateBody {
    Subset {
        radius: f64,
        m: usize,
        sets: Vec<Vec<Coord>>,
    },
    Vector {
        radius: f64,
        m: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        indicators: Option<Vec<Vec<Coord>>>,
        /// Rows `[point, fiber, re, im]`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vectors: Option<Vec<Vec<(usize, usize, f64, f64)>>>,
    },
    Kernel {
        n: usize,
        propagation_bound: f64,
        /// Nonzero values `[y, z, re, im]`.
        entries: Vec<(usize, usize, f64, f64)>,
    },
}

/// A certificate in any of the three forms.
#[derive(Clone, Debug, PartialEq)]
pub enum Certificate {
    Subset(SubsetCertificate),
    Vector(VectorCertificate),
    Kernel(KernelCertificate),
}

impl CertificateFile {
    pub fn from_vector(v: &VectorCertificate, space_ref: impl Into<String>) -> Self {
        let body = match &v.form {
            VectorForm::Indicator(sets) => {
                CertificateBody::Vector { radius: v.radius, m: v.m, indicators: Some(sets.clone()), vectors: None }
            }
            VectorForm::General(vs) => CertificateBody::Vector {
                radius: v.radius,
                m: v.m,
                indicators: None,
                vectors: Some(vs.iter().map(|x| x.iter().map(|&((p, i), c)| (p, i, c.re, c.im)).collect()).collect()),
            },
        };
        Self { space: space_ref.into(), provenance: v.provenance.clone(), body }
    }

    pub fn from_subsets(c: &SubsetCertificate, space_ref: impl Into<String>) -> Self {
        Self {
            space: space_ref.into(),
            provenance: "subsets".into(),
            body: CertificateBody::Subset { radius: c.radius, m: c.m, sets: c.sets.clone() },
        }
    }

    pub fn from_kernel(k: &KernelCertificate, space_ref: impl Into<String>, provenance: impl Into<String>) -> Self {
        Self {
            space: space_ref.into(),
            provenance: provenance.into(),
            body: CertificateBody::Kernel {
                n: k.n,
                propagation_bound: k.propagation_bound,
                entries: k.values.iter().map(|(&(y, z), v)| (y, z, v.re, v.im)).collect(),
            },
        }
    }

    pub fn into_certificate(self, space: Arc<FiniteMetricSpace>) -> Result<Certificate> {
        match self.body {
            CertificateBody::Subset { radius, m, sets } => {
                Ok(Certificate::Subset(SubsetCertificate::new(space, radius, m, sets)?))
            }
            CertificateBody::Vector { radius, m, indicators: Some(sets), vectors: None } => {
                let subsets = SubsetCertificate::new(space, radius, m, sets)?;
                Ok(Certificate::Vector(subset_to_vector(&subsets).with_provenance(self.provenance)))
            }
            CertificateBody::Vector { radius, m, indicators: None, vectors: Some(vs) } => {
                let vectors = vs
                    .into_iter()
                    .map(|v| v.into_iter().map(|(p, i, re, im)| ((p, i), C64::new(re, im))).collect())
                    .collect();
                Ok(Certificate::Vector(VectorCertificate::from_vectors(space, radius, m, vectors, self.provenance)?))
            }
            CertificateBody::Vector { .. } => {
                Err(Error::InvalidCertificate("vector payload needs exactly one of indicators or vectors".into()))
            }
            CertificateBody::Kernel { n, propagation_bound, entries } => {
                if n != space.len() {
                    return Err(Error::SpaceMismatch);
                }
                let values = entries.into_iter().map(|(y, z, re, im)| ((y, z), C64::new(re, im))).collect();
                Ok(Certificate::Kernel(KernelCertificate::new(&space, propagation_bound, values)?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Family;

    fn space(f: Family) -> Arc<FiniteMetricSpace> {
        Arc::new(f.generate(0).unwrap())
    }

    #[test]
    fn singleton_subsets_give_identity_gram() {
        let c6 = space(Family::Cycle { n: 6 });
        let sets = (0..6).map(|x| vec![(x, 0)]).collect();
        let v = subset_to_vector(&SubsetCertificate::new(c6.clone(), 0.0, 1, sets).unwrap());
        for y in 0..6 {
            for z in 0..6 {
                assert_eq!(v.gram(y, z), C64::new(if y == z { 1.0 } else { 0.0 }, 0.0));
            }
        }
        let k = vector_to_kernel(&v);
        assert_eq!(k.to_dense(), DMatrix::identity(6, 6));
        assert_eq!(kernel_deviation(&k, &c6, 1.0), 1.0);
        assert!((vector_deviation(&v, 1.0) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empty_or_distant_subsets_rejected() {
        let c6 = space(Family::Cycle { n: 6 });
        let mut sets: Vec<Vec<Coord>> = (0..6).map(|x| vec![(x, 0)]).collect();
        sets[2].clear();
        assert!(matches!(SubsetCertificate::new(c6.clone(), 1.0, 1, sets), Err(Error::EmptySubset { point: 2 })));
        let mut sets: Vec<Vec<Coord>> = (0..6).map(|x| vec![(x, 0)]).collect();
        sets[0].push((3, 0));
        assert!(SubsetCertificate::new(c6, 1.0, 1, sets).is_err());
    }

    #[test]
    fn cycle_ball_indicators() {
        let c6 = space(Family::Cycle { n: 6 });
        let v = ball_indicator_certificate(&c6, 1.0).unwrap();
        assert_eq!(v.gram(0, 1), C64::new(2.0 / 3.0, 0.0));
        assert_eq!(v.gram_exact(0, 1), Some(Ratio::new(2, 3)));
        assert_eq!(v.gram_exact(0, 2), Some(Ratio::new(1, 3)));
        assert_eq!(v.gram(0, 3), ZERO);
        let k = vector_to_kernel(&v);
        assert_eq!(k.get(0, 2), C64::new(1.0 / 3.0, 0.0));
        assert_eq!(k.propagation_bound(), 2.0);
        assert!((kernel_deviation(&k, &c6, 1.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((vector_deviation(&v, 1.0) - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(v.gram_deficit(1.0).1, Some(Ratio::new(1, 3)));

        let c60 = space(Family::Cycle { n: 60 });
        let v = ball_indicator_certificate(&c60, 10.0).unwrap();
        assert_eq!(v.gram_exact(5, 6), Some(Ratio::new(20, 21)));
        assert_eq!(ball_indicator_certificate(&c60, 0.0).unwrap().gram(0, 1), ZERO);
    }

    #[test]
    fn psd_examples() {
        let id = DMatrix::<C64>::identity(4, 4);
        let r = check_positive_definite(&id, None).unwrap();
        assert!(r.is_psd && (r.min_eigenvalue - 1.0).abs() < 1e-14);
        let ones = DMatrix::from_element(6, 6, C64::new(1.0, 0.0));
        let r = check_positive_definite(&ones, None).unwrap();
        assert!(r.is_psd && r.min_eigenvalue.abs() < 1e-12);
        let mut bad = id.clone();
        bad[(0, 1)] = C64::new(0.5, 0.0);
        assert!(matches!(check_positive_definite(&bad, None), Err(Error::NotHermitian { y: 0, z: 1, .. })));
        let neg = DMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(2.0, 0.0), C64::new(2.0, 0.0), C64::new(1.0, 0.0)]);
        assert!(!check_positive_definite(&neg, None).unwrap().is_psd);
    }

    #[test]
    fn tree_rays_on_path() {
        let p = space(Family::Path { n: 15 });
        let v = tree_ray_certificate(&p, 0, 10).unwrap();
        assert_eq!(v.multiplicity(), 10);
        assert_eq!(v.gram_exact(12, 13), Some(Ratio::new(9, 10)));
        assert_eq!(v.gram_exact(0, 1), Some(Ratio::new(9, 10)));
        let id = tree_ray_certificate(&p, 0, 1).unwrap();
        assert_eq!(id.gram(3, 4), ZERO);
        let c6 = space(Family::Cycle { n: 6 });
        assert!(matches!(tree_ray_certificate(&c6, 0, 2), Err(Error::NotATree(_))));
    }

    #[test]
    fn binary_tree_rays() {
        let t = space(Family::BinaryTree { depth: 6 });
        let v = tree_ray_certificate(&t, 0, 4).unwrap();
        assert!(vector_deviation(&v, 1.0) <= 0.5f64.sqrt() + 1e-15);
    }

    #[test]
    fn general_vectors_have_exact_unit_diagonal() {
        let p = space(Family::Path { n: 3 });
        let s = 0.5f64.sqrt();
        let vectors = vec![
            vec![((0, 0), C64::new(s, 0.0)), ((1, 0), C64::new(0.0, s))],
            vec![((1, 0), C64::new(1.0, 0.0))],
            vec![((1, 0), C64::new(0.6, 0.0)), ((2, 0), C64::new(0.0, -0.8))],
        ];
        let v = VectorCertificate::from_vectors(p, 1.0, 1, vectors, "test").unwrap();
        for x in 0..3 {
            assert_eq!(v.gram(x, x), C64::new(1.0, 0.0));
        }
        let g = v.gram(0, 1);
        assert!((g - C64::new(0.0, s)).norm() < 1e-15);
        let d = vector_distance(&v, 0, 1);
        assert!((d * d - (2.0 - 2.0 * g.re)).abs() < 1e-12);
    }

    #[test]
    fn certificate_json_round_trip() {
        let c6 = space(Family::Cycle { n: 6 });
        let v = ball_indicator_certificate(&c6, 1.0).unwrap();
        let text = serde_json::to_string(&CertificateFile::from_vector(&v, "c6.json")).unwrap();
        assert!(text.contains(r#""form":"vector""#));
        let back: CertificateFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_certificate(c6.clone()).unwrap(), Certificate::Vector(v.clone()));

        let k = vector_to_kernel(&v);
        let text = serde_json::to_string(&CertificateFile::from_kernel(&k, "c6.json", "gram")).unwrap();
        let back: CertificateFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_certificate(c6).unwrap(), Certificate::Kernel(k));
    }
}
