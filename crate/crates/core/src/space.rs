//! Finite metric spaces with exact distance tables.
//!
//! A [`FiniteMetricSpace`] stores its full pairwise distance table. Graph
//! metrics are realized by breadth-first search and hold exact integers;
//! general tables may hold any nonnegative finite `f64`. Ball membership is
//! always decided by exact `<=` on the stored values.

use std::collections::VecDeque;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest size for which `validate_metric` checks every triple.
pub const EXHAUSTIVE_TRIANGLE_LIMIT: usize = 512;
const SAMPLED_TRIPLES: usize = 1 << 20;
const MAX_REPORTED_VIOLATIONS: usize = 1024;

/// A metric space on the points `0..n`. Labels are display-only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistanceTable", into = "DistanceTable")]
pub struct FiniteMetricSpace {
    labels: Vec<String>,
    dist: Vec<f64>,
    integral: bool,
}

/// Raw, unvalidated distance table; the on-disk space format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceTable {
    pub labels: Vec<String>,
    #[serde(with = "exact_rows")]
    pub dist: Vec<Vec<f64>>,
}

/// Edge-list graph format `{ "n": .., "edges": [[u, v], ..] }`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

/// Either accepted space file format.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceSource {
    Table(DistanceTable),
    Graph(GraphSpec),
}

impl SpaceSource {
    pub fn into_space(self) -> Result<FiniteMetricSpace> {
        match self {
            SpaceSource::Table(table) => FiniteMetricSpace::try_from(table),
            SpaceSource::Graph(graph) => FiniteMetricSpace::from_graph(graph.n, &graph.edges),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axiom", rename_all = "snake_case")]
pub enum MetricViolation {
    Shape { rows: usize, expected: usize },
    NotFinite { x: usize, y: usize, value: f64 },
    NonzeroDiagonal { x: usize, value: f64 },
    NotPositive { x: usize, y: usize, value: f64 },
    Asymmetric { x: usize, y: usize, forward: f64, backward: f64 },
    Triangle { x: usize, y: usize, z: usize, direct: f64, via: f64 },
}

impl fmt::Display for MetricViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricViolation::Shape { rows, expected } => {
                write!(f, "table row {rows} does not have {expected} entries")
            }
            MetricViolation::NotFinite { x, y, value } => {
                write!(f, "d({x},{y}) = {value} is not a finite nonnegative number")
            }
            MetricViolation::NonzeroDiagonal { x, value } => write!(f, "d({x},{x}) = {value} != 0"),
            MetricViolation::NotPositive { x, y, value } => {
                write!(f, "d({x},{y}) = {value} is not positive for distinct points")
            }
            MetricViolation::Asymmetric { x, y, forward, backward } => {
                write!(f, "d({x},{y}) = {forward} but d({y},{x}) = {backward}")
            }
            MetricViolation::Triangle { x, y, z, direct, via } => {
                write!(f, "d({x},{z}) = {direct} > d({x},{y}) + d({y},{z}) = {via}")
            }
        }
    }
}

/// Ball sizes at one radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryProfile {
    pub radius: f64,
    pub max_ball: usize,
    pub ball_sizes: Vec<usize>,
}

/// All closed balls `N(x, radius)`, one per center, each sorted ascending.
///
/// Because the metric is symmetric, `balls[y]` is also the list of centers
/// whose ball contains `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct BallCover {
    radius: f64,
    balls: Vec<Vec<usize>>,
}

impl BallCover {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn ball(&self, center: usize) -> &[usize] {
        &self.balls[center]
    }

    pub fn balls(&self) -> &[Vec<usize>] {
        &self.balls
    }

    pub fn contains(&self, center: usize, point: usize) -> bool {
        self.balls[center].binary_search(&point).is_ok()
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }
}

impl FiniteMetricSpace {
    /// Graph metric by breadth-first search from every vertex.
    pub fn from_graph(n: usize, edges: &[[usize; 2]]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("a space needs at least one point".into()));
        }
        let adjacency = adjacency_lists(n, edges)?;
        let mut dist = vec![0.0; n * n];
        let mut hops = vec![usize::MAX; n];
        let mut queue = VecDeque::with_capacity(n);
        for source in 0..n {
            hops.fill(usize::MAX);
            hops[source] = 0;
            queue.push_back(source);
            while let Some(v) = queue.pop_front() {
                for &w in &adjacency[v] {
                    if hops[w] == usize::MAX {
                        hops[w] = hops[v] + 1;
                        queue.push_back(w);
                    }
                }
            }
            for (target, &h) in hops.iter().enumerate() {
                if h == usize::MAX {
                    return Err(Error::DisconnectedGraph { from: source, to: target });
                }
                dist[source * n + target] = h as f64;
            }
        }
        Ok(Self {
            labels: (0..n).map(|i| i.to_string()).collect(),
            dist,
            integral: true,
        })
    }

    /// Builds a space from a table after checking every metric axiom.
    pub fn from_table(table: DistanceTable) -> Result<Self> {
        let violations = validate_metric(&table);
        if !violations.is_empty() {
            return Err(Error::InvalidMetric(violations));
        }
        let n = table.dist.len();
        let labels = if table.labels.len() == n {
            table.labels
        } else if table.labels.is_empty() {
            (0..n).map(|i| i.to_string()).collect()
        } else {
            return Err(Error::InvalidParams(format!(
                "{} labels for {n} points",
                table.labels.len()
            )));
        };
        let dist: Vec<f64> = table.dist.into_iter().flatten().collect();
        let integral = dist.iter().all(|d| d.fract() == 0.0);
        Ok(Self { labels, dist, integral })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::InvalidParams(format!(
                "{} labels for {} points",
                labels.len(),
                self.len()
            )));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// True when every distance is an integer (always the case for graph metrics).
    pub fn is_integral(&self) -> bool {
        self.integral
    }

    #[inline]
    pub fn dist(&self, x: usize, y: usize) -> f64 {
        self.dist[x * self.len() + y]
    }

    pub fn check_point(&self, x: usize) -> Result<()> {
        if x < self.len() {
            Ok(())
        } else {
            Err(Error::UnknownPoint { point: x, size: self.len() })
        }
    }

    /// Closed ball `{ y : d(x, y) <= radius }`, sorted ascending.
    pub fn ball(&self, x: usize, radius: f64) -> Result<Vec<usize>> {
        self.check_point(x)?;
        Ok(self.ball_unchecked(x, radius))
    }

    fn ball_unchecked(&self, x: usize, radius: f64) -> Vec<usize> {
        let n = self.len();
        self.dist[x * n..(x + 1) * n]
            .iter()
            .enumerate()
            .filter(|(_, &d)| d <= radius)
            .map(|(y, _)| y)
            .collect()
    }

    pub fn ball_cover(&self, radius: f64) -> BallCover {
        BallCover {
            radius,
            balls: (0..self.len()).map(|x| self.ball_unchecked(x, radius)).collect(),
        }
    }

    pub fn geometry_profile(&self, radius: f64) -> GeometryProfile {
        let ball_sizes: Vec<usize> =
            (0..self.len()).map(|x| self.ball_unchecked(x, radius).len()).collect();
        GeometryProfile {
            radius,
            max_ball: ball_sizes.iter().copied().max().unwrap_or(0),
            ball_sizes,
        }
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }

    /// Diameter of a point set (0 for sets with fewer than two points).
    pub fn set_diameter(&self, points: &[usize]) -> f64 {
        let mut diam: f64 = 0.0;
        for (i, &x) in points.iter().enumerate() {
            for &y in &points[i + 1..] {
                diam = diam.max(self.dist(x, y));
            }
        }
        diam
    }

    /// Pairs `(y, z)`, `y < z`, at distance exactly 1: the edges of a graph metric.
    pub fn unit_pairs(&self) -> Vec<[usize; 2]> {
        let n = self.len();
        let mut out = Vec::new();
        for y in 0..n {
            for z in y + 1..n {
                if self.dist(y, z) == 1.0 {
                    out.push([y, z]);
                }
            }
        }
        out
    }

    /// Induced metric on `points` (which must be sorted and distinct).
    pub fn restrict(&self, points: &[usize]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParams("restriction to an empty set".into()));
        }
        for w in points.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidParams("restriction points must be sorted and distinct".into()));
            }
        }
        for &p in points {
            self.check_point(p)?;
        }
        let m = points.len();
        let mut dist = Vec::with_capacity(m * m);
        for &x in points {
            for &y in points {
                dist.push(self.dist(x, y));
            }
        }
        Ok(Self {
            labels: points.iter().map(|&p| self.labels[p].clone()).collect(),
            integral: dist.iter().all(|d| d.fract() == 0.0),
            dist,
        })
    }

    pub fn to_table(&self) -> DistanceTable {
        let n = self.len();
        DistanceTable {
            labels: self.labels.clone(),
            dist: self.dist.chunks(n).map(|row| row.to_vec()).collect(),
        }
    }

    pub fn validate(&self) -> Vec<MetricViolation> {
        validate_metric(&self.to_table())
    }
}

impl TryFrom<DistanceTable> for FiniteMetricSpace {
    type Error = Error;

    fn try_from(table: DistanceTable) -> Result<Self> {
        FiniteMetricSpace::from_table(table)
    }
}

impl From<FiniteMetricSpace> for DistanceTable {
    fn from(space: FiniteMetricSpace) -> Self {
        space.to_table()
    }
}

fn adjacency_lists(n: usize, edges: &[[usize; 2]]) -> Result<Vec<Vec<usize>>> {
    let mut adjacency = vec![Vec::new(); n];
    for &[u, v] in edges {
        for w in [u, v] {
            if w >= n {
                return Err(Error::UnknownPoint { point: w, size: n });
            }
        }
        if u != v {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
        list.dedup();
    }
    Ok(adjacency)
}

/// Lists violated metric axioms; empty for a valid metric.
///
/// Every triple is checked for `n <= 512`; larger tables get a fixed-seed
/// sample of triples. At most 1024 violations are reported.
pub fn validate_metric(table: &DistanceTable) -> Vec<MetricViolation> {
    let n = table.dist.len();
    let mut out = Vec::new();
    let push = |out: &mut Vec<MetricViolation>, v| {
        if out.len() < MAX_REPORTED_VIOLATIONS {
            out.push(v);
        }
    };
    for (x, row) in table.dist.iter().enumerate() {
        if row.len() != n {
            push(&mut out, MetricViolation::Shape { rows: x, expected: n });
        }
    }
    if !out.is_empty() {
        return out;
    }
    let d = |x: usize, y: usize| table.dist[x][y];
    for x in 0..n {
        for y in 0..n {
            let v = d(x, y);
            if !v.is_finite() || v < 0.0 {
                push(&mut out, MetricViolation::NotFinite { x, y, value: v });
            }
        }
    }
    if !out.is_empty() {
        return out;
    }
    for x in 0..n {
        if d(x, x) != 0.0 {
            push(&mut out, MetricViolation::NonzeroDiagonal { x, value: d(x, x) });
        }
        for y in x + 1..n {
            if d(x, y) != d(y, x) {
                push(
                    &mut out,
                    MetricViolation::Asymmetric { x, y, forward: d(x, y), backward: d(y, x) },
                );
            }
            for (a, b) in [(x, y), (y, x)] {
                if d(a, b) <= 0.0 {
                    push(&mut out, MetricViolation::NotPositive { x: a, y: b, value: d(a, b) });
                }
            }
        }
    }
    let check = |out: &mut Vec<MetricViolation>, x: usize, y: usize, z: usize| {
        let via = d(x, y) + d(y, z);
        if d(x, z) > via {
            push(out, MetricViolation::Triangle { x, y, z, direct: d(x, z), via });
        }
    };
    if n <= EXHAUSTIVE_TRIANGLE_LIMIT {
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    check(&mut out, x, y, z);
                }
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..SAMPLED_TRIPLES {
            let (x, y, z) = (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n));
            check(&mut out, x, y, z);
        }
    }
    out
}

/// Standard families of test spaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    Cycle { n: usize },
    Path { n: usize },
    Grid { rows: usize, cols: usize },
    /// Complete binary tree of the given depth; vertex 0 is the root and
    /// vertex `i` has children `2i + 1`, `2i + 2`.
    BinaryTree { depth: u32 },
    RandomRegular { n: usize, degree: usize },
}

const RANDOM_REGULAR_ATTEMPTS: usize = 10_000;

impl Family {
    /// Vertex count and edge list; deterministic in `seed` (only
    /// `RandomRegular` consumes it).
    pub fn graph(&self, seed: u64) -> Result<GraphSpec> {
        let invalid = |msg: String| Err(Error::InvalidParams(msg));
        match *self {
            Family::Cycle { n } => {
                if n < 3 {
                    return invalid(format!("cycle needs n >= 3, got {n}"));
                }
                Ok(GraphSpec { n, edges: (0..n).map(|i| [i, (i + 1) % n]).collect() })
            }
            Family::Path { n } => {
                if n < 1 {
                    return invalid("path needs n >= 1".into());
                }
                Ok(GraphSpec { n, edges: (1..n).map(|i| [i - 1, i]).collect() })
            }
            Family::Grid { rows, cols } => {
                if rows < 1 || cols < 1 {
                    return invalid(format!("grid needs positive dimensions, got {rows}x{cols}"));
                }
                let mut edges = Vec::new();
                for r in 0..rows {
                    for c in 0..cols {
                        let v = r * cols + c;
                        if c + 1 < cols {
                            edges.push([v, v + 1]);
                        }
                        if r + 1 < rows {
                            edges.push([v, v + cols]);
                        }
                    }
                }
                Ok(GraphSpec { n: rows * cols, edges })
            }
            Family::BinaryTree { depth } => {
                if depth > 20 {
                    return invalid(format!("binary tree depth {depth} is too large"));
                }
                let n = (1usize << (depth + 1)) - 1;
                Ok(GraphSpec { n, edges: (1..n).map(|i| [(i - 1) / 2, i]).collect() })
            }
            Family::RandomRegular { n, degree } => random_regular(n, degree, seed),
        }
    }

    pub fn generate(&self, seed: u64) -> Result<FiniteMetricSpace> {
        let graph = self.graph(seed)?;
        let space = FiniteMetricSpace::from_graph(graph.n, &graph.edges)?;
        match *self {
            Family::Grid { cols, .. } => {
                let labels = (0..graph.n).map(|v| format!("{}_{}", v / cols, v % cols)).collect();
                space.with_labels(labels)
            }
            _ => Ok(space),
        }
    }
}

pub fn generate_family(family: &Family, seed: u64) -> Result<FiniteMetricSpace> {
    family.generate(seed)
}

/// Connected simple `degree`-regular graph from the configuration model,
/// resampled until simple and connected.
fn random_regular(n: usize, degree: usize, seed: u64) -> Result<GraphSpec> {
    if n == 0 || degree == 0 || degree >= n || (n * degree) % 2 != 0 {
        return Err(Error::InvalidParams(format!(
            "random regular graph needs 0 < degree < n and degree * n even, got n = {n}, degree = {degree}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, degree)).collect();
    'attempt: for _ in 0..RANDOM_REGULAR_ATTEMPTS {
        stubs.shuffle(&mut rng);
        let mut edges: Vec<[usize; 2]> = stubs
            .chunks_exact(2)
            .map(|p| [p[0].min(p[1]), p[0].max(p[1])])
            .collect();
        if edges.iter().any(|e| e[0] == e[1]) {
            continue;
        }
        edges.sort_unstable();
        if edges.windows(2).any(|w| w[0] == w[1]) {
            continue;
        }
        let adjacency = adjacency_lists(n, &edges)?;
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            continue 'attempt;
        }
        return Ok(GraphSpec { n, edges });
    }
    Err(Error::InvalidParams(format!(
        "no connected simple {degree}-regular graph on {n} vertices after {RANDOM_REGULAR_ATTEMPTS} attempts"
    )))
}

/// Serializes integer-valued distances as JSON integers.
mod exact_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Value {
        Int(u64),
        Float(f64),
    }

    const EXACT_INT_LIMIT: f64 = 9_007_199_254_740_992.0;

    pub fn serialize<S: Serializer>(rows: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Value>> = rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&d| {
                        if d >= 0.0 && d.fract() == 0.0 && d < EXACT_INT_LIMIT {
                            Value::Int(d as u64)
                        } else {
                            Value::Float(d)
                        }
                    })
                    .collect()
            })
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        let rows = Vec::<Vec<Value>>::deserialize(d)?;
        Ok(rows
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|v| match v {
                        Value::Int(i) => i as f64,
                        Value::Float(f) => f,
                    })
                    .collect()
            })
            .collect())
    }
}
