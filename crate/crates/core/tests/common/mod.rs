#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use onl_core::space::{Family, GraphSpec};
use onl_core::{BandedOperator, FiniteMetricSpace, C64};

/// All-pairs shortest paths on an unweighted graph; `None` marks unreachable pairs.
pub fn floyd_warshall(graph: &GraphSpec) -> Vec<Vec<Option<u64>>> {
    let n = graph.n;
    let mut d = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(0);
    }
    for &[u, v] in &graph.edges {
        if u != v {
            d[u][v] = Some(1);
            d[v][u] = Some(1);
        }
    }
    for k in 0..n {
        for i in 0..n {
            let Some(ik) = d[i][k] else { continue };
            for j in 0..n {
                if let Some(kj) = d[k][j] {
                    if d[i][j].is_none_or(|ij| ik + kj < ij) {
                        d[i][j] = Some(ik + kj);
                    }
                }
            }
        }
    }
    d
}

/// `||A||` as the square root of the top eigenvalue of `A^* A`.
pub fn norm_oracle(a: &DMatrix<C64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let gram = a.adjoint() * a;
    let eig = SymmetricEigen::new(gram);
    eig.eigenvalues.iter().copied().fold(0.0, f64::max).max(0.0).sqrt()
}

pub fn min_eigenvalue_oracle(k: &DMatrix<C64>) -> f64 {
    SymmetricEigen::new(k.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Largest norm of the square submatrices of `a` on the balls `N(x, s)`,
/// read from the dense matrix.
pub fn block_norm_oracle(a: &BandedOperator, s: f64) -> f64 {
    let space = a.space();
    let dense = a.to_dense();
    let m = a.multiplicity();
    let n = space.len();
    (0..n)
        .map(|x| {
            let ball: Vec<usize> = (0..n).filter(|&y| space.dist(x, y) <= s).collect();
            let idx: Vec<usize> = ball.iter().flat_map(|&y| (0..m).map(move |i| y * m + i)).collect();
            let block = DMatrix::from_fn(idx.len(), idx.len(), |i, j| dense[(idx[i], idx[j])]);
            norm_oracle(&block)
        })
        .fold(0.0, f64::max)
}

/// Every generated family member with at most `max_n` points.
pub fn families_up_to(max_n: usize) -> Vec<(Family, u64)> {
    let mut out = Vec::new();
    for n in 3..=max_n {
        out.push((Family::Cycle { n }, 0));
    }
    for n in 1..=max_n {
        out.push((Family::Path { n }, 0));
    }
    for rows in 1..=max_n {
        for cols in 1..=max_n / rows {
            out.push((Family::Grid { rows, cols }, 0));
        }
    }
    for depth in 0..=20u32 {
        if (1usize << (depth + 1)) - 1 <= max_n {
            out.push((Family::BinaryTree { depth }, 0));
        }
    }
    for degree in [3, 4] {
        for n in (8..=max_n).step_by(8) {
            for seed in 0..3 {
                out.push((Family::RandomRegular { n, degree }, seed));
            }
        }
    }
    out
}

pub fn space(f: Family) -> Arc<FiniteMetricSpace> {
    Arc::new(f.generate(0).unwrap())
}

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}
