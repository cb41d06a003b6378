//! Spectral norms: dense singular values and block power iteration.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Dimension at or below which norms are computed from a dense SVD.
pub const DENSE_LIMIT: usize = 512;
pub const POWER_TOLERANCE: f64 = 1e-10;
pub const POWER_MAX_ITERATIONS: usize = 10_000;
const POWER_BLOCK: usize = 8;
const POWER_START_SEED: u64 = 0x6f6e_6c5f_7374_6172;

/// Which algorithm evaluates a spectral norm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NormMethod {
    /// Dense SVD up to [`DENSE_LIMIT`], power iteration beyond.
    #[default]
    Auto,
    Dense,
    PowerIteration,
}

impl NormMethod {
    pub fn resolve(self, dim: usize) -> NormMethod {
        match self {
            NormMethod::Auto if dim <= DENSE_LIMIT => NormMethod::Dense,
            NormMethod::Auto => NormMethod::PowerIteration,
            other => other,
        }
    }
}

/// A matrix that can be applied to vectors without being materialized.
pub trait LinearMap {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `out = A x`; `out` has length `rows()`.
    fn apply_into(&self, x: &[C64], out: &mut [C64]);
    /// `out = A^* y`; `out` has length `cols()`.
    fn apply_adjoint_into(&self, y: &[C64], out: &mut [C64]);
}

impl LinearMap for DMatrix<C64> {
    fn rows(&self) -> usize {
        self.nrows()
    }

    fn cols(&self) -> usize {
        self.ncols()
    }

    fn apply_into(&self, x: &[C64], out: &mut [C64]) {
        let v = self * DVector::from_column_slice(x);
        out.copy_from_slice(v.as_slice());
    }

    fn apply_adjoint_into(&self, y: &[C64], out: &mut [C64]) {
        let v = self.ad_mul(&DVector::from_column_slice(y));
        out.copy_from_slice(v.as_slice());
    }
}

/// Top singular value with unit singular vectors: `A right = value * left`.
#[derive(Clone, Debug)]
pub struct SingularTriplet {
    pub value: f64,
    pub left: Vec<C64>,
    pub right: Vec<C64>,
}

pub fn vector_norm(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value of a dense matrix (0 for empty matrices).
pub fn dense_spectral_norm(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Top singular triplet of a dense matrix from a full SVD.
pub fn dense_top_singular(m: &DMatrix<C64>) -> SingularTriplet {
    let (rows, cols) = m.shape();
    if m.is_empty() {
        return SingularTriplet { value: 0.0, left: vec![C64::new(0.0, 0.0); rows], right: vec![C64::new(0.0, 0.0); cols] };
    }
    let svd = m.clone().svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut best = 0;
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > svd.singular_values[best] {
            best = i;
        }
    }
    SingularTriplet {
        value: svd.singular_values[best],
        left: u.column(best).iter().copied().collect(),
        // v_t holds V^*, so the right singular vector is the conjugated row.
        right: v_t.row(best).iter().map(|c| c.conj()).collect(),
    }
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let mut values: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Top singular triplet by block power iteration on `A^* A`.
///
/// The iterate is an orthonormal block of [`POWER_BLOCK`] vectors from a
/// fixed pseudo-random start; each step applies `A^* A`, extracts Ritz pairs
/// and stops once the top Ritz pair has residual
/// `|A^*A x - theta x| <= tol * theta`.
pub fn power_iteration<M: LinearMap + ?Sized>(op: &M, tol: f64, max_iterations: usize) -> Result<SingularTriplet> {
    let (rows, cols) = (op.rows(), op.cols());
    let zero = C64::new(0.0, 0.0);
    if rows == 0 || cols == 0 {
        return Ok(SingularTriplet { value: 0.0, left: vec![zero; rows], right: vec![zero; cols] });
    }
    let p = POWER_BLOCK.min(cols);
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_START_SEED);
    let start = DMatrix::<C64>::from_fn(cols, p, |_, _| {
        C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
    });
    let mut q = start.qr().q();
    let mut w = DMatrix::<C64>::zeros(rows, p);
    let mut z = DMatrix::<C64>::zeros(cols, p);
    let mut col_out = vec![zero; rows];
    let mut col_back = vec![zero; cols];
    for _ in 0..max_iterations {
        for j in 0..p {
            let qj: Vec<C64> = q.column(j).iter().copied().collect();
            op.apply_into(&qj, &mut col_out);
            w.column_mut(j).copy_from_slice(&col_out);
            op.apply_adjoint_into(&col_out, &mut col_back);
            z.column_mut(j).copy_from_slice(&col_back);
        }
        let gram = w.ad_mul(&w);
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let theta = eig.eigenvalues[order[0]].max(0.0);
        if theta == 0.0 {
            // A Q = 0 for a generic start block only when A = 0.
            return Ok(SingularTriplet { value: 0.0, left: vec![zero; rows], right: q.column(0).iter().copied().collect() });
        }
        let u_top = eig.eigenvectors.column(order[0]).into_owned();
        let x = &q * &u_top;
        let ax2 = &z * &u_top;
        let residual = (&ax2 - &x * C64::new(theta, 0.0)).norm();
        if residual <= tol * theta {
            let value = theta.sqrt();
            let left_vec = &w * &u_top;
            let left_norm = left_vec.norm();
            let left = left_vec.iter().map(|c| c / left_norm).collect();
            let x_norm = x.norm();
            return Ok(SingularTriplet { value, left, right: x.iter().map(|c| c / x_norm).collect() });
        }
        let sorted = DMatrix::from_fn(p, p, |i, j| eig.eigenvectors[(i, order[j])]);
        q = (&z * sorted).qr().q();
    }
    Err(Error::ConvergenceFailure { iterations: max_iterations, tol })
}

/// Top singular triplet by the requested method.
pub fn top_singular<M: LinearMap + ?Sized>(op: &M, dense: impl FnOnce() -> DMatrix<C64>, method: NormMethod) -> Result<SingularTriplet> {
    match method.resolve(op.rows().max(op.cols())) {
        NormMethod::PowerIteration => power_iteration(op, POWER_TOLERANCE, POWER_MAX_ITERATIONS),
        _ => Ok(dense_top_singular(&dense())),
    }
}
