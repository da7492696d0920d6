//! Small dense linear-algebra helpers shared by the block solvers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;

/// Condition-number bound above which a Gram matrix gets a ridge term.
pub const RIDGE_CONDITION_LIMIT: f64 = 1e12;

/// Relative ridge size, scaled by `trace / dim` of the Gram matrix.
pub const RIDGE_RELATIVE: f64 = 1e-10;

/// Kronecker product `a ⊗ b`, an `mp × nq` block matrix with blocks `a[i,j]·b`.
pub fn kronecker(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let (m, n) = a.shape();
    let (p, q) = b.shape();
    let mut out = DenseMatrix::zeros(m * p, n * q);
    for j in 0..n {
        for i in 0..m {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for bj in 0..q {
                for bi in 0..p {
                    out[(i * p + bi, j * q + bj)] = aij * b[(bi, bj)];
                }
            }
        }
    }
    out
}

/// Column-wise Kronecker (Khatri-Rao) product.
pub fn khatri_rao(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "khatri-rao needs equal column counts, got {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let (m, n) = a.shape();
    let p = b.nrows();
    let mut out = DenseMatrix::zeros(m * p, n);
    for j in 0..n {
        for i in 0..m {
            for bi in 0..p {
                out[(i * p + bi, j)] = a[(i, j)] * b[(bi, j)];
            }
        }
    }
    Ok(out)
}

/// Outcome of a symmetric positive (semi-)definite solve.
#[derive(Debug, Clone)]
pub struct SpdSolution {
    pub x: DenseMatrix,
    /// True when the ridge fallback was used.
    pub regularized: bool,
}

/// Solves `gram · x = rhs` for a symmetric PSD `gram`.
///
/// The condition number is estimated from the Cholesky diagonal. When the
/// factorization fails or the estimate exceeds [`RIDGE_CONDITION_LIMIT`], the
/// system is solved with `gram + λI`, `λ = 1e-10 · trace / dim`.
pub fn solve_spd(gram: &DenseMatrix, rhs: &DenseMatrix) -> SpdSolution {
    let dim = gram.nrows();
    debug_assert_eq!(dim, gram.ncols());
    debug_assert_eq!(dim, rhs.nrows());
    if dim == 0 {
        return SpdSolution {
            x: rhs.clone(),
            regularized: false,
        };
    }
    if let Some(chol) = Cholesky::new(gram.clone()) {
        let l = chol.l_dirty();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..dim {
            let d = l[(i, i)].abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let cond = if lo > 0.0 { (hi / lo).powi(2) } else { f64::INFINITY };
        if cond.is_finite() && cond <= RIDGE_CONDITION_LIMIT {
            return SpdSolution {
                x: chol.solve(rhs),
                regularized: false,
            };
        }
    }
    let trace = gram.trace();
    let mut lambda = RIDGE_RELATIVE * trace / dim as f64;
    if !(lambda > 0.0) {
        lambda = RIDGE_RELATIVE;
    }
    let mut reg = gram.clone();
    for i in 0..dim {
        reg[(i, i)] += lambda;
    }
    let x = match Cholesky::new(reg.clone()) {
        Some(chol) => chol.solve(rhs),
        // Indefinite input; fall back to a pseudo-inverse.
        None => reg
            .pseudo_inverse(1e-14)
            .map(|pinv| pinv * rhs)
            .unwrap_or_else(|_| DenseMatrix::zeros(dim, rhs.ncols())),
    };
    SpdSolution {
        x,
        regularized: true,
    }
}

/// Vector form of [`solve_spd`].
pub fn solve_spd_vec(gram: &DenseMatrix, rhs: &DVector<f64>) -> (DVector<f64>, bool) {
    let rhs_m = DenseMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
    let sol = solve_spd(gram, &rhs_m);
    (sol.x.column(0).into_owned(), sol.regularized)
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order. Each eigenvector is sign-normalized so that its
/// largest-magnitude component is positive.
pub fn sorted_symmetric_eigen(sym: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let n = sym.nrows();
    let eig = SymmetricEigen::new(sym.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Builds an `r × c` matrix from a row-major closure; handy in tests and oracles.
pub fn from_fn(r: usize, c: usize, f: impl FnMut(usize, usize) -> f64) -> DenseMatrix {
    DMatrix::from_fn_generic(Dyn(r), Dyn(c), f)
}
