//! Dense linear-algebra helpers shared by the filters: Cholesky wrappers,
//! sorted symmetric eigendecomposition, the Gram-matrix thin SVD used for
//! rank truncation, and observation-noise whiteners.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float as _;

use crate::{Error, Result};

/// Relative cutoff below which a singular value is treated as zero.
pub const SINGULAR_CUTOFF: f64 = 1e-12;

pub fn cholesky(m: DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Cholesky::new(m).ok_or(Error::NotPositiveDefinite(what))
}

pub fn spd_inverse(m: DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    Ok(cholesky(m, what)?.inverse())
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// non-increasing order. Ties keep the solver's original index order.
pub fn sorted_symmetric_eigen(m: DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("symmetric eigendecomposition input"));
    }
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 1000 * n.max(10))
        .ok_or(Error::DecompositionFailed)?;
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal eigenvalues keep index order
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Flips the sign of `u` (and `companion`, if given) so the first entry that
/// is non-negligible relative to the column's largest magnitude is positive.
pub fn canonical_sign(u: &mut DMatrix<f64>, col: usize, companion: Option<&mut DMatrix<f64>>) {
    let scale = u.column(col).amax();
    if scale == 0.0 {
        return;
    }
    let first = u
        .column(col)
        .iter()
        .copied()
        .find(|v| v.abs() > 1e-10 * scale)
        .unwrap_or(0.0);
    if first < 0.0 {
        u.column_mut(col).neg_mut();
        if let Some(c) = companion {
            c.column_mut(col).neg_mut();
        }
    }
}

/// Thin SVD of a tall-or-wide factor `w` (P×K), returned as singular values
/// (non-increasing), left singular vectors and `scaled = U·diag(σ)`.
///
/// When `P > K` the decomposition goes through the K×K Gram matrix `wᵀw`,
/// and `scaled` is formed as `w·V`, which is an exact orthogonal transform of
/// `w` (so `scaled·scaledᵀ = w·wᵀ` up to rounding even when the spectrum is
/// badly conditioned). Otherwise the P×P matrix `w·wᵀ` is diagonalized.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub singular_values: DVector<f64>,
    pub left: DMatrix<f64>,
    pub scaled: DMatrix<f64>,
}

impl ThinSvd {
    pub fn len(&self) -> usize {
        self.singular_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.singular_values.is_empty()
    }

    /// First `rank` scaled columns, zero-padded when fewer exist.
    pub fn leading_scaled(&self, rank: usize) -> DMatrix<f64> {
        take_columns(&self.scaled, rank)
    }

    pub fn leading_left(&self, rank: usize) -> DMatrix<f64> {
        take_columns(&self.left, rank)
    }

    pub fn leading_values(&self, rank: usize) -> DVector<f64> {
        DVector::from_fn(rank, |i, _| {
            if i < self.len() {
                self.singular_values[i]
            } else {
                0.0
            }
        })
    }

    /// Row-wise sum of squares of the scaled columns past `rank`, i.e.
    /// `diag(W× W×ᵀ)` for the discarded tail.
    pub fn tail_diagonal(&self, rank: usize) -> DVector<f64> {
        let p = self.scaled.nrows();
        let mut d = DVector::zeros(p);
        for c in rank.min(self.len())..self.len() {
            for r in 0..p {
                d[r] += self.scaled[(r, c)] * self.scaled[(r, c)];
            }
        }
        d
    }
}

fn take_columns(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let avail = m.ncols().min(k);
    let mut out = DMatrix::zeros(m.nrows(), k);
    if avail > 0 {
        out.columns_mut(0, avail).copy_from(&m.columns(0, avail));
    }
    out
}

pub fn thin_svd(w: &DMatrix<f64>) -> Result<ThinSvd> {
    let (p, k) = w.shape();
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("factor passed to SVD"));
    }
    let (mut scaled, count) = if p > k {
        let gram = w.transpose() * w;
        let (_, v) = sorted_symmetric_eigen(gram)?;
        (w * v, k)
    } else {
        let outer = w * w.transpose();
        let (values, u) = sorted_symmetric_eigen(outer)?;
        let mut s = u;
        for c in 0..p {
            let sigma = values[c].max(0.0).sqrt();
            s.column_mut(c).scale_mut(sigma);
        }
        (s, p)
    };
    let mut values = DVector::from_fn(count, |i, _| scaled.column(i).norm());
    // The eigen ordering and the column norms agree up to rounding; re-sort
    // on the norms so the returned values are exactly non-increasing.
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    scaled = DMatrix::from_fn(p, count, |r, c| scaled[(r, order[c])]);
    values = DVector::from_fn(count, |i, _| values[order[i]]);

    let sigma_max = if count > 0 { values[0] } else { 0.0 };
    let mut left = DMatrix::zeros(p, count);
    for c in 0..count {
        if values[c] > SINGULAR_CUTOFF * sigma_max && values[c] > 0.0 {
            let col = scaled.column(c) / values[c];
            left.set_column(c, &col);
            canonical_sign(&mut left, c, Some(&mut scaled));
        } else {
            values[c] = 0.0;
            scaled.column_mut(c).fill(0.0);
        }
    }
    Ok(ThinSvd {
        singular_values: values,
        left,
        scaled,
    })
}

/// `diag(W Wᵀ)` in O(PL).
pub fn diag_outer(w: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(w.nrows(), |r, _| w.row(r).norm_squared())
}

/// Whitener `A` with `AᵀA = R⁻¹`, from the Cholesky factor `R = LLᵀ` (`A = L⁻¹`).
pub fn cholesky_whitener(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = cholesky(r.clone(), "observation covariance")?;
    let l = chol.l();
    let n = l.nrows();
    l.solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(Error::NotPositiveDefinite("observation covariance"))
}

/// Whitener with `AᵀA = R⁺` built from the eigendecomposition of a singular
/// PSD `R`, keeping eigenvalues above `tol`. Dropped directions become zero rows.
pub fn pseudo_inverse_whitener(r: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let (values, vectors) = sorted_symmetric_eigen(r.clone())?;
    let n = r.nrows();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        if values[i] > tol {
            let s = 1.0 / values[i].sqrt();
            for j in 0..n {
                a[(i, j)] = vectors[(j, i)] * s;
            }
        }
    }
    Ok(a)
}

pub fn frobenius_relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let denom = b.norm().max(f64::MIN_POSITIVE);
    (a - b).norm() / denom
}
