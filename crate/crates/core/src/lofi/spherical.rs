//! Spherical LO-FI: precision `η I + U Λ² Uᵀ` with orthonormal `U`.
//!
//! `η` only changes in the predict step; data enters through `(U, λ)`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float as _;

use crate::belief::SphericalBelief;
use crate::linalg::{cholesky, thin_svd};
use crate::lofi::DynamicsConfig;
use crate::model::{Linearization, Model};
use crate::rng::{permutation, seeded};
use crate::{Error, Result};

/// O(PL) predict. General form:
/// `η' = η/(γ² + qη)`, `λ'² = γ²λ² / ((γ² + qη)(γ² + qη + qλ²))`.
/// Under the steady-state constraint `η` is kept as is and
/// `λ'² = γ²λ² / (1 + qλ²)`.
pub fn predict_spherical(b: &SphericalBelief, dynamics: &DynamicsConfig) -> Result<SphericalBelief> {
    dynamics.validate()?;
    if dynamics.is_identity() {
        return Ok(b.clone());
    }
    let (gamma, q) = (dynamics.gamma, dynamics.process_noise);
    let g2 = gamma * gamma;
    let (eta, singular_values) = if dynamics.steady_state {
        (b.eta, b.singular_values.map(|l| (g2 * l * l / (1.0 + q * l * l)).sqrt()))
    } else {
        let denom = g2 + q * b.eta;
        (
            b.eta / denom,
            b.singular_values.map(|l| (g2 * l * l / (denom * (denom + q * l * l))).sqrt()),
        )
    };
    Ok(SphericalBelief {
        mean: &b.mean * gamma,
        eta,
        basis: b.basis.clone(),
        singular_values,
    })
}

fn expanded_factor(b_pred: &SphericalBelief, lin: &Linearization) -> Result<DMatrix<f64>> {
    let g = lin.whitened_jacobian_t();
    if g.nrows() != b_pred.dim() {
        return Err(Error::DimensionMismatch {
            what: "Jacobian columns",
            expected: b_pred.dim(),
            found: g.nrows(),
        });
    }
    let l = b_pred.rank();
    let mut w = DMatrix::zeros(b_pred.dim(), l + g.ncols());
    w.columns_mut(0, l).copy_from(&b_pred.low_rank());
    w.columns_mut(l, g.ncols()).copy_from(&g);
    Ok(w)
}

/// `μ + η⁻¹ (I − W̃ (ηI + W̃ᵀW̃)⁻¹ W̃ᵀ) Hᵀ R⁻¹ e`.
fn spherical_mean(b_pred: &SphericalBelief, expanded: &DMatrix<f64>, lin: &Linearization, y: &DVector<f64>) -> Result<DVector<f64>> {
    let e = lin.innovation(y)?;
    let g = lin.jacobian.transpose() * (lin.whitener.transpose() * (&lin.whitener * e));
    let k = expanded.ncols();
    let core = DMatrix::<f64>::identity(k, k) * b_pred.eta + expanded.transpose() * expanded;
    let inner = cholesky(core, "spherical update core")?.solve(&(expanded.transpose() * &g));
    let mean = &b_pred.mean + (g - expanded * inner) / b_pred.eta;
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("updated mean"));
    }
    Ok(mean)
}

/// Mean update plus the top-L singular pairs of `[UΛ | HᵀAᵀ]`.
pub fn update_spherical_svd(b_pred: &SphericalBelief, lin: &Linearization, y: &DVector<f64>) -> Result<SphericalBelief> {
    let expanded = expanded_factor(b_pred, lin)?;
    let mean = spherical_mean(b_pred, &expanded, lin, y)?;
    let (basis, singular_values) = top_singular_pairs(&expanded, b_pred.rank())?;
    Ok(SphericalBelief {
        mean,
        eta: b_pred.eta,
        basis,
        singular_values,
    })
}

/// Top-`rank` left singular vectors and values of `w`. Slots without a
/// nonzero singular value get deterministic orthonormal filler directions.
pub(crate) fn top_singular_pairs(w: &DMatrix<f64>, rank: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let svd = thin_svd(w)?;
    let mut basis = svd.leading_left(rank);
    let values = svd.leading_values(rank);
    let filled: Vec<bool> = values.iter().map(|&v| v > 0.0).collect();
    complete_orthonormal(&mut basis, &filled);
    Ok((basis, values))
}

/// Overwrites every column with `filled[c] == false` by a unit vector
/// orthogonal to all other columns, trying standard basis vectors in order.
pub(crate) fn complete_orthonormal(u: &mut DMatrix<f64>, filled: &[bool]) {
    let (p, l) = u.shape();
    let mut done: Vec<bool> = filled.to_vec();
    let mut candidate = 0;
    for c in 0..l {
        if done[c] {
            continue;
        }
        while candidate < p {
            let mut v = DVector::zeros(p);
            v[candidate] = 1.0;
            candidate += 1;
            // two Gram-Schmidt passes for numerical orthogonality
            for _ in 0..2 {
                for k in (0..l).filter(|&k| done[k]) {
                    let proj = u.column(k).dot(&v);
                    v -= u.column(k) * proj;
                }
            }
            let n = v.norm();
            if n > 0.5 {
                u.set_column(c, &(v / n));
                done[c] = true;
                break;
            }
        }
    }
}

/// Projection-based basis update in O(PLC).
///
/// Columns `g_j` of `HᵀAᵀ` are visited in a seeded random order. Each is
/// projected off the directions that currently carry information (`λ > 0`);
/// if the residual norm strictly exceeds the smallest `λ`, it replaces that
/// slot. `λ` is re-sorted non-increasing at the end.
pub fn svd_orth(
    lam: &DVector<f64>,
    u: &DMatrix<f64>,
    h: &DMatrix<f64>,
    a: &DMatrix<f64>,
    seed: u64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let l = lam.len();
    if u.ncols() != l {
        return Err(Error::DimensionMismatch {
            what: "basis columns",
            expected: l,
            found: u.ncols(),
        });
    }
    if h.ncols() != u.nrows() {
        return Err(Error::DimensionMismatch {
            what: "Jacobian columns",
            expected: u.nrows(),
            found: h.ncols(),
        });
    }
    let g = h.transpose() * a.transpose();
    let mut lam = lam.clone();
    let mut u = u.clone();
    if l == 0 {
        return Ok((lam, u));
    }
    let order = permutation(&mut seeded(seed), g.ncols());
    for j in order {
        let mut v = g.column(j).into_owned();
        for k in 0..l {
            if lam[k] > 0.0 {
                let proj = u.column(k).dot(&v);
                v -= u.column(k) * proj;
            }
        }
        let norm = v.norm();
        // last index among the minima, i.e. the tail slot when λ is sorted
        let mut slot = 0;
        for k in 0..l {
            if lam[k] <= lam[slot] {
                slot = k;
            }
        }
        if norm > lam[slot] {
            u.set_column(slot, &(v / norm));
            lam[slot] = norm;
        }
    }
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&x, &y| lam[y].total_cmp(&lam[x]));
    let lam = DVector::from_fn(l, |i, _| lam[order[i]]);
    let mut u = DMatrix::from_fn(u.nrows(), l, |r, c| u[(r, order[c])]);
    let filled: Vec<bool> = lam.iter().map(|&v| v > 0.0).collect();
    complete_orthonormal(&mut u, &filled);
    Ok((lam, u))
}

/// Same mean update as [`update_spherical_svd`]; basis via [`svd_orth`].
pub fn update_spherical_orth(b_pred: &SphericalBelief, lin: &Linearization, y: &DVector<f64>, seed: u64) -> Result<SphericalBelief> {
    let expanded = expanded_factor(b_pred, lin)?;
    let mean = spherical_mean(b_pred, &expanded, lin, y)?;
    let (singular_values, basis) = svd_orth(&b_pred.singular_values, &b_pred.basis, &lin.jacobian, &lin.whitener, seed)?;
    Ok(SphericalBelief {
        mean,
        eta: b_pred.eta,
        basis,
        singular_values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisUpdate {
    FullSvd,
    /// Projection update seeded per step.
    Orth,
}

/// Predict, linearize, update. `seed` drives the column order of the
/// projection update and is ignored by the full SVD.
pub fn step_spherical(
    b: &SphericalBelief,
    x: &DVector<f64>,
    y: &DVector<f64>,
    model: &Model,
    dynamics: &DynamicsConfig,
    basis_update: BasisUpdate,
    seed: u64,
) -> Result<(SphericalBelief, DVector<f64>)> {
    let pred = predict_spherical(b, dynamics)?;
    let lin = model.linearize(x, &pred.mean)?;
    let y_hat = lin.y_hat.clone();
    let post = match basis_update {
        BasisUpdate::FullSvd => update_spherical_svd(&pred, &lin, y)?,
        BasisUpdate::Orth => update_spherical_orth(&pred, &lin, y, seed)?,
    };
    Ok((post, y_hat))
}
