//! Diagonal LO-FI: precision `Υ + W Wᵀ` with diagonal `Υ` and a P×L factor.

use nalgebra::{DMatrix, DVector};

use crate::belief::{woodbury_solve, DlrBelief};
use crate::linalg::{cholesky, thin_svd};
use crate::lofi::DynamicsConfig;
use crate::model::{Linearization, Model};
use crate::{Error, Result};

/// Propagates the belief through `θ_t = γ θ_{t−1} + N(0, q I)`.
///
/// With `s = 1 / (γ² + qΥ)` (elementwise): `Υ' = sΥ` and
/// `W' = γ diag(s) W L⁻ᵀ`, where `L Lᵀ = I + q Wᵀ diag(s) W`.
pub fn predict(b: &DlrBelief, dynamics: &DynamicsConfig) -> Result<DlrBelief> {
    dynamics.validate()?;
    if dynamics.is_identity() {
        return Ok(b.clone());
    }
    let (gamma, q) = (dynamics.gamma, dynamics.process_noise);
    let g2 = gamma * gamma;
    let s = b.diag_precision.map(|u| 1.0 / (g2 + q * u));
    let diag_precision = b.diag_precision.component_mul(&s);
    let mean = &b.mean * gamma;

    let l = b.rank();
    let mut scaled = b.low_rank.clone();
    for r in 0..scaled.nrows() {
        scaled.row_mut(r).scale_mut(s[r]);
    }
    let low_rank = if l == 0 || gamma == 0.0 {
        DMatrix::zeros(b.dim(), l)
    } else {
        let core = DMatrix::<f64>::identity(l, l) + (b.low_rank.transpose() * &scaled) * q;
        let chol = cholesky(core, "predict core")?;
        // scaled · L⁻ᵀ, computed as (L⁻¹ scaledᵀ)ᵀ
        let lower = chol.l();
        let solved = lower
            .solve_lower_triangular(&scaled.transpose())
            .ok_or(Error::NotPositiveDefinite("predict core"))?;
        solved.transpose() * gamma
    };
    Ok(DlrBelief {
        mean,
        diag_precision,
        low_rank,
    })
}

/// `W̃ = [W | Hᵀ Aᵀ]`.
pub fn expanded_factor(b_pred: &DlrBelief, lin: &Linearization) -> Result<DMatrix<f64>> {
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
    w.columns_mut(0, l).copy_from(&b_pred.low_rank);
    w.columns_mut(l, g.ncols()).copy_from(&g);
    Ok(w)
}

/// Posterior mean under the untruncated precision `Υ + W̃ W̃ᵀ`.
pub fn updated_mean(b_pred: &DlrBelief, expanded: &DMatrix<f64>, lin: &Linearization, y: &DVector<f64>) -> Result<DVector<f64>> {
    let e = lin.innovation(y)?;
    let info = lin.jacobian.transpose() * (lin.whitener.transpose() * (&lin.whitener * e));
    let inv_diag = b_pred.diag_precision.map(|v| 1.0 / v);
    let step = woodbury_solve(&inv_diag, expanded, &DMatrix::from_column_slice(info.len(), 1, info.as_slice()))?;
    let mean = &b_pred.mean + step.column(0);
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("updated mean"));
    }
    Ok(mean)
}

/// Conditions on one linearized observation, then truncates the expanded
/// factor back to `rank` columns. The squared rows of the discarded columns
/// move into `Υ`, so the diagonal of the precision is exact.
pub fn update(b_pred: &DlrBelief, lin: &Linearization, y: &DVector<f64>, rank: usize) -> Result<DlrBelief> {
    let expanded = expanded_factor(b_pred, lin)?;
    let mean = updated_mean(b_pred, &expanded, lin, y)?;
    let (low_rank, tail) = truncate(&expanded, rank)?;
    Ok(DlrBelief {
        mean,
        diag_precision: &b_pred.diag_precision + tail,
        low_rank,
    })
}

/// Best rank-`rank` factor of `w wᵀ` and the diagonal of what is dropped.
pub fn truncate(w: &DMatrix<f64>, rank: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let p = w.nrows();
    if w.ncols() <= rank {
        let mut out = DMatrix::zeros(p, rank);
        out.columns_mut(0, w.ncols()).copy_from(w);
        return Ok((out, DVector::zeros(p)));
    }
    let svd = thin_svd(w)?;
    Ok((svd.leading_scaled(rank), svd.tail_diagonal(rank)))
}

/// Predict, linearize at the predicted mean, update. Returns the new belief
/// and the prediction `ŷ_t` made before `y` was used.
pub fn step(
    b: &DlrBelief,
    x: &DVector<f64>,
    y: &DVector<f64>,
    model: &Model,
    dynamics: &DynamicsConfig,
    rank: usize,
) -> Result<(DlrBelief, DVector<f64>)> {
    let pred = predict(b, dynamics)?;
    let lin = model.linearize(x, &pred.mean)?;
    let y_hat = lin.y_hat.clone();
    let post = update(&pred, &lin, y, rank)?;
    Ok((post, y_hat))
}
