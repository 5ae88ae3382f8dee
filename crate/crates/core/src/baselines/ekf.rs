use nalgebra::{DMatrix, DVector};

use crate::belief::{DenseBelief, DlrBelief};
use crate::linalg::{cholesky, spd_inverse, symmetrize};
use crate::lofi::{diagonal, DynamicsConfig};
use crate::model::{Linearization, Model};
use crate::{Error, Result};

/// A DLR belief of rank 0: mean and diagonal precision only.
pub type DiagonalBelief = DlrBelief;

/// `Σ_pred = γ² Σ + q I`, returned in precision form.
pub fn fcekf_predict(b: &DenseBelief, dynamics: &DynamicsConfig) -> Result<DenseBelief> {
    dynamics.validate()?;
    if dynamics.is_identity() {
        return Ok(b.clone());
    }
    let p = b.dim();
    let g2 = dynamics.gamma * dynamics.gamma;
    let cov = b.covariance()? * g2 + DMatrix::identity(p, p) * dynamics.process_noise;
    let mut precision = spd_inverse(cov, "predicted covariance")?;
    symmetrize(&mut precision);
    Ok(DenseBelief {
        mean: &b.mean * dynamics.gamma,
        precision,
    })
}

/// `Σ⁻¹ ← Σ_pred⁻¹ + Hᵀ R⁻¹ H`, `μ ← μ_pred + Σ Hᵀ R⁻¹ e`.
pub fn fcekf_update(b_pred: &DenseBelief, lin: &Linearization, y: &DVector<f64>) -> Result<DenseBelief> {
    check_cols(lin, b_pred.dim())?;
    let e = lin.innovation(y)?;
    let g = lin.whitened_jacobian_t();
    let mut precision = &b_pred.precision + &g * g.transpose();
    symmetrize(&mut precision);
    let chol = cholesky(precision.clone(), "posterior precision")?;
    let mean = &b_pred.mean + chol.solve(&(&g * (&lin.whitener * e)));
    Ok(DenseBelief { mean, precision })
}

pub fn fcekf_step(
    b: &DenseBelief,
    model: &Model,
    x: &DVector<f64>,
    y: &DVector<f64>,
    dynamics: &DynamicsConfig,
) -> Result<(DenseBelief, DVector<f64>)> {
    let pred = fcekf_predict(b, dynamics)?;
    let lin = model.linearize(x, &pred.mean)?;
    let post = fcekf_update(&pred, &lin, y)?;
    Ok((post, lin.y_hat))
}

fn check_cols(lin: &Linearization, p: usize) -> Result<()> {
    if lin.jacobian.ncols() != p {
        return Err(Error::DimensionMismatch {
            what: "Jacobian columns",
            expected: p,
            found: lin.jacobian.ncols(),
        });
    }
    Ok(())
}

fn check_diagonal(b: &DiagonalBelief) -> Result<()> {
    if b.rank() != 0 {
        return Err(Error::DimensionMismatch {
            what: "diagonal belief rank",
            expected: 0,
            found: b.rank(),
        });
    }
    Ok(())
}

/// Shared pieces of the diagonal EKF updates: the mean correction computed
/// in observation space, `Υ⁻¹ G (I + Gᵀ Υ⁻¹ G)⁻¹ A e` with `G = HᵀAᵀ`, and
/// the Cholesky factor of that C×C system.
struct DiagGain {
    mean: DVector<f64>,
    inv_diag: DVector<f64>,
    scaled_g: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

fn diag_gain(b_pred: &DiagonalBelief, lin: &Linearization, y: &DVector<f64>) -> Result<DiagGain> {
    check_diagonal(b_pred)?;
    check_cols(lin, b_pred.dim())?;
    let e = lin.innovation(y)?;
    let g = lin.whitened_jacobian_t();
    let inv_diag = b_pred.diag_precision.map(|v| 1.0 / v);
    let mut scaled_g = g.clone();
    for r in 0..scaled_g.nrows() {
        scaled_g.row_mut(r).scale_mut(inv_diag[r]);
    }
    let c = g.ncols();
    let s = DMatrix::<f64>::identity(c, c) + g.transpose() * &scaled_g;
    let chol = cholesky(s, "innovation covariance")?;
    let mean = &b_pred.mean + &scaled_g * chol.solve(&(&lin.whitener * e));
    Ok(DiagGain {
        mean,
        inv_diag,
        scaled_g,
        chol,
    })
}

/// Variational diagonal EKF: `Υ ← Υ_pred + diag(Hᵀ R⁻¹ H)`.
pub fn vdekf_update(b_pred: &DiagonalBelief, lin: &Linearization, y: &DVector<f64>) -> Result<DiagonalBelief> {
    let gain = diag_gain(b_pred, lin, y)?;
    let g = lin.whitened_jacobian_t();
    let info = DVector::from_fn(g.nrows(), |r, _| g.row(r).norm_squared());
    Ok(DlrBelief {
        mean: gain.mean,
        diag_precision: &b_pred.diag_precision + info,
        low_rank: DMatrix::zeros(b_pred.dim(), 0),
    })
}

/// Fully decoupled EKF: keeps the marginal variances of the full EKF
/// posterior, `Υ = 1 / diag((Υ_pred + Hᵀ R⁻¹ H)⁻¹)`.
pub fn fdekf_update(b_pred: &DiagonalBelief, lin: &Linearization, y: &DVector<f64>) -> Result<DiagonalBelief> {
    let gain = diag_gain(b_pred, lin, y)?;
    // diag(Σ*) = Υ⁻¹ − rowwise (Υ⁻¹G) S⁻¹ (Υ⁻¹G)ᵀ
    let solved = gain.chol.solve(&gain.scaled_g.transpose());
    let diag_precision = DVector::from_fn(b_pred.dim(), |r, _| {
        let reduction = gain.scaled_g.row(r).dot(&solved.column(r).transpose());
        1.0 / (gain.inv_diag[r] - reduction)
    });
    if diag_precision.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::NotPositiveDefinite("decoupled posterior variance"));
    }
    Ok(DlrBelief {
        mean: gain.mean,
        diag_precision,
        low_rank: DMatrix::zeros(b_pred.dim(), 0),
    })
}

pub fn vdekf_step(
    b: &DiagonalBelief,
    model: &Model,
    x: &DVector<f64>,
    y: &DVector<f64>,
    dynamics: &DynamicsConfig,
) -> Result<(DiagonalBelief, DVector<f64>)> {
    check_diagonal(b)?;
    let pred = diagonal::predict(b, dynamics)?;
    let lin = model.linearize(x, &pred.mean)?;
    let post = vdekf_update(&pred, &lin, y)?;
    Ok((post, lin.y_hat))
}

pub fn fdekf_step(
    b: &DiagonalBelief,
    model: &Model,
    x: &DVector<f64>,
    y: &DVector<f64>,
    dynamics: &DynamicsConfig,
) -> Result<(DiagonalBelief, DVector<f64>)> {
    check_diagonal(b)?;
    let pred = diagonal::predict(b, dynamics)?;
    let lin = model.linearize(x, &pred.mean)?;
    let post = fdekf_update(&pred, &lin, y)?;
    Ok((post, lin.y_hat))
}
