//! One-step-ahead predictive distributions over `y` given `x`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float as _;

use crate::belief::{woodbury_solve, DenseBelief, DlrBelief, SphericalBelief};
use crate::linalg::{cholesky, symmetrize};
use crate::model::{log_softmax, softmax, LikelihoodFamily, Linearization, Model};
use crate::{Error, Result};

/// Operations every Gaussian posterior representation supports.
pub trait Posterior {
    fn mean(&self) -> &DVector<f64>;
    fn dim(&self) -> usize;
    /// `Σ · rhs` for a P×k right-hand side.
    fn covariance_apply(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>>;
    /// `n` draws from the posterior, one per row.
    fn sample(&self, n: usize, seed: u64) -> Result<DMatrix<f64>>;
}

impl Posterior for DlrBelief {
    fn mean(&self) -> &DVector<f64> {
        &self.mean
    }
    fn dim(&self) -> usize {
        DlrBelief::dim(self)
    }
    fn covariance_apply(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check()?;
        woodbury_solve(&self.diag_precision.map(|v| 1.0 / v), &self.low_rank, rhs)
    }
    fn sample(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        DlrBelief::sample(self, n, seed)
    }
}

impl Posterior for SphericalBelief {
    fn mean(&self) -> &DVector<f64> {
        &self.mean
    }
    fn dim(&self) -> usize {
        SphericalBelief::dim(self)
    }
    fn covariance_apply(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
        for c in 0..rhs.ncols() {
            out.set_column(c, &self.solve_precision(&rhs.column(c).into_owned()));
        }
        Ok(out)
    }
    fn sample(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        SphericalBelief::sample(self, n, seed)
    }
}

impl Posterior for DenseBelief {
    fn mean(&self) -> &DVector<f64> {
        &self.mean
    }
    fn dim(&self) -> usize {
        DenseBelief::dim(self)
    }
    fn covariance_apply(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(cholesky(self.precision.clone(), "dense precision")?.solve(rhs))
    }
    fn sample(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        DenseBelief::sample(self, n, seed)
    }
}

/// A predictive distribution for a single input.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictive {
    Gaussian { mean: DVector<f64>, cov: DMatrix<f64> },
    Categorical { log_probs: DVector<f64> },
}

impl Predictive {
    /// The point prediction: Gaussian mean or class probabilities.
    pub fn point(&self) -> DVector<f64> {
        match self {
            Predictive::Gaussian { mean, .. } => mean.clone(),
            Predictive::Categorical { log_probs } => log_probs.map(|v| v.exp()),
        }
    }

    /// `−log p(y)`. Categorical targets are one-hot (or soft) label vectors.
    pub fn nll(&self, y: &DVector<f64>) -> Result<f64> {
        match self {
            Predictive::Gaussian { mean, cov } => gaussian_nll(y, mean, cov),
            Predictive::Categorical { log_probs } => {
                check_len("observation", log_probs.len(), y.len())?;
                Ok(-y.dot(log_probs))
            }
        }
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { what, expected, found });
    }
    Ok(())
}

/// `−log N(y | mean, cov)`.
pub fn gaussian_nll(y: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    check_len("observation", mean.len(), y.len())?;
    let chol = cholesky(cov.clone(), "predictive covariance")?;
    let e = y - mean;
    let z = chol.l().solve_lower_triangular(&e).ok_or(Error::NotPositiveDefinite("predictive covariance"))?;
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    Ok(0.5 * (y.len() as f64 * (2.0 * PI).ln() + log_det + z.norm_squared()))
}

/// Likelihood at a fixed parameter vector: `N(h(x,θ), R)` or `Cat(softmax)`.
pub fn predict_at(model: &Model, theta: &DVector<f64>, x: &DVector<f64>) -> Result<Predictive> {
    let out = model.network.evaluate(x, theta)?;
    match &model.family {
        LikelihoodFamily::GaussianRegression(noise) => Ok(Predictive::Gaussian {
            cov: noise.matrix(out.len()),
            mean: out,
        }),
        LikelihoodFamily::Categorical => Ok(Predictive::Categorical { log_probs: log_softmax(&out) }),
    }
}

/// Plugin approximation at the posterior mean.
pub fn plugin_predict<B: Posterior>(b: &B, model: &Model, x: &DVector<f64>) -> Result<Predictive> {
    predict_at(model, b.mean(), x)
}

/// Equal-weight mixture of likelihoods at posterior samples.
#[derive(Debug, Clone, PartialEq)]
pub struct McPredictive {
    pub components: Vec<Predictive>,
}

impl McPredictive {
    /// `−log( (1/S) Σ_s p(y | x, θ_s) )`, evaluated with log-sum-exp.
    pub fn nlpd(&self, y: &DVector<f64>) -> Result<f64> {
        let logs: Vec<f64> = self.components.iter().map(|c| c.nll(y).map(|v| -v)).collect::<Result<_>>()?;
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Ok(f64::INFINITY);
        }
        let s: f64 = logs.iter().map(|l| (l - m).exp()).sum();
        Ok(-(m + (s / logs.len() as f64).ln()))
    }

    /// Mixture mean of the point predictions.
    pub fn mean(&self) -> DVector<f64> {
        let mut acc = self.components[0].point();
        for c in &self.components[1..] {
            acc += c.point();
        }
        acc / self.components.len() as f64
    }
}

/// Monte Carlo predictive from `samples` posterior draws whose covariance is
/// scaled by `temperature`; `temperature = 0` returns the plugin predictive.
pub fn mc_predict<B: Posterior>(
    b: &B,
    model: &Model,
    x: &DVector<f64>,
    samples: usize,
    seed: u64,
    temperature: f64,
) -> Result<McPredictive> {
    if samples == 0 {
        return Err(Error::InvalidConfig("Monte Carlo prediction needs at least one sample".into()));
    }
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidConfig(alloc::format!("temperature must be ≥ 0, got {temperature}")));
    }
    if temperature == 0.0 {
        return Ok(McPredictive {
            components: alloc::vec![plugin_predict(b, model, x)?],
        });
    }
    let draws = b.sample(samples, seed)?;
    let scale = temperature.sqrt();
    let mean = b.mean();
    let mut components = Vec::with_capacity(samples);
    for s in 0..samples {
        let theta = DVector::from_fn(mean.len(), |j, _| mean[j] + scale * (draws[(s, j)] - mean[j]));
        components.push(predict_at(model, &theta, x)?);
    }
    Ok(McPredictive { components })
}

/// Linearized predictive `N(ŷ, H Σ Hᵀ + R)`; for a DLR belief `Σ Hᵀ` is a
/// Woodbury solve, so the cost is O(P(L + C)²).
pub fn gaussian_predict<B: Posterior>(b: &B, lin: &Linearization) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_len("Jacobian columns", b.dim(), lin.jacobian.ncols())?;
    let sh = b.covariance_apply(&lin.jacobian.transpose())?;
    let mut cov = &lin.jacobian * sh + &lin.obs_cov;
    symmetrize(&mut cov);
    Ok((lin.y_hat.clone(), cov))
}

/// Generalized probit: `p = softmax(z_c / √(1 + π v_c / 8))` with logit
/// variances `v_c = [F Σ Fᵀ]_cc` computed column by column.
pub fn probit_predict<B: Posterior>(b: &B, model: &Model, x: &DVector<f64>) -> Result<DVector<f64>> {
    if !model.is_classifier() {
        return Err(Error::InvalidConfig("probit prediction needs a categorical model".into()));
    }
    let (logits, f) = model.logits_with_jacobian(x, b.mean())?;
    let sf = b.covariance_apply(&f.transpose())?;
    let variances = DVector::from_fn(logits.len(), |c, _| f.row(c).dot(&sf.column(c).transpose()));
    Ok(probit_from_moments(&logits, &variances))
}

pub fn probit_from_moments(logits: &DVector<f64>, variances: &DVector<f64>) -> DVector<f64> {
    let scaled = DVector::from_fn(logits.len(), |c, _| logits[c] / (1.0 + PI * variances[c].max(0.0) / 8.0).sqrt());
    softmax(&scaled)
}

pub fn entropy(p: &DVector<f64>) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}
