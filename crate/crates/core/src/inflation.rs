//! Covariance inflation, applied once per step just before predict.
//!
//! All variants divide the low-rank factor by `√(1+α)`. For the diagonal:
//! - `Simple`: `Υ / (1+α)`, which multiplies the covariance by `1+α`;
//! - `Bayesian`, `Hybrid`: `Υ / (1+α) + αη/(1+α)`, which mixes in the latent
//!   prior precision `η`;
//! - `Bayesian` also pulls the mean toward the latent prior mean `Γ μ₀`.

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float as _;

use crate::belief::{woodbury_solve, DenseBelief, DlrBelief, SphericalBelief};
use crate::linalg::{cholesky, symmetrize};
use crate::lofi::LatentPrior;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InflationVariant {
    #[default]
    None,
    Bayesian,
    Simple,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InflationConfig {
    pub alpha: f64,
    pub variant: InflationVariant,
}

impl InflationConfig {
    pub fn new(variant: InflationVariant, alpha: f64) -> Result<Self> {
        let cfg = Self { alpha, variant };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!("inflation alpha must be ≥ 0, got {}", self.alpha)));
        }
        Ok(())
    }

    fn is_identity(&self) -> bool {
        self.variant == InflationVariant::None || self.alpha == 0.0
    }
}

fn check_prior(latent: &LatentPrior, p: usize) -> Result<()> {
    if latent.prior_mean.len() != p {
        return Err(Error::DimensionMismatch {
            what: "latent prior mean",
            expected: p,
            found: latent.prior_mean.len(),
        });
    }
    Ok(())
}

/// Inflates a DLR belief using the latent prior precision `latent.eta`.
pub fn inflate_dlr(b: &DlrBelief, cfg: &InflationConfig, latent: &LatentPrior) -> Result<DlrBelief> {
    cfg.validate()?;
    if cfg.is_identity() {
        return Ok(b.clone());
    }
    let a = cfg.alpha;
    let shrink = 1.0 / (1.0 + a);
    let low_rank = &b.low_rank * shrink.sqrt();
    let mix = a * latent.eta * shrink;
    let diag_precision = match cfg.variant {
        InflationVariant::Simple => &b.diag_precision * shrink,
        _ => b.diag_precision.map(|u| u * shrink + mix),
    };
    let mean = if cfg.variant == InflationVariant::Bayesian {
        check_prior(latent, b.dim())?;
        let pull = latent.mean() - &b.mean;
        let inv_diag = diag_precision.map(|v| 1.0 / v);
        let solved = woodbury_solve(&inv_diag, &low_rank, &DMatrix::from_column_slice(pull.len(), 1, pull.as_slice()))?;
        &b.mean + solved.column(0) * mix
    } else {
        b.mean.clone()
    };
    Ok(DlrBelief {
        mean,
        diag_precision,
        low_rank,
    })
}

/// Spherical form. Bayesian and hybrid keep `η` (the belief's isotropic part
/// plays the role of the latent prior precision); simple scales it too.
pub fn inflate_spherical(b: &SphericalBelief, cfg: &InflationConfig, latent: &LatentPrior) -> Result<SphericalBelief> {
    cfg.validate()?;
    if cfg.is_identity() {
        return Ok(b.clone());
    }
    let a = cfg.alpha;
    let shrink = 1.0 / (1.0 + a);
    let singular_values = &b.singular_values * shrink.sqrt();
    let eta = match cfg.variant {
        InflationVariant::Simple => b.eta * shrink,
        _ => b.eta,
    };
    let mean = if cfg.variant == InflationVariant::Bayesian {
        check_prior(latent, b.dim())?;
        let pull = latent.mean() - &b.mean;
        // (ηI + U D Uᵀ)⁻¹ = η⁻¹ (I − U diag(d/(η+d)) Uᵀ)
        let d = singular_values.map(|l| l * l);
        let coeff = (b.basis.transpose() * &pull).component_mul(&d.map(|v| v / (eta + v)));
        let solved: DVector<f64> = (pull - &b.basis * coeff) / eta;
        &b.mean + solved * (a * b.eta * shrink)
    } else {
        b.mean.clone()
    };
    Ok(SphericalBelief {
        mean,
        eta,
        basis: b.basis.clone(),
        singular_values,
    })
}

/// Dense form: `P̆ = P/(1+α) (+ αη/(1+α) I)`; the Bayesian mean solves
/// `P̆ μ̆ = P μ/(1+α) + αη/(1+α) Γμ₀`.
pub fn inflate_dense(b: &DenseBelief, cfg: &InflationConfig, latent: &LatentPrior) -> Result<DenseBelief> {
    cfg.validate()?;
    if cfg.is_identity() {
        return Ok(b.clone());
    }
    let p = b.dim();
    let shrink = 1.0 / (1.0 + cfg.alpha);
    let mix = cfg.alpha * latent.eta * shrink;
    let mut precision = &b.precision * shrink;
    if cfg.variant != InflationVariant::Simple {
        for i in 0..p {
            precision[(i, i)] += mix;
        }
    }
    symmetrize(&mut precision);
    let mean = if cfg.variant == InflationVariant::Bayesian {
        check_prior(latent, p)?;
        let info = &b.precision * &b.mean * shrink + latent.mean() * mix;
        cholesky(precision.clone(), "inflated precision")?.solve(&info)
    } else {
        b.mean.clone()
    };
    Ok(DenseBelief { mean, precision })
}

#[cfg(test)]
mod tests {
    use alloc::vec;
    use super::*;
    use crate::linalg::frobenius_relative_error;
    use crate::testutil::{dense_precision, dense_spherical_precision, random_dlr, random_spherical};

    const VARIANTS: [InflationVariant; 3] = [InflationVariant::Bayesian, InflationVariant::Simple, InflationVariant::Hybrid];

    fn latent(p: usize, eta: f64, seed: u64) -> LatentPrior {
        let mut l = LatentPrior::new(crate::rng::standard_normal_vector(&mut crate::rng::seeded(seed), p), eta);
        l.gamma_product = 0.8;
        l
    }

    /// Dense natural-parameter form of each variant.
    fn dense_inflate(prec: &DMatrix<f64>, mean: &DVector<f64>, v: InflationVariant, a: f64, l: &LatentPrior) -> (DMatrix<f64>, DVector<f64>) {
        let p = prec.nrows();
        let mix = a * l.eta / (1.0 + a);
        let scaled = prec / (1.0 + a);
        match v {
            InflationVariant::Simple => (scaled, mean.clone()),
            InflationVariant::Hybrid => (scaled + DMatrix::identity(p, p) * mix, mean.clone()),
            _ => {
                let new_prec = scaled + DMatrix::identity(p, p) * mix;
                let info = prec * mean / (1.0 + a) + l.mean() * mix;
                let new_mean = new_prec.clone().try_inverse().unwrap() * info;
                (new_prec, new_mean)
            }
        }
    }

    #[test]
    fn zero_alpha_is_identity() {
        let b = random_dlr(1, 4, 2);
        let l = latent(4, 2.0, 9);
        for v in VARIANTS {
            let cfg = InflationConfig::new(v, 0.0).unwrap();
            assert_eq!(inflate_dlr(&b, &cfg, &l).unwrap(), b);
        }
    }

    #[test]
    fn simple_halves_diagonal() {
        let b = DlrBelief::new(DVector::zeros(2), DVector::from_vec(vec![2.0, 4.0]), DMatrix::zeros(2, 0)).unwrap();
        let cfg = InflationConfig::new(InflationVariant::Simple, 1.0).unwrap();
        let out = inflate_dlr(&b, &cfg, &LatentPrior::new(DVector::zeros(2), 1.0)).unwrap();
        assert_eq!(out.diag_precision, DVector::from_vec(vec![1.0, 2.0]));
    }

    #[test]
    fn bayesian_mean_matches_dense_solve() {
        let b = random_dlr(17, 4, 1);
        let l = latent(4, 1.5, 18);
        let cfg = InflationConfig::new(InflationVariant::Bayesian, 0.5).unwrap();
        let out = inflate_dlr(&b, &cfg, &l).unwrap();
        let (prec, mean) = dense_inflate(&dense_precision(&b), &b.mean, InflationVariant::Bayesian, 0.5, &l);
        assert!((&out.mean - mean).amax() < 1e-10);
        assert!(frobenius_relative_error(&dense_precision(&out), &prec) < 1e-10);
    }

    #[test]
    fn dlr_variants_match_dense_formulas() {
        for (i, v) in VARIANTS.iter().enumerate() {
            for a in [0.0, 0.01, 0.5] {
                let b = random_dlr(40 + i as u64, 5, 2);
                let l = latent(5, 0.7, 50 + i as u64);
                let out = inflate_dlr(&b, &InflationConfig::new(*v, a).unwrap(), &l).unwrap();
                let (prec, mean) = dense_inflate(&dense_precision(&b), &b.mean, *v, a, &l);
                assert!(frobenius_relative_error(&dense_precision(&out), &prec) <= 1e-10);
                assert!((&out.mean - mean).amax() <= 1e-10);
            }
        }
    }

    #[test]
    fn spherical_examples() {
        let mut b = random_spherical(5, 3, 1);
        b.singular_values = DVector::from_element(1, 2.0);
        let l = LatentPrior::new(DVector::zeros(3), b.eta);
        let hybrid = inflate_spherical(&b, &InflationConfig::new(InflationVariant::Hybrid, 3.0).unwrap(), &l).unwrap();
        assert_eq!(hybrid.singular_values[0], 1.0);
        assert_eq!(hybrid.eta.to_bits(), b.eta.to_bits());
        b.eta = 2.0;
        let simple = inflate_spherical(&b, &InflationConfig::new(InflationVariant::Simple, 1.0).unwrap(), &l).unwrap();
        assert_eq!(simple.eta, 1.0);
    }

    #[test]
    fn spherical_variants_match_dense_formulas() {
        for (i, v) in VARIANTS.iter().enumerate() {
            for a in [0.0, 0.01, 0.5] {
                let b = random_spherical(2 + i as u64, 3, 2);
                let mut l = latent(3, b.eta, 20 + i as u64);
                l.eta = b.eta;
                let out = inflate_spherical(&b, &InflationConfig::new(*v, a).unwrap(), &l).unwrap();
                let (prec, mean) = dense_inflate(&dense_spherical_precision(&b), &b.mean, *v, a, &l);
                assert!(frobenius_relative_error(&dense_spherical_precision(&out), &prec) <= 1e-10);
                assert!((&out.mean - mean).amax() <= 1e-10);
            }
        }
    }

    #[test]
    fn dense_form_matches_dlr_form() {
        for v in VARIANTS {
            let b = random_dlr(90, 4, 2);
            let l = latent(4, 1.3, 91);
            let cfg = InflationConfig::new(v, 0.3).unwrap();
            let dlr = inflate_dlr(&b, &cfg, &l).unwrap();
            let dense = inflate_dense(&DenseBelief::new(b.mean.clone(), dense_precision(&b)).unwrap(), &cfg, &l).unwrap();
            assert!(frobenius_relative_error(&dense.precision, &dense_precision(&dlr)) < 1e-12);
            assert!((dense.mean - dlr.mean).amax() < 1e-12);
        }
    }

    #[test]
    fn simple_scales_covariance_exactly() {
        let b = random_dlr(3, 4, 2);
        let out = inflate_dlr(&b, &InflationConfig::new(InflationVariant::Simple, 0.25).unwrap(), &latent(4, 1.0, 1)).unwrap();
        let cov = dense_precision(&b).try_inverse().unwrap();
        let inflated = dense_precision(&out).try_inverse().unwrap();
        assert!(frobenius_relative_error(&inflated, &(cov * 1.25)) < 1e-12);
    }
}
