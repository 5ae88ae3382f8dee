//! LO-FI filters: Gaussian beliefs with diagonal-plus-low-rank precision
//! ([`diagonal`]) or spherical-plus-low-rank precision ([`spherical`]).

pub mod diagonal;
pub mod spherical;

use nalgebra::DVector;
#[allow(unused_imports)]
use num_traits::Float as _;

use crate::inflation::InflationConfig;
use crate::{Error, Result};

/// Tolerance on `γ² + qη₀ = 1` for steady-state dynamics.
pub const STEADY_STATE_TOL: f64 = 1e-12;

/// Parameter dynamics `θ_t = γ θ_{t−1} + N(0, q I)` and prior precision `η₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsConfig {
    pub gamma: f64,
    pub process_noise: f64,
    pub initial_precision: f64,
    /// Spherical predict uses the simplified recursion (η stays fixed).
    pub steady_state: bool,
}

impl DynamicsConfig {
    pub fn new(gamma: f64, process_noise: f64, initial_precision: f64) -> Result<Self> {
        let cfg = Self {
            gamma,
            process_noise,
            initial_precision,
            steady_state: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Stationary dynamics: `γ = 1`, `q = 0`.
    pub fn stationary(initial_precision: f64) -> Result<Self> {
        Self::new(1.0, 0.0, initial_precision)
    }

    /// Variance-preserving dynamics, `γ = √(1 − qη₀)`.
    pub fn steady_state(process_noise: f64, initial_precision: f64) -> Result<Self> {
        let g2 = 1.0 - process_noise * initial_precision;
        if g2 < 0.0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "steady state needs q·η₀ ≤ 1, got {}",
                process_noise * initial_precision
            )));
        }
        let cfg = Self {
            gamma: g2.sqrt(),
            process_noise,
            initial_precision,
            steady_state: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(alloc::format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.process_noise >= 0.0 && self.process_noise.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!("process noise must be ≥ 0, got {}", self.process_noise)));
        }
        if !(self.initial_precision > 0.0 && self.initial_precision.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "initial precision must be > 0, got {}",
                self.initial_precision
            )));
        }
        if self.gamma == 0.0 && self.process_noise == 0.0 {
            return Err(Error::InvalidConfig("gamma = 0 with q = 0 collapses the belief".into()));
        }
        if self.steady_state {
            let residual = self.gamma * self.gamma + self.process_noise * self.initial_precision - 1.0;
            if residual.abs() > STEADY_STATE_TOL {
                return Err(Error::InvalidConfig(alloc::format!(
                    "steady state requires γ² + qη₀ = 1, off by {residual:e}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.gamma == 1.0 && self.process_noise == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LofiConfig {
    pub rank: usize,
    pub dynamics: DynamicsConfig,
    pub inflation: InflationConfig,
}

/// The prior that the belief would have if no data had been seen: mean
/// `Γ_t μ₀` and precision `η_t I`, propagated through the dynamics. Used by
/// the Bayesian and hybrid inflation variants.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPrior {
    pub prior_mean: DVector<f64>,
    pub eta: f64,
    pub gamma_product: f64,
}

impl LatentPrior {
    pub fn new(prior_mean: DVector<f64>, eta0: f64) -> Self {
        Self {
            prior_mean,
            eta: eta0,
            gamma_product: 1.0,
        }
    }

    /// `η_t⁻¹ = γ² η_{t−1}⁻¹ + q`, `Γ_t = Γ_{t−1} γ`.
    pub fn advance(&mut self, dynamics: &DynamicsConfig) {
        if !dynamics.is_identity() {
            let g2 = dynamics.gamma * dynamics.gamma;
            self.eta = 1.0 / (g2 / self.eta + dynamics.process_noise);
        }
        self.gamma_product *= dynamics.gamma;
    }

    /// `Γ μ₀`.
    pub fn mean(&self) -> DVector<f64> {
        &self.prior_mean * self.gamma_product
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steady_state_constructor_satisfies_constraint() {
        let d = DynamicsConfig::steady_state(1e-3, 10.0).unwrap();
        assert!((d.gamma * d.gamma + 1e-3 * 10.0 - 1.0).abs() <= STEADY_STATE_TOL);
        let mut bad = d;
        bad.gamma = 0.9;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(DynamicsConfig::new(1.1, 0.0, 1.0).is_err());
        assert!(DynamicsConfig::new(1.0, -1.0, 1.0).is_err());
        assert!(DynamicsConfig::new(1.0, 0.0, 0.0).is_err());
        assert!(DynamicsConfig::new(0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn latent_prior_is_fixed_under_steady_state() {
        let d = DynamicsConfig::steady_state(0.01, 50.0).unwrap();
        let mut latent = LatentPrior::new(DVector::from_element(2, 1.0), 50.0);
        for _ in 0..1000 {
            latent.advance(&d);
        }
        assert!((latent.eta - 50.0).abs() < 1e-9);
        assert!((latent.gamma_product - d.gamma.powi(1000)).abs() < 1e-12);
    }
}
