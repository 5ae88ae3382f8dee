//! A uniform online-learner interface over every method in the crate.
//!
//! A step runs in two phases. [`OnlineLearner::predict`] lazily applies
//! inflation and the dynamics (once per step) and predicts from the resulting
//! prior; [`OnlineLearner::update`] conditions that prior on the revealed
//! observation.

use alloc::boxed::Box;

use nalgebra::{DMatrix, DVector};

use crate::baselines::{
    fcekf_predict, fcekf_update, fdekf_update, iterated_ekf_update, iterated_lofi_update, vdekf_update, Example, IteratedConfig,
    Optimizer, SgdReplay,
};
use crate::belief::{DenseBelief, DlrBelief, SphericalBelief};
use crate::inflation::{inflate_dense, inflate_dlr, inflate_spherical, InflationConfig, InflationVariant};
use crate::lofi::spherical::{predict_spherical, update_spherical_orth, update_spherical_svd, BasisUpdate};
use crate::lofi::{diagonal, DynamicsConfig, LatentPrior};
use crate::adaptive::NoiseTracker;
use crate::model::{LikelihoodFamily, Linearization, Model};
use crate::predictive::{predict_at, Predictive};
use crate::rng::derive_seed;
use crate::streams::Observation;
use crate::{Error, Result};

pub trait OnlineLearner {
    /// Method tag, as listed by [`Method::TAGS`].
    fn name(&self) -> &'static str;
    fn model(&self) -> &Model;
    /// Plugin predictive for `x` at the current step.
    fn predict(&mut self, x: &DVector<f64>) -> Result<Predictive>;
    fn update(&mut self, obs: &Observation) -> Result<()>;
    /// Update from a single observed output (e.g. the reward of one arm).
    fn update_output(&mut self, x: &DVector<f64>, output: usize, y: f64) -> Result<()>;
    /// Parameter vector used for the current step's point prediction.
    fn mean(&mut self) -> Result<DVector<f64>>;
    /// Draws from the current step's parameter belief (a point mass for
    /// non-Bayesian methods).
    fn sample_parameters(&mut self, n: usize, seed: u64) -> Result<DMatrix<f64>>;
    /// Number of completed updates.
    fn steps(&self) -> usize;
}

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Fcekf,
    Vdekf,
    Fdekf,
    Lofi { rank: usize },
    LofiSpherical { rank: usize, basis: BasisUpdate },
    Iekf { iterated: IteratedConfig },
    Ilofi { rank: usize, iterated: IteratedConfig },
    /// SGD with a FIFO replay buffer; capacity 1 is online gradient descent.
    SgdReplay { capacity: usize, optimizer: Optimizer, inner_iters: usize },
}

impl Method {
    pub const TAGS: &'static [&'static str] = &["fcekf", "vdekf", "fdekf", "lofi", "lofi-spherical", "iekf", "ilofi", "sgd-rb", "ogd"];

    pub fn tag(&self) -> &'static str {
        match self {
            Method::Fcekf => "fcekf",
            Method::Vdekf => "vdekf",
            Method::Fdekf => "fdekf",
            Method::Lofi { .. } => "lofi",
            Method::LofiSpherical { .. } => "lofi-spherical",
            Method::Iekf { .. } => "iekf",
            Method::Ilofi { .. } => "ilofi",
            Method::SgdReplay { capacity: 1, .. } => "ogd",
            Method::SgdReplay { .. } => "sgd-rb",
        }
    }

    pub fn is_bayesian(&self) -> bool {
        !matches!(self, Method::SgdReplay { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub method: Method,
    pub dynamics: DynamicsConfig,
    pub inflation: InflationConfig,
    /// Seeds per-step randomness (projection basis updates).
    pub seed: u64,
    /// Track the observation noise online with this minimum step size
    /// (regression only).
    pub noise_alpha_min: Option<f64>,
}

#[derive(Debug, Clone)]
enum State {
    Dense(DenseBelief),
    Dlr(DlrBelief),
    Spherical(SphericalBelief),
    Sgd(SgdReplay),
}

/// The concrete learner behind every [`Method`].
#[derive(Debug, Clone)]
pub struct Learner {
    config: LearnerConfig,
    model: Model,
    latent: LatentPrior,
    state: State,
    /// Prior for the current step once inflation and predict have run.
    pending: Option<State>,
    noise: Option<NoiseTracker>,
    step: usize,
}

pub fn build_learner(model: Model, config: LearnerConfig, initial_mean: DVector<f64>) -> Result<Learner> {
    Learner::new(model, config, initial_mean)
}

impl Learner {
    pub fn new(model: Model, config: LearnerConfig, initial_mean: DVector<f64>) -> Result<Self> {
        config.dynamics.validate()?;
        config.inflation.validate()?;
        let p = model.parameter_count();
        if initial_mean.len() != p {
            return Err(Error::DimensionMismatch {
                what: "initial mean",
                expected: p,
                found: initial_mean.len(),
            });
        }
        let eta0 = config.dynamics.initial_precision;
        let state = match &config.method {
            Method::Fcekf | Method::Iekf { .. } => State::Dense(DenseBelief::from_prior(initial_mean.clone(), eta0)?),
            Method::Vdekf | Method::Fdekf => State::Dlr(DlrBelief::from_prior(initial_mean.clone(), eta0, 0)?),
            Method::Lofi { rank } => State::Dlr(DlrBelief::from_prior(initial_mean.clone(), eta0, *rank)?),
            Method::LofiSpherical { rank, .. } | Method::Ilofi { rank, .. } => {
                State::Spherical(SphericalBelief::from_prior(initial_mean.clone(), eta0, *rank)?)
            }
            Method::SgdReplay {
                capacity,
                optimizer,
                inner_iters,
            } => {
                if config.inflation.variant != InflationVariant::None && config.inflation.alpha > 0.0 {
                    return Err(Error::InvalidConfig("inflation does not apply to gradient-based methods".into()));
                }
                State::Sgd(SgdReplay::new(initial_mean.clone(), *capacity, *optimizer, *inner_iters)?)
            }
        };
        if let Method::Iekf { iterated } | Method::Ilofi { iterated, .. } = &config.method {
            iterated.validate()?;
        }
        let noise = match (config.noise_alpha_min, &model.family) {
            (None, _) => None,
            (Some(a), LikelihoodFamily::GaussianRegression(r)) => Some(NoiseTracker::new(r.clone(), a)?),
            (Some(_), _) => return Err(Error::InvalidConfig("noise tracking needs a regression model".into())),
        };
        Ok(Self {
            latent: LatentPrior::new(initial_mean, eta0),
            config,
            model,
            state,
            pending: None,
            noise,
            step: 0,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    /// Posterior after the last update (before this step's predict).
    pub fn dense_belief(&self) -> Option<&DenseBelief> {
        match &self.state {
            State::Dense(b) => Some(b),
            _ => None,
        }
    }

    pub fn dlr_belief(&self) -> Option<&DlrBelief> {
        match &self.state {
            State::Dlr(b) => Some(b),
            _ => None,
        }
    }

    pub fn spherical_belief(&self) -> Option<&SphericalBelief> {
        match &self.state {
            State::Spherical(b) => Some(b),
            _ => None,
        }
    }

    pub fn latent_prior(&self) -> &LatentPrior {
        &self.latent
    }

    fn prepared(&mut self) -> Result<&State> {
        if self.pending.is_none() {
            let dynamics = &self.config.dynamics;
            let inflation = &self.config.inflation;
            let prior = match &self.state {
                State::Dense(b) => State::Dense(fcekf_predict(&inflate_dense(b, inflation, &self.latent)?, dynamics)?),
                State::Dlr(b) => State::Dlr(diagonal::predict(&inflate_dlr(b, inflation, &self.latent)?, dynamics)?),
                State::Spherical(b) => State::Spherical(predict_spherical(&inflate_spherical(b, inflation, &self.latent)?, dynamics)?),
                State::Sgd(s) => State::Sgd(s.clone()),
            };
            if self.config.method.is_bayesian() {
                self.latent.advance(dynamics);
            }
            self.pending = Some(prior);
        }
        Ok(self.pending.as_ref().unwrap())
    }

    fn prior_mean(&mut self) -> Result<DVector<f64>> {
        Ok(match self.prepared()? {
            State::Dense(b) => b.mean.clone(),
            State::Dlr(b) => b.mean.clone(),
            State::Spherical(b) => b.mean.clone(),
            State::Sgd(s) => s.params.clone(),
        })
    }

    /// Conditions the prepared prior on a linearized observation.
    fn condition(&mut self, lin: &Linearization, y: &DVector<f64>) -> Result<State> {
        let seed = derive_seed(self.config.seed, self.step as u64);
        let prior = self.prepared()?.clone();
        Ok(match (&self.config.method, prior) {
            (Method::Fcekf, State::Dense(b)) => State::Dense(fcekf_update(&b, lin, y)?),
            (Method::Vdekf, State::Dlr(b)) => State::Dlr(vdekf_update(&b, lin, y)?),
            (Method::Fdekf, State::Dlr(b)) => State::Dlr(fdekf_update(&b, lin, y)?),
            (Method::Lofi { rank }, State::Dlr(b)) => State::Dlr(diagonal::update(&b, lin, y, *rank)?),
            (Method::LofiSpherical { basis: BasisUpdate::FullSvd, .. }, State::Spherical(b)) => {
                State::Spherical(update_spherical_svd(&b, lin, y)?)
            }
            (Method::LofiSpherical { basis: BasisUpdate::Orth, .. }, State::Spherical(b)) => {
                State::Spherical(update_spherical_orth(&b, lin, y, seed)?)
            }
            _ => return Err(Error::InvalidConfig(alloc::format!("{} cannot condition on a fixed linearization", self.name()))),
        })
    }

    fn finish(&mut self, state: State) {
        self.state = state;
        self.pending = None;
        self.step += 1;
    }
}

impl OnlineLearner for Learner {
    fn name(&self) -> &'static str {
        self.config.method.tag()
    }

    fn model(&self) -> &Model {
        &self.model
    }

    fn predict(&mut self, x: &DVector<f64>) -> Result<Predictive> {
        let mean = self.prior_mean()?;
        predict_at(&self.model, &mean, x)
    }

    fn update(&mut self, obs: &Observation) -> Result<()> {
        let innovation = match self.noise {
            Some(_) => {
                let mean = self.prior_mean()?;
                Some(&obs.y - self.model.forward(&obs.x, &mean)?)
            }
            None => None,
        };
        let prior = self.prepared()?.clone();
        let next = match (&self.config.method, prior) {
            (Method::Iekf { iterated }, State::Dense(b)) => State::Dense(iterated_ekf_update(&b, &self.model, &obs.x, &obs.y, iterated)?.belief),
            (Method::Ilofi { iterated, .. }, State::Spherical(b)) => {
                State::Spherical(iterated_lofi_update(&b, &self.model, &obs.x, &obs.y, iterated)?.belief)
            }
            (Method::SgdReplay { .. }, State::Sgd(mut s)) => {
                s.step(&self.model, &obs.x, &obs.y)?;
                State::Sgd(s)
            }
            (_, prior) => {
                let mean = match &prior {
                    State::Dense(b) => &b.mean,
                    State::Dlr(b) => &b.mean,
                    State::Spherical(b) => &b.mean,
                    State::Sgd(s) => &s.params,
                };
                let lin = self.model.linearize(&obs.x, mean)?;
                self.condition(&lin, &obs.y)?
            }
        };
        self.finish(next);
        if let (Some(tracker), Some(e)) = (self.noise.as_mut(), innovation) {
            tracker.observe(&e)?;
            self.model.family = LikelihoodFamily::GaussianRegression(tracker.estimate().clone());
        }
        Ok(())
    }

    fn update_output(&mut self, x: &DVector<f64>, output: usize, y: f64) -> Result<()> {
        if self.model.is_classifier() {
            return Err(Error::InvalidConfig("single-output updates need a regression model".into()));
        }
        let prior = self.prepared()?.clone();
        let next = match (&self.config.method, prior) {
            (Method::Iekf { .. } | Method::Ilofi { .. }, _) => {
                return Err(Error::InvalidConfig("iterated methods do not support single-output updates".into()))
            }
            (Method::SgdReplay { .. }, State::Sgd(mut s)) => {
                s.step_example(
                    &self.model,
                    Example {
                        x: x.clone(),
                        y: DVector::from_element(1, y),
                        output: Some(output),
                    },
                )?;
                State::Sgd(s)
            }
            _ => {
                let mean = self.prior_mean()?;
                let lin = self.model.linearize(x, &mean)?.select_output(output)?;
                self.condition(&lin, &DVector::from_element(1, y))?
            }
        };
        self.finish(next);
        Ok(())
    }

    fn mean(&mut self) -> Result<DVector<f64>> {
        self.prior_mean()
    }

    fn sample_parameters(&mut self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        match self.prepared()? {
            State::Dense(b) => b.sample(n, seed),
            State::Dlr(b) => b.sample(n, seed),
            State::Spherical(b) => b.sample(n, seed),
            State::Sgd(s) => Ok(DMatrix::from_fn(n, s.params.len(), |_, j| s.params[j])),
        }
    }

    fn steps(&self) -> usize {
        self.step
    }
}

/// Boxed learner for dynamic dispatch across threads.
pub type BoxedLearner = Box<dyn OnlineLearner + Send>;
