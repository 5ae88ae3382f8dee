//! Online tracking of the observation covariance and random-search tuning of
//! the filter hyperparameters.
//!
//! Tuning is split into [`sample_trials`] and [`select_best`] so callers can
//! evaluate trials in parallel; [`random_search_tune`] is the serial driver.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float as _;
use rand::Rng;

use crate::learner::OnlineLearner;
use crate::model::ObsNoise;
use crate::rng::{derive_seed, seeded};
use crate::streams::StreamEvent;
use crate::{Error, Result};

/// Step size `max(alpha_min, 1/t)` for step `t ≥ 1`.
pub fn adaptive_alpha(t: usize, alpha_min: f64) -> f64 {
    (1.0 / t.max(1) as f64).max(alpha_min)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidConfig(format!("noise step size must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

/// `(1 − α) R + α e eᵀ`.
pub fn update_r_estimate(r: &DMatrix<f64>, e: &DVector<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    check_alpha(alpha)?;
    if r.nrows() != e.len() || r.ncols() != e.len() {
        return Err(Error::DimensionMismatch {
            what: "noise estimate",
            expected: e.len(),
            found: r.nrows(),
        });
    }
    Ok(r * (1.0 - alpha) + e * e.transpose() * alpha)
}

/// `(1 − α) r + α eᵀe`. The result estimates the summed variance over outputs.
pub fn update_r_scalar(r: f64, e: &DVector<f64>, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok((1.0 - alpha) * r + alpha * e.norm_squared())
}

/// Running estimate of the observation noise, fed with innovations.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTracker {
    estimate: ObsNoise,
    alpha_min: f64,
    count: usize,
}

impl NoiseTracker {
    pub fn new(initial: ObsNoise, alpha_min: f64) -> Result<Self> {
        check_alpha(alpha_min)?;
        Ok(Self {
            estimate: initial,
            alpha_min,
            count: 0,
        })
    }

    /// Current estimate; a scalar estimate is per output.
    pub fn estimate(&self) -> &ObsNoise {
        &self.estimate
    }

    pub fn observe(&mut self, e: &DVector<f64>) -> Result<()> {
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("innovation"));
        }
        self.count += 1;
        let alpha = adaptive_alpha(self.count, self.alpha_min);
        self.estimate = match &self.estimate {
            ObsNoise::Scalar(r) => {
                let c = e.len().max(1) as f64;
                ObsNoise::Scalar(update_r_scalar(r * c, e, alpha)? / c)
            }
            ObsNoise::Full(m) => ObsNoise::Full(update_r_estimate(m, e, alpha)?),
        };
        Ok(())
    }
}

/// Range for one hyperparameter: log-uniform on `[lo, hi]`, or the `atom`
/// value with probability [`ATOM_PROBABILITY`] when one is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRange {
    pub lo: f64,
    pub hi: f64,
    pub atom: Option<f64>,
}

pub const ATOM_PROBABILITY: f64 = 0.2;

impl LogRange {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi, atom: None }
    }

    pub fn with_atom(lo: f64, hi: f64, atom: f64) -> Self {
        Self { lo, hi, atom: Some(atom) }
    }

    pub fn point(v: f64) -> Self {
        Self::new(v, v)
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo > 0.0 && self.hi >= self.lo && self.hi.is_finite()) {
            return Err(Error::InvalidConfig(format!("{name}: range needs 0 < lo <= hi < inf, got [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // Both draws are always taken so every trial consumes the same stream.
        let u_atom: f64 = rng.random();
        let u: f64 = rng.random();
        if let Some(a) = self.atom {
            if u_atom < ATOM_PROBABILITY {
                return a;
            }
        }
        if self.lo == self.hi {
            return self.lo;
        }
        (self.lo.ln() + u * (self.hi.ln() - self.lo.ln())).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSpace {
    pub initial_precision: LogRange,
    pub process_noise: LogRange,
    pub gamma: LogRange,
    pub obs_noise: LogRange,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            initial_precision: LogRange::new(1e-2, 1e3),
            process_noise: LogRange::with_atom(1e-6, 1e-1, 0.0),
            gamma: LogRange::with_atom(0.95, 1.0, 1.0),
            obs_noise: LogRange::new(1e-3, 10.0),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        self.initial_precision.validate("initial_precision")?;
        self.process_noise.validate("process_noise")?;
        self.gamma.validate("gamma")?;
        self.obs_noise.validate("obs_noise")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub initial_precision: f64,
    pub process_noise: f64,
    pub gamma: f64,
    pub obs_noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub index: usize,
    pub params: HyperParams,
    /// Seed handed to the objective for this trial.
    pub seed: u64,
    /// `Err` holds the failure message of a trial that did not produce a
    /// finite objective.
    pub objective: core::result::Result<f64, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best: HyperParams,
    pub best_index: usize,
    pub trials: Vec<Trial>,
}

/// Draws `budget` configurations. Trial `i` depends only on `(seed, i)`.
pub fn sample_trials(space: &SearchSpace, budget: usize, seed: u64) -> Result<Vec<(HyperParams, u64)>> {
    space.validate()?;
    if budget == 0 {
        return Err(Error::InvalidConfig("tuning budget must be at least 1".into()));
    }
    Ok((0..budget)
        .map(|i| {
            let mut rng = seeded(derive_seed(seed, 2 * i as u64));
            let params = HyperParams {
                initial_precision: space.initial_precision.sample(&mut rng),
                process_noise: space.process_noise.sample(&mut rng),
                gamma: space.gamma.sample(&mut rng),
                obs_noise: space.obs_noise.sample(&mut rng),
            };
            (params, derive_seed(seed, 2 * i as u64 + 1))
        })
        .collect())
}

/// Lowest finite objective; ties go to the earliest trial.
pub fn select_best(trials: Vec<Trial>) -> Result<TuneResult> {
    let mut best: Option<(usize, f64)> = None;
    for (k, t) in trials.iter().enumerate() {
        if let Ok(v) = t.objective {
            if v.is_finite() && best.is_none_or(|(_, b)| v < b) {
                best = Some((k, v));
            }
        }
    }
    match best {
        Some((k, _)) => Ok(TuneResult {
            best: trials[k].params,
            best_index: trials[k].index,
            trials,
        }),
        None => {
            let first = trials
                .iter()
                .find_map(|t| t.objective.as_ref().err().cloned())
                .unwrap_or_else(|| "no trials".into());
            Err(Error::AllTrialsFailed(format!("{} trials; trial 0: {first}", trials.len())))
        }
    }
}

pub fn random_search_tune<F>(space: &SearchSpace, budget: usize, seed: u64, mut objective: F) -> Result<TuneResult>
where
    F: FnMut(&HyperParams, u64) -> Result<f64>,
{
    let trials = sample_trials(space, budget, seed)?
        .into_iter()
        .enumerate()
        .map(|(index, (params, trial_seed))| Trial {
            index,
            params,
            seed: trial_seed,
            objective: match objective(&params, trial_seed) {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(v) => Err(format!("objective evaluated to {v}")),
                Err(e) => Err(format!("{e}")),
            },
        })
        .collect();
    select_best(trials)
}

/// Mean one-step-ahead plugin NLL over the first `k` events of a tuning
/// stream (all of them when `k` is `None`).
pub fn prequential_nll_objective(learner: &mut dyn OnlineLearner, stream: &[StreamEvent], k: Option<usize>) -> Result<f64> {
    let n = k.unwrap_or(stream.len()).min(stream.len());
    if n == 0 {
        return Err(Error::InvalidConfig("tuning stream is empty".into()));
    }
    let mut total = 0.0;
    for e in &stream[..n] {
        let obs = e.observation();
        total += learner.predict(&obs.x)?.nll(&obs.y)?;
        learner.update(obs)?;
    }
    Ok(total / n as f64)
}

/// Mean plugin NLL on a fixed validation set after training on the first
/// `k` events.
pub fn validation_nll_objective(
    learner: &mut dyn OnlineLearner,
    stream: &[StreamEvent],
    k: Option<usize>,
    validation: &[crate::streams::Observation],
) -> Result<f64> {
    if validation.is_empty() {
        return Err(Error::InvalidConfig("validation set is empty".into()));
    }
    let n = k.unwrap_or(stream.len()).min(stream.len());
    for e in &stream[..n] {
        learner.update(e.observation())?;
    }
    let mut total = 0.0;
    for o in validation {
        total += learner.predict(&o.x)?.nll(&o.y)?;
    }
    Ok(total / validation.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::standard_normal_vector;
    use alloc::vec;

    #[test]
    fn alpha_one_replaces_estimate() {
        let e = DVector::from_vec(vec![1.0, -2.0]);
        let r = update_r_estimate(&DMatrix::identity(2, 2), &e, 1.0).unwrap();
        assert_eq!(r, &e * e.transpose());
    }

    #[test]
    fn tiny_alpha_keeps_estimate() {
        let prev = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = update_r_estimate(&prev, &DVector::from_vec(vec![3.0, 1.0]), 1e-12).unwrap();
        assert!((r - &prev).amax() < 1e-10);
        assert!(update_r_estimate(&prev, &DVector::zeros(2), 0.0).is_err());
    }

    #[test]
    fn estimate_stays_symmetric_psd() {
        let mut rng = seeded(4);
        let mut r = DMatrix::identity(3, 3);
        for t in 1..200 {
            let e = standard_normal_vector(&mut rng, 3);
            r = update_r_estimate(&r, &e, adaptive_alpha(t, 0.01)).unwrap();
            assert_eq!(r, r.transpose());
            let (vals, _) = crate::linalg::sorted_symmetric_eigen(r.clone()).unwrap();
            assert!(vals[2] > -1e-12);
        }
    }

    #[test]
    fn scalar_estimate_converges_to_summed_variance() {
        // α_t = 1/t makes r̂_T the sample mean of eᵀe.
        let sigma = 0.7;
        let c = 3;
        let mut rng = seeded(11);
        let mut r = 0.0;
        for t in 1..=10_000 {
            let e = standard_normal_vector(&mut rng, c) * sigma;
            r = update_r_scalar(r, &e, adaptive_alpha(t, 0.0)).unwrap();
        }
        let ratio = r / c as f64 / (sigma * sigma);
        assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn tracker_reports_per_output_variance() {
        let mut tr = NoiseTracker::new(ObsNoise::Scalar(5.0), 1e-3).unwrap();
        tr.observe(&DVector::from_vec(vec![1.0, 3.0])).unwrap();
        assert_eq!(tr.estimate(), &ObsNoise::Scalar(5.0));
        let mut tr = NoiseTracker::new(ObsNoise::Scalar(5.0), 1e-3).unwrap();
        tr.observe(&DVector::from_vec(vec![1.0, 3.0])).unwrap();
        tr.observe(&DVector::from_vec(vec![0.0, 2.0])).unwrap();
        // first step has α = 1: r̂ = 10; second α = 1/2: (10 + 4)/2 = 7; per output 3.5
        assert_eq!(tr.estimate(), &ObsNoise::Scalar(3.5));
    }

    #[test]
    fn budget_one_returns_sampled_config() {
        let space = SearchSpace::default();
        let sampled = sample_trials(&space, 1, 9).unwrap()[0].0;
        let res = random_search_tune(&space, 1, 9, |_, _| Ok(1.0)).unwrap();
        assert_eq!(res.best, sampled);
        assert_eq!(res.trials.len(), 1);
    }

    #[test]
    fn point_ranges_give_the_point() {
        let space = SearchSpace {
            initial_precision: LogRange::point(2.0),
            process_noise: LogRange::point(1e-3),
            gamma: LogRange::point(0.99),
            obs_noise: LogRange::point(0.5),
        };
        let res = random_search_tune(&space, 5, 1, |h, _| Ok(h.obs_noise)).unwrap();
        assert_eq!(
            res.best,
            HyperParams {
                initial_precision: 2.0,
                process_noise: 1e-3,
                gamma: 0.99,
                obs_noise: 0.5
            }
        );
    }

    #[test]
    fn samples_stay_in_range_and_hit_atoms() {
        let space = SearchSpace::default();
        let trials = sample_trials(&space, 2000, 3).unwrap();
        let mut zero_q = 0;
        for (h, _) in &trials {
            assert!((1e-2..=1e3).contains(&h.initial_precision));
            assert!(h.process_noise == 0.0 || (1e-6..=1e-1).contains(&h.process_noise));
            assert!((0.95..=1.0).contains(&h.gamma));
            zero_q += usize::from(h.process_noise == 0.0);
        }
        let frac = zero_q as f64 / 2000.0;
        // Binomial(2000, 0.2): sd ≈ 0.0089
        assert!((frac - 0.2).abs() < 0.03, "{frac}");
    }

    #[test]
    fn trials_depend_only_on_seed_and_index() {
        let space = SearchSpace::default();
        let a = sample_trials(&space, 3, 5).unwrap();
        let b = sample_trials(&space, 10, 5).unwrap();
        assert_eq!(a[..], b[..3]);
    }

    #[test]
    fn failures_are_skipped_and_reported() {
        let space = SearchSpace::default();
        let mut calls = 0;
        let r = random_search_tune(&space, 4, 2, |_, _| {
            calls += 1;
            if calls == 3 {
                Ok(0.5)
            } else {
                Err(Error::NonFinite("x"))
            }
        })
        .unwrap();
        assert_eq!(r.best_index, 2);
        assert_eq!(r.trials.iter().filter(|t| t.objective.is_err()).count(), 3);
        let err = random_search_tune(&space, 3, 2, |_, _| Ok(f64::NAN)).unwrap_err();
        assert!(matches!(err, Error::AllTrialsFailed(ref m) if m.contains("NaN")));
    }

    #[test]
    fn quadratic_objective_best_beats_median() {
        // Noisy evaluations of a quadratic bowl in (log q, log η₀); the true
        // value of the selected trial must beat the median trial's true value.
        let space = SearchSpace {
            process_noise: LogRange::new(1e-6, 1e-1),
            ..SearchSpace::default()
        };
        let truth = |h: &HyperParams| {
            let a = h.process_noise.log10() + 3.0;
            let b = h.initial_precision.log10() - 1.0;
            a * a + b * b
        };
        let mut wins = 0;
        for seed in 0..100 {
            let res = random_search_tune(&space, 20, seed, |h, s| {
                let noise: f64 = seeded(s).random::<f64>() - 0.5;
                Ok(truth(h) + 0.2 * noise)
            })
            .unwrap();
            let mut values: Vec<f64> = res.trials.iter().map(|t| truth(&t.params)).collect();
            values.sort_by(f64::total_cmp);
            let median = 0.5 * (values[9] + values[10]);
            wins += usize::from(truth(&res.best) < median);
        }
        assert!(wins >= 95, "{wins}");
    }
}
