//! Synthetic non-stationary streams, tabular splitting, and prequential
//! (predict, then reveal, then update) evaluation.
//!
//! Learners only ever see [`Observation`]; the task id lives on
//! [`StreamEvent`] and is reachable by the evaluator alone.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DVector;
#[allow(unused_imports)]
use num_traits::Float as _;
use rand::Rng;

use crate::learner::OnlineLearner;
use crate::predictive::{predict_at, McPredictive};
use crate::rng::{derive_seed, permutation, seeded, standard_normal};
use crate::{Error, Result};

/// What a learner is allowed to see at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

/// One step of a stream, with evaluation-only metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamEvent {
    pub t: usize,
    pub task_id: usize,
    observation: Observation,
}

impl StreamEvent {
    pub fn new(t: usize, task_id: usize, x: DVector<f64>, y: DVector<f64>) -> Self {
        Self {
            t,
            task_id,
            observation: Observation { x, y },
        }
    }

    pub fn observation(&self) -> &Observation {
        &self.observation
    }
}

/// `f_k(x) = x + 0.3 sin(w⁰_k + w¹_k π x)` with `x ~ U(−2, 2)`, switching task
/// every `steps_per_task` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseSineSpec {
    pub num_tasks: usize,
    pub steps_per_task: usize,
    pub noise_sd: f64,
    /// Per-task `(w⁰, w¹)`. When `None` they are drawn from the seed:
    /// phase `w⁰ ~ U(0, 2π)`, frequency `w¹ ~ U(0.5, 2)`.
    pub coefficients: Option<Vec<(f64, f64)>>,
}

impl Default for PiecewiseSineSpec {
    fn default() -> Self {
        Self {
            num_tasks: 5,
            steps_per_task: 250,
            noise_sd: 0.1,
            coefficients: None,
        }
    }
}

/// A realized piecewise-sine problem: fixed per-task coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseSine {
    pub spec: PiecewiseSineSpec,
    pub coefficients: Vec<(f64, f64)>,
    seed: u64,
}

impl PiecewiseSine {
    pub fn new(spec: PiecewiseSineSpec, seed: u64) -> Result<Self> {
        if spec.num_tasks == 0 || spec.steps_per_task == 0 {
            return Err(Error::InvalidConfig("piecewise sine needs ≥ 1 task and ≥ 1 step per task".into()));
        }
        if spec.noise_sd.is_nan() || spec.noise_sd < 0.0 {
            return Err(Error::InvalidConfig("noise_sd must be ≥ 0".into()));
        }
        let coefficients = match &spec.coefficients {
            Some(c) if c.len() != spec.num_tasks => {
                return Err(Error::DimensionMismatch {
                    what: "sine coefficients",
                    expected: spec.num_tasks,
                    found: c.len(),
                })
            }
            Some(c) => c.clone(),
            None => {
                let mut rng = seeded(derive_seed(seed, 0));
                (0..spec.num_tasks)
                    .map(|_| (rng.random_range(0.0..2.0 * PI), rng.random_range(0.5..2.0)))
                    .collect()
            }
        };
        Ok(Self { spec, coefficients, seed })
    }

    pub fn len(&self) -> usize {
        self.spec.num_tasks * self.spec.steps_per_task
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn target(&self, task: usize, x: f64) -> f64 {
        let (w0, w1) = self.coefficients[task];
        x + 0.3 * (w0 + w1 * PI * x).sin()
    }

    pub fn task_at(&self, t: usize) -> usize {
        (t / self.spec.steps_per_task).min(self.spec.num_tasks - 1)
    }

    /// Task start times `0, S, 2S, …`.
    pub fn boundaries(&self) -> Vec<usize> {
        (0..self.spec.num_tasks).map(|k| k * self.spec.steps_per_task).collect()
    }

    pub fn events(&self) -> Vec<StreamEvent> {
        let mut rng = seeded(derive_seed(self.seed, 1));
        (0..self.len())
            .map(|t| {
                let task = self.task_at(t);
                let x = rng.random_range(-2.0..2.0);
                let y = self.target(task, x) + self.spec.noise_sd * standard_normal(&mut rng);
                StreamEvent::new(t, task, DVector::from_element(1, x), DVector::from_element(1, y))
            })
            .collect()
    }

    /// Noise-free held-out points from one task.
    pub fn test_set(&self, task: usize, n: usize, seed: u64) -> Vec<Observation> {
        let mut rng = seeded(derive_seed(seed, 1000 + task as u64));
        (0..n)
            .map(|_| {
                let x = rng.random_range(-2.0..2.0);
                Observation {
                    x: DVector::from_element(1, x),
                    y: DVector::from_element(1, self.target(task, x)),
                }
            })
            .collect()
    }
}

pub fn gen_piecewise_sine(spec: &PiecewiseSineSpec, seed: u64) -> Result<Vec<StreamEvent>> {
    Ok(PiecewiseSine::new(spec.clone(), seed)?.events())
}

/// Slowly drifting regression target.
///
/// With `s = t / steps`, the latent angle is
/// `θ_t = (exp(c s) sin(ω s) + 1)(θ_max − θ_min)/2 + θ_min` and the label is
/// `θ_t + r_t`, `r_t ~ N(0, noise_sd²)`. Inputs mimic a rotated template: a
/// random reference angle `ψ_t ~ U(0, 2π)` and features
/// `[cos ψ, sin ψ, cos(ψ + θ°), sin(ψ + θ°)]`, where `θ°` is `θ_t` in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftingTargetSpec {
    /// `c` in `exp(c t / steps)`.
    pub amplitude_growth: f64,
    /// `ω`, radians per unit of normalized time.
    pub frequency: f64,
    pub noise_sd: f64,
    pub steps: usize,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl Default for DriftingTargetSpec {
    fn default() -> Self {
        Self {
            amplitude_growth: 1.0,
            frequency: 35.0,
            noise_sd: 2f64.sqrt(),
            steps: 2000,
            theta_min: 0.0,
            theta_max: 180.0,
        }
    }
}

impl DriftingTargetSpec {
    pub fn oscillator(&self, t: usize) -> f64 {
        let s = t as f64 / self.steps as f64;
        (self.amplitude_growth * s).exp() * (self.frequency * s).sin()
    }

    pub fn angle(&self, t: usize) -> f64 {
        (self.oscillator(t) + 1.0) * (self.theta_max - self.theta_min) / 2.0 + self.theta_min
    }
}

pub fn gen_drifting_target(spec: &DriftingTargetSpec, seed: u64) -> Result<Vec<StreamEvent>> {
    if spec.steps == 0 {
        return Err(Error::InvalidConfig("drifting target needs steps ≥ 1".into()));
    }
    let mut rng = seeded(seed);
    Ok((0..spec.steps)
        .map(|t| {
            let angle = spec.angle(t);
            let psi = rng.random_range(0.0..2.0 * PI);
            let rot = psi + angle.to_radians();
            let x = DVector::from_vec(alloc::vec![psi.cos(), psi.sin(), rot.cos(), rot.sin()]);
            let y = angle + spec.noise_sd * standard_normal(&mut rng);
            StreamEvent::new(t, 0, x, DVector::from_element(1, y))
        })
        .collect())
}

/// Permutation used for `task`: the identity for the first task, a seeded
/// random permutation afterwards.
pub fn task_permutation(task: usize, dim: usize, seed: u64) -> Vec<usize> {
    if task == 0 {
        (0..dim).collect()
    } else {
        permutation(&mut seeded(derive_seed(seed, task as u64)), dim)
    }
}

/// Applies `x'[i] = x[π[i]]`.
pub fn apply_permutation(x: &DVector<f64>, perm: &[usize]) -> DVector<f64> {
    DVector::from_fn(perm.len(), |i, _| x[perm[i]])
}

/// Re-labels `base` into tasks of `steps_per_task` steps and permutes the
/// input coordinates of every task after the first.
pub fn gen_permuted_tasks(base: &[Observation], steps_per_task: usize, seed: u64) -> Result<Vec<StreamEvent>> {
    if steps_per_task == 0 {
        return Err(Error::InvalidConfig("steps_per_task must be ≥ 1".into()));
    }
    let dim = base.first().map_or(0, |o| o.x.len());
    let mut perms: Vec<Vec<usize>> = Vec::new();
    base.iter()
        .enumerate()
        .map(|(t, obs)| {
            if obs.x.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "stream input",
                    expected: dim,
                    found: obs.x.len(),
                });
            }
            let task = t / steps_per_task;
            while perms.len() <= task {
                perms.push(task_permutation(perms.len(), dim, seed));
            }
            Ok(StreamEvent::new(t, task, apply_permutation(&obs.x, &perms[task]), obs.y.clone()))
        })
        .collect()
}

/// Mean and standard deviation used to standardize one column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    pub mean: f64,
    pub sd: f64,
}

impl Scaling {
    fn fit(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        // constant columns are centred but not scaled
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        Self { mean, sd }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.sd
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.sd + self.mean
    }
}

/// A seeded train/test split of a regression table.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularSplit {
    pub train: Vec<Observation>,
    pub test: Vec<Observation>,
    pub feature_scaling: Vec<Scaling>,
    /// Scaling applied to the target; predictions in standardized units map
    /// back with [`Scaling::invert`].
    pub target_scaling: Scaling,
}

/// Shuffles rows with `split_seed`, holds out `round(n · test_fraction)`
/// rows, and (optionally) standardizes features and target with statistics
/// of the training rows only.
pub fn split_regression(
    features: &[Vec<f64>],
    targets: &[f64],
    standardize: bool,
    split_seed: u64,
    test_fraction: f64,
) -> Result<TabularSplit> {
    if features.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            what: "target rows",
            expected: features.len(),
            found: targets.len(),
        });
    }
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidConfig(alloc::format!("test_fraction must lie in [0, 1), got {test_fraction}")));
    }
    let n = features.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test >= n {
        return Err(Error::InvalidConfig("split leaves no training rows".into()));
    }
    let d = features.first().map_or(0, |r| r.len());
    if let Some(i) = features.iter().position(|r| r.len() != d) {
        return Err(Error::InvalidConfig(alloc::format!("row {i} has {} features, expected {d}", features[i].len())));
    }
    let order = permutation(&mut seeded(split_seed), n);
    let (test_idx, train_idx) = order.split_at(n_test);

    let identity = Scaling { mean: 0.0, sd: 1.0 };
    let (feature_scaling, target_scaling) = if standardize {
        (
            (0..d).map(|j| Scaling::fit(train_idx.iter().map(|&i| features[i][j]))).collect(),
            Scaling::fit(train_idx.iter().map(|&i| targets[i])),
        )
    } else {
        (alloc::vec![identity; d], identity)
    };
    let make = |idx: &[usize]| -> Vec<Observation> {
        idx.iter()
            .map(|&i| Observation {
                x: DVector::from_fn(d, |j, _| feature_scaling[j].apply(features[i][j])),
                y: DVector::from_element(1, target_scaling.apply(targets[i])),
            })
            .collect()
    };
    Ok(TabularSplit {
        train: make(train_idx),
        test: make(test_idx),
        feature_scaling: feature_scaling.clone(),
        target_scaling,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    /// Root mean squared error of the point prediction.
    Rmse,
    /// Plugin negative log-likelihood.
    Nll,
    /// Monte Carlo negative log predictive density.
    Nlpd,
    /// 0/1 error of the arg-max class.
    Misclass,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::Nll => "nll",
            Metric::Nlpd => "nlpd",
            Metric::Misclass => "misclass",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rmse" => Some(Metric::Rmse),
            "nll" => Some(Metric::Nll),
            "nlpd" => Some(Metric::Nlpd),
            "misclass" => Some(Metric::Misclass),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub t: usize,
    pub task_id: usize,
    pub metric: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrequentialConfig {
    pub metrics: Vec<Metric>,
    /// Rolling window over per-step values; 1 reports each step as is.
    pub window: usize,
    pub nlpd_samples: usize,
    pub seed: u64,
}

impl Default for PrequentialConfig {
    fn default() -> Self {
        Self {
            metrics: alloc::vec![Metric::Rmse, Metric::Nll],
            window: 1,
            nlpd_samples: 10,
            seed: 0,
        }
    }
}

fn argmax(v: &DVector<f64>) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Per-step loss for one metric (squared error for RMSE; the root is taken
/// after windowing).
fn step_loss(metric: Metric, learner: &mut dyn OnlineLearner, x: &DVector<f64>, y: &DVector<f64>, seed: u64, samples: usize) -> Result<f64> {
    match metric {
        Metric::Rmse => {
            let p = learner.predict(x)?.point();
            Ok((y - p).norm_squared() / y.len() as f64)
        }
        Metric::Nll => learner.predict(x)?.nll(y),
        Metric::Nlpd => {
            let draws = learner.sample_parameters(samples, seed)?;
            let components = (0..samples)
                .map(|s| predict_at(learner.model(), &draws.row(s).transpose(), x))
                .collect::<Result<Vec<_>>>()?;
            McPredictive { components }.nlpd(y)
        }
        Metric::Misclass => {
            let p = learner.predict(x)?.point();
            Ok(if argmax(&p) == argmax(y) { 0.0 } else { 1.0 })
        }
    }
}

/// Runs the learner over the stream. Every metric at step `t` is computed
/// from predictions made before `y_t` is passed to `update`.
pub fn prequential_eval(learner: &mut dyn OnlineLearner, stream: &[StreamEvent], cfg: &PrequentialConfig) -> Result<Vec<MetricRow>> {
    if cfg.window == 0 {
        return Err(Error::InvalidConfig("window must be ≥ 1".into()));
    }
    let mut history: Vec<Vec<f64>> = alloc::vec![Vec::with_capacity(stream.len()); cfg.metrics.len()];
    let mut rows = Vec::with_capacity(stream.len() * cfg.metrics.len());
    for event in stream {
        let obs = event.observation();
        for (m, metric) in cfg.metrics.iter().enumerate() {
            let loss = step_loss(*metric, learner, &obs.x, &obs.y, derive_seed(cfg.seed, event.t as u64), cfg.nlpd_samples)?;
            history[m].push(loss);
            let h = &history[m];
            let start = h.len().saturating_sub(cfg.window);
            let mean = h[start..].iter().sum::<f64>() / (h.len() - start) as f64;
            rows.push(MetricRow {
                t: event.t,
                task_id: event.task_id,
                metric: metric.name(),
                value: if *metric == Metric::Rmse { mean.sqrt() } else { mean },
            });
        }
        learner.update(obs)?;
    }
    Ok(rows)
}

/// RMSE of the learner's current point predictions on a held-out set.
pub fn test_rmse(learner: &mut dyn OnlineLearner, test: &[Observation]) -> Result<f64> {
    let mut sse = 0.0;
    let mut count = 0usize;
    for obs in test {
        let p = learner.predict(&obs.x)?.point();
        sse += (&obs.y - p).norm_squared();
        count += obs.y.len();
    }
    Ok((sse / count as f64).sqrt())
}
