//! Seeded experiment execution: builds streams, models and learners from a
//! configuration, fans seeds out across worker threads and writes metric
//! files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use lofi_core::adaptive::{prequential_nll_objective, random_search_tune, validation_nll_objective, HyperParams, TuneResult};
use lofi_core::bandit::{gen_synthetic_bandit, run_bandit, Policy};
use lofi_core::learner::{Learner, LearnerConfig, OnlineLearner};
use lofi_core::lofi::DynamicsConfig;
use lofi_core::model::{InitScheme, LikelihoodFamily, MlpSpec, Model, ObsNoise};
use lofi_core::rng::{derive_seed, permutation, seeded};
use lofi_core::streams::{
    gen_drifting_target, gen_permuted_tasks, gen_piecewise_sine, prequential_eval, split_regression, test_rmse, Observation,
    PrequentialConfig, Scaling, StreamEvent,
};
use lofi_core::DVector;

use crate::config::{ExperimentConfig, StreamSpec, TuneObjective};
use crate::io::{format_float, load_csv_regression, save_checkpoint, write_metrics_file, Checkpoint, MetricRecord};

/// Environment variable holding the number of worker threads.
pub const WORKERS_ENV: &str = "LOFI_WORKERS";

// Child-seed indices, so each consumer of a run seed gets its own stream.
const INIT_SEED: u64 = 1;
const LEARNER_SEED: u64 = 2;
const EVAL_SEED: u64 = 3;
const SHUFFLE_SEED: u64 = 4;
const TUNE_STREAM_SEED: u64 = 5;

pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Maps `f` over `items` on up to [`worker_count`] threads; results keep the
/// input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = worker_count().min(items.len()).max(1);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().unwrap()).collect()
}

/// A stream ready to run, plus any held-out data.
#[derive(Debug, Clone)]
pub struct PreparedStream {
    pub events: Vec<StreamEvent>,
    pub test: Vec<Observation>,
    /// Scaling of the regression target, for reporting in original units.
    pub target_scaling: Option<Scaling>,
    pub input_dim: usize,
    pub output_dim: usize,
    pub classification: bool,
}

/// Loads or generates the stream for `seed`. Static streams are repeated
/// `passes` times, reshuffled with an epoch-indexed seed after the first.
pub fn prepare_stream(spec: &StreamSpec, seed: u64, passes: usize) -> Result<PreparedStream> {
    let (events, test, scaling, classification) = match spec {
        StreamSpec::PiecewiseSine(s) => (gen_piecewise_sine(s, seed)?, Vec::new(), None, false),
        StreamSpec::DriftingTarget(s) => (gen_drifting_target(s, seed)?, Vec::new(), None, false),
        StreamSpec::TeacherClassification { spec, steps_per_task } => {
            let env = gen_synthetic_bandit(spec, seed)?;
            let base: Vec<Observation> = (0..env.len())
                .map(|t| Observation {
                    x: env.context(t).clone(),
                    y: DVector::from_fn(env.num_actions(), |a, _| env.reward(t, a)),
                })
                .collect();
            let events = match steps_per_task {
                Some(n) => gen_permuted_tasks(&base, *n, seed)?,
                None => base.into_iter().enumerate().map(|(t, o)| StreamEvent::new(t, 0, o.x, o.y)).collect(),
            };
            (events, Vec::new(), None, true)
        }
        StreamSpec::Csv {
            path,
            target_column,
            standardize,
            test_fraction,
            split_seed,
        } => {
            let table = load_csv_regression(path, target_column)?;
            let split = split_regression(&table.features, &table.targets, *standardize, split_seed.unwrap_or(seed), *test_fraction)?;
            let n = split.train.len();
            let mut events = Vec::with_capacity(n * passes);
            for pass in 0..passes {
                let order: Vec<usize> = if pass == 0 {
                    (0..n).collect()
                } else {
                    permutation(&mut seeded(derive_seed(derive_seed(seed, SHUFFLE_SEED), pass as u64)), n)
                };
                for (i, &k) in order.iter().enumerate() {
                    let o = &split.train[k];
                    events.push(StreamEvent::new(pass * n + i, pass, o.x.clone(), o.y.clone()));
                }
            }
            (events, split.test, Some(split.target_scaling), false)
        }
    };
    let first = events.first().context("stream is empty")?.observation();
    Ok(PreparedStream {
        input_dim: first.x.len(),
        output_dim: first.y.len(),
        events,
        test,
        target_scaling: scaling,
        classification,
    })
}

pub fn build_model(cfg: &ExperimentConfig, input_dim: usize, output_dim: usize, classification: bool, obs_noise: f64) -> Result<Model> {
    let mut widths = vec![input_dim];
    widths.extend(&cfg.model.hidden);
    widths.push(output_dim);
    let family = if classification {
        LikelihoodFamily::Categorical
    } else {
        LikelihoodFamily::GaussianRegression(ObsNoise::Scalar(obs_noise))
    };
    Ok(Model::mlp(MlpSpec::new(widths, cfg.model.activation)?, family)?)
}

/// Overrides the configured dynamics and observation noise with tuned values.
fn apply_hyper(cfg: &ExperimentConfig, h: Option<&HyperParams>) -> Result<(DynamicsConfig, f64)> {
    match h {
        None => Ok((cfg.dynamics, cfg.model.obs_noise)),
        Some(h) => Ok((DynamicsConfig::new(h.gamma, h.process_noise, h.initial_precision)?, h.obs_noise)),
    }
}

pub fn build_learner(cfg: &ExperimentConfig, stream: &PreparedStream, seed: u64, hyper: Option<&HyperParams>) -> Result<Learner> {
    let (dynamics, obs_noise) = apply_hyper(cfg, hyper)?;
    let model = build_model(cfg, stream.input_dim, stream.output_dim, stream.classification, obs_noise)?;
    let mean = model.initialize_mean(InitScheme::LecunNormal, derive_seed(seed, INIT_SEED));
    let learner_cfg = LearnerConfig {
        method: cfg.method.clone(),
        dynamics,
        inflation: cfg.inflation,
        seed: derive_seed(seed, LEARNER_SEED),
        noise_alpha_min: cfg.noise_alpha_min,
    };
    Ok(Learner::new(model, learner_cfg, mean)?)
}

/// Per-seed result: metric rows, per-metric averages, or the failure.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub rows: Vec<MetricRecord>,
    pub averages: BTreeMap<String, f64>,
    pub checkpoint: Option<Checkpoint>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    /// Standard error of the mean across seeds (0 for a single seed).
    pub stderr: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub outcomes: Vec<SeedOutcome>,
    pub summary: Vec<SummaryRow>,
    pub files: Vec<PathBuf>,
    pub tuned: Option<HyperParams>,
}

impl RunReport {
    pub fn failed(&self) -> Vec<(u64, &str)> {
        self.outcomes.iter().filter_map(|o| o.error.as_deref().map(|e| (o.seed, e))).collect()
    }
}

pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn summarize(method: &str, outcomes: &[SeedOutcome]) -> Vec<SummaryRow> {
    let mut by_metric: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for o in outcomes.iter().filter(|o| o.error.is_none()) {
        for (k, v) in &o.averages {
            by_metric.entry(k).or_default().push(*v);
        }
    }
    by_metric
        .into_iter()
        .map(|(metric, values)| {
            let (mean, stderr) = mean_and_stderr(&values);
            SummaryRow {
                method: method.to_string(),
                metric: metric.to_string(),
                mean,
                stderr,
                seeds: values.len(),
            }
        })
        .collect()
}

fn stream_spec(cfg: &ExperimentConfig) -> Result<&StreamSpec> {
    cfg.stream.as_ref().context("the config has no [stream] section")
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64, hyper: Option<&HyperParams>) -> Result<SeedOutcome> {
    let stream = prepare_stream(stream_spec(cfg)?, seed, cfg.passes)?;
    let mut learner = build_learner(cfg, &stream, seed, hyper)?;
    let pcfg = PrequentialConfig {
        metrics: cfg.metrics.clone(),
        window: cfg.window,
        nlpd_samples: cfg.nlpd_samples,
        seed: derive_seed(seed, EVAL_SEED),
    };
    let rows = prequential_eval(&mut learner, &stream.events, &pcfg)?;
    let method = learner.name().to_string();
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut records: Vec<MetricRecord> = rows
        .iter()
        .map(|r| {
            let e = sums.entry(r.metric.to_string()).or_default();
            e.0 += r.value;
            e.1 += 1;
            MetricRecord {
                t: r.t,
                task_id: r.task_id,
                seed,
                method: method.clone(),
                metric: r.metric.to_string(),
                value: r.value,
            }
        })
        .collect();
    let mut averages: BTreeMap<String, f64> = sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
    if !stream.test.is_empty() {
        let scale = stream.target_scaling.map_or(1.0, |s| s.sd);
        let rmse = test_rmse(&mut learner, &stream.test)? * scale;
        averages.insert("test_rmse".into(), rmse);
        records.push(MetricRecord {
            t: stream.events.len(),
            task_id: 0,
            seed,
            method,
            metric: "test_rmse".into(),
            value: rmse,
        });
    }
    let checkpoint = if cfg.checkpoint {
        learner
            .dlr_belief()
            .cloned()
            .map(Checkpoint::Dlr)
            .or_else(|| learner.spherical_belief().cloned().map(Checkpoint::Spherical))
    } else {
        None
    };
    Ok(SeedOutcome {
        seed,
        rows: records,
        averages,
        checkpoint,
        error: None,
    })
}

fn failed_outcome(seed: u64, e: anyhow::Error) -> SeedOutcome {
    SeedOutcome {
        seed,
        rows: Vec::new(),
        averages: BTreeMap::new(),
        checkpoint: None,
        error: Some(format!("{e:#}")),
    }
}

fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["method", "metric", "mean", "stderr", "seeds"])?;
    for r in rows {
        w.write_record([r.method.clone(), r.metric.clone(), format_float(r.mean), format_float(r.stderr), r.seeds.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_failures(path: &Path, outcomes: &[SeedOutcome]) -> Result<Option<PathBuf>> {
    let failed: Vec<String> = outcomes
        .iter()
        .filter_map(|o| o.error.as_ref().map(|e| format!("seed {}: {e}", o.seed)))
        .collect();
    if failed.is_empty() {
        if path.exists() {
            fs::remove_file(path)?;
        }
        return Ok(None);
    }
    fs::write(path, failed.join("\n") + "\n")?;
    Ok(Some(path.to_path_buf()))
}

/// Writes per-seed files, then the merged metric file and the summary.
fn write_outputs(out: &Path, prefix: &str, method: &str, outcomes: &[SeedOutcome]) -> Result<(Vec<SummaryRow>, Vec<PathBuf>)> {
    fs::create_dir_all(out.join("seeds")).with_context(|| format!("creating {}", out.display()))?;
    let mut files = Vec::new();
    for o in outcomes.iter().filter(|o| o.error.is_none()) {
        let p = out.join("seeds").join(format!("{prefix}seed-{}.csv", o.seed));
        write_metrics_file(&p, &o.rows)?;
        files.push(p);
        if let Some(c) = &o.checkpoint {
            let p = out.join("checkpoints").join(format!("seed-{}.txt", o.seed));
            save_checkpoint(&p, c)?;
            files.push(p);
        }
    }
    let merged: Vec<MetricRecord> = outcomes.iter().flat_map(|o| o.rows.iter().cloned()).collect();
    let p = out.join(format!("{prefix}metrics.csv"));
    write_metrics_file(&p, &merged)?;
    files.push(p);
    let summary = summarize(method, outcomes);
    let p = out.join(format!("{prefix}summary.csv"));
    write_summary(&p, &summary)?;
    files.push(p);
    if let Some(p) = write_failures(&out.join(format!("{prefix}failures.txt")), outcomes)? {
        files.push(p);
    }
    Ok((summary, files))
}

/// Runs every seed (tuning first when enabled) and writes
/// `metrics.csv`, `summary.csv` and per-seed files under the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    stream_spec(cfg)?;
    let tuned = if cfg.tune.enabled { Some(tune(cfg)?.0.best) } else { None };
    let outcomes = parallel_map(&cfg.seeds, |&seed| run_seed(cfg, seed, tuned.as_ref()).unwrap_or_else(|e| failed_outcome(seed, e)));
    let (summary, files) = write_outputs(&cfg.output, "", cfg.method.tag(), &outcomes)?;
    Ok(RunReport {
        outcomes,
        summary,
        files,
        tuned,
    })
}

/// Stream used for tuning; never one of the evaluation streams' held-out data.
fn tuning_stream(cfg: &ExperimentConfig) -> Result<PreparedStream> {
    let mut s = prepare_stream(stream_spec(cfg)?, derive_seed(cfg.tune.seed, TUNE_STREAM_SEED), 1)?;
    s.test.clear();
    Ok(s)
}

fn evaluate_trial(cfg: &ExperimentConfig, stream: &PreparedStream, h: &HyperParams, trial_seed: u64) -> lofi_core::Result<f64> {
    let mut learner = build_learner(cfg, stream, trial_seed, Some(h)).map_err(|e| lofi_core::Error::InvalidConfig(format!("{e:#}")))?;
    match cfg.tune.objective {
        TuneObjective::Prequential => prequential_nll_objective(&mut learner, &stream.events, cfg.tune.steps),
        TuneObjective::Validation => {
            // hold back the last tenth of the tuning stream
            let n = stream.events.len();
            let n_val = (n / 10).max(1);
            if n_val >= n {
                return Err(lofi_core::Error::InvalidConfig("tuning stream too short for a validation split".into()));
            }
            let (train, val) = stream.events.split_at(n - n_val);
            let val: Vec<Observation> = val.iter().map(|e| e.observation().clone()).collect();
            validation_nll_objective(&mut learner, train, cfg.tune.steps, &val)
        }
    }
}

/// Random-search tuning; writes `trials.csv` and returns the result with its path.
pub fn tune(cfg: &ExperimentConfig) -> Result<(TuneResult, PathBuf)> {
    let stream = tuning_stream(cfg)?;
    let trials = lofi_core::adaptive::sample_trials(&cfg.tune.space, cfg.tune.budget, cfg.tune.seed)?;
    let objectives = parallel_map(&trials, |(h, s)| evaluate_trial(cfg, &stream, h, *s));
    let mut it = objectives.into_iter();
    let result = random_search_tune(&cfg.tune.space, cfg.tune.budget, cfg.tune.seed, |_, _| it.next().unwrap())?;
    fs::create_dir_all(&cfg.output)?;
    let path = cfg.output.join("trials.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["trial", "eta0", "q", "gamma", "obs_noise", "objective", "error"])?;
    for t in &result.trials {
        let h = t.params;
        let (obj, err) = match &t.objective {
            Ok(v) => (format_float(*v), String::new()),
            Err(e) => (String::new(), e.clone()),
        };
        w.write_record([
            t.index.to_string(),
            format_float(h.initial_precision),
            format_float(h.process_noise),
            format_float(h.gamma),
            format_float(h.obs_noise),
            obj,
            err,
        ])?;
    }
    w.flush()?;
    Ok((result, path))
}

pub fn bandit_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutcome> {
    let env = gen_synthetic_bandit(&cfg.bandit.env, seed)?;
    let mut widths = vec![cfg.bandit.env.input_dim];
    widths.extend(&cfg.model.hidden);
    widths.push(cfg.bandit.env.num_actions);
    let model = Model::mlp(
        MlpSpec::new(widths, cfg.model.activation)?,
        LikelihoodFamily::GaussianRegression(ObsNoise::Scalar(cfg.bandit.reward_noise)),
    )?;
    let mean = model.initialize_mean(InitScheme::LecunNormal, derive_seed(seed, INIT_SEED));
    let mut learner = Learner::new(
        model,
        LearnerConfig {
            method: cfg.method.clone(),
            dynamics: cfg.dynamics,
            inflation: cfg.inflation,
            seed: derive_seed(seed, LEARNER_SEED),
            noise_alpha_min: None,
        },
        mean,
    )?;
    let trace = run_bandit(&env, &mut learner, cfg.bandit.policy, cfg.bandit.env.steps, derive_seed(seed, EVAL_SEED))?;
    let method = bandit_label(cfg);
    let mut rows = Vec::with_capacity(2 * trace.rewards.len());
    for (t, (&r, &c)) in trace.rewards.iter().zip(&trace.cumulative).enumerate() {
        for (metric, value) in [("reward", r), ("cumulative_reward", c)] {
            rows.push(MetricRecord {
                t,
                task_id: 0,
                seed,
                method: method.clone(),
                metric: metric.into(),
                value,
            });
        }
    }
    let mut averages = BTreeMap::new();
    averages.insert("total_reward".to_string(), trace.total());
    Ok(SeedOutcome {
        seed,
        rows,
        averages,
        checkpoint: None,
        error: None,
    })
}

pub fn bandit_label(cfg: &ExperimentConfig) -> String {
    let policy = match cfg.bandit.policy {
        Policy::EpsilonGreedy { epsilon } => format!("epsilon-greedy({epsilon})"),
        p => p.name().to_string(),
    };
    format!("{}+{policy}", cfg.method.tag())
}

/// Runs the synthetic bandit for every seed; files are prefixed `bandit-`.
pub fn run_bandit_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let outcomes = parallel_map(&cfg.seeds, |&seed| bandit_seed(cfg, seed).unwrap_or_else(|e| failed_outcome(seed, e)));
    let (summary, files) = write_outputs(&cfg.output, "bandit-", &bandit_label(cfg), &outcomes)?;
    Ok(RunReport {
        outcomes,
        summary,
        files,
        tuned: None,
    })
}

/// Fails when any seed failed, naming each.
pub fn ensure_complete(report: &RunReport) -> Result<()> {
    let failed = report.failed();
    if failed.is_empty() {
        return Ok(());
    }
    let lines: Vec<String> = failed.iter().map(|(s, e)| format!("seed {s}: {e}")).collect();
    bail!("{} of {} seeds failed:\n{}", failed.len(), report.outcomes.len(), lines.join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stderr_matches_hand_values() {
        let (m, se) = mean_and_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // sample variance 5/3, se = sqrt(5/12)
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_and_stderr(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn parallel_map_keeps_order() {
        let v: Vec<u64> = (0..37).collect();
        assert_eq!(parallel_map(&v, |x| x * 2), v.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
