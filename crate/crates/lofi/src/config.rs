//! Experiment configuration files.
//!
//! # Grammar
//!
//! ```text
//! file    := line*
//! line    := blank | comment | section | entry
//! comment := '#' any*                    (also allowed after a value)
//! section := '[' name ']'
//! entry   := key '=' value
//! value   := any text up to '#' or end of line, trimmed;
//!            lists are comma-separated
//! ```
//!
//! Every entry belongs to the most recent section. Keys may appear once per
//! section; unknown sections and keys are errors. Validation collects every
//! problem, each prefixed with its `section.key` path.
//!
//! # Sections
//!
//! | section        | keys (default)                                                         |
//! |----------------|------------------------------------------------------------------------|
//! | `[experiment]` | `seeds` (required), `output` (required), `name` (`experiment`), `passes` (1), `metrics` (`rmse, nll`), `window` (1), `nlpd_samples` (10), `checkpoint` (false) |
//! | `[method]`     | `tag` (required), `rank` (10), `basis` (`svd`), `iters` (1), `linesearch_grid` (10), `buffer` (10), `optimizer` (`adam`), `lr` (1e-3), `inner_iters` (1), `inflation` (`none`), `alpha` (0) |
//! | `[dynamics]`   | `gamma` (1), `q` (0), `eta0` (1), `steady_state` (false), `noise_alpha_min` (unset) |
//! | `[model]`      | `hidden` (`50`), `activation` (`relu`), `obs_noise` (0.1)              |
//! | `[stream]`     | `kind` (required) plus kind-specific keys, see below                   |
//! | `[tune]`       | `enabled` (false), `budget` (20), `objective` (`prequential`), `steps` (all), `seed` (0), `eta0_range`, `q_range`, `gamma_range`, `obs_noise_range`, `q_zero_atom` (true), `gamma_one_atom` (true) |
//! | `[bandit]`     | `steps` (2000), `num_actions` (5), `input_dim` (4), `teacher_hidden` (16), `policy` (`thompson`), `epsilon` (0.1), `reward_noise` (0.25, the variance of the Gaussian reward model) |
//!
//! Stream kinds:
//! - `piecewise-sine`: `num_tasks` (5), `steps_per_task` (250), `noise_sd` (0.1).
//! - `drifting-target`: `steps` (2000), `noise_sd` (√2), `frequency` (35), `amplitude_growth` (1), `theta_min` (0), `theta_max` (180).
//! - `csv`: `path` (required), `target_column` (last column; name or 0-based index), `standardize` (true), `test_fraction` (0.1), `split_seed` (the run seed).
//! - `teacher-classification`: `steps` (2000), `input_dim` (4), `num_classes` (5), `teacher_hidden` (16), `steps_per_task` (unset; permutes inputs per task when set).
//!
//! Only `csv` streams may use `passes > 1`. A file with a `[bandit]` section
//! and no `[stream]` section is valid for the `bandit` command only.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use lofi_core::adaptive::{LogRange, SearchSpace};
use lofi_core::bandit::{Policy, SyntheticBanditSpec, DEFAULT_EPSILON, DEFAULT_REWARD_NOISE};
use lofi_core::baselines::{IteratedConfig, Optimizer};
use lofi_core::inflation::{InflationConfig, InflationVariant};
use lofi_core::learner::Method;
use lofi_core::lofi::spherical::BasisUpdate;
use lofi_core::lofi::DynamicsConfig;
use lofi_core::model::Activation;
use lofi_core::streams::{DriftingTargetSpec, Metric, PiecewiseSineSpec};

const SECTIONS: &[(&str, &[&str])] = &[
    ("experiment", &["seeds", "output", "name", "passes", "metrics", "window", "nlpd_samples", "checkpoint"]),
    (
        "method",
        &["tag", "rank", "basis", "iters", "linesearch_grid", "buffer", "optimizer", "lr", "inner_iters", "inflation", "alpha"],
    ),
    ("dynamics", &["gamma", "q", "eta0", "steady_state", "noise_alpha_min"]),
    ("model", &["hidden", "activation", "obs_noise"]),
    (
        "stream",
        &[
            "kind", "num_tasks", "steps_per_task", "noise_sd", "steps", "frequency", "amplitude_growth", "theta_min", "theta_max", "path",
            "target_column", "standardize", "test_fraction", "split_seed", "input_dim", "num_classes", "teacher_hidden",
        ],
    ),
    (
        "tune",
        &[
            "enabled", "budget", "objective", "steps", "seed", "eta0_range", "q_range", "gamma_range", "obs_noise_range", "q_zero_atom",
            "gamma_one_atom",
        ],
    ),
    ("bandit", &["steps", "num_actions", "input_dim", "teacher_hidden", "policy", "epsilon", "reward_noise"]),
];

pub const STREAM_KINDS: &[&str] = &["piecewise-sine", "drifting-target", "csv", "teacher-classification"];

/// Every problem found in a configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed but untyped file: section → key → value.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigErrors> {
        let mut raw = RawConfig::default();
        let mut errors = Vec::new();
        let mut current: Option<String> = None;
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    errors.push(format!("line {n}: unterminated section header"));
                    continue;
                };
                let name = name.trim().to_string();
                if !SECTIONS.iter().any(|(s, _)| *s == name) {
                    errors.push(format!("line {n}: unknown section [{name}]; expected one of {}", section_names()));
                }
                raw.sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                errors.push(format!("line {n}: expected `key = value`"));
                continue;
            };
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            let Some(section) = &current else {
                errors.push(format!("line {n}: `{key}` appears before any section"));
                continue;
            };
            if let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| s == section) {
                if !keys.contains(&key.as_str()) {
                    errors.push(format!("{section}.{key} (line {n}): unknown key; expected one of {}", keys.join(", ")));
                    continue;
                }
            }
            let entries = raw.sections.get_mut(section).unwrap();
            if let Some(prev) = entries.get(&key) {
                errors.push(format!("{section}.{key} (line {n}): duplicate key, first set on line {}", prev.line));
                continue;
            }
            entries.insert(key, Entry { value, line: n });
        }
        if errors.is_empty() {
            Ok(raw)
        } else {
            Err(ConfigErrors(errors))
        }
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }
}

fn section_names() -> String {
    SECTIONS.iter().map(|(s, _)| format!("[{s}]")).collect::<Vec<_>>().join(", ")
}

/// Typed accessors that record errors instead of stopping at the first.
struct Reader<'a> {
    raw: &'a RawConfig,
    errors: Vec<String>,
}

trait FromValue: Sized {
    const EXPECTED: &'static str;
    fn from_value(s: &str) -> Option<Self>;
}

impl FromValue for f64 {
    const EXPECTED: &'static str = "a number";
    fn from_value(s: &str) -> Option<Self> {
        s.parse().ok().filter(|v: &f64| v.is_finite())
    }
}

impl FromValue for usize {
    const EXPECTED: &'static str = "a non-negative integer";
    fn from_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl FromValue for u64 {
    const EXPECTED: &'static str = "a non-negative integer";
    fn from_value(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl FromValue for bool {
    const EXPECTED: &'static str = "true or false";
    fn from_value(s: &str) -> Option<Self> {
        match s {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        }
    }
}

impl FromValue for String {
    const EXPECTED: &'static str = "text";
    fn from_value(s: &str) -> Option<Self> {
        (!s.is_empty()).then(|| s.to_string())
    }
}

impl<'a> Reader<'a> {
    fn entry(&self, section: &str, key: &str) -> Option<&'a Entry> {
        self.raw.sections.get(section).and_then(|s| s.get(key))
    }

    fn error(&mut self, section: &str, key: &str, msg: impl fmt::Display) {
        if key.is_empty() {
            self.errors.push(format!("{section}: {msg}"));
            return;
        }
        match self.entry(section, key) {
            Some(e) => self.errors.push(format!("{section}.{key} (line {}): {msg}", e.line)),
            None => self.errors.push(format!("{section}.{key}: {msg}")),
        }
    }

    fn opt<T: FromValue>(&mut self, section: &str, key: &str) -> Option<T> {
        let e = self.entry(section, key)?;
        match T::from_value(&e.value) {
            Some(v) => Some(v),
            None => {
                self.error(section, key, format!("expected {}, got `{}`", T::EXPECTED, e.value));
                None
            }
        }
    }

    fn get<T: FromValue>(&mut self, section: &str, key: &str, default: T) -> T {
        self.opt(section, key).unwrap_or(default)
    }

    fn required<T: FromValue>(&mut self, section: &str, key: &str) -> Option<T> {
        if self.entry(section, key).is_none() {
            self.error(section, key, "required field is missing");
            return None;
        }
        self.opt(section, key)
    }

    fn list<T: FromValue>(&mut self, section: &str, key: &str) -> Option<Vec<T>> {
        let e = self.entry(section, key)?;
        if e.value.is_empty() {
            return Some(Vec::new());
        }
        let mut out = Vec::new();
        for item in e.value.split(',').map(str::trim) {
            match T::from_value(item) {
                Some(v) => out.push(v),
                None => {
                    self.error(section, key, format!("list item `{item}` is not {}", T::EXPECTED));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn choice<T: Copy>(&mut self, section: &str, key: &str, options: &[(&str, T)], default: T) -> T {
        let Some(e) = self.entry(section, key) else {
            return default;
        };
        match options.iter().find(|(name, _)| *name == e.value) {
            Some((_, v)) => *v,
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.error(section, key, format!("unknown value `{}`; expected one of {}", e.value, names.join(", ")));
                default
            }
        }
    }

    fn range(&mut self, key: &str, default: (f64, f64)) -> (f64, f64) {
        match self.list::<f64>("tune", key) {
            None => default,
            Some(v) if v.len() == 2 && v[0] > 0.0 && v[0] <= v[1] => (v[0], v[1]),
            Some(_) => {
                self.error("tune", key, "expected `lo, hi` with 0 < lo <= hi");
                default
            }
        }
    }

    fn check(&mut self, ok: bool, section: &str, key: &str, msg: &str) {
        if !ok {
            self.error(section, key, msg);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetColumn {
    Last,
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum StreamSpec {
    PiecewiseSine(PiecewiseSineSpec),
    DriftingTarget(DriftingTargetSpec),
    Csv {
        path: PathBuf,
        target_column: TargetColumn,
        standardize: bool,
        test_fraction: f64,
        split_seed: Option<u64>,
    },
    TeacherClassification {
        spec: SyntheticBanditSpec,
        steps_per_task: Option<usize>,
    },
}

impl StreamSpec {
    pub fn is_static(&self) -> bool {
        matches!(self, StreamSpec::Csv { .. })
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, StreamSpec::TeacherClassification { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub obs_noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuneObjective {
    /// Mean one-step-ahead NLL over the tuning stream.
    Prequential,
    /// Mean NLL on a held-back tail of the tuning stream.
    Validation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneSpec {
    pub enabled: bool,
    pub budget: usize,
    pub objective: TuneObjective,
    pub steps: Option<usize>,
    pub seed: u64,
    pub space: SearchSpace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditSpec {
    pub env: SyntheticBanditSpec,
    pub policy: Policy,
    pub reward_noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub passes: usize,
    pub metrics: Vec<Metric>,
    pub window: usize,
    pub nlpd_samples: usize,
    pub checkpoint: bool,
    pub method: Method,
    pub dynamics: DynamicsConfig,
    pub inflation: InflationConfig,
    pub noise_alpha_min: Option<f64>,
    pub model: ModelSpec,
    /// Absent only in bandit-only files.
    pub stream: Option<StreamSpec>,
    pub tune: TuneSpec,
    pub bandit: BanditSpec,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigErrors> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigErrors(vec![format!("{}: {e}", path.display())]))?;
        let mut cfg = Self::parse(&text)?;
        // relative paths in the file are relative to the file itself
        if let (Some(StreamSpec::Csv { path: p, .. }), Some(dir)) = (&mut cfg.stream, path.parent()) {
            if p.is_relative() {
                *p = dir.join(&p);
            }
        }
        if cfg.output.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.output = dir.join(&cfg.output);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigErrors> {
        let raw = RawConfig::parse(text)?;
        let mut r = Reader { raw: &raw, errors: Vec::new() };

        let name = r.get("experiment", "name", "experiment".to_string());
        let seeds = if r.entry("experiment", "seeds").is_some() {
            r.list::<u64>("experiment", "seeds").unwrap_or_default()
        } else {
            r.error("experiment", "seeds", "required field is missing");
            Vec::new()
        };
        if r.entry("experiment", "seeds").is_some() && seeds.is_empty() {
            r.error("experiment", "seeds", "at least one seed is required");
        }
        let output = r.required::<String>("experiment", "output").map(PathBuf::from).unwrap_or_default();
        let passes = r.get("experiment", "passes", 1usize);
        r.check(passes >= 1, "experiment", "passes", "must be at least 1");
        let metrics = match r.list::<String>("experiment", "metrics") {
            Some(names) => {
                let mut out = Vec::new();
                for n in names {
                    match Metric::parse(&n) {
                        Some(m) => out.push(m),
                        None => r.error("experiment", "metrics", format!("unknown metric `{n}`; expected rmse, nll, nlpd or misclass")),
                    }
                }
                out
            }
            None => vec![Metric::Rmse, Metric::Nll],
        };
        let window = r.get("experiment", "window", 1usize);
        r.check(window >= 1, "experiment", "window", "must be at least 1");
        let nlpd_samples = r.get("experiment", "nlpd_samples", 10usize);
        r.check(nlpd_samples >= 1, "experiment", "nlpd_samples", "must be at least 1");
        let checkpoint = r.get("experiment", "checkpoint", false);

        let method = read_method(&mut r);
        let inflation_variant = r.choice(
            "method",
            "inflation",
            &[
                ("none", InflationVariant::None),
                ("bayesian", InflationVariant::Bayesian),
                ("simple", InflationVariant::Simple),
                ("hybrid", InflationVariant::Hybrid),
            ],
            InflationVariant::None,
        );
        let alpha = r.get("method", "alpha", 0.0);
        let inflation = match InflationConfig::new(inflation_variant, alpha) {
            Ok(c) => c,
            Err(e) => {
                r.error("method", "alpha", e);
                InflationConfig::default()
            }
        };

        let gamma = r.get("dynamics", "gamma", 1.0);
        let q = r.get("dynamics", "q", 0.0);
        let eta0 = r.get("dynamics", "eta0", 1.0);
        let steady = r.get("dynamics", "steady_state", false);
        let dyn_result = if steady {
            if r.entry("dynamics", "gamma").is_some() {
                r.error("dynamics", "gamma", "is derived from q and eta0 when steady_state = true; remove it");
            }
            DynamicsConfig::steady_state(q, eta0)
        } else {
            DynamicsConfig::new(gamma, q, eta0)
        };
        let dynamics = dyn_result.unwrap_or_else(|e| {
            r.error("dynamics", "", e);
            DynamicsConfig::stationary(1.0).unwrap()
        });
        let noise_alpha_min = r.opt::<f64>("dynamics", "noise_alpha_min");
        if let Some(a) = noise_alpha_min {
            r.check(a > 0.0 && a <= 1.0, "dynamics", "noise_alpha_min", "must lie in (0, 1]");
        }

        let hidden = r.list::<usize>("model", "hidden").unwrap_or_else(|| vec![50]);
        r.check(hidden.iter().all(|&w| w > 0), "model", "hidden", "layer widths must be positive");
        let activation = r.choice("model", "activation", &[("relu", Activation::Relu), ("tanh", Activation::Tanh)], Activation::Relu);
        let obs_noise = r.get("model", "obs_noise", 0.1);
        r.check(obs_noise > 0.0, "model", "obs_noise", "must be positive");

        let stream = if raw.has_section("bandit") && !raw.has_section("stream") {
            None
        } else {
            read_stream(&mut r)
        };
        if let Some(s) = &stream {
            if passes > 1 && !s.is_static() {
                r.error("experiment", "passes", "multiple passes are only valid for static (csv) streams");
            }
            if s.is_classification() && noise_alpha_min.is_some() {
                r.error("dynamics", "noise_alpha_min", "noise tracking needs a regression stream");
            }
        }

        let tune = read_tune(&mut r);
        let bandit = read_bandit(&mut r);

        if matches!(method, Some(Method::SgdReplay { .. })) && inflation.variant != InflationVariant::None {
            r.error("method", "inflation", "does not apply to gradient-based methods");
        }

        if !r.errors.is_empty() {
            return Err(ConfigErrors(r.errors));
        }
        Ok(Self {
            name,
            seeds,
            output,
            passes,
            metrics,
            window,
            nlpd_samples,
            checkpoint,
            method: method.unwrap(),
            dynamics,
            inflation,
            noise_alpha_min,
            model: ModelSpec {
                hidden,
                activation,
                obs_noise,
            },
            stream,
            tune,
            bandit,
        })
    }
}

fn read_method(r: &mut Reader<'_>) -> Option<Method> {
    let tag: String = r.required("method", "tag")?;
    let rank = r.get("method", "rank", 10usize);
    let iterated = IteratedConfig {
        num_iters: r.get("method", "iters", 1usize),
        linesearch_grid: r.get("method", "linesearch_grid", 10usize),
    };
    let basis = r.choice("method", "basis", &[("svd", BasisUpdate::FullSvd), ("orth", BasisUpdate::Orth)], BasisUpdate::FullSvd);
    let lr = r.get("method", "lr", 1e-3);
    let optimizer = r.choice("method", "optimizer", &[("sgd", Optimizer::Sgd { lr }), ("adam", Optimizer::adam(lr))], Optimizer::adam(lr));
    let inner_iters = r.get("method", "inner_iters", 1usize);
    let method = match tag.as_str() {
        "fcekf" => Method::Fcekf,
        "vdekf" => Method::Vdekf,
        "fdekf" => Method::Fdekf,
        "lofi" => Method::Lofi { rank },
        "lofi-spherical" => Method::LofiSpherical { rank, basis },
        "iekf" => Method::Iekf { iterated },
        "ilofi" => Method::Ilofi { rank, iterated },
        "sgd-rb" => Method::SgdReplay {
            capacity: r.get("method", "buffer", 10usize),
            optimizer,
            inner_iters,
        },
        "ogd" => Method::SgdReplay {
            capacity: 1,
            optimizer,
            inner_iters,
        },
        other => {
            r.error("method", "tag", format!("unknown method `{other}`; valid tags: {}", Method::TAGS.join(", ")));
            return None;
        }
    };
    if matches!(method, Method::Iekf { .. } | Method::Ilofi { .. }) {
        if let Err(e) = iterated.validate() {
            r.error("method", "iters", e);
        }
    }
    if let Method::SgdReplay { capacity, .. } = &method {
        r.check(*capacity >= 1, "method", "buffer", "must be at least 1");
        r.check(inner_iters >= 1, "method", "inner_iters", "must be at least 1");
        r.check(lr >= 0.0, "method", "lr", "must be non-negative");
    }
    Some(method)
}

fn read_stream(r: &mut Reader<'_>) -> Option<StreamSpec> {
    let kind: String = r.required("stream", "kind")?;
    let spec = match kind.as_str() {
        "piecewise-sine" => {
            let spec = PiecewiseSineSpec {
                num_tasks: r.get("stream", "num_tasks", 5usize),
                steps_per_task: r.get("stream", "steps_per_task", 250usize),
                noise_sd: r.get("stream", "noise_sd", 0.1),
                coefficients: None,
            };
            r.check(spec.num_tasks >= 1, "stream", "num_tasks", "must be at least 1");
            r.check(spec.steps_per_task >= 1, "stream", "steps_per_task", "must be at least 1");
            r.check(spec.noise_sd >= 0.0, "stream", "noise_sd", "must be non-negative");
            StreamSpec::PiecewiseSine(spec)
        }
        "drifting-target" => {
            let d = DriftingTargetSpec::default();
            let spec = DriftingTargetSpec {
                amplitude_growth: r.get("stream", "amplitude_growth", d.amplitude_growth),
                frequency: r.get("stream", "frequency", d.frequency),
                noise_sd: r.get("stream", "noise_sd", d.noise_sd),
                steps: r.get("stream", "steps", d.steps),
                theta_min: r.get("stream", "theta_min", d.theta_min),
                theta_max: r.get("stream", "theta_max", d.theta_max),
            };
            r.check(spec.steps >= 1, "stream", "steps", "must be at least 1");
            r.check(spec.noise_sd >= 0.0, "stream", "noise_sd", "must be non-negative");
            StreamSpec::DriftingTarget(spec)
        }
        "csv" => {
            let path = r.required::<String>("stream", "path").map(PathBuf::from);
            let target_column = match r.opt::<String>("stream", "target_column") {
                None => TargetColumn::Last,
                Some(s) => match s.parse::<usize>() {
                    Ok(i) => TargetColumn::Index(i),
                    Err(_) => TargetColumn::Name(s),
                },
            };
            let test_fraction = r.get("stream", "test_fraction", 0.1);
            r.check((0.0..1.0).contains(&test_fraction), "stream", "test_fraction", "must lie in [0, 1)");
            StreamSpec::Csv {
                path: path?,
                target_column,
                standardize: r.get("stream", "standardize", true),
                test_fraction,
                split_seed: r.opt("stream", "split_seed"),
            }
        }
        "teacher-classification" => {
            let spec = SyntheticBanditSpec {
                steps: r.get("stream", "steps", 2000usize),
                input_dim: r.get("stream", "input_dim", 4usize),
                num_actions: r.get("stream", "num_classes", 5usize),
                teacher_hidden: r.get("stream", "teacher_hidden", 16usize),
            };
            r.check(spec.num_actions >= 2, "stream", "num_classes", "must be at least 2");
            r.check(spec.input_dim >= 1, "stream", "input_dim", "must be at least 1");
            r.check(spec.steps >= 1, "stream", "steps", "must be at least 1");
            let steps_per_task = r.opt::<usize>("stream", "steps_per_task");
            if let Some(s) = steps_per_task {
                r.check(s >= 1, "stream", "steps_per_task", "must be at least 1");
            }
            StreamSpec::TeacherClassification { spec, steps_per_task }
        }
        other => {
            r.error("stream", "kind", format!("unknown stream kind `{other}`; expected one of {}", STREAM_KINDS.join(", ")));
            return None;
        }
    };
    Some(spec)
}

fn read_tune(r: &mut Reader<'_>) -> TuneSpec {
    let d = SearchSpace::default();
    let atom = |flag: bool, v: f64| flag.then_some(v);
    let (e_lo, e_hi) = r.range("eta0_range", (d.initial_precision.lo, d.initial_precision.hi));
    let (q_lo, q_hi) = r.range("q_range", (d.process_noise.lo, d.process_noise.hi));
    let (g_lo, g_hi) = r.range("gamma_range", (d.gamma.lo, d.gamma.hi));
    let (r_lo, r_hi) = r.range("obs_noise_range", (d.obs_noise.lo, d.obs_noise.hi));
    if g_hi > 1.0 {
        r.error("tune", "gamma_range", "gamma cannot exceed 1");
    }
    let q_zero = r.get("tune", "q_zero_atom", true);
    let g_one = r.get("tune", "gamma_one_atom", true);
    let budget = r.get("tune", "budget", 20usize);
    r.check(budget >= 1, "tune", "budget", "must be at least 1");
    TuneSpec {
        enabled: r.get("tune", "enabled", false),
        budget,
        objective: r.choice(
            "tune",
            "objective",
            &[("prequential", TuneObjective::Prequential), ("validation", TuneObjective::Validation)],
            TuneObjective::Prequential,
        ),
        steps: r.opt("tune", "steps"),
        seed: r.get("tune", "seed", 0u64),
        space: SearchSpace {
            initial_precision: LogRange::new(e_lo, e_hi),
            process_noise: LogRange { lo: q_lo, hi: q_hi, atom: atom(q_zero, 0.0) },
            gamma: LogRange { lo: g_lo, hi: g_hi, atom: atom(g_one, 1.0) },
            obs_noise: LogRange::new(r_lo, r_hi),
        },
    }
}

fn read_bandit(r: &mut Reader<'_>) -> BanditSpec {
    let env = SyntheticBanditSpec {
        steps: r.get("bandit", "steps", 2000usize),
        input_dim: r.get("bandit", "input_dim", 4usize),
        num_actions: r.get("bandit", "num_actions", 5usize),
        teacher_hidden: r.get("bandit", "teacher_hidden", 16usize),
    };
    r.check(env.num_actions >= 1, "bandit", "num_actions", "must be at least 1");
    let epsilon = r.get("bandit", "epsilon", DEFAULT_EPSILON);
    r.check((0.0..=1.0).contains(&epsilon), "bandit", "epsilon", "must lie in [0, 1]");
    let policy = r.choice(
        "bandit",
        "policy",
        &[
            ("thompson", Policy::Thompson),
            ("epsilon-greedy", Policy::EpsilonGreedy { epsilon }),
            ("greedy", Policy::Greedy),
            ("oracle", Policy::Oracle),
            ("random", Policy::Random),
        ],
        Policy::Thompson,
    );
    let reward_noise = r.get("bandit", "reward_noise", DEFAULT_REWARD_NOISE);
    r.check(reward_noise > 0.0, "bandit", "reward_noise", "must be positive");
    BanditSpec { env, policy, reward_noise }
}
