//! Declarative experiment runner: every (ordering, seed, method) triple is
//! streamed independently, then aggregated into Ω, efficiency and mean curves.
//!
//! `report.json`, `curves.csv` and `mean_curves.csv` depend only on the
//! config; wall-clock measurements go to `timings.json`.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{bank_read, synth_bank, synth_test_bank, FeatureBank, SynthSpec};
use crate::error::{Error, Result};
use crate::evaluation::{efficiency_scores, omega_all, run_streaming_eval, CurvePoint, EvalScope, MetricKind, StreamRun};
use crate::learner::MethodSpec;
use crate::numerics::ShrinkageConfig;
use crate::orderings::{make_plan, validate_plan, OrderingKind, Span, StreamPlan};

pub const DEFAULT_MAX_TIME_SECONDS: f64 = 72.0 * 3600.0;
pub const DEFAULT_MAX_MEMORY_BYTES: f64 = 5e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
    /// Test samples per class drawn from the synthetic structure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_per_class: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSchedule {
    pub base_init: Span,
    pub eval_every: Span,
}

/// Schedules for the sample-ordered (`iid`, `instance`) and class-ordered
/// (`class_iid`, `class_instance`) families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub sample_ordered: PhaseSchedule,
    pub class_ordered: PhaseSchedule,
}

impl ScheduleConfig {
    pub fn for_kind(&self, kind: OrderingKind) -> PhaseSchedule {
        if kind.is_class_ordered() {
            self.class_ordered
        } else {
            self.sample_ordered
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfficiencyCaps {
    pub max_time_seconds: f64,
    pub max_memory_bytes: f64,
}

impl Default for EfficiencyCaps {
    fn default() -> Self {
        Self {
            max_time_seconds: DEFAULT_MAX_TIME_SECONDS,
            max_memory_bytes: DEFAULT_MAX_MEMORY_BYTES,
        }
    }
}

fn default_orderings() -> Vec<OrderingKind> {
    OrderingKind::ALL.to_vec()
}

fn default_metric() -> MetricKind {
    MetricKind::Top1
}

fn default_scope() -> EvalScope {
    EvalScope::AllTestData
}

/// The key (or table header) on the line where a parse error starts.
fn toml_error_field(text: &str, e: &toml::de::Error) -> String {
    let line = e.span().map(|s| {
        let start = text[..s.start].rfind('\n').map_or(0, |i| i + 1);
        text[start..].lines().next().unwrap_or("").trim()
    });
    match line {
        Some(l) if l.starts_with('[') => l.trim_matches(|c| c == '[' || c == ']').to_string(),
        Some(l) if l.contains('=') => l.split('=').next().unwrap_or("").trim().to_string(),
        _ => "<document>".to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub methods: Vec<MethodSpec>,
    /// Name of the method whose curve normalizes Ω.
    pub reference: String,
    #[serde(default = "default_orderings")]
    pub orderings: Vec<OrderingKind>,
    pub seeds: Vec<u64>,
    pub schedule: ScheduleConfig,
    #[serde(default = "default_metric")]
    pub metric: MetricKind,
    #[serde(default = "default_scope")]
    pub scope: EvalScope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub efficiency: EfficiencyCaps,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)
            .map_err(|e| Error::config(toml_error_field(text, &e), e.message().to_string()))?;
        config.check()?;
        Ok(config)
    }

    /// Reads and checks a config file; relative data paths are resolved
    /// against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut config = Self::from_toml_str(&text)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.data.train, &mut config.data.test].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        if let Some(out) = &mut config.output_dir {
            if out.is_relative() {
                *out = dir.join(&*out);
            }
        }
        Ok(config)
    }

    /// Semantic checks that parsing alone cannot express.
    pub fn check(&self) -> Result<()> {
        match (&self.data.train, &self.data.test, &self.data.synth) {
            (Some(_), Some(_), None) => {
                if self.data.test_per_class.is_some() {
                    return Err(Error::config("data.test_per_class", "only valid with data.synth"));
                }
            }
            (None, None, Some(_)) => match self.data.test_per_class {
                None => return Err(Error::config("data.test_per_class", "required with data.synth")),
                Some(0) => return Err(Error::config("data.test_per_class", "must be at least 1")),
                Some(_) => {}
            },
            (Some(_), None, None) => return Err(Error::config("data.test", "missing test bank path")),
            (None, Some(_), None) => return Err(Error::config("data.train", "missing train bank path")),
            (None, None, None) => {
                return Err(Error::config("data.train", "give train/test bank paths or a data.synth spec"))
            }
            _ => return Err(Error::config("data.synth", "give either bank paths or a synth spec, not both")),
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods", "at least one method is required"));
        }
        let mut names = HashSet::new();
        for (i, m) in self.methods.iter().enumerate() {
            if !names.insert(m.name()) {
                return Err(Error::config(format!("methods[{i}].name"), format!("duplicate method name `{}`", m.name())));
            }
            if let MethodSpec::Slda { epsilon, .. } = m {
                ShrinkageConfig::new(*epsilon)
                    .map_err(|e| Error::config(format!("methods[{i}].epsilon"), e.to_string()))?;
            }
        }
        if !names.contains(self.reference.as_str()) {
            return Err(Error::config(
                "reference",
                format!("`{}` is not the name of a configured method", self.reference),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if self.orderings.is_empty() {
            return Err(Error::config("orderings", "at least one ordering is required"));
        }
        let mut seen = HashSet::new();
        if let Some(o) = self.orderings.iter().find(|o| !seen.insert(**o)) {
            return Err(Error::config("orderings", format!("`{o}` listed twice")));
        }
        let mut seen = HashSet::new();
        if let Some(s) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(Error::config("seeds", format!("seed {s} listed twice")));
        }
        let caps = &self.efficiency;
        if !caps.max_time_seconds.is_finite() || caps.max_time_seconds <= 0.0 {
            return Err(Error::config("efficiency.max_time_seconds", "must be positive and finite"));
        }
        if !caps.max_memory_bytes.is_finite() || caps.max_memory_bytes <= 0.0 {
            return Err(Error::config("efficiency.max_memory_bytes", "must be positive and finite"));
        }
        Ok(())
    }

    /// Loads or generates the train and test banks.
    pub fn load_banks(&self) -> Result<(FeatureBank, FeatureBank)> {
        let read = |field: &str, path: &Path| bank_read(path).map_err(|e| Error::config(field, e.to_string()));
        match (&self.data.train, &self.data.test, &self.data.synth) {
            (Some(train), Some(test), _) => Ok((read("data.train", train)?, read("data.test", test)?)),
            (_, _, Some(spec)) => {
                let per_class = self.data.test_per_class.unwrap_or(0);
                let wrap = |e: Error| Error::config("data.synth", e.to_string());
                Ok((
                    synth_bank(spec).map_err(wrap)?,
                    synth_test_bank(spec, per_class).map_err(wrap)?,
                ))
            }
            _ => Err(Error::config("data", "no data source")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub curve: Vec<CurvePoint>,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanPoint {
    pub position: usize,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub ordering: OrderingKind,
    pub method: String,
    pub omega_mean: f64,
    pub omega_stderr: f64,
    /// Present when every seed evaluated at the same positions.
    pub mean_curve: Option<Vec<MeanPoint>>,
    pub memory_bytes: u64,
    pub me: f64,
    pub runs: Vec<SeedRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ExperimentConfig,
    pub train_samples: usize,
    pub test_samples: usize,
    pub dim: usize,
    pub num_classes: usize,
    pub results: Vec<MethodResult>,
}

impl EvalReport {
    pub fn result(&self, ordering: OrderingKind, method: &str) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.ordering == ordering && r.method == method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub ordering: OrderingKind,
    pub method: String,
    pub seed: u64,
    pub train_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTiming {
    pub method: String,
    pub mean_train_seconds: f64,
    pub ce: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub wall_seconds: f64,
    pub methods: Vec<MethodTiming>,
    pub runs: Vec<RunTiming>,
}

/// Mean and standard error (sample standard deviation over √n; 0 for n = 1).
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

fn mean_curve(runs: &[SeedRun]) -> Option<Vec<MeanPoint>> {
    let positions: Vec<usize> = runs.first()?.curve.iter().map(|p| p.position).collect();
    if runs
        .iter()
        .any(|r| !r.curve.iter().map(|p| p.position).eq(positions.iter().copied()))
    {
        return None;
    }
    Some(
        positions
            .iter()
            .enumerate()
            .map(|(j, &position)| {
                let acc: Vec<f64> = runs.iter().map(|r| r.curve[j].accuracy).collect();
                let (mean, stderr) = mean_and_stderr(&acc);
                MeanPoint { position, mean, stderr }
            })
            .collect(),
    )
}

fn run_error(method: &str, kind: OrderingKind, seed: u64, e: Error) -> Error {
    Error::Run {
        context: format!("method `{method}`, ordering {kind}, seed {seed}"),
        source: Box::new(e),
    }
}

/// Runs the whole grid on in-memory banks. `jobs` bounds the worker pool.
pub fn run_on_banks(
    config: &ExperimentConfig,
    train: &FeatureBank,
    test: &FeatureBank,
    jobs: Option<usize>,
) -> Result<(EvalReport, TimingReport)> {
    config.check()?;
    let clock = Instant::now();
    let dim = train.dim;
    let num_classes = train.num_classes.max(test.num_classes);

    let mut plans: Vec<(OrderingKind, u64, StreamPlan)> = Vec::new();
    for &kind in &config.orderings {
        let sched = config.schedule.for_kind(kind);
        for &seed in &config.seeds {
            let plan = make_plan(train, kind, seed, sched.base_init, sched.eval_every)?;
            let report = validate_plan(train, &plan);
            if !report.passed {
                return Err(Error::InvalidPlan(report.first_violation.unwrap_or_default()));
            }
            plans.push((kind, seed, plan));
        }
    }

    let tasks: Vec<(usize, usize)> = (0..plans.len())
        .flat_map(|p| (0..config.methods.len()).map(move |m| (p, m)))
        .collect();
    let execute = || {
        tasks
            .par_iter()
            .map(|&(p, m)| -> Result<StreamRun> {
                let (_, seed, plan) = &plans[p];
                let base: Vec<Vec<f64>> = plan.order[..plan.base_init_len]
                    .iter()
                    .map(|&i| train.row_f64(i))
                    .collect();
                let mut learner = config.methods[m].build(dim, num_classes, &base, *seed)?;
                run_streaming_eval(train, test, plan, learner.as_mut(), config.metric, config.scope)
            })
            .collect::<Vec<_>>()
    };
    let outcomes = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config("jobs", e.to_string()))?
            .install(execute),
        None => execute(),
    };
    let mut runs: Vec<StreamRun> = Vec::with_capacity(outcomes.len());
    for (outcome, &(p, m)) in outcomes.into_iter().zip(&tasks) {
        let (kind, seed, _) = &plans[p];
        runs.push(outcome.map_err(|e| run_error(config.methods[m].name(), *kind, *seed, e))?);
    }

    let n_methods = config.methods.len();
    let reference = config
        .methods
        .iter()
        .position(|m| m.name() == config.reference)
        .expect("reference checked");
    let mut results = Vec::new();
    let mut timings = Vec::new();
    for (oi, &kind) in config.orderings.iter().enumerate() {
        for (m, method) in config.methods.iter().enumerate() {
            let mut seed_runs = Vec::with_capacity(config.seeds.len());
            let mut memory = 0u64;
            for (si, &seed) in config.seeds.iter().enumerate() {
                let p = oi * config.seeds.len() + si;
                let run = &runs[p * n_methods + m];
                let offline = &runs[p * n_methods + reference];
                let omega = omega_all(&run.curve.accuracies(), &offline.curve.accuracies()).map_err(|e| run_error(method.name(), kind, seed, e))?;
                memory = memory.max(run.memory_bytes);
                timings.push(RunTiming {
                    ordering: kind,
                    method: method.name().to_string(),
                    seed,
                    train_seconds: run.train_seconds,
                });
                seed_runs.push(SeedRun {
                    seed,
                    curve: run.curve.points.clone(),
                    omega,
                });
            }
            let omegas: Vec<f64> = seed_runs.iter().map(|r| r.omega).collect();
            let (omega_mean, omega_stderr) = mean_and_stderr(&omegas);
            let (_, me) = efficiency_scores(
                0.0,
                config.efficiency.max_time_seconds,
                memory as f64,
                config.efficiency.max_memory_bytes,
            );
            results.push(MethodResult {
                ordering: kind,
                method: method.name().to_string(),
                omega_mean,
                omega_stderr,
                mean_curve: mean_curve(&seed_runs),
                memory_bytes: memory,
                me,
                runs: seed_runs,
            });
        }
    }

    let methods = config
        .methods
        .iter()
        .map(|m| {
            let times: Vec<f64> = timings
                .iter()
                .filter(|t| t.method == m.name())
                .map(|t| t.train_seconds)
                .collect();
            let mean = times.iter().sum::<f64>() / times.len() as f64;
            let (ce, _) = efficiency_scores(mean, config.efficiency.max_time_seconds, 0.0, 1.0);
            MethodTiming {
                method: m.name().to_string(),
                mean_train_seconds: mean,
                ce,
            }
        })
        .collect();

    let report = EvalReport {
        config: config.clone(),
        train_samples: train.len(),
        test_samples: test.len(),
        dim,
        num_classes,
        results,
    };
    let timing = TimingReport {
        wall_seconds: clock.elapsed().as_secs_f64(),
        methods,
        runs: timings,
    };
    Ok((report, timing))
}

/// Paths of the files written by [`write_outputs`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub report: PathBuf,
    pub curves: PathBuf,
    pub mean_curves: PathBuf,
    pub timings: PathBuf,
}

impl OutputPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            report: dir.join("report.json"),
            curves: dir.join("curves.csv"),
            mean_curves: dir.join("mean_curves.csv"),
            timings: dir.join("timings.json"),
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

pub fn curves_csv(report: &EvalReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["ordering", "method", "seed", "position", "accuracy"])?;
    for r in &report.results {
        for run in &r.runs {
            for p in &run.curve {
                w.write_record([
                    r.ordering.as_str(),
                    &r.method,
                    &run.seed.to_string(),
                    &p.position.to_string(),
                    &p.accuracy.to_string(),
                ])?;
            }
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn mean_curves_csv(report: &EvalReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["ordering", "method", "position", "mean_accuracy", "stderr"])?;
    for r in &report.results {
        for p in r.mean_curve.iter().flatten() {
            w.write_record([
                r.ordering.as_str(),
                &r.method,
                &p.position.to_string(),
                &p.mean.to_string(),
                &p.stderr.to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_outputs(report: &EvalReport, timing: &TimingReport, dir: &Path) -> Result<OutputPaths> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let paths = OutputPaths::in_dir(dir);
    let mut json = serde_json::to_vec_pretty(report)?;
    json.write_all(b"\n")?;
    write_file(&paths.report, &json)?;
    write_file(&paths.curves, &curves_csv(report)?)?;
    write_file(&paths.mean_curves, &mean_curves_csv(report)?)?;
    let mut json = serde_json::to_vec_pretty(timing)?;
    json.write_all(b"\n")?;
    write_file(&paths.timings, &json)?;
    Ok(paths)
}

/// Loads the banks named by `config`, runs the grid and writes all outputs
/// into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path, jobs: Option<usize>) -> Result<(EvalReport, OutputPaths)> {
    let (train, test) = config.load_banks()?;
    let (report, timing) = run_on_banks(config, &train, &test, jobs)?;
    let paths = write_outputs(&report, &timing, out_dir)?;
    Ok((report, paths))
}
