//! Configuration-driven experiment runner: builds the stream and the kernel
//! dictionary, runs each algorithm online and writes per-slot telemetry.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::adaraker::{AdaRaker, AdaRakerConfig, AdaSlotReport, IntervalScheme};
use crate::baselines::Omkl;
use crate::data::{self, StreamRecord, SwitchingSchedule, Task};
use crate::error::{Error, Result};
use crate::eval::{self, OracleReplay, RegretTrace};
use crate::featuremap::{FeatureMap, KernelFamily, KernelSpec, Variant};
use crate::learner::{KernelLearner, OnlineLearner, SingleKernel, Stepsize};
use crate::losses::{LossKind, LossSpec};
use crate::raker::{dictionary_maps, Raker, SlotReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchingPreset {
    Dataset1,
    Dataset1Rescaled,
    Dataset2,
}

impl SwitchingPreset {
    pub fn schedule(self) -> SwitchingSchedule {
        match self {
            SwitchingPreset::Dataset1 => SwitchingSchedule::dataset1(),
            SwitchingPreset::Dataset1Rescaled => SwitchingSchedule::dataset1_rescaled(),
            SwitchingPreset::Dataset2 => SwitchingSchedule::dataset2(),
        }
    }
}

fn default_switching_dim() -> usize {
    10
}

fn default_sigma_alpha() -> f64 {
    0.01
}

fn default_stationary_dim() -> usize {
    5
}

fn default_one() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StreamSource {
    /// Kernel-switching regression stream.
    Switching {
        preset: SwitchingPreset,
        #[serde(default = "default_switching_dim")]
        dim: usize,
        /// Defaults to the schedule's length.
        #[serde(default)]
        horizon: Option<u64>,
        #[serde(default = "default_sigma_alpha")]
        sigma_alpha: f64,
    },
    /// Fixed random Gaussian-kernel function plus noise.
    Stationary {
        #[serde(default = "default_stationary_dim")]
        dim: usize,
        horizon: u64,
        /// σ² of the target's Gaussian kernel.
        #[serde(default = "default_one")]
        sigma_sq: f64,
        #[serde(default)]
        noise_std: f64,
    },
    Csv {
        path: PathBuf,
        label: String,
        /// Defaults to every column except the label.
        #[serde(default)]
        features: Option<Vec<String>>,
        #[serde(default = "default_true")]
        normalize: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: KernelFamily,
    pub bandwidth: f64,
}

impl KernelConfig {
    pub fn gaussian(sigma_sq: f64) -> Self {
        KernelConfig {
            family: KernelFamily::Gaussian,
            bandwidth: sigma_sq,
        }
    }
}

/// An algorithm entry of the configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Raker,
    AdaRaker,
    /// Random-feature learner on kernel `p` alone (1-based).
    Single(usize),
    Omkl,
    OmklBudget(usize),
    /// Replay of the batch random-feature oracle (regression only).
    Oracle,
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown algorithm `{s}`"));
        let index = |v: &str| v.parse::<usize>().ok().filter(|&n| n >= 1).ok_or_else(bad);
        match s {
            "raker" => Ok(Algorithm::Raker),
            "adaraker" => Ok(Algorithm::AdaRaker),
            "omkl" => Ok(Algorithm::Omkl),
            "oracle" => Ok(Algorithm::Oracle),
            _ => {
                if let Some(p) = s.strip_prefix("single:") {
                    index(p).map(Algorithm::Single)
                } else if let Some(b) = s.strip_prefix("omkl-b:") {
                    index(b).map(Algorithm::OmklBudget)
                } else {
                    Err(bad())
                }
            }
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Raker => write!(f, "raker"),
            Algorithm::AdaRaker => write!(f, "adaraker"),
            Algorithm::Single(p) => write!(f, "single:{p}"),
            Algorithm::Omkl => write!(f, "omkl"),
            Algorithm::OmklBudget(b) => write!(f, "omkl-b:{b}"),
            Algorithm::Oracle => write!(f, "oracle"),
        }
    }
}

impl Algorithm {
    /// File-name friendly label.
    pub fn slug(&self) -> String {
        self.to_string().replace(':', "-")
    }
}

fn default_kernels() -> Vec<KernelConfig> {
    [0.1, 1.0, 10.0]
        .iter()
        .map(|&s| KernelConfig::gaussian(s))
        .collect()
}

fn default_num_features() -> usize {
    50
}

fn default_eta_weight() -> f64 {
    0.5
}

fn default_lambda() -> f64 {
    0.01
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub stream: StreamSource,
    #[serde(default)]
    pub task: Task,
    /// Squared error for regression, logistic for classification.
    #[serde(default)]
    pub loss: Option<LossKind>,
    #[serde(default = "default_kernels")]
    pub kernels: Vec<KernelConfig>,
    #[serde(default = "default_num_features")]
    pub num_features: usize,
    #[serde(default)]
    pub variant: Variant,
    pub algorithms: Vec<String>,
    /// Defaults to `1/√T`.
    #[serde(default)]
    pub eta_theta: Option<f64>,
    #[serde(default = "default_eta_weight")]
    pub eta_weight: f64,
    #[serde(default = "default_one")]
    pub eta0: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Reverse the sign of the relative-loss update of AdaRaker's ensemble.
    #[serde(default)]
    pub adaraker_flip_sign: bool,
    /// Exclude AdaRaker instances from the ensemble in their first slot.
    #[serde(default)]
    pub adaraker_mute_first_slot: bool,
    /// Start new AdaRaker instances from the current ensemble function.
    #[serde(default = "default_true")]
    pub adaraker_warm_start: bool,
}

impl ExperimentConfig {
    /// Defaults for everything but the stream and the algorithm list.
    pub fn new(stream: StreamSource, algorithms: &[&str]) -> Self {
        ExperimentConfig {
            stream,
            task: Task::Regression,
            loss: None,
            kernels: default_kernels(),
            num_features: default_num_features(),
            variant: Variant::default(),
            algorithms: algorithms.iter().map(|s| s.to_string()).collect(),
            eta_theta: None,
            eta_weight: default_eta_weight(),
            eta0: 1.0,
            lambda: default_lambda(),
            seed: 0,
            out_dir: default_out_dir(),
            adaraker_flip_sign: false,
            adaraker_mute_first_slot: false,
            adaraker_warm_start: true,
        }
    }

    pub fn loss_spec(&self) -> Result<LossSpec> {
        let kind = self.loss.unwrap_or(match self.task {
            Task::Regression => LossKind::SquaredError,
            Task::BinaryClassification => LossKind::Logistic,
        });
        if kind.is_classification() != (self.task == Task::BinaryClassification) {
            return Err(Error::Config(format!(
                "loss {kind:?} does not fit task {:?}",
                self.task
            )));
        }
        LossSpec::new(kind, self.lambda).map_err(config_error)
    }

    pub fn parsed_algorithms(&self) -> Result<Vec<Algorithm>> {
        if self.algorithms.is_empty() {
            return Err(Error::Config("at least one algorithm is required".into()));
        }
        self.algorithms.iter().map(|s| s.parse()).collect()
    }

    /// Static checks that need no data.
    pub fn validate(&self) -> Result<()> {
        let algorithms = self.parsed_algorithms()?;
        self.loss_spec()?;
        if self.kernels.is_empty() {
            return Err(Error::Config("kernel dictionary must not be empty".into()));
        }
        if self.num_features == 0 {
            return Err(Error::Config("num_features must be positive".into()));
        }
        for (name, v) in [("eta_weight", self.eta_weight), ("eta0", self.eta0)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.eta_weight >= 1.0 {
            return Err(Error::Config("eta_weight must be below 1".into()));
        }
        if let Some(eta) = self.eta_theta {
            if !(eta.is_finite() && eta > 0.0) {
                return Err(Error::Config("eta_theta must be positive".into()));
            }
        }
        for a in &algorithms {
            match a {
                Algorithm::Single(p) if *p > self.kernels.len() => {
                    return Err(Error::Config(format!(
                        "{a} refers to kernel {p} of a {}-kernel dictionary",
                        self.kernels.len()
                    )));
                }
                Algorithm::Oracle if self.task != Task::Regression => {
                    return Err(Error::Config(
                        "the oracle replay needs a regression task".into(),
                    ));
                }
                _ => {}
            }
        }
        match &self.stream {
            StreamSource::Switching {
                dim,
                horizon,
                preset,
                ..
            } => {
                if *dim == 0 || horizon == &Some(0) {
                    return Err(Error::Config(
                        "stream dim and horizon must be positive".into(),
                    ));
                }
                if horizon.is_some_and(|h| h > preset.schedule().horizon()) {
                    return Err(Error::Config("horizon exceeds the preset schedule".into()));
                }
            }
            StreamSource::Stationary { dim, horizon, .. } => {
                if *dim == 0 || *horizon == 0 {
                    return Err(Error::Config(
                        "stream dim and horizon must be positive".into(),
                    ));
                }
            }
            StreamSource::Csv { .. } => {}
        }
        if !matches!(self.stream, StreamSource::Csv { .. }) && self.task != Task::Regression {
            return Err(Error::Config(
                "synthetic streams are regression streams".into(),
            ));
        }
        Ok(())
    }
}

fn config_error(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

/// Build the stream described by a configuration.
pub fn build_stream(config: &ExperimentConfig) -> Result<Vec<StreamRecord>> {
    match &config.stream {
        StreamSource::Switching {
            preset,
            dim,
            horizon,
            sigma_alpha,
        } => {
            let schedule = preset.schedule();
            let t = horizon.unwrap_or(schedule.horizon());
            data::gen_switching_stream(&schedule, *dim, t, *sigma_alpha, config.seed)
                .map_err(config_error)
        }
        StreamSource::Stationary {
            dim,
            horizon,
            sigma_sq,
            noise_std,
        } => {
            let spec = KernelSpec::gaussian(*sigma_sq, *dim).map_err(config_error)?;
            data::gen_stationary_stream(spec, *dim, *horizon, *noise_std, config.seed)
                .map(|(records, _)| records)
                .map_err(config_error)
        }
        StreamSource::Csv {
            path,
            label,
            features,
            normalize,
        } => data::load_csv(path, label, features.as_deref(), config.task, *normalize)
            .map_err(config_error),
    }
}

/// Stream, dictionary and feature maps shared by every algorithm of a run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub records: Vec<StreamRecord>,
    pub kernels: Vec<KernelSpec>,
    pub maps: Vec<Arc<FeatureMap>>,
    pub loss: LossSpec,
    pub eta_theta: f64,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let records = build_stream(config)?;
    let d = records[0].x.len();
    let kernels = config
        .kernels
        .iter()
        .map(|k| KernelSpec::new(k.family, k.bandwidth, d))
        .collect::<Result<Vec<_>>>()
        .map_err(config_error)?;
    let maps = dictionary_maps(&kernels, config.num_features, config.variant, config.seed)
        .map_err(config_error)?;
    let eta_theta = config
        .eta_theta
        .unwrap_or(1.0 / (records.len() as f64).sqrt());
    Ok(Prepared {
        records,
        kernels,
        maps,
        loss: config.loss_spec()?,
        eta_theta,
    })
}

/// Online learner as run by the experiment loop, with extra per-slot
/// columns for the telemetry.
pub trait Runnable {
    fn name(&self) -> String;
    fn predict(&mut self, x: &[f64]) -> Result<f64>;
    fn learn(&mut self, y: f64) -> Result<SlotReport>;
    fn state_size(&self) -> usize;
    fn weight_headers(&self) -> Vec<String>;
    /// Values for [`Runnable::weight_headers`] at the slot just learned.
    fn weight_row(&self, report: &SlotReport) -> Vec<f64>;
}

/// A plain [`OnlineLearner`] whose weight columns are its mixture weights.
struct Plain<L> {
    label: String,
    learner: L,
    weights: usize,
}

impl<L: OnlineLearner> Runnable for Plain<L> {
    fn name(&self) -> String {
        self.label.clone()
    }
    fn predict(&mut self, x: &[f64]) -> Result<f64> {
        self.learner.predict(x)
    }
    fn learn(&mut self, y: f64) -> Result<SlotReport> {
        self.learner.learn(y)
    }
    fn state_size(&self) -> usize {
        self.learner.state_size()
    }
    fn weight_headers(&self) -> Vec<String> {
        (1..=self.weights).map(|p| format!("w_{p}")).collect()
    }
    fn weight_row(&self, report: &SlotReport) -> Vec<f64> {
        if self.weights == 0 {
            Vec::new()
        } else {
            report.normalized_weights.clone()
        }
    }
}

/// AdaRaker with one `h_<level>` column per cover level; levels without an
/// active instance read 0.
struct AdaRunner {
    ada: AdaRaker,
    levels: u32,
    x: Option<Vec<f64>>,
    last: Option<AdaSlotReport>,
}

impl Runnable for AdaRunner {
    fn name(&self) -> String {
        "adaraker".into()
    }
    fn predict(&mut self, x: &[f64]) -> Result<f64> {
        let (pred, _) = self.ada.predict(x)?;
        self.x = Some(x.to_vec());
        Ok(pred)
    }
    fn learn(&mut self, y: f64) -> Result<SlotReport> {
        let x = self
            .x
            .take()
            .ok_or_else(|| Error::invalid("learn called before predict"))?;
        let rep = self.ada.update(&x, y)?;
        let slot = rep.slot.clone();
        self.last = Some(rep);
        Ok(slot)
    }
    fn state_size(&self) -> usize {
        self.ada.stored_values()
    }
    fn weight_headers(&self) -> Vec<String> {
        (0..=self.levels).map(|j| format!("h_{j}")).collect()
    }
    fn weight_row(&self, report: &SlotReport) -> Vec<f64> {
        let mut row = vec![0.0; self.levels as usize + 1];
        if let Some(last) = &self.last {
            for (iv, &w) in last.intervals.iter().zip(&report.normalized_weights) {
                if let Some(cell) = row.get_mut(iv.level as usize) {
                    *cell = w;
                }
            }
        }
        row
    }
}

/// Instantiate one algorithm over a prepared run.
pub fn build_algorithm(
    algorithm: Algorithm,
    config: &ExperimentConfig,
    prepared: &Prepared,
) -> Result<Box<dyn Runnable>> {
    let eta = Stepsize::Constant(prepared.eta_theta);
    let p = prepared.maps.len();
    let boxed: Box<dyn Runnable> = match algorithm {
        Algorithm::Raker => Box::new(Plain {
            label: algorithm.to_string(),
            learner: Raker::with_maps(
                prepared.maps.clone(),
                eta,
                config.eta_weight,
                prepared.loss,
            )?,
            weights: p,
        }),
        Algorithm::AdaRaker => {
            let ada_config = AdaRakerConfig {
                eta0: config.eta0,
                loss: prepared.loss,
                scheme: IntervalScheme::Geometric,
                flip_relative_sign: config.adaraker_flip_sign,
                mute_first_slot: config.adaraker_mute_first_slot,
                warm_start: config.adaraker_warm_start,
                eta_theta_override: None,
                eta_weight_override: None,
            };
            let t = prepared.records.len() as u64;
            Box::new(AdaRunner {
                ada: AdaRaker::new(prepared.maps.clone(), ada_config)?,
                levels: 63 - t.leading_zeros(),
                x: None,
                last: None,
            })
        }
        Algorithm::Single(k) => {
            let map = prepared
                .maps
                .get(k - 1)
                .ok_or_else(|| Error::Config(format!("no kernel {k}")))?;
            Box::new(Plain {
                label: algorithm.to_string(),
                learner: SingleKernel::new(KernelLearner::new(map.clone(), eta, prepared.loss)?),
                weights: 0,
            })
        }
        Algorithm::Omkl | Algorithm::OmklBudget(_) => {
            let budget = match algorithm {
                Algorithm::OmklBudget(b) => Some(b),
                _ => None,
            };
            Box::new(Plain {
                label: algorithm.to_string(),
                learner: Omkl::new(
                    prepared.kernels.clone(),
                    budget,
                    prepared.eta_theta,
                    config.eta_weight,
                    prepared.loss,
                )?,
                weights: p,
            })
        }
        Algorithm::Oracle => {
            let oracle = eval::batch_rf_oracle(&prepared.records, &prepared.maps, &prepared.loss)?;
            Box::new(Plain {
                label: algorithm.to_string(),
                learner: OracleReplay::from_oracle(&oracle, &prepared.maps)?,
                weights: 0,
            })
        }
    };
    Ok(boxed)
}

/// Random access to a stream for the online loop.
pub trait SampleSource {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn features(&self, i: usize) -> &[f64];
    fn label(&self, i: usize) -> f64;
}

impl SampleSource for [StreamRecord] {
    fn len(&self) -> usize {
        <[StreamRecord]>::len(self)
    }
    fn features(&self, i: usize) -> &[f64] {
        &self[i].x
    }
    fn label(&self, i: usize) -> f64 {
        self[i].y
    }
}

/// Everything recorded while running one algorithm over a stream.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub algorithm: String,
    pub task: Task,
    pub ys: Vec<f64>,
    pub predictions: Vec<f64>,
    /// Per-slot data-fit loss of the prediction.
    pub losses: Vec<f64>,
    /// Per-slot regularized loss as reported by the learner.
    pub combined_losses: Vec<f64>,
    /// `MSE(t)` for regression, error rate up to `t` for classification.
    pub cumulative_metric: Vec<f64>,
    pub weight_headers: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub step_times: Vec<Duration>,
    pub wall_time: Duration,
    pub peak_state_size: usize,
}

impl RunTrace {
    pub fn final_metric(&self) -> f64 {
        self.cumulative_metric.last().copied().unwrap_or(f64::NAN)
    }

    pub fn median_step_time(&self) -> Duration {
        let mut t = self.step_times.clone();
        t.sort_unstable();
        t.get(t.len() / 2).copied().unwrap_or_default()
    }

    pub fn metric_name(&self) -> &'static str {
        match self.task {
            Task::Regression => "cum_mse",
            Task::BinaryClassification => "cum_err",
        }
    }

    /// Telemetry columns `t,y,yhat,loss,<metric>,<weights…>`.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = ["t", "y", "yhat", "loss", self.metric_name()]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(self.weight_headers.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.predictions.len() {
            let mut row = vec![
                (i + 1).to_string(),
                self.ys[i].to_string(),
                self.predictions[i].to_string(),
                self.losses[i].to_string(),
                self.cumulative_metric[i].to_string(),
            ];
            row.extend(self.weights[i].iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Feed every sample once: features, prediction, then the label.
pub fn run_online(
    learner: &mut dyn Runnable,
    source: &(impl SampleSource + ?Sized),
    task: Task,
    loss: &LossSpec,
) -> Result<RunTrace> {
    let n = source.len();
    let name = learner.name();
    let wrap = |slot: usize| {
        let name = name.clone();
        move |e: Error| Error::Runtime {
            algorithm: name,
            slot,
            source: Box::new(e),
        }
    };
    let mut trace = RunTrace {
        algorithm: name.clone(),
        task,
        ys: Vec::with_capacity(n),
        predictions: Vec::with_capacity(n),
        losses: Vec::with_capacity(n),
        combined_losses: Vec::with_capacity(n),
        cumulative_metric: Vec::with_capacity(n),
        weight_headers: learner.weight_headers(),
        weights: Vec::with_capacity(n),
        step_times: Vec::with_capacity(n),
        wall_time: Duration::ZERO,
        peak_state_size: learner.state_size(),
    };
    let mut running = 0.0;
    let started = Instant::now();
    for i in 0..n {
        let slot = i + 1;
        let step = Instant::now();
        let x = source.features(i);
        let pred = learner.predict(x).map_err(wrap(slot))?;
        let y = source.label(i);
        let report = learner.learn(y).map_err(wrap(slot))?;
        trace.step_times.push(step.elapsed());
        let data_loss = loss.data_loss(pred, y).map_err(wrap(slot))?;
        running += match task {
            Task::Regression => (y - pred).powi(2),
            Task::BinaryClassification => {
                eval::is_mistake(pred, y).map_err(wrap(slot))? as u8 as f64
            }
        };
        if !pred.is_finite() {
            return Err(wrap(slot)(Error::NonFinite("prediction".into())));
        }
        trace.ys.push(y);
        trace.predictions.push(pred);
        trace.losses.push(data_loss);
        trace.combined_losses.push(report.combined_loss);
        trace.cumulative_metric.push(running / slot as f64);
        trace.weights.push(learner.weight_row(&report));
        trace.peak_state_size = trace.peak_state_size.max(learner.state_size());
    }
    trace.wall_time = started.elapsed();
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub slots: usize,
    pub metric: String,
    pub final_metric: f64,
    pub wall_time_s: f64,
    pub median_step_us: f64,
    pub peak_state_size: usize,
    pub telemetry: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub summary: Vec<SummaryRow>,
    pub traces: Vec<RunTrace>,
    pub out_dir: PathBuf,
}

impl ExperimentOutput {
    pub fn trace(&self, algorithm: &str) -> Option<&RunTrace> {
        self.traces.iter().find(|t| t.algorithm == algorithm)
    }
}

fn create_writer(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Run every configured algorithm, writing `<slug>.csv` telemetry files and
/// `summary.csv` into the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let prepared = prepare(config)?;
    let algorithms = config.parsed_algorithms()?;
    fs::create_dir_all(&config.out_dir)?;
    let mut summary = Vec::new();
    let mut traces = Vec::new();
    for algorithm in algorithms {
        let mut learner = build_algorithm(algorithm, config, &prepared).map_err(config_error)?;
        let trace = run_online(
            learner.as_mut(),
            prepared.records.as_slice(),
            config.task,
            &prepared.loss,
        )?;
        let file = format!("{}.csv", algorithm.slug());
        trace.write_csv(create_writer(&config.out_dir.join(&file))?)?;
        summary.push(SummaryRow {
            algorithm: algorithm.to_string(),
            slots: trace.predictions.len(),
            metric: trace.metric_name().into(),
            final_metric: trace.final_metric(),
            wall_time_s: trace.wall_time.as_secs_f64(),
            median_step_us: trace.median_step_time().as_secs_f64() * 1e6,
            peak_state_size: trace.peak_state_size,
            telemetry: file,
        });
        traces.push(trace);
    }
    let mut w = csv::Writer::from_writer(create_writer(&config.out_dir.join("summary.csv"))?);
    for row in &summary {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(ExperimentOutput {
        summary,
        traces,
        out_dir: config.out_dir.clone(),
    })
}

/// Static regret of one algorithm against the batch random-feature oracle,
/// written to `regret_<slug>.csv` in the output directory.
pub fn emit_regret_report(
    config: &ExperimentConfig,
    algorithm: Algorithm,
) -> Result<(RegretTrace, PathBuf)> {
    if config.task != Task::Regression || config.loss_spec()?.kind != LossKind::SquaredError {
        return Err(Error::Config(
            "regret reports need a squared-error regression task".into(),
        ));
    }
    let prepared = prepare(config)?;
    let oracle =
        eval::batch_rf_oracle(&prepared.records, &prepared.maps, &prepared.loss).map_err(|e| {
            Error::Runtime {
                algorithm: "oracle".into(),
                slot: 0,
                source: Box::new(e),
            }
        })?;
    let mut learner = build_algorithm(algorithm, config, &prepared).map_err(config_error)?;
    let run = run_online(
        learner.as_mut(),
        prepared.records.as_slice(),
        config.task,
        &prepared.loss,
    )?;
    let trace = eval::static_regret(&run.combined_losses, &oracle.per_slot)?;
    fs::create_dir_all(&config.out_dir)?;
    let path = config
        .out_dir
        .join(format!("regret_{}.csv", algorithm.slug()));
    trace.write_csv(create_writer(&path)?)?;
    Ok((trace, path))
}

/// Write the configured stream as `t,x_1..x_d,y` to `<out_dir>/stream.csv`.
pub fn write_stream(config: &ExperimentConfig) -> Result<PathBuf> {
    let records = build_stream(config)?;
    fs::create_dir_all(&config.out_dir)?;
    let path = config.out_dir.join("stream.csv");
    data::write_csv(&records, create_writer(&path)?)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::RefCell;

    fn stationary(horizon: u64) -> StreamSource {
        StreamSource::Stationary {
            dim: 3,
            horizon,
            sigma_sq: 1.0,
            noise_std: 0.0,
        }
    }

    fn config(algorithms: &[&str], dir: &Path) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(stationary(200), algorithms);
        c.num_features = 12;
        c.out_dir = dir.to_path_buf();
        c
    }

    #[test]
    fn algorithm_names_round_trip() {
        for s in [
            "raker",
            "adaraker",
            "single:2",
            "omkl",
            "omkl-b:50",
            "oracle",
        ] {
            assert_eq!(s.parse::<Algorithm>().unwrap().to_string(), s);
        }
        for s in ["", "single:0", "single:x", "omkl-b:", "rakerr"] {
            assert!(matches!(s.parse::<Algorithm>(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn config_validation() {
        let dir = tempfile::tempdir().unwrap();
        assert!(config(&["raker"], dir.path()).validate().is_ok());
        assert!(config(&[], dir.path()).validate().is_err());
        assert!(config(&["single:4"], dir.path()).validate().is_err());
        let mut c = config(&["raker"], dir.path());
        c.eta_weight = 1.5;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = config(&["raker"], dir.path());
        c.loss = Some(LossKind::Hinge);
        assert!(c.validate().is_err());
        let mut c = config(&["raker"], dir.path());
        c.stream = StreamSource::Csv {
            path: dir.path().join("missing.csv"),
            label: "y".into(),
            features: None,
            normalize: true,
        };
        assert!(matches!(run_experiment(&c), Err(Error::Config(_))));
    }

    #[test]
    fn smoke_run_writes_telemetry_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&config(&["raker"], dir.path())).unwrap();
        assert_eq!(out.summary.len(), 1);
        assert!(out.summary[0].final_metric.is_finite());
        let telemetry = fs::read_to_string(dir.path().join("raker.csv")).unwrap();
        assert!(telemetry.starts_with("t,y,yhat,loss,cum_mse,w_1,w_2,w_3\n"));
        assert_eq!(telemetry.lines().count(), 201);
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert!(summary.starts_with("algorithm,slots,metric,final_metric,"));
    }

    #[test]
    fn every_algorithm_runs() {
        let dir = tempfile::tempdir().unwrap();
        let algs = [
            "raker",
            "adaraker",
            "single:1",
            "omkl",
            "omkl-b:20",
            "oracle",
        ];
        let out = run_experiment(&config(&algs, dir.path())).unwrap();
        assert_eq!(out.traces.len(), algs.len());
        for t in &out.traces {
            assert!(t.final_metric().is_finite(), "{}", t.algorithm);
        }
        let ada = fs::read_to_string(dir.path().join("adaraker.csv")).unwrap();
        let header = ada.lines().next().unwrap();
        assert_eq!(
            header,
            "t,y,yhat,loss,cum_mse,h_0,h_1,h_2,h_3,h_4,h_5,h_6,h_7"
        );
        let single = fs::read_to_string(dir.path().join("single-1.csv")).unwrap();
        assert!(single.starts_with("t,y,yhat,loss,cum_mse\n"));
    }

    #[test]
    fn reruns_are_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let algs = ["raker", "adaraker", "omkl-b:10"];
        run_experiment(&config(&algs, a.path())).unwrap();
        run_experiment(&config(&algs, b.path())).unwrap();
        for f in ["raker.csv", "adaraker.csv", "omkl-b-10.csv"] {
            assert_eq!(
                fs::read(a.path().join(f)).unwrap(),
                fs::read(b.path().join(f)).unwrap()
            );
        }
    }

    #[derive(Debug, PartialEq)]
    enum Access {
        Features(usize),
        Label(usize),
    }

    struct Recording<'a> {
        records: &'a [StreamRecord],
        log: RefCell<Vec<Access>>,
    }

    impl SampleSource for Recording<'_> {
        fn len(&self) -> usize {
            self.records.len()
        }
        fn features(&self, i: usize) -> &[f64] {
            self.log.borrow_mut().push(Access::Features(i));
            &self.records[i].x
        }
        fn label(&self, i: usize) -> f64 {
            self.log.borrow_mut().push(Access::Label(i));
            self.records[i].y
        }
    }

    /// Fails the test if the learner sees a label before predicting on it.
    struct Guard<'a> {
        inner: Box<dyn Runnable>,
        log: &'a RefCell<Vec<Access>>,
        predicted: usize,
    }

    impl Runnable for Guard<'_> {
        fn name(&self) -> String {
            self.inner.name()
        }
        fn predict(&mut self, x: &[f64]) -> Result<f64> {
            let labels = self
                .log
                .borrow()
                .iter()
                .filter(|a| matches!(a, Access::Label(_)))
                .count();
            assert_eq!(labels, self.predicted, "label revealed before prediction");
            self.predicted += 1;
            self.inner.predict(x)
        }
        fn learn(&mut self, y: f64) -> Result<SlotReport> {
            self.inner.learn(y)
        }
        fn state_size(&self) -> usize {
            self.inner.state_size()
        }
        fn weight_headers(&self) -> Vec<String> {
            self.inner.weight_headers()
        }
        fn weight_row(&self, r: &SlotReport) -> Vec<f64> {
            self.inner.weight_row(r)
        }
    }

    #[test]
    fn prediction_precedes_label() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(&["adaraker"], dir.path());
        let prepared = prepare(&c).unwrap();
        let source = Recording {
            records: &prepared.records[..50],
            log: RefCell::new(Vec::new()),
        };
        let mut guard = Guard {
            inner: build_algorithm(Algorithm::AdaRaker, &c, &prepared).unwrap(),
            log: &source.log,
            predicted: 0,
        };
        run_online(&mut guard, &source, Task::Regression, &prepared.loss).unwrap();
        let log = source.log.into_inner();
        let expected: Vec<Access> = (0..50)
            .flat_map(|i| [Access::Features(i), Access::Label(i)])
            .collect();
        assert_eq!(log, expected);
    }

    #[test]
    fn runtime_failures_name_algorithm_and_slot() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(&["raker"], dir.path());
        let mut prepared = prepare(&c).unwrap();
        prepared.records[4].x.push(0.0);
        let mut learner = build_algorithm(Algorithm::Raker, &c, &prepared).unwrap();
        let err = run_online(
            learner.as_mut(),
            prepared.records.as_slice(),
            c.task,
            &prepared.loss,
        )
        .unwrap_err();
        match err {
            Error::Runtime {
                algorithm, slot, ..
            } => assert_eq!((algorithm.as_str(), slot), ("raker", 5)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn regret_report() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(&["raker"], dir.path());
        c.out_dir = dir.path().join("nested/regret");
        let (trace, path) = emit_regret_report(&c, Algorithm::Oracle).unwrap();
        assert!(path.exists());
        assert!(trace.rows.iter().all(|r| r.regret.abs() < 1e-8));
        let (raker, _) = emit_regret_report(&c, Algorithm::Raker).unwrap();
        assert!(raker.final_regret() > 0.0);
        c.task = Task::BinaryClassification;
        assert!(emit_regret_report(&c, Algorithm::Raker).is_err());
    }

    #[test]
    fn classification_csv_run() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let mut text = String::from("a,b,label\n");
        for i in 0..60 {
            let a = (i as f64 * 0.37).sin();
            let b = (i as f64 * 0.11).cos();
            text.push_str(&format!("{a},{b},{}\n", if a > 0.0 { 1 } else { -1 }));
        }
        fs::write(&path, text).unwrap();
        let mut c = config(&["raker", "adaraker", "omkl"], dir.path());
        c.task = Task::BinaryClassification;
        c.stream = StreamSource::Csv {
            path,
            label: "label".into(),
            features: None,
            normalize: true,
        };
        let out = run_experiment(&c).unwrap();
        for t in &out.traces {
            let e = t.final_metric();
            assert!((0.0..=1.0).contains(&e));
        }
        let text = fs::read_to_string(dir.path().join("raker.csv")).unwrap();
        assert!(text.starts_with("t,y,yhat,loss,cum_err,"));
    }

    #[test]
    fn config_defaults() {
        let c: ExperimentConfig = toml::from_str(
            "algorithms = [\"raker\"]\n[stream]\nkind = \"switching\"\npreset = \"dataset1_rescaled\"\n",
        )
        .unwrap();
        assert_eq!(c.kernels, default_kernels());
        assert_eq!(c.lambda, 0.01);
        assert_eq!(c.eta_weight, 0.5);
        assert_eq!(c.variant, Variant::Orf);
        assert_eq!(
            c.stream,
            StreamSource::Switching {
                preset: SwitchingPreset::Dataset1Rescaled,
                dim: 10,
                horizon: None,
                sigma_alpha: 0.01
            }
        );
        assert!(toml::from_str::<ExperimentConfig>(
            "algorithms = []\nbogus = 1\n[stream]\nkind = \"csv\"\n"
        )
        .is_err());
    }
}
