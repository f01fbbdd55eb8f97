//! Experiment harness: recovery-rate sweeps over `m`, training curves and
//! recovery timing, all reproducible from an [`ExperimentConfig`].

mod config;

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rayon::prelude::*;

pub use config::ExperimentConfig;

use crate::ensemble::{train_components, EnsembleModel};
use crate::error::{Error, Result};
use crate::net::{BinaryEstimate, NetParams};
use crate::recovery::{BranchAndBound, BranchOrder};
use crate::signal::{sample_sensing_matrix, BinaryObservation, RngSeed, SensingMatrix};
use crate::training::{train, Recoverer, RecoveryStats, TrainingLog, TrialSet};

const STREAM_MATRIX: u64 = 1;
const STREAM_NETS: u64 = 2;
const STREAM_TRIALS: u64 = 3;
const STREAM_CURVE: u64 = 4;
const STREAM_PROBE: u64 = 5;
const STREAM_TIMING: u64 = 6;

/// Header of the sweep CSV; bump the suffix when columns change.
pub const SWEEP_SCHEMA: &str = "#schema=onebit-sweep/1";
pub const SWEEP_HEADER: &str = "m,method,recovery_rate,wilson95_low,wilson95_high,mean_recovery_seconds";
pub const TIMING_SCHEMA: &str = "#schema=onebit-timing/1";
pub const TIMING_HEADER: &str = "m,method,instances,total_seconds,per_instance_seconds";

/// Method identifier used in CSV rows.
pub fn net_method_id(size: usize) -> String {
    format!("nn_s{size}")
}

pub const IP_METHOD_ID: &str = "ip_bnb";
pub const NOOP_METHOD_ID: &str = "noop";

/// The sensing matrix drawn for observation length `m`.
pub fn cell_matrix(cfg: &ExperimentConfig, m: usize) -> Result<SensingMatrix> {
    let seed = RngSeed(cfg.seed).derive(&[STREAM_MATRIX, m as u64]);
    sample_sensing_matrix(m, cfg.n, &mut seed.rng())
}

/// Trial signals shared by every method at observation length `m`.
pub fn cell_trials(cfg: &ExperimentConfig, a: &SensingMatrix) -> Result<TrialSet> {
    TrialSet::generate(a, cfg.k, cfg.trials, RngSeed(cfg.seed).derive(&[STREAM_TRIALS, a.m() as u64]))
}

/// Trained networks for one sweep point. Ensembles of size `S` use the
/// first `S` components; the single network is component 0.
#[derive(Debug, Clone)]
pub struct CellModels {
    pub m: usize,
    pub matrix: SensingMatrix,
    pub components: Vec<NetParams>,
    pub logs: Vec<TrainingLog>,
}

impl CellModels {
    pub fn train(cfg: &ExperimentConfig, m: usize) -> Result<Self> {
        let matrix = cell_matrix(cfg, m)?;
        let tcfg = cfg.training(m, RngSeed(cfg.seed).derive(&[STREAM_NETS, m as u64]));
        let (components, logs) = train_components(&tcfg, cfg.max_ensemble(), &matrix, true)?
            .into_iter()
            .unzip();
        Ok(Self {
            m,
            matrix,
            components,
            logs,
        })
    }

    /// Voting model over the first `size` components with `τ = size/2`.
    pub fn ensemble(&self, size: usize) -> Result<EnsembleModel> {
        if size == 0 || size > self.components.len() {
            return Err(Error::invalid(format!(
                "ensemble size {size} not available ({} components trained)",
                self.components.len()
            )));
        }
        EnsembleModel::with_default_threshold(self.components[..size].to_vec(), self.components[0].seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub m: usize,
    pub method: String,
    pub stats: RecoveryStats,
    pub mean_seconds: f64,
    /// Per-trial success flags, in trial order.
    pub outcomes: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub m: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<CellFailure>,
}

impl SweepResult {
    pub fn row(&self, m: usize, method: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.m == m && r.method == method)
    }

    pub fn rate(&self, m: usize, method: &str) -> Option<f64> {
        self.row(m, method).map(|r| r.stats.rate)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{SWEEP_SCHEMA}\n{SWEEP_HEADER}\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{:e}",
                r.m, r.method, r.stats.rate, r.stats.wilson_low, r.stats.wilson_high, r.mean_seconds
            )
            .unwrap();
        }
        out
    }
}

/// Evaluates a recoverer on every case, timing each recovery call.
pub fn evaluate_timed<R: Recoverer + ?Sized>(
    m: usize,
    method: impl Into<String>,
    recoverer: &R,
    trials: &TrialSet,
) -> Result<SweepRow> {
    let mut elapsed = Duration::ZERO;
    let mut outcomes = Vec::with_capacity(trials.len());
    for (x, u) in &trials.cases {
        let start = Instant::now();
        let estimate = recoverer.recover(u)?;
        elapsed += start.elapsed();
        outcomes.push(estimate.values == x.values());
    }
    let successes = outcomes.iter().filter(|&&ok| ok).count();
    Ok(SweepRow {
        m,
        method: method.into(),
        stats: RecoveryStats::from_counts(successes, trials.len()),
        mean_seconds: elapsed.as_secs_f64() / trials.len().max(1) as f64,
        outcomes,
    })
}

struct Cell {
    rows: Vec<SweepRow>,
    failure: Option<CellFailure>,
    models: Option<CellModels>,
}

fn run_cell(cfg: &ExperimentConfig, m: usize) -> Result<Cell> {
    let matrix = cell_matrix(cfg, m)?;
    let trials = cell_trials(cfg, &matrix)?;
    let mut rows = Vec::new();
    let mut failure = None;
    let models = match CellModels::train(cfg, m) {
        Ok(models) => {
            for &size in &cfg.ensemble_sizes {
                let row = if size == 1 {
                    evaluate_timed(m, net_method_id(1), &models.components[0], &trials)?
                } else {
                    evaluate_timed(m, net_method_id(size), &models.ensemble(size)?, &trials)?
                };
                rows.push(row);
            }
            Some(models)
        }
        Err(e @ Error::Diverged { .. }) => {
            failure = Some(CellFailure { m, message: e.to_string() });
            None
        }
        Err(e) => return Err(e),
    };
    if cfg.include_ip {
        let bb = BranchAndBound::new(matrix, cfg.k, BranchOrder::default())?;
        rows.push(evaluate_timed(m, IP_METHOD_ID, &bb, &trials)?);
    }
    Ok(Cell { rows, failure, models })
}

/// Trained models alongside the sweep table, for reuse by timing runs.
pub struct SweepOutput {
    pub result: SweepResult,
    pub models: Vec<CellModels>,
}

/// For each `m`: draw and fix `A`, train the networks, then evaluate every
/// method on the same trial signals. A diverging training run is recorded
/// as a failure for its cell and the sweep continues.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let cells = cfg
        .m_values
        .par_iter()
        .map(|&m| run_cell(cfg, m))
        .collect::<Result<Vec<_>>>()?;
    let mut out = SweepOutput {
        result: SweepResult::default(),
        models: Vec::new(),
    };
    for cell in cells {
        out.result.rows.extend(cell.rows);
        out.result.failures.extend(cell.failure);
        out.models.extend(cell.models);
    }
    Ok(out)
}

/// Trains one network at `curve_m`, probing the recovery rate every
/// `probe_every` steps on a fixed probe set.
pub fn run_training_curve(cfg: &ExperimentConfig) -> Result<TrainingLog> {
    cfg.validate()?;
    let m = cfg.curve_m;
    let root = RngSeed(cfg.seed).derive(&[STREAM_CURVE, m as u64]);
    let matrix = sample_sensing_matrix(m, cfg.n, &mut root.derive(&[STREAM_MATRIX]).rng())?;
    let mut tcfg = cfg.training(m, root.derive(&[STREAM_NETS]));
    tcfg.probe = Some(cfg.probe(root.derive(&[STREAM_PROBE])));
    Ok(train(&tcfg, &matrix)?.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub m: usize,
    pub method: String,
    pub instances: usize,
    pub total_seconds: f64,
}

impl TimingRow {
    pub fn per_instance(&self) -> f64 {
        self.total_seconds / self.instances as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimingResult {
    pub rows: Vec<TimingRow>,
}

impl TimingResult {
    pub fn row(&self, m: usize, method: &str) -> Option<&TimingRow> {
        self.rows.iter().find(|r| r.m == m && r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{TIMING_SCHEMA}\n{TIMING_HEADER}\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{:e},{:e}",
                r.m,
                r.method,
                r.instances,
                r.total_seconds,
                r.per_instance()
            )
            .unwrap();
        }
        out
    }
}

/// Returns an all-zero estimate without looking at the input; measures the
/// harness overhead.
pub struct NoopRecoverer {
    pub n: usize,
}

impl Recoverer for NoopRecoverer {
    fn recover(&self, _: &BinaryObservation) -> Result<BinaryEstimate> {
        Ok(BinaryEstimate { values: vec![0; self.n] })
    }
}

fn time_batch<R: Recoverer + ?Sized>(recoverer: &R, inputs: &[BinaryObservation]) -> Result<f64> {
    let start = Instant::now();
    for u in inputs {
        std::hint::black_box(recoverer.recover(std::hint::black_box(u))?);
    }
    Ok(start.elapsed().as_secs_f64())
}

/// Wall-clock time of the recovery calls alone, per method, over
/// `timing_instances` observations. Methods are timed one after another on
/// the calling thread.
pub fn run_timing_with(cfg: &ExperimentConfig, models: &[CellModels]) -> Result<TimingResult> {
    let mut result = TimingResult::default();
    for cell in models {
        let m = cell.m;
        let set = TrialSet::generate(
            &cell.matrix,
            cfg.k,
            cfg.timing_instances,
            RngSeed(cfg.seed).derive(&[STREAM_TIMING, m as u64]),
        )?;
        let inputs: Vec<BinaryObservation> = set.cases.into_iter().map(|(_, u)| u).collect();
        let mut push = |method: String, total_seconds: f64| {
            result.rows.push(TimingRow {
                m,
                method,
                instances: inputs.len(),
                total_seconds,
            })
        };
        push(NOOP_METHOD_ID.into(), time_batch(&NoopRecoverer { n: cfg.n }, &inputs)?);
        for &size in &cfg.ensemble_sizes {
            let secs = if size == 1 {
                time_batch(&cell.components[0], &inputs)?
            } else {
                time_batch(&cell.ensemble(size)?, &inputs)?
            };
            push(net_method_id(size), secs);
        }
        if cfg.include_ip {
            let bb = BranchAndBound::new(cell.matrix.clone(), cfg.k, BranchOrder::default())?;
            push(IP_METHOD_ID.into(), time_batch(&bb, &inputs)?);
        }
    }
    Ok(result)
}

/// Trains the models for every `m` and times them.
pub fn run_timing(cfg: &ExperimentConfig) -> Result<TimingResult> {
    cfg.validate()?;
    let models = cfg
        .m_values
        .par_iter()
        .map(|&m| CellModels::train(cfg, m))
        .collect::<Result<Vec<_>>>()?;
    run_timing_with(cfg, &models)
}
