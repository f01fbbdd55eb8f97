//! Experiment configuration as flat `key = value` text.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::signal::RngSeed;
use crate::training::{L1Scale, ProbeConfig, TrainingConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub k: usize,
    pub alpha: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub l1_scale: L1Scale,
    pub ensemble_sizes: Vec<usize>,
    pub m_values: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub output: PathBuf,
    pub probe_every: usize,
    pub probe_trials: usize,
    /// Observation length used by the training-curve experiment.
    pub curve_m: usize,
    pub timing_instances: usize,
    /// Include the branch-and-bound recoverer in sweeps and timing runs.
    pub include_ip: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::paper_k6()
    }
}

impl ExperimentConfig {
    /// Full-size parameters: n = 256, k = 6, α = 1000, 5·10^4 steps.
    pub fn paper_k6() -> Self {
        Self {
            n: 256,
            k: 6,
            alpha: 1000,
            batch_size: 100,
            steps: 50_000,
            lambda: 0.95,
            learning_rate: 0.002,
            l1_scale: L1Scale::default(),
            ensemble_sizes: vec![1, 3, 5],
            m_values: vec![60, 90, 120, 140, 150, 180],
            trials: 1000,
            seed: 1,
            output: PathBuf::from("results"),
            probe_every: 500,
            probe_trials: 1000,
            curve_m: 140,
            timing_instances: 10_000,
            include_ip: true,
        }
    }

    /// Laptop-sized run: n = 64, k = 3, α = 256, 5000 steps.
    pub fn desk() -> Self {
        Self {
            n: 64,
            k: 3,
            alpha: 256,
            steps: 5000,
            m_values: vec![16, 24, 32, 40, 48, 56],
            trials: 500,
            probe_trials: 500,
            curve_m: 48,
            timing_instances: 1000,
            ..Self::paper_k6()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper-k6" | "paper" => Ok(Self::paper_k6()),
            other => Err(Error::invalid(format!("unknown preset `{other}` (expected desk or paper-k6)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ensemble_sizes.is_empty() || self.m_values.is_empty() {
            return Err(Error::invalid("ensemble_sizes and m_values must be non-empty"));
        }
        if self.ensemble_sizes.contains(&0) {
            return Err(Error::invalid("ensemble sizes must be at least 1"));
        }
        if self.trials == 0 || self.timing_instances == 0 {
            return Err(Error::invalid("trials and timing_instances must be at least 1"));
        }
        if let Some(&m) = self.m_values.iter().chain([&self.curve_m]).find(|&&m| m == 0 || m >= self.n) {
            return Err(Error::invalid(format!("m={m} must satisfy 1 <= m < n={}", self.n)));
        }
        self.training(self.m_values[0], RngSeed(self.seed)).validate()
    }

    pub fn max_ensemble(&self) -> usize {
        self.ensemble_sizes.iter().copied().max().unwrap_or(1)
    }

    /// Training config for observation length `m`.
    pub fn training(&self, m: usize, seed: RngSeed) -> TrainingConfig {
        TrainingConfig {
            n: self.n,
            m,
            k: self.k,
            alpha: self.alpha,
            batch_size: self.batch_size,
            steps: self.steps,
            lambda: self.lambda,
            l1_scale: self.l1_scale,
            learning_rate: self.learning_rate,
            seed,
            probe: None,
        }
    }

    pub fn probe(&self, seed: RngSeed) -> ProbeConfig {
        ProbeConfig {
            every: self.probe_every,
            trials: self.probe_trials,
            seed,
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("invalid number `{v}`"))
        }
        fn list(v: &str) -> std::result::Result<Vec<usize>, String> {
            v.split(',').map(|s| num(s.trim())).collect()
        }
        match key {
            "n" => self.n = num(value)?,
            "k" => self.k = num(value)?,
            "alpha" => self.alpha = num(value)?,
            "batch_size" => self.batch_size = num(value)?,
            "steps" => self.steps = num(value)?,
            "lambda" => self.lambda = num(value)?,
            "learning_rate" => self.learning_rate = num(value)?,
            "l1_scale" => self.l1_scale = value.parse().map_err(|e: Error| e.to_string())?,
            "ensemble_sizes" => self.ensemble_sizes = list(value)?,
            "m_values" => self.m_values = list(value)?,
            "trials" => self.trials = num(value)?,
            "seed" => self.seed = num(value)?,
            "output" => self.output = PathBuf::from(value),
            "probe_every" => self.probe_every = num(value)?,
            "probe_trials" => self.probe_trials = num(value)?,
            "curve_m" => self.curve_m = num(value)?,
            "timing_instances" => self.timing_instances = num(value)?,
            "include_ip" => {
                self.include_ip = match value {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    other => return Err(format!("invalid boolean `{other}`")),
                }
            }
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Overlays settings from config text onto `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config {
                    line: idx + 1,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            self.set(key.trim(), value.trim()).map_err(|message| Error::Config {
                line: idx + 1,
                message,
            })?;
        }
        Ok(())
    }

    /// Effective configuration in the same format [`apply_text`] reads.
    ///
    /// [`apply_text`]: Self::apply_text
    pub fn to_text(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        writeln!(out, "n = {}", self.n).unwrap();
        writeln!(out, "k = {}", self.k).unwrap();
        writeln!(out, "alpha = {}", self.alpha).unwrap();
        writeln!(out, "batch_size = {}", self.batch_size).unwrap();
        writeln!(out, "steps = {}", self.steps).unwrap();
        writeln!(out, "lambda = {}", self.lambda).unwrap();
        writeln!(out, "learning_rate = {}", self.learning_rate).unwrap();
        writeln!(out, "l1_scale = {}", self.l1_scale.as_str()).unwrap();
        writeln!(out, "ensemble_sizes = {}", join(&self.ensemble_sizes)).unwrap();
        writeln!(out, "m_values = {}", join(&self.m_values)).unwrap();
        writeln!(out, "trials = {}", self.trials).unwrap();
        writeln!(out, "seed = {}", self.seed).unwrap();
        writeln!(out, "output = {}", self.output.display()).unwrap();
        writeln!(out, "probe_every = {}", self.probe_every).unwrap();
        writeln!(out, "probe_trials = {}", self.probe_trials).unwrap();
        writeln!(out, "curve_m = {}", self.curve_m).unwrap();
        writeln!(out, "timing_instances = {}", self.timing_instances).unwrap();
        writeln!(out, "include_ip = {}", self.include_ip).unwrap();
        out
    }
}
