//! Training of a single recovery network: minibatch loss, backpropagation,
//! Adam, the streaming training loop and recovery-rate evaluation.

mod adam;
mod evaluate;
mod loss;

use std::fmt::Write as _;

pub use adam::{AdamConfig, AdamState};
pub use evaluate::{
    evaluate_fresh, evaluate_recovery_rate, recovery_outcomes, wilson_interval, Recoverer, RecoveryStats, TrialSet,
    WILSON_Z95,
};
pub use loss::{backprop, batch_loss, loss, Gradients, L1Scale, Minibatch, LOG_CLAMP};

use crate::error::{Error, Result};
use crate::net::NetParams;
use crate::signal::{RngSeed, SensingMatrix};

const STREAM_INIT: u64 = 1;
const STREAM_DATA: u64 = 2;

/// Periodic recovery-rate probes on a fixed trial set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub every: usize,
    pub trials: usize,
    pub seed: RngSeed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    /// Hidden units.
    pub alpha: usize,
    /// Minibatch size `T`.
    pub batch_size: usize,
    /// Number of learning steps; `L = batch_size * steps` pairs are drawn.
    pub steps: usize,
    /// L1 weight `λ`.
    pub lambda: f64,
    pub l1_scale: L1Scale,
    /// Adam step size `ε`.
    pub learning_rate: f64,
    pub seed: RngSeed,
    pub probe: Option<ProbeConfig>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            n: 256,
            m: 140,
            k: 6,
            alpha: 1000,
            batch_size: 100,
            steps: 50_000,
            lambda: 0.95,
            l1_scale: L1Scale::default(),
            learning_rate: 0.002,
            seed: RngSeed(0),
            probe: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.alpha == 0 {
            return Err(Error::invalid("n, m and alpha must be positive"));
        }
        if self.k == 0 || self.k >= self.n {
            return Err(Error::invalid(format!("k={} must satisfy 1 <= k < n={}", self.k, self.n)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda={} must be finite and >= 0", self.lambda)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate={} must be > 0", self.learning_rate)));
        }
        if let Some(probe) = &self.probe {
            if probe.every == 0 || probe.trials == 0 {
                return Err(Error::invalid("probe interval and probe trials must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub step: usize,
    pub loss: f64,
    pub probe_recovery_rate: Option<f64>,
}

/// Per-step minibatch loss, with optional probe results.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub entries: Vec<LogEntry>,
}

impl TrainingLog {
    pub fn losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.loss)
    }

    pub fn probes(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries
            .iter()
            .filter_map(|e| e.probe_recovery_rate.map(|r| (e.step, r)))
    }

    /// Mean loss over the first `window` steps and over the last `window`.
    pub fn head_tail_mean(&self, window: usize) -> Option<(f64, f64)> {
        let w = window.min(self.entries.len());
        if w == 0 {
            return None;
        }
        let mean = |s: &[LogEntry]| s.iter().map(|e| e.loss).sum::<f64>() / s.len() as f64;
        Some((mean(&self.entries[..w]), mean(&self.entries[self.entries.len() - w..])))
    }

    /// `step,loss[,probe_recovery_rate]`
    pub fn to_csv(&self) -> String {
        let with_probe = self.entries.iter().any(|e| e.probe_recovery_rate.is_some());
        let mut out = String::from(if with_probe { "step,loss,probe_recovery_rate\n" } else { "step,loss\n" });
        for e in &self.entries {
            write!(out, "{},{}", e.step, e.loss).unwrap();
            if with_probe {
                out.push(',');
                if let Some(r) = e.probe_recovery_rate {
                    write!(out, "{r}").unwrap();
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Trains one network against the fixed sensing matrix `a`.
///
/// Each step draws a fresh minibatch of `(sign(Ax), x)` pairs, so the
/// training set is consumed in a single pass without materialising it.
pub fn train(cfg: &TrainingConfig, a: &SensingMatrix) -> Result<(NetParams, TrainingLog)> {
    train_with_observer(cfg, a, |_| {})
}

/// [`train`] with a callback invoked after every logged step.
pub fn train_with_observer(
    cfg: &TrainingConfig,
    a: &SensingMatrix,
    mut observer: impl FnMut(&LogEntry),
) -> Result<(NetParams, TrainingLog)> {
    cfg.validate()?;
    if a.m() != cfg.m || a.n() != cfg.n {
        return Err(Error::invalid(format!(
            "sensing matrix is {}x{} but config expects {}x{}",
            a.m(),
            a.n(),
            cfg.m,
            cfg.n
        )));
    }
    let mut params = NetParams::init(cfg.m, cfg.n, cfg.alpha, &mut cfg.seed.derive(&[STREAM_INIT]).rng())?;
    params.seed = cfg.seed.0;
    let mut data_rng = cfg.seed.derive(&[STREAM_DATA]).rng();
    let mut adam = AdamState::for_params(AdamConfig::new(cfg.learning_rate), &params);
    let probe_set = match &cfg.probe {
        Some(p) => Some(TrialSet::generate(a, cfg.k, p.trials, p.seed)?),
        None => None,
    };

    let mut log = TrainingLog {
        entries: Vec::with_capacity(cfg.steps),
    };
    for step in 1..=cfg.steps {
        let batch = Minibatch::sample(a, cfg.k, cfg.batch_size, &mut data_rng)?;
        let (loss, grads) = backprop(&params, &batch, cfg.lambda, cfg.l1_scale).map_err(|e| match e {
            Error::Diverged { detail, .. } => Error::Diverged { step, detail },
            other => other,
        })?;
        adam.step(&mut params, &grads)?;

        let probe_recovery_rate = match (&cfg.probe, &probe_set) {
            (Some(p), Some(set)) if step % p.every == 0 || step == cfg.steps => {
                Some(evaluate_recovery_rate(&params, set)?.rate)
            }
            _ => None,
        };
        let entry = LogEntry {
            step,
            loss,
            probe_recovery_rate,
        };
        observer(&entry);
        log.entries.push(entry);
    }
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::sample_sensing_matrix;

    fn small_cfg() -> TrainingConfig {
        TrainingConfig {
            n: 12,
            m: 8,
            k: 2,
            alpha: 6,
            batch_size: 5,
            steps: 3,
            seed: RngSeed(1),
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn rejects_invalid_config() {
        let a = sample_sensing_matrix(8, 12, &mut RngSeed(0).rng()).unwrap();
        let mut cfg = small_cfg();
        cfg.steps = 0;
        assert!(train(&cfg, &a).is_err());
        let mut cfg = small_cfg();
        cfg.m = 9;
        assert!(train(&cfg, &a).is_err());
        let mut cfg = small_cfg();
        cfg.lambda = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = small_cfg();
        cfg.learning_rate = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn one_step_is_one_update() {
        let a = sample_sensing_matrix(8, 12, &mut RngSeed(0).rng()).unwrap();
        let cfg = TrainingConfig { steps: 1, ..small_cfg() };
        let (p, log) = train(&cfg, &a).unwrap();
        assert_eq!(log.entries.len(), 1);

        // Replay the single step by hand.
        let mut init = NetParams::init(8, 12, 6, &mut cfg.seed.derive(&[STREAM_INIT]).rng()).unwrap();
        init.seed = cfg.seed.0;
        let batch = Minibatch::sample(&a, 2, 5, &mut cfg.seed.derive(&[STREAM_DATA]).rng()).unwrap();
        let (l, g) = backprop(&init, &batch, cfg.lambda, cfg.l1_scale).unwrap();
        let mut state = AdamState::for_params(AdamConfig::new(cfg.learning_rate), &init);
        state.step(&mut init, &g).unwrap();
        assert_eq!(l, log.entries[0].loss);
        assert_eq!(init, p);
    }

    #[test]
    fn training_is_deterministic() {
        let a = sample_sensing_matrix(8, 12, &mut RngSeed(0).rng()).unwrap();
        let cfg = TrainingConfig {
            steps: 20,
            probe: Some(ProbeConfig {
                every: 5,
                trials: 10,
                seed: RngSeed(3),
            }),
            ..small_cfg()
        };
        let (p1, l1) = train(&cfg, &a).unwrap();
        let (p2, l2) = train(&cfg, &a).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(l1.to_csv(), l2.to_csv());
        assert_eq!(l1.probes().map(|(s, _)| s).collect::<Vec<_>>(), vec![5, 10, 15, 20]);
        assert!(l1.to_csv().starts_with("step,loss,probe_recovery_rate\n1,"));
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let a = sample_sensing_matrix(8, 12, &mut RngSeed(0).rng()).unwrap();
        let cfg = TrainingConfig {
            learning_rate: f64::MAX,
            steps: 5,
            ..small_cfg()
        };
        match train(&cfg, &a) {
            Err(Error::Diverged { step, .. }) => assert!(step >= 2),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
