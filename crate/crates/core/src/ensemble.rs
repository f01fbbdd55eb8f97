//! Soft majority voting over independently trained networks.
//!
//! `x̂_j = T_τ(Σ_s y^(s)_j)` with `T_τ(a) = 1` iff `a > τ`. The default
//! threshold is `τ = S/2`; for even `S` a sum of exactly `S/2` votes 0.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::net::{BinaryEstimate, NetParams, OpCount, SoftOutput};
use crate::signal::{BinaryObservation, SensingMatrix};
use crate::training::{train, Recoverer, TrainingConfig, TrainingLog};

const ENSEMBLE_MAGIC: &[u8; 4] = b"OBEN";
const ENSEMBLE_VERSION: u32 = 1;
const ENSEMBLE_HEADER_LEN: usize = 4 + 4 + 8 + 8 + 8;

/// `0` if `a <= tau`, `1` if `a > tau`.
#[inline]
pub fn threshold(a: f64, tau: f64) -> u8 {
    u8::from(a > tau)
}

/// Thresholded coordinate-wise sum of component outputs.
pub fn vote(outputs: &[SoftOutput], tau: f64) -> Result<BinaryEstimate> {
    let Some(first) = outputs.first() else {
        return Err(Error::invalid("vote needs at least one component output"));
    };
    let n = first.values.len();
    if let Some(bad) = outputs.iter().find(|o| o.values.len() != n) {
        return Err(Error::DimensionMismatch {
            what: "component output length",
            expected: n,
            actual: bad.values.len(),
        });
    }
    // Summing each coordinate's votes in sorted order makes the result
    // independent of component order, bit for bit.
    let mut column = vec![0.0; outputs.len()];
    let values = (0..n)
        .map(|j| {
            column.iter_mut().zip(outputs).for_each(|(c, o)| *c = o.values[j]);
            column.sort_unstable_by(f64::total_cmp);
            threshold(column.iter().sum(), tau)
        })
        .collect();
    Ok(BinaryEstimate { values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    components: Vec<NetParams>,
    tau: f64,
    master_seed: u64,
}

impl EnsembleModel {
    /// Requires `S >= 1`, identical component dimensions and `0 < τ < S`.
    pub fn new(components: Vec<NetParams>, tau: f64, master_seed: u64) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::invalid("ensemble needs at least one component"));
        };
        let dims = first.dims();
        if let Some(bad) = components.iter().find(|c| c.dims() != dims) {
            return Err(Error::invalid(format!(
                "component dimensions {:?} differ from {:?}",
                bad.dims(),
                dims
            )));
        }
        let s = components.len() as f64;
        if !(tau > 0.0 && tau < s) {
            return Err(Error::invalid(format!("threshold {tau} must lie in (0, {s})")));
        }
        Ok(Self {
            components,
            tau,
            master_seed,
        })
    }

    /// `τ = S/2`.
    pub fn with_default_threshold(components: Vec<NetParams>, master_seed: u64) -> Result<Self> {
        let tau = components.len() as f64 / 2.0;
        Self::new(components, tau, master_seed)
    }

    pub fn components(&self) -> &[NetParams] {
        &self.components
    }

    pub fn size(&self) -> usize {
        self.components.len()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// `(m, n, α)` shared by every component.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.components[0].dims()
    }

    pub fn component_outputs(&self, u: &BinaryObservation) -> Result<Vec<SoftOutput>> {
        self.components.iter().map(|c| c.forward(u)).collect()
    }

    pub fn predict(&self, u: &BinaryObservation) -> Result<BinaryEstimate> {
        vote(&self.component_outputs(u)?, self.tau)
    }

    /// Instrumented prediction; the vote adds `S·n` additions and `n`
    /// comparisons on top of the component passes.
    pub fn predict_counted(&self, u: &BinaryObservation, ops: &mut OpCount) -> Result<BinaryEstimate> {
        let outputs = self
            .components
            .iter()
            .map(|c| c.forward_counted(u, ops))
            .collect::<Result<Vec<_>>>()?;
        ops.mul_adds += (self.size() * self.dims().1) as u64;
        vote(&outputs, self.tau)
    }

    /// Manifest (magic `OBEN`, `u32` version, `u64` S, `f64` τ, `u64`
    /// master seed) followed by the component models back to back.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(ENSEMBLE_MAGIC);
        out.extend_from_slice(&ENSEMBLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.size() as u64).to_le_bytes());
        out.extend_from_slice(&self.tau.to_le_bytes());
        out.extend_from_slice(&self.master_seed.to_le_bytes());
        for c in &self.components {
            out.extend_from_slice(&c.to_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < ENSEMBLE_HEADER_LEN {
            return Err(Error::Truncated {
                expected: ENSEMBLE_HEADER_LEN,
                actual: bytes.len(),
            });
        }
        if &bytes[..4] != ENSEMBLE_MAGIC {
            return Err(Error::MalformedFile("bad ensemble magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != ENSEMBLE_VERSION {
            return Err(Error::MalformedFile(format!("unsupported ensemble version {version}")));
        }
        let size = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let tau = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let master_seed = u64::from_le_bytes(bytes[24..32].try_into().unwrap());
        if size == 0 {
            return Err(Error::HeaderDimensions("ensemble with zero components".into()));
        }
        let mut rest = &bytes[ENSEMBLE_HEADER_LEN..];
        let mut components = Vec::new();
        for _ in 0..size {
            let (c, used) = NetParams::decode_prefix(rest)?;
            components.push(c);
            rest = &rest[used..];
        }
        if !rest.is_empty() {
            return Err(Error::HeaderDimensions(format!("{} trailing bytes after components", rest.len())));
        }
        Self::new(components, tau, master_seed).map_err(|e| Error::MalformedFile(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

impl Recoverer for EnsembleModel {
    fn recover(&self, u: &BinaryObservation) -> Result<BinaryEstimate> {
        self.predict(u)
    }
}

/// Config for component `index`: identical except for a seed derived from
/// the master seed and the index.
pub fn component_config(cfg: &TrainingConfig, index: usize) -> TrainingConfig {
    TrainingConfig {
        seed: cfg.seed.derive(&[index as u64]),
        ..cfg.clone()
    }
}

/// Trains `size` components, in parallel when `parallel` is set. The result
/// does not depend on the schedule.
pub fn train_components(
    cfg: &TrainingConfig,
    size: usize,
    a: &SensingMatrix,
    parallel: bool,
) -> Result<Vec<(NetParams, TrainingLog)>> {
    if size == 0 {
        return Err(Error::invalid("ensemble size must be at least 1"));
    }
    let run = |s: usize| train(&component_config(cfg, s), a);
    if parallel {
        (0..size).into_par_iter().map(run).collect()
    } else {
        (0..size).map(run).collect()
    }
}

/// Trains an `S`-component ensemble with `τ = S/2`.
pub fn train_ensemble(cfg: &TrainingConfig, size: usize, a: &SensingMatrix) -> Result<EnsembleModel> {
    let components = train_components(cfg, size, a, true)?.into_iter().map(|(p, _)| p).collect();
    EnsembleModel::with_default_threshold(components, cfg.seed.0)
}
