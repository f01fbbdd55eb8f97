//! Recovery-rate estimation over paired trial sets.

use rayon::prelude::*;

use crate::error::Result;
use crate::net::{BinaryEstimate, NetParams};
use crate::signal::{observe, sample_sparse_signal, BinaryObservation, RngSeed, SensingMatrix, SparseSignal};

/// Anything that maps an observation to a binary estimate.
pub trait Recoverer: Sync {
    fn recover(&self, u: &BinaryObservation) -> Result<BinaryEstimate>;
}

impl Recoverer for NetParams {
    fn recover(&self, u: &BinaryObservation) -> Result<BinaryEstimate> {
        self.predict(u)
    }
}

impl<R: Recoverer + ?Sized> Recoverer for &R {
    fn recover(&self, u: &BinaryObservation) -> Result<BinaryEstimate> {
        (**self).recover(u)
    }
}

/// Fixed set of `(x, sign(Ax))` cases. Every method compared on one trial
/// set sees the same signals.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    pub cases: Vec<(SparseSignal, BinaryObservation)>,
}

impl TrialSet {
    /// Case `i` is drawn from the stream `seed.derive([i])`, so the set is a
    /// pure function of `(A, k, trials, seed)`.
    pub fn generate(a: &SensingMatrix, k: usize, trials: usize, seed: RngSeed) -> Result<Self> {
        let cases = (0..trials)
            .into_par_iter()
            .map(|i| {
                let x = sample_sparse_signal(a.n(), k, &mut seed.derive(&[i as u64]).rng())?;
                let u = observe(a, &x)?;
                Ok((x, u))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cases })
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryStats {
    pub successes: usize,
    pub trials: usize,
    pub rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

impl RecoveryStats {
    pub fn from_counts(successes: usize, trials: usize) -> Self {
        let (wilson_low, wilson_high) = wilson_interval(successes, trials, WILSON_Z95);
        Self {
            successes,
            trials,
            rate: if trials == 0 { 0.0 } else { successes as f64 / trials as f64 },
            wilson_low,
            wilson_high,
        }
    }
}

/// Two-sided 95% normal quantile.
pub const WILSON_Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let nt = trials as f64;
    let p = successes as f64 / nt;
    let z2 = z * z;
    let denom = 1.0 + z2 / nt;
    let centre = (p + z2 / (2.0 * nt)) / denom;
    let half = z * (p * (1.0 - p) / nt + z2 / (4.0 * nt * nt)).sqrt() / denom;
    ((centre - half).max(0.0).min(p), (centre + half).min(1.0).max(p))
}

/// Per-case success flags, in trial order.
pub fn recovery_outcomes<R: Recoverer + ?Sized>(recoverer: &R, trials: &TrialSet) -> Result<Vec<bool>> {
    trials
        .cases
        .par_iter()
        .map(|(x, u)| Ok(recoverer.recover(u)?.values == x.values()))
        .collect()
}

/// Fraction of cases where the estimate equals the true signal exactly.
pub fn evaluate_recovery_rate<R: Recoverer + ?Sized>(recoverer: &R, trials: &TrialSet) -> Result<RecoveryStats> {
    let outcomes = recovery_outcomes(recoverer, trials)?;
    Ok(RecoveryStats::from_counts(
        outcomes.iter().filter(|&&ok| ok).count(),
        outcomes.len(),
    ))
}

/// Draws a fresh trial set and evaluates on it.
pub fn evaluate_fresh<R: Recoverer + ?Sized>(
    recoverer: &R,
    a: &SensingMatrix,
    k: usize,
    trials: usize,
    seed: RngSeed,
) -> Result<RecoveryStats> {
    if trials == 0 {
        return Err(crate::Error::invalid("trials must be at least 1"));
    }
    evaluate_recovery_rate(recoverer, &TrialSet::generate(a, k, trials, seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::sample_sensing_matrix;
    use std::collections::HashMap;

    struct LookupOracle(HashMap<BinaryObservation, BinaryEstimate>);

    impl Recoverer for LookupOracle {
        fn recover(&self, u: &BinaryObservation) -> Result<BinaryEstimate> {
            Ok(self.0[u].clone())
        }
    }

    struct AllZeros(usize);

    impl Recoverer for AllZeros {
        fn recover(&self, _: &BinaryObservation) -> Result<BinaryEstimate> {
            Ok(BinaryEstimate { values: vec![0; self.0] })
        }
    }

    #[test]
    fn oracle_and_zero_recoverers() {
        let a = sample_sensing_matrix(40, 32, &mut RngSeed(1).rng()).unwrap();
        let trials = TrialSet::generate(&a, 2, 50, RngSeed(2)).unwrap();
        let oracle = LookupOracle(
            trials
                .cases
                .iter()
                .map(|(x, u)| (u.clone(), BinaryEstimate { values: x.values().to_vec() }))
                .collect(),
        );
        // With m = 40 distinct signals collide only if their observations do.
        let stats = evaluate_recovery_rate(&oracle, &trials).unwrap();
        assert_eq!(stats.rate, 1.0);
        let stats = evaluate_recovery_rate(&AllZeros(32), &trials).unwrap();
        assert_eq!(stats.rate, 0.0);
        assert!(stats.wilson_low == 0.0 && stats.wilson_high > 0.0);
    }

    #[test]
    fn trial_sets_are_reproducible() {
        let a = sample_sensing_matrix(10, 20, &mut RngSeed(1).rng()).unwrap();
        let t1 = TrialSet::generate(&a, 3, 30, RngSeed(9)).unwrap();
        let t2 = TrialSet::generate(&a, 3, 30, RngSeed(9)).unwrap();
        assert_eq!(t1, t2);
        assert!(evaluate_fresh(&AllZeros(20), &a, 3, 0, RngSeed(9)).is_err());
    }

    #[test]
    fn wilson_contains_rate() {
        for (s, t) in [(0, 10), (10, 10), (3, 10), (250, 500), (1, 1)] {
            let st = RecoveryStats::from_counts(s, t);
            assert!(st.wilson_low <= st.rate && st.rate <= st.wilson_high);
            assert!(st.wilson_low >= 0.0 && st.wilson_high <= 1.0);
        }
        // Reference value: 5/10 at 95% gives [0.2366, 0.7634].
        let (lo, hi) = wilson_interval(5, 10, WILSON_Z95);
        assert!((lo - 0.236_593).abs() < 1e-5 && (hi - 0.763_407).abs() < 1e-5);
    }
}
