//! Exact recovery by finding a weight-`k` binary `z` consistent with every
//! sign constraint:
//!
//! ```text
//! Σ_j z_j = k
//! Σ_j A_ij z_j > 0   where u_i = +1
//! Σ_j A_ij z_j <= 0  where u_i = -1
//! ```
//!
//! [`recover_exhaustive`] enumerates supports in lexicographic order and is
//! the reference; [`BranchAndBound`] searches include/exclude decisions with
//! cardinality and row-interval pruning.

use crate::error::{Error, Result};
use crate::net::BinaryEstimate;
use crate::signal::{binary_row_sum, BinaryObservation, SensingMatrix};
use crate::training::Recoverer;

/// Largest `C(n,k)` the exhaustive solver accepts.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, Copy)]
pub struct FeasibilityInstance<'a> {
    pub a: &'a SensingMatrix,
    pub u: &'a BinaryObservation,
    pub k: usize,
}

impl<'a> FeasibilityInstance<'a> {
    pub fn new(a: &'a SensingMatrix, u: &'a BinaryObservation, k: usize) -> Result<Self> {
        if u.len() != a.m() {
            return Err(Error::DimensionMismatch {
                what: "observation length vs sensing matrix rows",
                expected: a.m(),
                actual: u.len(),
            });
        }
        if k == 0 || k >= a.n() {
            return Err(Error::invalid(format!("k={k} must satisfy 1 <= k < n={}", a.n())));
        }
        Ok(Self { a, u, k })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecoveryStatus {
    Found(Vec<u8>),
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveryOutcome {
    pub status: RecoveryStatus,
    pub nodes_explored: u64,
}

impl RecoveryOutcome {
    pub fn solution(&self) -> Option<&[u8]> {
        match &self.status {
            RecoveryStatus::Found(z) => Some(z),
            RecoveryStatus::Infeasible => None,
        }
    }

    pub fn is_found(&self) -> bool {
        matches!(self.status, RecoveryStatus::Found(_))
    }

    /// The solution, or all zeros when infeasible.
    pub fn into_estimate(self, n: usize) -> BinaryEstimate {
        match self.status {
            RecoveryStatus::Found(values) => BinaryEstimate { values },
            RecoveryStatus::Infeasible => BinaryEstimate { values: vec![0; n] },
        }
    }
}

#[inline]
fn row_satisfied(sum: f64, u: i8) -> bool {
    if u > 0 {
        sum > 0.0
    } else {
        sum <= 0.0
    }
}

/// True iff `z` has weight `k` and satisfies every row constraint.
/// Dimension mismatches are reported as infeasible.
pub fn check_feasible(a: &SensingMatrix, u: &BinaryObservation, z: &[u8], k: usize) -> bool {
    if z.len() != a.n() || u.len() != a.m() || z.iter().any(|&v| v > 1) {
        return false;
    }
    if z.iter().filter(|&&v| v == 1).count() != k {
        return false;
    }
    u.values()
        .iter()
        .enumerate()
        .all(|(i, &ui)| row_satisfied(binary_row_sum(a.row(i), z), ui))
}

/// `C(n, k)` without overflow for the sizes used here.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Number of nodes in the include/exclude tree over `n` variables when only
/// prefixes that can still reach weight `k` are kept. Any pruned search
/// explores at most this many nodes.
pub fn search_tree_size(n: usize, k: usize) -> u128 {
    (0..=n)
        .map(|depth| {
            let lo = k.saturating_sub(n - depth);
            (lo..=k.min(depth)).map(|c| binomial(depth, c)).sum::<u128>()
        })
        .sum()
}

/// Advances `idx` to the next `k`-combination of `0..n` in lexicographic
/// order; false when exhausted.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
        return false;
    };
    idx[i] += 1;
    for j in i + 1..k {
        idx[j] = idx[j - 1] + 1;
    }
    true
}

/// Tries every support in lexicographic order and returns the first
/// feasible one.
pub fn recover_exhaustive(inst: &FeasibilityInstance<'_>) -> Result<RecoveryOutcome> {
    let (n, k) = (inst.a.n(), inst.k);
    let count = binomial(n, k);
    if count > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            n,
            k,
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut z = vec![0u8; n];
    let mut nodes = 0u64;
    loop {
        nodes += 1;
        idx.iter().for_each(|&j| z[j] = 1);
        if check_feasible(inst.a, inst.u, &z, k) {
            return Ok(RecoveryOutcome {
                status: RecoveryStatus::Found(z),
                nodes_explored: nodes,
            });
        }
        idx.iter().for_each(|&j| z[j] = 0);
        if !next_combination(&mut idx, n) {
            return Ok(RecoveryOutcome {
                status: RecoveryStatus::Infeasible,
                nodes_explored: nodes,
            });
        }
    }
}

/// Exhaustive solver bound to one sensing matrix.
#[derive(Debug, Clone)]
pub struct Exhaustive {
    pub a: SensingMatrix,
    pub k: usize,
}

impl Recoverer for Exhaustive {
    fn recover(&self, u: &BinaryObservation) -> Result<BinaryEstimate> {
        let inst = FeasibilityInstance::new(&self.a, u, self.k)?;
        Ok(recover_exhaustive(&inst)?.into_estimate(self.a.n()))
    }
}

/// Order in which branch-and-bound fixes variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BranchOrder {
    /// Descending `Σ_i |A_ij|`, ties by index.
    #[default]
    ColumnInfluence,
    /// Ascending index. With include-first branching this returns the
    /// lexicographically first feasible support, same as the exhaustive
    /// solver.
    Index,
}

/// Depth-first include/exclude search with two prunes:
///
/// - cardinality: the undecided variables cannot complete the weight to `k`;
/// - row bounds: for some row, the largest (smallest) sum reachable by adding
///   the remaining `r` ones cannot be positive (non-positive) as `u` demands.
///
/// The per-row bound tables depend only on `A`, `k` and the branch order, so
/// they are built once and reused across observations. Pruning keeps a small
/// margin for rounding and leaves are decided by [`check_feasible`], so the
/// solver's answers agree exactly with the exhaustive one.
#[derive(Debug, Clone)]
pub struct BranchAndBound {
    a: SensingMatrix,
    k: usize,
    order: Vec<usize>,
    /// `columns[p]` is column `order[p]` of `A`.
    columns: Vec<Vec<f64>>,
    /// `(p, i, r)` → sum of the `r` largest `A_{i, order[q]}`, `q >= p`.
    top: Vec<f64>,
    /// Same for the `r` smallest.
    bottom: Vec<f64>,
    slack: Vec<f64>,
}

impl BranchAndBound {
    pub fn new(a: SensingMatrix, k: usize, branch_order: BranchOrder) -> Result<Self> {
        let (m, n) = (a.m(), a.n());
        if k == 0 || k >= n {
            return Err(Error::invalid(format!("k={k} must satisfy 1 <= k < n={n}")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        if branch_order == BranchOrder::ColumnInfluence {
            let weight: Vec<f64> = (0..n).map(|j| a.view().column(j).iter().map(|v| v.abs()).sum()).collect();
            order.sort_by(|&x, &y| weight[y].total_cmp(&weight[x]).then(x.cmp(&y)));
        }
        let columns: Vec<Vec<f64>> = order.iter().map(|&j| a.view().column(j).to_vec()).collect();
        let slack: Vec<f64> = (0..m)
            .map(|i| 1e-12 * (1.0 + a.row(i).iter().map(|v| v.abs()).sum::<f64>()))
            .collect();

        let width = k + 1;
        let mut top = vec![0.0; (n + 1) * m * width];
        let mut bottom = vec![0.0; (n + 1) * m * width];
        // Per row, the k largest (descending) and k smallest (ascending)
        // values seen so far while sweeping the suffix from the back.
        let mut best: Vec<Vec<f64>> = vec![Vec::with_capacity(k + 1); m];
        let mut worst: Vec<Vec<f64>> = vec![Vec::with_capacity(k + 1); m];
        for p in (0..=n).rev() {
            if p < n {
                for i in 0..m {
                    let v = columns[p][i];
                    let pos = best[i].partition_point(|&b| b >= v);
                    best[i].insert(pos, v);
                    best[i].truncate(k);
                    let pos = worst[i].partition_point(|&b| b <= v);
                    worst[i].insert(pos, v);
                    worst[i].truncate(k);
                }
            }
            for i in 0..m {
                let base = (p * m + i) * width;
                for r in 1..=k {
                    let avail = r.min(best[i].len());
                    top[base + r] = best[i][..avail].iter().sum();
                    bottom[base + r] = worst[i][..avail].iter().sum();
                }
            }
        }
        Ok(Self {
            a,
            k,
            order,
            columns,
            top,
            bottom,
            slack,
        })
    }

    pub fn matrix(&self) -> &SensingMatrix {
        &self.a
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn solve(&self, u: &BinaryObservation) -> Result<RecoveryOutcome> {
        FeasibilityInstance::new(&self.a, u, self.k)?;
        let (m, k) = (self.a.m(), self.k);
        let mut search = Search {
            bb: self,
            u,
            sums: vec![0.0; (k + 1) * m],
            chosen: Vec::with_capacity(k),
            z: vec![0; self.a.n()],
            nodes: 0,
        };
        let found = search.visit(0);
        Ok(RecoveryOutcome {
            status: if found {
                RecoveryStatus::Found(search.z)
            } else {
                RecoveryStatus::Infeasible
            },
            nodes_explored: search.nodes,
        })
    }
}

struct Search<'a> {
    bb: &'a BranchAndBound,
    u: &'a BinaryObservation,
    /// Row sums of the chosen columns, one block of `m` per chosen count so
    /// backtracking never subtracts.
    sums: Vec<f64>,
    chosen: Vec<usize>,
    z: Vec<u8>,
    nodes: u64,
}

impl Search<'_> {
    fn visit(&mut self, p: usize) -> bool {
        self.nodes += 1;
        let bb = self.bb;
        let (m, n, k) = (bb.a.m(), bb.a.n(), bb.k);
        let c = self.chosen.len();
        let r = k - c;
        if r > n - p {
            return false;
        }
        if r == 0 {
            self.chosen.iter().for_each(|&q| self.z[bb.order[q]] = 1);
            if check_feasible(&bb.a, self.u, &self.z, k) {
                return true;
            }
            self.chosen.iter().for_each(|&q| self.z[bb.order[q]] = 0);
            return false;
        }
        let width = k + 1;
        let sums = &self.sums[c * m..(c + 1) * m];
        let pruned = self.u.values().iter().enumerate().any(|(i, &ui)| {
            let idx = (p * m + i) * width + r;
            if ui > 0 {
                sums[i] + bb.top[idx] <= -bb.slack[i]
            } else {
                sums[i] + bb.bottom[idx] > bb.slack[i]
            }
        });
        if pruned {
            return false;
        }

        let (head, tail) = self.sums.split_at_mut((c + 1) * m);
        let current = &head[c * m..];
        for ((next, s), v) in tail[..m].iter_mut().zip(current).zip(&bb.columns[p]) {
            *next = s + v;
        }
        self.chosen.push(p);
        if self.visit(p + 1) {
            return true;
        }
        self.chosen.pop();
        self.visit(p + 1)
    }
}

impl Recoverer for BranchAndBound {
    fn recover(&self, u: &BinaryObservation) -> Result<BinaryEstimate> {
        Ok(self.solve(u)?.into_estimate(self.a.n()))
    }
}

/// One-off branch-and-bound solve with the default branch order.
pub fn recover_bnb(inst: &FeasibilityInstance<'_>) -> Result<RecoveryOutcome> {
    BranchAndBound::new(inst.a.clone(), inst.k, BranchOrder::default())?.solve(inst.u)
}
