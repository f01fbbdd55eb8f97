//! Signals, sensing matrices, the one-bit observation operator and the seeded
//! samplers shared by training and benchmarking.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Random stream used everywhere in the crate.
pub type SeededRng = ChaCha8Rng;

/// A 64-bit seed. Child seeds are derived by index so that parallel workers
/// never share a stream and results do not depend on scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> SeededRng {
        SeededRng::seed_from_u64(self.0)
    }

    pub fn derive(self, path: &[u64]) -> RngSeed {
        RngSeed(derive_seed(self.0, path))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a master seed together with a path of indices into a child seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &idx| {
        splitmix64(acc ^ splitmix64(idx.wrapping_add(0xD6E8_FEB8_6659_FD93)))
    })
}

/// One-bit quantizer: `-1` for `a <= 0`, `+1` for `a > 0`.
///
/// Panics on non-finite input.
#[inline]
pub fn sign(a: f64) -> i8 {
    assert!(a.is_finite(), "sign of non-finite value {a}");
    if a > 0.0 {
        1
    } else {
        -1
    }
}

/// Binary vector of length `n` with exactly `k` ones.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SparseSignal {
    values: Vec<u8>,
    k: usize,
}

impl SparseSignal {
    /// Validates a 0/1 vector; the weight must satisfy `1 <= k < n`.
    pub fn new(values: Vec<u8>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|&&v| v > 1) {
            return Err(Error::invalid(format!("signal entry {bad} is not binary")));
        }
        let n = values.len();
        let k = values.iter().filter(|&&v| v == 1).count();
        if k == 0 || k >= n {
            return Err(Error::invalid(format!("signal weight k={k} must satisfy 1 <= k < n={n}")));
        }
        Ok(Self { values, k })
    }

    pub fn from_support(n: usize, support: &[usize]) -> Result<Self> {
        let mut values = vec![0u8; n];
        for &j in support {
            if j >= n {
                return Err(Error::invalid(format!("support index {j} out of range for n={n}")));
            }
            if values[j] == 1 {
                return Err(Error::invalid(format!("support index {j} repeated")));
            }
            values[j] = 1;
        }
        Self::new(values)
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Indices of the ones, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(j, &v)| (v == 1).then_some(j))
            .collect()
    }
}

const MATRIX_MAGIC: &[u8; 4] = b"OBSM";
const MATRIX_VERSION: u32 = 1;
const MATRIX_HEADER_LEN: usize = 4 + 4 + 8 + 8;

/// Real `m × n` matrix relating signal to observation.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    entries: Array2<f64>,
}

impl SensingMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (m, n) = entries.dim();
        if m == 0 || n == 0 {
            return Err(Error::invalid(format!("sensing matrix must be non-empty, got {m}x{n}")));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sensing matrix has non-finite entries"));
        }
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("ragged sensing matrix rows"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let entries = Array2::from_shape_vec((m, n), flat)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Self::new(entries)
    }

    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n(&self) -> usize {
        self.entries.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.entries.row(i)
    }

    /// Little-endian binary encoding: magic `OBSM`, `u32` version, `u64` m
    /// and n, then the entries row-major as `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(MATRIX_HEADER_LEN + 8 * self.entries.len());
        out.extend_from_slice(MATRIX_MAGIC);
        out.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.m() as u64).to_le_bytes());
        out.extend_from_slice(&(self.n() as u64).to_le_bytes());
        for v in self.entries.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MATRIX_HEADER_LEN {
            return Err(Error::Truncated {
                expected: MATRIX_HEADER_LEN,
                actual: bytes.len(),
            });
        }
        if &bytes[..4] != MATRIX_MAGIC {
            return Err(Error::MalformedFile("bad sensing matrix magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != MATRIX_VERSION {
            return Err(Error::MalformedFile(format!("unsupported matrix version {version}")));
        }
        let m = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let n = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let total = usize::try_from(m)
            .ok()
            .zip(usize::try_from(n).ok())
            .and_then(|(m, n)| m.checked_mul(n)?.checked_mul(8)?.checked_add(MATRIX_HEADER_LEN));
        let Some(total) = total.filter(|_| m > 0 && n > 0) else {
            return Err(Error::HeaderDimensions(format!("invalid matrix dimensions {m}x{n}")));
        };
        if bytes.len() < total {
            return Err(Error::Truncated {
                expected: total,
                actual: bytes.len(),
            });
        }
        if bytes.len() > total {
            return Err(Error::HeaderDimensions(format!("{} trailing bytes", bytes.len() - total)));
        }
        let flat: Vec<f64> = bytes[MATRIX_HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { tensor: "A" });
        }
        Self::new(Array2::from_shape_vec((m as usize, n as usize), flat).expect("length checked"))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// `sign(A z)` for an arbitrary 0/1 vector `z`, including the all-zero
    /// vector.
    pub fn observe_binary(&self, z: &[u8]) -> Result<BinaryObservation> {
        if z.len() != self.n() {
            return Err(Error::DimensionMismatch {
                what: "signal length vs sensing matrix columns",
                expected: self.n(),
                actual: z.len(),
            });
        }
        let values = self
            .entries
            .rows()
            .into_iter()
            .map(|row| sign(binary_row_sum(row, z)))
            .collect();
        Ok(BinaryObservation { values })
    }
}

/// `Σ_j a_j z_j` for binary `z`, accumulated in ascending column order.
///
/// Observation and feasibility checks both go through this function so that
/// they agree bit for bit on the sign of every row.
pub fn binary_row_sum(row: ArrayView1<'_, f64>, z: &[u8]) -> f64 {
    let mut acc = 0.0;
    for (a, &zj) in row.iter().zip(z) {
        if zj == 1 {
            acc += a;
        }
    }
    acc
}

/// `u = sign(Ax)`.
pub fn observe(a: &SensingMatrix, x: &SparseSignal) -> Result<BinaryObservation> {
    a.observe_binary(x.values())
}

/// Vector in `{+1,-1}^m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryObservation {
    values: Vec<i8>,
}

impl BinaryObservation {
    pub fn new(values: Vec<i8>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("observation must be non-empty"));
        }
        if let Some(bad) = values.iter().find(|&&v| v != 1 && v != -1) {
            return Err(Error::invalid(format!("observation entry {bad} is not +1/-1")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Parses `+1`/`-1` tokens separated by whitespace or commas.
    pub fn parse(text: &str) -> Result<Self> {
        let values = text
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| match t {
                "1" | "+1" => Ok(1),
                "-1" => Ok(-1),
                other => Err(Error::invalid(format!("observation token `{other}` is not +1/-1"))),
            })
            .collect::<Result<Vec<i8>>>()?;
        Self::new(values)
    }

    pub fn to_text(&self) -> String {
        let tokens: Vec<String> = self.values.iter().map(|v| format!("{v:+}")).collect();
        tokens.join(" ")
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }
}

/// Uniformly random `k`-subset support via a partial Fisher–Yates shuffle.
pub fn sample_sparse_signal<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<SparseSignal> {
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("sparsity k={k} must satisfy 1 <= k < n={n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let mut values = vec![0u8; n];
    for &j in &idx[..k] {
        values[j] = 1;
    }
    Ok(SparseSignal { values, k })
}

/// `m × n` matrix with i.i.d. standard normal entries.
pub fn sample_sensing_matrix<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Result<SensingMatrix> {
    if m == 0 || n == 0 {
        return Err(Error::invalid(format!("sensing matrix dimensions must be positive, got {m}x{n}")));
    }
    let flat: Vec<f64> = (0..m * n).map(|_| rng.sample(StandardNormal)).collect();
    SensingMatrix::new(Array2::from_shape_vec((m, n), flat).expect("shape matches length"))
}
