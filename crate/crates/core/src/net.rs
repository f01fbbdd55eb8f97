//! The 3-layer sigmoid recovery network.
//!
//! `h = σ(W_h u + b_h)`, `y = σ(W_o h + b_o)`, `x̂ = round(y)`.
//! Weight matrices are stored as `(output dim × input dim)` maps, so
//! `W_h` is `α × m` and `W_o` is `n × α`.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::signal::BinaryObservation;

/// Variance of the initial weight distribution.
pub const INIT_WEIGHT_VARIANCE: f64 = 0.05;

const MODEL_MAGIC: &[u8; 4] = b"OBNN";
const MODEL_VERSION: u32 = 1;
const MODEL_HEADER_LEN: usize = 4 + 4 + 8 * 4;

/// Largest double strictly below 1.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function, evaluated without overflowing `exp`.
///
/// The result is clamped to `[f64::MIN_POSITIVE, 1 - 2^-53]` so that it stays
/// inside the open unit interval even where the exact value rounds to 0 or 1.
#[inline]
pub fn sigmoid(a: f64) -> f64 {
    let s = if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, BELOW_ONE)
}

pub fn sigmoid_vec(a: &[f64]) -> Vec<f64> {
    a.iter().map(|&v| sigmoid(v)).collect()
}

/// Network output `y ∈ (0,1)^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftOutput {
    pub values: Vec<f64>,
}

/// Rounded network output in `{0,1}^n`; not necessarily `k`-sparse.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryEstimate {
    pub values: Vec<u8>,
}

impl BinaryEstimate {
    pub fn weight(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }
}

/// Nearest-integer rounding; exactly `0.5` rounds up to 1.
pub fn round_output(y: &SoftOutput) -> BinaryEstimate {
    BinaryEstimate {
        values: y.values.iter().map(|&v| u8::from(v >= 0.5)).collect(),
    }
}

/// Multiply-add and activation counts from [`NetParams::forward_counted`].
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpCount {
    pub mul_adds: u64,
    pub activations: u64,
}

/// Weights and biases of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    /// `α × m`
    pub w_hidden: Array2<f64>,
    pub b_hidden: Array1<f64>,
    /// `n × α`
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
    /// Seed the parameters were initialised and trained from; provenance only.
    pub seed: u64,
}

impl NetParams {
    pub fn from_parts(
        w_hidden: Array2<f64>,
        b_hidden: Array1<f64>,
        w_out: Array2<f64>,
        b_out: Array1<f64>,
        seed: u64,
    ) -> Result<Self> {
        let (alpha, m) = w_hidden.dim();
        let (n, alpha_out) = w_out.dim();
        if m == 0 || n == 0 || alpha == 0 {
            return Err(Error::invalid(format!("network dimensions must be positive (m={m}, n={n}, alpha={alpha})")));
        }
        let check = |what, expected, actual| {
            if expected == actual {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { what, expected, actual })
            }
        };
        check("hidden bias length", alpha, b_hidden.len())?;
        check("output weight columns", alpha, alpha_out)?;
        check("output bias length", n, b_out.len())?;
        let p = Self {
            w_hidden: w_hidden.as_standard_layout().into_owned(),
            b_hidden,
            w_out: w_out.as_standard_layout().into_owned(),
            b_out,
            seed,
        };
        if let Some(tensor) = p.first_non_finite() {
            return Err(Error::invalid(format!("non-finite value in {tensor}")));
        }
        Ok(p)
    }

    /// All-zero parameters; every output is exactly 0.5.
    pub fn zeros(m: usize, n: usize, alpha: usize) -> Result<Self> {
        Self::from_parts(
            Array2::zeros((alpha, m)),
            Array1::zeros(alpha),
            Array2::zeros((n, alpha)),
            Array1::zeros(n),
            0,
        )
    }

    /// Gaussian `N(0, 0.05)` weights and zero biases.
    pub fn init<R: Rng + ?Sized>(m: usize, n: usize, alpha: usize, rng: &mut R) -> Result<Self> {
        if m == 0 || n == 0 || alpha == 0 {
            return Err(Error::invalid(format!("network dimensions must be positive (m={m}, n={n}, alpha={alpha})")));
        }
        let normal = Normal::new(0.0, INIT_WEIGHT_VARIANCE.sqrt()).expect("valid std-dev");
        let w_hidden = Array2::from_shape_simple_fn((alpha, m), || normal.sample(rng));
        let w_out = Array2::from_shape_simple_fn((n, alpha), || normal.sample(rng));
        Ok(Self {
            w_hidden,
            b_hidden: Array1::zeros(alpha),
            w_out,
            b_out: Array1::zeros(n),
            seed: 0,
        })
    }

    pub fn m(&self) -> usize {
        self.w_hidden.ncols()
    }

    pub fn n(&self) -> usize {
        self.w_out.nrows()
    }

    pub fn alpha(&self) -> usize {
        self.w_hidden.nrows()
    }

    /// `(m, n, α)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.m(), self.n(), self.alpha())
    }

    pub fn num_params(&self) -> usize {
        let (m, n, a) = self.dims();
        a * m + a + n * a + n
    }

    pub(crate) fn tensors(&self) -> [(&'static str, &[f64]); 4] {
        [
            ("W_h", self.w_hidden.as_slice().expect("standard layout")),
            ("b_h", self.b_hidden.as_slice().expect("standard layout")),
            ("W_o", self.w_out.as_slice().expect("standard layout")),
            ("b_o", self.b_out.as_slice().expect("standard layout")),
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w_hidden.as_slice_mut().expect("standard layout"),
            self.b_hidden.as_slice_mut().expect("standard layout"),
            self.w_out.as_slice_mut().expect("standard layout"),
            self.b_out.as_slice_mut().expect("standard layout"),
        ]
    }

    fn first_non_finite(&self) -> Option<&'static str> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| t.iter().any(|v| !v.is_finite()))
            .map(|(name, _)| name)
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.m() {
            return Err(Error::DimensionMismatch {
                what: "observation length vs network inputs",
                expected: self.m(),
                actual: len,
            });
        }
        Ok(())
    }

    pub fn forward(&self, u: &BinaryObservation) -> Result<SoftOutput> {
        self.check_input(u.len())?;
        let u = Array1::from(u.to_f64());
        let mut h = self.w_hidden.dot(&u) + &self.b_hidden;
        h.mapv_inplace(sigmoid);
        let mut y = self.w_out.dot(&h) + &self.b_out;
        y.mapv_inplace(sigmoid);
        Ok(SoftOutput { values: y.to_vec() })
    }

    /// `round(forward(u))`
    pub fn predict(&self, u: &BinaryObservation) -> Result<BinaryEstimate> {
        Ok(round_output(&self.forward(u)?))
    }

    /// Row-wise forward pass over a `T × m` input block, returning the
    /// hidden activations (`T × α`) and outputs (`T × n`).
    pub fn forward_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        self.check_input(inputs.ncols())?;
        let mut h = inputs.dot(&self.w_hidden.t());
        h += &self.b_hidden.view().insert_axis(Axis(0));
        h.mapv_inplace(sigmoid);
        let mut y = h.dot(&self.w_out.t());
        y += &self.b_out.view().insert_axis(Axis(0));
        y.mapv_inplace(sigmoid);
        Ok((h, y))
    }

    /// Scalar-loop forward pass that tallies its arithmetic.
    pub fn forward_counted(&self, u: &BinaryObservation, ops: &mut OpCount) -> Result<SoftOutput> {
        self.check_input(u.len())?;
        let u = u.to_f64();
        let mut h = vec![0.0; self.alpha()];
        for (a, hv) in h.iter_mut().enumerate() {
            let mut acc = self.b_hidden[a];
            for (w, x) in self.w_hidden.row(a).iter().zip(&u) {
                acc += w * x;
                ops.mul_adds += 1;
            }
            *hv = sigmoid(acc);
            ops.activations += 1;
        }
        let mut y = vec![0.0; self.n()];
        for (j, yv) in y.iter_mut().enumerate() {
            let mut acc = self.b_out[j];
            for (w, x) in self.w_out.row(j).iter().zip(&h) {
                acc += w * x;
                ops.mul_adds += 1;
            }
            *yv = sigmoid(acc);
            ops.activations += 1;
        }
        Ok(SoftOutput { values: y })
    }

    /// Serialized length in bytes.
    pub fn encoded_len(&self) -> usize {
        MODEL_HEADER_LEN + 8 * self.num_params()
    }

    /// Little-endian binary encoding: magic `OBNN`, `u32` version, `u64`
    /// m, n, α and seed, then `f64` values of W_h, b_h, W_o, b_o in
    /// row-major order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        for d in [self.m(), self.n(), self.alpha()] {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.seed.to_le_bytes());
        for (_, t) in self.tensors() {
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Decodes one model from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn decode_prefix(bytes: &[u8]) -> Result<(Self, usize)> {
        if bytes.len() < MODEL_HEADER_LEN {
            return Err(Error::Truncated {
                expected: MODEL_HEADER_LEN,
                actual: bytes.len(),
            });
        }
        if &bytes[..4] != MODEL_MAGIC {
            return Err(Error::MalformedFile("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(Error::MalformedFile(format!("unsupported version {version}")));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap());
        let (m, n, alpha, seed) = (word(0), word(1), word(2), word(3));
        if m == 0 || n == 0 || alpha == 0 {
            return Err(Error::HeaderDimensions(format!("zero dimension (m={m}, n={n}, alpha={alpha})")));
        }
        let count = (|| {
            let (m, n, a) = (usize::try_from(m).ok()?, usize::try_from(n).ok()?, usize::try_from(alpha).ok()?);
            let c = a.checked_mul(m)?.checked_add(a)?.checked_add(n.checked_mul(a)?)?.checked_add(n)?;
            c.checked_mul(8)?.checked_add(MODEL_HEADER_LEN).map(|total| (m, n, a, total))
        })();
        let Some((m, n, alpha, total)) = count else {
            return Err(Error::HeaderDimensions(format!("dimensions overflow (m={m}, n={n}, alpha={alpha})")));
        };
        if bytes.len() < total {
            return Err(Error::Truncated {
                expected: total,
                actual: bytes.len(),
            });
        }
        let mut cursor = MODEL_HEADER_LEN;
        let mut take = |len: usize| {
            let v: Vec<f64> = bytes[cursor..cursor + 8 * len]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            cursor += 8 * len;
            v
        };
        let w_hidden = Array2::from_shape_vec((alpha, m), take(alpha * m)).unwrap();
        let b_hidden = Array1::from(take(alpha));
        let w_out = Array2::from_shape_vec((n, alpha), take(n * alpha)).unwrap();
        let b_out = Array1::from(take(n));
        let p = Self {
            w_hidden,
            b_hidden,
            w_out,
            b_out,
            seed,
        };
        if let Some(tensor) = p.first_non_finite() {
            return Err(Error::NonFiniteValue { tensor });
        }
        Ok((p, total))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (p, used) = Self::decode_prefix(bytes)?;
        if used != bytes.len() {
            return Err(Error::HeaderDimensions(format!(
                "header describes {used} bytes but file has {}",
                bytes.len()
            )));
        }
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        if let Some(tensor) = self.first_non_finite() {
            return Err(Error::NonFiniteValue { tensor });
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
