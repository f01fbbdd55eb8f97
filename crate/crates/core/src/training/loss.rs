//! Minibatch loss and its exact gradient.
//!
//! For a minibatch of `T` pairs `(u^i, x^i)` with outputs `y^i`:
//!
//! ```text
//! L = -(1/(nT)) Σ_i Σ_j x^i_j log y^i_j  +  λ·c·Σ_i ||y^i||_1
//! ```
//!
//! where `c` is set by [`L1Scale`]. Outputs are clamped to
//! `[LOG_CLAMP, 1 - LOG_CLAMP]` before the log and in the gradient.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};
use crate::net::{NetParams, SoftOutput};
use crate::signal::{observe, sample_sparse_signal, BinaryObservation, SensingMatrix, SparseSignal};

pub const LOG_CLAMP: f64 = 1e-12;

/// Normalisation of the L1 term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum L1Scale {
    /// `λ/T · Σ ||y||_1`: the penalty is averaged over samples only.
    PerSample,
    /// `λ/(nT) · Σ ||y||_1`: averaged over samples and coordinates, the same
    /// normalisation as the cross-entropy term.
    #[default]
    PerEntry,
}

impl L1Scale {
    pub fn factor(self, n: usize, batch: usize) -> f64 {
        match self {
            L1Scale::PerSample => 1.0 / batch as f64,
            L1Scale::PerEntry => 1.0 / (n * batch) as f64,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            L1Scale::PerSample => "per-sample",
            L1Scale::PerEntry => "per-entry",
        }
    }
}

impl std::str::FromStr for L1Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-sample" => Ok(L1Scale::PerSample),
            "per-entry" => Ok(L1Scale::PerEntry),
            other => Err(Error::invalid(format!("unknown L1 scale `{other}` (expected per-sample or per-entry)"))),
        }
    }
}

/// `T` observation/target pairs stored as dense `T × m` and `T × n` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
}

impl Minibatch {
    /// Raw constructor; targets may be any 0/1 matrix, including all zeros.
    pub fn from_arrays(inputs: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(Error::invalid("minibatch must contain at least one sample"));
        }
        if inputs.nrows() != targets.nrows() {
            return Err(Error::DimensionMismatch {
                what: "minibatch targets vs inputs",
                expected: inputs.nrows(),
                actual: targets.nrows(),
            });
        }
        Ok(Self { inputs, targets })
    }

    pub fn from_pairs(pairs: &[(BinaryObservation, SparseSignal)]) -> Result<Self> {
        let Some((u0, x0)) = pairs.first() else {
            return Err(Error::invalid("minibatch must contain at least one sample"));
        };
        let (m, n) = (u0.len(), x0.n());
        let mut inputs = Array2::zeros((pairs.len(), m));
        let mut targets = Array2::zeros((pairs.len(), n));
        for (i, (u, x)) in pairs.iter().enumerate() {
            if u.len() != m || x.n() != n {
                return Err(Error::invalid("minibatch samples have inconsistent lengths"));
            }
            for (dst, &v) in inputs.row_mut(i).iter_mut().zip(u.values()) {
                *dst = f64::from(v);
            }
            for (dst, &v) in targets.row_mut(i).iter_mut().zip(x.values()) {
                *dst = f64::from(v);
            }
        }
        Ok(Self { inputs, targets })
    }

    /// Draws `size` fresh pairs `(sign(Ax), x)` with uniformly random
    /// `k`-sparse `x`.
    pub fn sample<R: Rng + ?Sized>(a: &SensingMatrix, k: usize, size: usize, rng: &mut R) -> Result<Self> {
        let pairs = (0..size)
            .map(|_| {
                let x = sample_sparse_signal(a.n(), k, rng)?;
                Ok((observe(a, &x)?, x))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_pairs(&pairs)
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }
}

/// Parameter-shaped gradient of the minibatch loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w_hidden: Array2<f64>,
    pub b_hidden: Array1<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

impl Gradients {
    pub fn zeros_like(p: &NetParams) -> Self {
        Self {
            w_hidden: Array2::zeros(p.w_hidden.raw_dim()),
            b_hidden: Array1::zeros(p.b_hidden.raw_dim()),
            w_out: Array2::zeros(p.w_out.raw_dim()),
            b_out: Array1::zeros(p.b_out.raw_dim()),
        }
    }

    /// Flat views in the order W_h, b_h, W_o, b_o.
    pub fn tensors(&self) -> [&[f64]; 4] {
        [
            self.w_hidden.as_slice().expect("standard layout"),
            self.b_hidden.as_slice().expect("standard layout"),
            self.w_out.as_slice().expect("standard layout"),
            self.b_out.as_slice().expect("standard layout"),
        ]
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).fold(0.0, |a, v| a.max(v.abs()))
    }
}

fn clamp_output(v: f64) -> f64 {
    v.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP)
}

/// Loss on dense `T × n` output and target blocks.
pub fn batch_loss(outputs: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>, lambda: f64, scale: L1Scale) -> Result<f64> {
    if outputs.dim() != targets.dim() {
        return Err(Error::invalid(format!(
            "outputs {:?} and targets {:?} differ in shape",
            outputs.dim(),
            targets.dim()
        )));
    }
    let (batch, n) = outputs.dim();
    if batch == 0 || n == 0 {
        return Err(Error::invalid("loss needs at least one sample"));
    }
    let mut cross = 0.0;
    let mut l1 = 0.0;
    Zip::from(outputs).and(targets).for_each(|&y, &x| {
        let yc = clamp_output(y);
        if x != 0.0 {
            cross -= x * yc.ln();
        }
        l1 += yc;
    });
    Ok(cross / (n * batch) as f64 + lambda * scale.factor(n, batch) * l1)
}

/// Loss over `T` network outputs and their `k`-sparse targets.
pub fn loss(outputs: &[SoftOutput], targets: &[SparseSignal], lambda: f64, scale: L1Scale) -> Result<f64> {
    if outputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            what: "number of targets vs outputs",
            expected: outputs.len(),
            actual: targets.len(),
        });
    }
    let Some(first) = outputs.first() else {
        return Err(Error::invalid("loss needs at least one sample"));
    };
    let n = first.values.len();
    let mut y = Array2::zeros((outputs.len(), n));
    let mut x = Array2::zeros((outputs.len(), n));
    for (i, (out, target)) in outputs.iter().zip(targets).enumerate() {
        if out.values.len() != n || target.n() != n {
            return Err(Error::DimensionMismatch {
                what: "output/target length",
                expected: n,
                actual: if out.values.len() != n { out.values.len() } else { target.n() },
            });
        }
        y.row_mut(i).assign(&ndarray::aview1(&out.values));
        for (dst, &v) in x.row_mut(i).iter_mut().zip(target.values()) {
            *dst = f64::from(v);
        }
    }
    batch_loss(y.view(), x.view(), lambda, scale)
}

/// Loss and its gradient with respect to every parameter.
pub fn backprop(p: &NetParams, batch: &Minibatch, lambda: f64, scale: L1Scale) -> Result<(f64, Gradients)> {
    let (batch_len, n) = (batch.len(), p.n());
    if batch.targets.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "target length vs network outputs",
            expected: n,
            actual: batch.targets.ncols(),
        });
    }
    let (h, y) = p.forward_batch(batch.inputs.view())?;
    let loss = batch_loss(y.view(), batch.targets.view(), lambda, scale)?;

    let ce = 1.0 / (n * batch_len) as f64;
    let l1 = lambda * scale.factor(n, batch_len);
    // dL/dz at the output pre-activation.
    let mut delta_out = y.clone();
    Zip::from(&mut delta_out).and(&batch.targets).for_each(|d, &x| {
        let yv = *d;
        let dy = -ce * x / clamp_output(yv) + l1;
        *d = dy * yv * (1.0 - yv);
    });
    let g_w_out = delta_out.t().dot(&h);
    let g_b_out = delta_out.sum_axis(Axis(0));

    let mut delta_hidden = delta_out.dot(&p.w_out);
    Zip::from(&mut delta_hidden).and(&h).for_each(|d, &hv| *d *= hv * (1.0 - hv));
    let g_w_hidden = delta_hidden.t().dot(&batch.inputs);
    let g_b_hidden = delta_hidden.sum_axis(Axis(0));

    let grads = Gradients {
        w_hidden: g_w_hidden,
        b_hidden: g_b_hidden,
        w_out: g_w_out,
        b_out: g_b_out,
    };
    if !loss.is_finite() || grads.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
        return Err(Error::Diverged {
            step: 0,
            detail: format!("non-finite loss or gradient (loss = {loss})"),
        });
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::RngSeed;
    use ndarray::array;

    #[test]
    fn loss_literal_example() {
        let y = [SoftOutput { values: vec![0.5, 0.5] }];
        let x = [SparseSignal::new(vec![1, 0]).unwrap()];
        let l = loss(&y, &x, 1.0, L1Scale::PerSample).unwrap();
        assert!((l - 1.346_573_590_279_972_7).abs() < 1e-12, "{l}");
        let l = loss(&y, &x, 1.0, L1Scale::PerEntry).unwrap();
        assert!((l - 0.846_573_590_279_972_7).abs() < 1e-12, "{l}");
    }

    #[test]
    fn loss_vanishes_when_output_matches_target() {
        let x = SparseSignal::from_support(6, &[1, 4]).unwrap();
        let y: Vec<f64> = x.values().iter().map(|&v| if v == 1 { 1.0 - 1e-12 } else { 1e-12 }).collect();
        let l = loss(&[SoftOutput { values: y }], &[x], 0.0, L1Scale::PerSample).unwrap();
        assert!(l.abs() < 1e-11, "{l}");
    }

    #[test]
    fn loss_zero_for_empty_targets_without_penalty() {
        let y = array![[0.3, 0.9, 0.1]];
        let x = Array2::zeros((1, 3));
        assert_eq!(batch_loss(y.view(), x.view(), 0.0, L1Scale::PerSample).unwrap(), 0.0);
    }

    #[test]
    fn loss_rejects_mismatched_batches() {
        let y = [SoftOutput { values: vec![0.5, 0.5] }];
        assert!(loss(&y, &[], 1.0, L1Scale::PerEntry).is_err());
        let x = [SparseSignal::new(vec![1, 0, 0]).unwrap()];
        assert!(loss(&y, &x, 1.0, L1Scale::PerEntry).is_err());
    }

    #[test]
    fn loss_positive_with_penalty() {
        let y = array![[0.2, 0.7], [0.01, 0.5]];
        let x = array![[0.0, 1.0], [1.0, 0.0]];
        for scale in [L1Scale::PerSample, L1Scale::PerEntry] {
            assert!(batch_loss(y.view(), x.view(), 0.95, scale).unwrap() > 0.0);
        }
    }

    #[test]
    fn zero_targets_and_no_penalty_give_zero_gradient() {
        let p = NetParams::init(3, 4, 5, &mut RngSeed(8).rng()).unwrap();
        let inputs = array![[1.0, -1.0, 1.0], [-1.0, -1.0, 1.0]];
        let batch = Minibatch::from_arrays(inputs, Array2::zeros((2, 4))).unwrap();
        let (l, g) = backprop(&p, &batch, 0.0, L1Scale::PerSample).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn duplicated_batch_has_same_loss_and_gradient() {
        let a = crate::signal::sample_sensing_matrix(4, 6, &mut RngSeed(1).rng()).unwrap();
        let p = NetParams::init(4, 6, 5, &mut RngSeed(2).rng()).unwrap();
        let batch = Minibatch::sample(&a, 2, 3, &mut RngSeed(3).rng()).unwrap();
        let doubled = Minibatch::from_arrays(
            ndarray::concatenate(Axis(0), &[batch.inputs.view(), batch.inputs.view()]).unwrap(),
            ndarray::concatenate(Axis(0), &[batch.targets.view(), batch.targets.view()]).unwrap(),
        )
        .unwrap();
        for scale in [L1Scale::PerSample, L1Scale::PerEntry] {
            let (l1, g1) = backprop(&p, &batch, 0.95, scale).unwrap();
            let (l2, g2) = backprop(&p, &doubled, 0.95, scale).unwrap();
            assert!((l1 - l2).abs() < 1e-14);
            for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn backprop_loss_matches_forward_loss() {
        let a = crate::signal::sample_sensing_matrix(5, 7, &mut RngSeed(4).rng()).unwrap();
        let p = NetParams::init(5, 7, 3, &mut RngSeed(5).rng()).unwrap();
        let batch = Minibatch::sample(&a, 2, 4, &mut RngSeed(6).rng()).unwrap();
        let (l, _) = backprop(&p, &batch, 0.95, L1Scale::PerSample).unwrap();
        let outputs: Vec<SoftOutput> = batch
            .inputs
            .rows()
            .into_iter()
            .map(|r| p.forward(&BinaryObservation::new(r.iter().map(|&v| v as i8).collect()).unwrap()).unwrap())
            .collect();
        let targets: Vec<SparseSignal> = batch
            .targets
            .rows()
            .into_iter()
            .map(|r| SparseSignal::new(r.iter().map(|&v| v as u8).collect()).unwrap())
            .collect();
        let direct = loss(&outputs, &targets, 0.95, L1Scale::PerSample).unwrap();
        assert!((l - direct).abs() < 1e-14);
    }

    #[test]
    fn l1_scale_parses() {
        assert_eq!("per-entry".parse::<L1Scale>().unwrap(), L1Scale::PerEntry);
        assert_eq!("per-sample".parse::<L1Scale>().unwrap(), L1Scale::PerSample);
        assert!("both".parse::<L1Scale>().is_err());
    }
}
