//! Test-only oracles, written with plain loops and independent of the
//! library's batched forward and backward passes.

#![allow(dead_code, clippy::needless_range_loop)]

use ndarray::{Array1, Array2};
use onebit::signal::{sample_sensing_matrix, sample_sparse_signal, RngSeed};
use onebit::training::{L1Scale, Minibatch};
use onebit::NetParams;
use rand::Rng;
use rand_distr::StandardNormal;

fn logistic(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

/// Direct scalar evaluation of the minibatch loss.
pub fn reference_loss(p: &NetParams, batch: &Minibatch, lambda: f64, scale: L1Scale) -> f64 {
    let (m, n, alpha) = p.dims();
    let t = batch.len();
    let mut cross = 0.0;
    let mut l1 = 0.0;
    for i in 0..t {
        let mut h = vec![0.0; alpha];
        for a in 0..alpha {
            let mut z = p.b_hidden[a];
            for c in 0..m {
                z += p.w_hidden[[a, c]] * batch.inputs[[i, c]];
            }
            h[a] = logistic(z);
        }
        for j in 0..n {
            let mut z = p.b_out[j];
            for a in 0..alpha {
                z += p.w_out[[j, a]] * h[a];
            }
            let y = logistic(z).clamp(1e-12, 1.0 - 1e-12);
            cross -= batch.targets[[i, j]] * y.ln();
            l1 += y;
        }
    }
    let l1_factor = match scale {
        L1Scale::PerSample => 1.0 / t as f64,
        L1Scale::PerEntry => 1.0 / (n * t) as f64,
    };
    cross / (n * t) as f64 + lambda * l1_factor * l1
}

/// Central differences of [`reference_loss`] for every parameter, in the
/// order W_h, b_h, W_o, b_o (row-major).
pub fn finite_difference_gradient(p: &NetParams, batch: &Minibatch, lambda: f64, scale: L1Scale, h: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut probe = p.clone();
    let eval = |probe: &NetParams| reference_loss(probe, batch, lambda, scale);
    macro_rules! sweep {
        ($field:ident) => {
            let len = probe.$field.len();
            for idx in 0..len {
                let orig = probe.$field.as_slice().unwrap()[idx];
                probe.$field.as_slice_mut().unwrap()[idx] = orig + h;
                let plus = eval(&probe);
                probe.$field.as_slice_mut().unwrap()[idx] = orig - h;
                let minus = eval(&probe);
                probe.$field.as_slice_mut().unwrap()[idx] = orig;
                out.push((plus - minus) / (2.0 * h));
            }
        };
    }
    sweep!(w_hidden);
    sweep!(b_hidden);
    sweep!(w_out);
    sweep!(b_out);
    out
}

/// `|a - b| / max(|a|, |b|, floor)`; the floor keeps near-zero coordinates
/// from dominating through round-off in the differences.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Random network with unit-variance weights and biases plus a consistent
/// minibatch. Dimensions are drawn from `1..=8` (n at least 2), T from `1..=4`.
pub fn random_case(seed: u64) -> (NetParams, Minibatch) {
    let mut rng = RngSeed(seed).rng();
    let n = rng.random_range(2..=8);
    let m = rng.random_range(1..=8);
    let alpha = rng.random_range(1..=8);
    let t = rng.random_range(1..=4);
    let k = rng.random_range(1..n);
    let mut gauss = |rows: usize, cols: usize| {
        Array2::from_shape_simple_fn((rows, cols), || rng.sample::<f64, _>(StandardNormal))
    };
    let w_hidden = gauss(alpha, m);
    let w_out = gauss(n, alpha);
    let b_hidden = Array1::from(gauss(1, alpha).into_raw_vec_and_offset().0);
    let b_out = Array1::from(gauss(1, n).into_raw_vec_and_offset().0);
    let p = NetParams::from_parts(w_hidden, b_hidden, w_out, b_out, seed).unwrap();

    let a = sample_sensing_matrix(m, n, &mut RngSeed(seed).derive(&[1]).rng()).unwrap();
    let mut data_rng = RngSeed(seed).derive(&[2]).rng();
    let pairs: Vec<_> = (0..t)
        .map(|_| {
            let x = sample_sparse_signal(n, k, &mut data_rng).unwrap();
            (onebit::signal::observe(&a, &x).unwrap(), x)
        })
        .collect();
    (p, Minibatch::from_pairs(&pairs).unwrap())
}

/// A random feasibility instance. Even seeds observe a true k-sparse signal
/// (always feasible); odd seeds use an arbitrary sign pattern, which is
/// frequently infeasible.
pub fn random_feasibility_case(seed: u64) -> (onebit::SensingMatrix, onebit::BinaryObservation, usize) {
    let mut rng = RngSeed(seed).rng();
    let n = rng.random_range(4..=24);
    let k = rng.random_range(1..=3usize.min(n - 1));
    let m = rng.random_range(1..=16);
    let a = sample_sensing_matrix(m, n, &mut rng).unwrap();
    let u = if seed.is_multiple_of(2) {
        let x = sample_sparse_signal(n, k, &mut rng).unwrap();
        onebit::signal::observe(&a, &x).unwrap()
    } else {
        onebit::BinaryObservation::new((0..m).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()).unwrap()
    };
    (a, u, k)
}
