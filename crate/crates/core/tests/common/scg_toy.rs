//! Two players, two rounds, binary contributions, enumerable outcomes.
//!
//! Round-1 actions are fixed Bernoulli draws. The designer has two
//! parameters and splits the grown pool by a softmax over
//! `theta0 * c_i + theta1 * c_i / e_i`. Round-2 actions depend on the
//! round-1 payout, so the designer affects them only through the players.
//! The objective is `J = sum_i sigmoid(s (rpay_i - b_i))`.

#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use redist_core::designer::scg_surrogate;
use redist_core::nn::{sigmoid, Graph, Matrix};
use redist_core::rng::stream;

pub const E: [f64; 2] = [1.0, 2.0];
pub const FIRST_LOGIT: [f64; 2] = [0.8, -0.8];
pub const BETA: [f64; 2] = [1.3, -0.8];
pub const GAMMA: [f64; 2] = [0.9, -0.7];
pub const REF: [f64; 2] = [0.4, 0.5];
pub const SLOPE: f64 = 1.4;
pub const GROWTH: f64 = 1.6;
pub const THETA: [f64; 2] = [-0.9, -0.9];

fn payouts(theta: [f64; 2], c: [f64; 2]) -> [f64; 2] {
    let pool = GROWTH * (c[0] + c[1]);
    let s: Vec<f64> = (0..2).map(|i| theta[0] * c[i] + theta[1] * c[i] / E[i]).collect();
    let m = s[0].max(s[1]);
    let z = (s[0] - m).exp() + (s[1] - m).exp();
    [(s[0] - m).exp() / z * pool, (s[1] - m).exp() / z * pool]
}

fn bern(p: f64, c: f64) -> f64 {
    if c == 1.0 {
        p
    } else {
        1.0 - p
    }
}

/// Exact expected objective by enumerating all 16 action sequences.
pub fn expected_objective(theta: [f64; 2]) -> f64 {
    let mut total = 0.0;
    for k in 0..16u32 {
        let c1 = [(k & 1) as f64, ((k >> 1) & 1) as f64];
        let c2 = [((k >> 2) & 1) as f64, ((k >> 3) & 1) as f64];
        let y1 = payouts(theta, c1);
        let y2 = payouts(theta, c2);
        let mut prob = 1.0;
        for i in 0..2 {
            prob *= bern(sigmoid(FIRST_LOGIT[i]), c1[i]);
            prob *= bern(sigmoid(BETA[i] * y1[i] + GAMMA[i]), c2[i]);
        }
        let j: f64 = (0..2)
            .map(|i| sigmoid(SLOPE * ((y1[i] + y2[i]) / E[i] - REF[i])))
            .sum();
        total += prob * j;
    }
    total
}

/// Exact gradient of the expected objective by central differences.
pub fn exact_gradient() -> [f64; 2] {
    let h = 1e-6;
    std::array::from_fn(|k| {
        let mut up = THETA;
        let mut down = THETA;
        up[k] += h;
        down[k] -= h;
        (expected_objective(up) - expected_objective(down)) / (2.0 * h)
    })
}

/// Surrogate gradient on one sampled batch of `batch` episodes.
pub fn surrogate_gradient(batch: usize, seed: u64, demean: bool) -> [f64; 2] {
    let mut rng = stream(seed, &[]);
    let mut g = Graph::new();
    let theta = g.param(Array2::from_shape_vec((1, 2), THETA.to_vec()).unwrap());

    let round = |g: &mut Graph, c: &Matrix| {
        let feats: Vec<_> = (0..2)
            .map(|i| {
                let x = Matrix::from_shape_fn((batch, 2), |(b, f)| {
                    if f == 0 {
                        c[[b, i]]
                    } else {
                        c[[b, i]] / E[i]
                    }
                });
                let x = g.constant(x);
                g.matmul_t(x, theta).unwrap()
            })
            .collect();
        let score = g.concat_cols(&feats).unwrap();
        let w = g.masked_softmax(score, None).unwrap();
        let pool = g.constant(Matrix::from_shape_fn((batch, 1), |(b, _)| {
            GROWTH * (c[[b, 0]] + c[[b, 1]])
        }));
        g.mul_col(w, pool).unwrap()
    };

    let c1 = Matrix::from_shape_fn((batch, 2), |(_, i)| {
        (rng.random::<f64>() < sigmoid(FIRST_LOGIT[i])) as u8 as f64
    });
    let y1 = round(&mut g, &c1);
    let beta = g.constant(Matrix::from_shape_fn((batch, 2), |(_, i)| BETA[i]));
    let gamma = g.constant(Matrix::from_shape_fn((batch, 2), |(_, i)| GAMMA[i]));
    let z = g.mul(y1, beta).unwrap();
    let z = g.add(z, gamma).unwrap();
    let p2 = g.sigmoid(z);
    let p2v = g.value(p2).clone();
    let c2 = p2v.mapv(|p| (rng.random::<f64>() < p) as u8 as f64);
    let sign = g.constant(c2.mapv(|c| 2.0 * c - 1.0));
    let offset = g.constant(c2.mapv(|c| 1.0 - c));
    let q = g.mul(p2, sign).unwrap();
    let q = g.add(q, offset).unwrap();
    let lq = g.ln(q);
    let logp = g.row_sum(lq);

    let y2 = round(&mut g, &c2);
    let y = g.add(y1, y2).unwrap();
    let inv_e = g.constant(Matrix::from_shape_fn((batch, 2), |(_, i)| 1.0 / E[i]));
    let rpay = g.mul(y, inv_e).unwrap();
    let refs = g.constant(Matrix::from_shape_fn((batch, 2), |(_, i)| REF[i]));
    let d = g.sub(rpay, refs).unwrap();
    let d = g.scale(d, SLOPE);
    let v = g.sigmoid(d);
    let votes = g.row_sum(v);
    let s = scg_surrogate(&mut g, votes, logp, demean).unwrap();
    let grads = g.backward(s).unwrap();
    let gt = grads.get(theta).unwrap();
    [gt[[0, 0]], gt[[0, 1]]]
}

/// Mean and per-batch variance of the surrogate gradient over `batches`.
pub fn monte_carlo(batches: usize, batch: usize, demean: bool) -> ([f64; 2], [f64; 2]) {
    let samples: Vec<[f64; 2]> = (0..batches as u64)
        .map(|s| surrogate_gradient(batch, s, demean))
        .collect();
    let n = samples.len() as f64;
    let mean: [f64; 2] = std::array::from_fn(|k| samples.iter().map(|g| g[k]).sum::<f64>() / n);
    let var: [f64; 2] = std::array::from_fn(|k| {
        samples.iter().map(|g| (g[k] - mean[k]).powi(2)).sum::<f64>() / (n - 1.0)
    });
    (mean, var)
}
