use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{BlockLabel, EpisodeRecord, Vote, PLAYERS};
use crate::rng::stream;

pub const PREDICTORS: [&str; 4] = ["intercept", "relative_payout", "absolute_payout", "contributions"];

/// One voter's choice between the two mechanisms of an episode, with
/// predictors taken as `A - B` differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoteObservation {
    pub voted_a: bool,
    /// Own summed payout over endowment.
    pub relative_payout: f64,
    /// Own summed payout in coins.
    pub absolute_payout: f64,
    /// Whole group's summed contributions.
    pub contributions: f64,
}

/// Per-voter observations from completed episodes.
pub fn vote_observations(episodes: &[EpisodeRecord]) -> Result<Vec<VoteObservation>> {
    let mut out = Vec::with_capacity(episodes.len() * PLAYERS);
    for ep in episodes {
        let (Some(a), Some(b)) = (ep.block(BlockLabel::A), ep.block(BlockLabel::B)) else {
            return Err(Error::Config(format!("episode {} lacks an A or B block", ep.seed)));
        };
        let e = ep.profile.coins();
        let own = |rounds: &[crate::game::RoundRecord], i: usize| -> f64 {
            rounds.iter().map(|r| r.y[i]).sum()
        };
        let group = |rounds: &[crate::game::RoundRecord]| -> f64 {
            rounds.iter().flat_map(|r| r.c).sum()
        };
        for i in 0..PLAYERS {
            let abs = own(&a.rounds, i) - own(&b.rounds, i);
            out.push(VoteObservation {
                voted_a: ep.votes[i] == Vote::A,
                relative_payout: abs / e[i],
                absolute_payout: abs,
                contributions: group(&a.rounds) - group(&b.rounds),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRegression {
    pub names: Vec<String>,
    /// On standardised predictors.
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub z: Vec<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Fitted probabilities collapsed to 0/1: the maximum likelihood estimate
    /// does not exist and the coefficients grow without bound.
    pub separated: bool,
    pub n: usize,
}

impl VoteRegression {
    /// Index of the non-intercept predictor with the largest `|z|`.
    pub fn strongest(&self) -> usize {
        (1..self.z.len())
            .max_by(|&a, &b| self.z[a].abs().total_cmp(&self.z[b].abs()))
            .expect("at least one predictor")
    }
}

const MIN_VOTES: usize = 50;
const MAX_ITER: usize = 100;
const TOL: f64 = 1e-8;

/// Logistic regression of `voted_a` on the standardised differences.
pub fn fit_vote_regression(data: &[VoteObservation]) -> Result<VoteRegression> {
    let rows: Vec<[f64; 3]> = data
        .iter()
        .map(|o| [o.relative_payout, o.absolute_payout, o.contributions])
        .collect();
    let y: Vec<f64> = data.iter().map(|o| f64::from(u8::from(o.voted_a))).collect();
    fit_logistic(&rows, &y, &PREDICTORS)
}

/// Newton-Raphson fit of `P(y = 1) = sigmoid(b0 + sum_k b_k z_k)` with
/// every column `z_k` standardised to zero mean and unit variance.
pub fn fit_logistic<const K: usize>(rows: &[[f64; K]], y: &[f64], names: &[&str]) -> Result<VoteRegression> {
    let n = rows.len();
    if n < MIN_VOTES {
        return Err(Error::Domain(format!("need at least {MIN_VOTES} votes, got {n}")));
    }
    if y.len() != n || names.len() != K + 1 {
        return Err(Error::Config("regression inputs do not line up".into()));
    }
    let mut means = vec![0.0];
    let mut scales = vec![1.0];
    for k in 0..K {
        let m = rows.iter().map(|r| r[k]).sum::<f64>() / n as f64;
        let sd = (rows.iter().map(|r| (r[k] - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::Domain(format!("predictor `{}` is constant", names[k + 1])));
        }
        means.push(m);
        scales.push(sd);
    }
    let x = DMatrix::from_fn(n, K + 1, |i, k| {
        if k == 0 {
            1.0
        } else {
            (rows[i][k - 1] - means[k]) / scales[k]
        }
    });
    let yv = DVector::from_column_slice(y);

    let mut beta = DVector::zeros(K + 1);
    let mut iterations = 0;
    let mut gradient_norm = f64::INFINITY;
    let mut info = DMatrix::identity(K + 1, K + 1);
    let mut separated = false;
    while iterations < MAX_ITER {
        let eta = &x * &beta;
        let p = eta.map(crate::nn::sigmoid);
        let grad = x.transpose() * (&yv - &p);
        gradient_norm = grad.norm();
        let w = p.map(|q| q * (1.0 - q));
        info = x.transpose() * DMatrix::from_diagonal(&w) * &x;
        if gradient_norm < TOL {
            break;
        }
        if p.iter().all(|&q| !(q > 1e-12 && q < 1.0 - 1e-12)) || beta.amax() > 50.0 {
            separated = true;
            break;
        }
        let Some(step) = info.clone().cholesky().map(|c| c.solve(&grad)) else {
            separated = true;
            break;
        };
        beta += step;
        iterations += 1;
    }
    let converged = gradient_norm < TOL;
    let cov = info.clone().try_inverse();
    let std_errors: Vec<f64> = (0..=K)
        .map(|k| cov.as_ref().map_or(f64::INFINITY, |c| c[(k, k)].max(0.0).sqrt()))
        .collect();
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let z = coefficients.iter().zip(&std_errors).map(|(b, s)| b / s).collect();
    Ok(VoteRegression {
        names: names.iter().map(|s| s.to_string()).collect(),
        coefficients,
        std_errors,
        z,
        means,
        scales,
        iterations,
        gradient_norm,
        converged,
        separated: separated || !converged,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationTest {
    /// Mean over groups of the fraction voting for the focal mechanism.
    pub statistic: f64,
    /// Two-sided, against no preference.
    pub p_value: f64,
    pub shuffles: usize,
}

/// Group-level sign-flip test: each group's vote fraction `f` is replaced by
/// `1 - f` with probability one half, which flips preferences while keeping
/// votes within a group together.
pub fn group_permutation_test(group_fractions: &[f64], shuffles: usize, seed: u64) -> Result<PermutationTest> {
    if group_fractions.is_empty() || shuffles == 0 {
        return Err(Error::Config("permutation test needs groups and shuffles".into()));
    }
    if group_fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::Domain("vote fractions must lie in [0, 1]".into()));
    }
    let n = group_fractions.len() as f64;
    let statistic = group_fractions.iter().sum::<f64>() / n;
    let observed = (statistic - 0.5).abs();
    let mut rng = stream(seed, &[]);
    let mut extreme = 0usize;
    for _ in 0..shuffles {
        let s = group_fractions
            .iter()
            .map(|&f| if rng.random::<bool>() { 1.0 - f } else { f })
            .sum::<f64>()
            / n;
        if (s - 0.5).abs() >= observed - 1e-12 {
            extreme += 1;
        }
    }
    Ok(PermutationTest {
        statistic,
        p_value: (extreme + 1) as f64 / (shuffles + 1) as f64,
        shuffles,
    })
}
