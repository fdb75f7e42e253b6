use serde::{Deserialize, Serialize};

use crate::nn::sigmoid;

/// Logistic vote on the difference of summed relative payouts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoteModel {
    pub slope: f64,
}

impl Default for VoteModel {
    fn default() -> Self {
        Self { slope: 1.4 }
    }
}

impl VoteModel {
    pub fn new(slope: f64) -> Self {
        Self { slope }
    }

    pub fn vote_probability(&self, rpay_a: f64, rpay_b: f64) -> f64 {
        vote_probability(rpay_a, rpay_b, self.slope)
    }
}

/// Probability of voting for `A`: `1 / (1 + exp(-s (rpay_a - rpay_b)))`.
pub fn vote_probability(rpay_a: f64, rpay_b: f64, slope: f64) -> f64 {
    sigmoid(slope * (rpay_a - rpay_b))
}
