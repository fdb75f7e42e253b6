use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{EndowmentProfile, RoundRecord, PLAYERS};

/// Normalised mean absolute difference, `sum_ij |x_i - x_j| / (2 n^2 mean)`.
pub fn gini(values: &[f64]) -> Result<f64> {
    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Domain(format!("gini needs nonnegative finite values, got {v}")));
    }
    let n = values.len() as f64;
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Domain("gini of an all-zero vector is undefined".into()));
    }
    // sorted form: sum_ij |x_i - x_j| = 2 sum_k (2k - n + 1) x_(k)
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(k, x)| (2.0 * k as f64 - n + 1.0) * x)
        .sum();
    Ok(weighted / (n * total))
}

/// Sum of returns over sum of endowments across all players and rounds.
pub fn surplus(profile: &EndowmentProfile, rounds: &[RoundRecord]) -> Result<f64> {
    if rounds.is_empty() {
        return Err(Error::Domain("surplus of an empty block".into()));
    }
    let returned: f64 = rounds.iter().flat_map(|r| r.ret).sum();
    Ok(returned / (profile.total() * rounds.len() as f64))
}

/// Summed payout over endowment for each seat.
pub fn relative_payouts(profile: &EndowmentProfile, rounds: &[RoundRecord]) -> [f64; PLAYERS] {
    let e = profile.coins();
    std::array::from_fn(|i| rounds.iter().map(|r| r.y[i]).sum::<f64>() / e[i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameMetrics {
    /// Of the per-seat total returns over the block.
    pub gini: f64,
    pub surplus: f64,
    pub relative_payouts: [f64; PLAYERS],
}

impl GameMetrics {
    pub fn of_block(profile: &EndowmentProfile, rounds: &[RoundRecord]) -> Result<Self> {
        let totals: Vec<f64> = (0..PLAYERS)
            .map(|i| rounds.iter().map(|r| r.ret[i]).sum())
            .collect();
        Ok(Self {
            gini: gini(&totals)?,
            surplus: surplus(profile, rounds)?,
            relative_payouts: relative_payouts(profile, rounds),
        })
    }
}
