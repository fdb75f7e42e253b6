use serde::{Deserialize, Serialize};

use crate::designer::batch_payouts;
use crate::error::{Error, Result};
use crate::game::{EndowmentProfile, PLAYERS};
use crate::mechanism::MechanismSpec;
use crate::nn::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeachCell {
    /// Mean fraction of the payout going to the head player; `None` when no
    /// contribution pattern falls in the cell.
    pub value: Option<f64>,
    pub samples: usize,
    /// Some pattern in the cell had an empty pool and was scored `1/4`.
    pub empty_pool: bool,
}

/// Head payout fraction over (head, mean tail) relative contribution.
/// `cells[h][t]` is the cell at `rho_head = h / (n - 1)`, `rho_tail = t / (n - 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeachPlot {
    pub mechanism: String,
    pub profile: EndowmentProfile,
    pub resolution: usize,
    pub cells: Vec<Vec<BeachCell>>,
}

impl BeachPlot {
    pub fn value(&self, head: usize, tail: usize) -> Option<f64> {
        self.cells[head][tail].value
    }
}

fn bin(rho: f64, resolution: usize) -> usize {
    (rho * (resolution - 1) as f64).round() as usize
}

/// Evaluates `mech` on every integer contribution pattern of `profile`, bins
/// patterns by the nearest grid point and averages the head fraction.
pub fn beach_plot(
    mech: &MechanismSpec,
    profile: &EndowmentProfile,
    resolution: usize,
) -> Result<BeachPlot> {
    if resolution < 2 {
        return Err(Error::Config("beach plot resolution must be at least 2".into()));
    }
    if matches!(mech, MechanismSpec::Referee) {
        return Err(Error::Config("a live referee has no payout surface".into()));
    }
    let e = profile.endowments();
    let head = profile.head();
    let tails: Vec<usize> = profile.tails().collect();

    let count: u32 = e.iter().map(|v| v + 1).product();
    let patterns: Vec<[u32; PLAYERS]> = (0..count)
        .map(|mut k| {
            std::array::from_fn(|i| {
                let digit = k % (e[i] + 1);
                k /= e[i] + 1;
                digit
            })
        })
        .collect();

    let n = patterns.len();
    let em = Matrix::from_shape_fn((n, PLAYERS), |(_, i)| f64::from(e[i]));
    let cm = Matrix::from_shape_fn((n, PLAYERS), |(b, i)| f64::from(patterns[b][i]));
    let y = batch_payouts(mech, &em, &cm)?;

    let mut sums = vec![vec![(0.0, 0usize, false); resolution]; resolution];
    for (b, pat) in patterns.iter().enumerate() {
        let rho_head = f64::from(pat[head]) / f64::from(e[head]);
        let rho_tail = tails
            .iter()
            .map(|&t| f64::from(pat[t]) / f64::from(e[t]))
            .sum::<f64>()
            / tails.len() as f64;
        let total: f64 = y.row(b).sum();
        let (frac, empty) = if pat.iter().all(|&v| v == 0) {
            (1.0 / PLAYERS as f64, true)
        } else {
            (y[[b, head]] / total, false)
        };
        let cell = &mut sums[bin(rho_head, resolution)][bin(rho_tail, resolution)];
        cell.0 += frac;
        cell.1 += 1;
        cell.2 |= empty;
    }
    let cells = sums
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|(s, k, empty_pool)| BeachCell {
                    value: (k > 0).then(|| s / k as f64),
                    samples: k,
                    empty_pool,
                })
                .collect()
        })
        .collect();
    Ok(BeachPlot {
        mechanism: mech.to_string(),
        profile: *profile,
        resolution,
        cells,
    })
}
