//! Redistribution mechanisms.
//!
//! Every mechanism maps one round of `(endowments, contributions)` to payouts
//! that exactly exhaust the grown pool `r * C`. The two-parameter family
//! mixes an absolute component (own contribution vs the mean of the others)
//! with a relative component (the same mix over contribution/endowment
//! ratios, rescaled so it pays out the whole pool):
//!
//! ```text
//! abs_i = r [ w c_i + (1 - w) mean_{j != i} c_j ]
//! rel_i = r (C / P) [ w rho_i + (1 - w) mean_{j != i} rho_j ],   rho = c / e
//! y_i   = v rel_i + (1 - v) abs_i
//! ```

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::designer::GraphNetPolicy;
use crate::error::{Error, Result};
use crate::game::{Coins, GROWTH, PLAYERS};

pub type Jacobian = [[f64; PLAYERS]; PLAYERS];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldParams {
    pub v: f64,
    pub w: f64,
}

impl ManifoldParams {
    pub fn new(v: f64, w: f64) -> Result<Self> {
        let p = Self { v, w };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("v", self.v), ("w", self.w)] {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Domain(format!("{name} = {x} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    StrictEgalitarian,
    Libertarian,
    LiberalEgalitarian,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [
        Baseline::StrictEgalitarian,
        Baseline::Libertarian,
        Baseline::LiberalEgalitarian,
    ];

    /// Strict egalitarian sits at `w = 1/k`, where `v` has no effect; `v = 0` is stored.
    pub fn params(self) -> ManifoldParams {
        match self {
            Baseline::StrictEgalitarian => ManifoldParams {
                v: 0.0,
                w: 1.0 / PLAYERS as f64,
            },
            Baseline::Libertarian => ManifoldParams { v: 0.0, w: 1.0 },
            Baseline::LiberalEgalitarian => ManifoldParams { v: 1.0, w: 1.0 },
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::StrictEgalitarian => "strict_egalitarian",
            Baseline::Libertarian => "libertarian",
            Baseline::LiberalEgalitarian => "liberal_egalitarian",
        }
    }
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MechanismSpec {
    Manifold {
        v: f64,
        w: f64,
    },
    /// A trained graph-network policy. Only `weights_ref` is serialised; the
    /// policy itself is attached with [`MechanismSpec::resolve`].
    Designer {
        weights_ref: String,
        #[serde(skip)]
        policy: Option<Arc<GraphNetPolicy>>,
    },
    Named {
        name: Baseline,
    },
    /// Allocations entered live by a human referee, one round at a time.
    Referee,
}

impl PartialEq for MechanismSpec {
    fn eq(&self, other: &Self) -> bool {
        use MechanismSpec::*;
        match (self, other) {
            (Manifold { v: a, w: b }, Manifold { v: c, w: d }) => a == c && b == d,
            (Designer { weights_ref: a, .. }, Designer { weights_ref: b, .. }) => a == b,
            (Named { name: a }, Named { name: b }) => a == b,
            (Referee, Referee) => true,
            _ => false,
        }
    }
}

impl fmt::Debug for MechanismSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for MechanismSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MechanismSpec::Manifold { v, w } => write!(f, "manifold(v={v}, w={w})"),
            MechanismSpec::Designer { weights_ref, .. } => write!(f, "designer({weights_ref})"),
            MechanismSpec::Named { name } => f.write_str(name.as_str()),
            MechanismSpec::Referee => f.write_str("referee"),
        }
    }
}

impl From<Baseline> for MechanismSpec {
    fn from(name: Baseline) -> Self {
        MechanismSpec::Named { name }
    }
}

impl From<ManifoldParams> for MechanismSpec {
    fn from(p: ManifoldParams) -> Self {
        MechanismSpec::Manifold { v: p.v, w: p.w }
    }
}

impl MechanismSpec {
    pub fn manifold(v: f64, w: f64) -> Self {
        MechanismSpec::Manifold { v, w }
    }

    pub fn designer(weights_ref: impl Into<String>, policy: Arc<GraphNetPolicy>) -> Self {
        MechanismSpec::Designer {
            weights_ref: weights_ref.into(),
            policy: Some(policy),
        }
    }

    /// The equal split used when no referee is present.
    pub fn equal_split() -> Self {
        Baseline::StrictEgalitarian.into()
    }

    /// Manifold coordinates, for manifold points and named baselines.
    pub fn manifold_params(&self) -> Option<ManifoldParams> {
        match self {
            MechanismSpec::Manifold { v, w } => Some(ManifoldParams { v: *v, w: *w }),
            MechanismSpec::Named { name } => Some(name.params()),
            _ => None,
        }
    }

    /// Loads designer weights referenced by path, relative to `base`.
    pub fn resolve(&mut self, base: &Path) -> Result<()> {
        if let MechanismSpec::Designer {
            weights_ref,
            policy,
        } = self
        {
            if policy.is_none() {
                let path = base.join(&*weights_ref);
                *policy = Some(Arc::new(GraphNetPolicy::load(&path)?));
            }
        }
        Ok(())
    }

    pub fn payout(&self, e: &Coins, c: &Coins) -> Result<Coins> {
        match self {
            MechanismSpec::Designer { policy, weights_ref } => {
                let policy = policy.as_ref().ok_or_else(|| {
                    Error::Config(format!("designer weights `{weights_ref}` not loaded"))
                })?;
                designer_payout(policy, e, c)
            }
            MechanismSpec::Referee => Err(Error::Config(
                "referee allocations are supplied per round".into(),
            )),
            other => {
                let p = other.manifold_params().expect("manifold or named");
                manifold_payout(p, e, c)
            }
        }
    }

    pub fn jacobian(&self, e: &Coins, c: &Coins) -> Result<Jacobian> {
        payout_jacobian(self, e, c)
    }
}

pub(crate) fn check_round(e: &Coins, c: &Coins) -> Result<()> {
    for i in 0..PLAYERS {
        if !(e[i].is_finite() && e[i] > 0.0) {
            return Err(Error::Domain(format!("endowment of seat {i} is {}", e[i])));
        }
        if !c[i].is_finite() || c[i] < 0.0 {
            return Err(Error::Domain(format!("contribution of seat {i} is {}", c[i])));
        }
        if c[i] > e[i] {
            return Err(Error::Domain(format!(
                "contribution {} of seat {i} exceeds endowment {}",
                c[i], e[i]
            )));
        }
    }
    Ok(())
}

fn others_mean(x: &Coins, i: usize) -> f64 {
    let total: f64 = x.iter().sum();
    (total - x[i]) / (PLAYERS - 1) as f64
}

pub fn manifold_payout(p: ManifoldParams, e: &Coins, c: &Coins) -> Result<Coins> {
    p.validate()?;
    check_round(e, c)?;
    let total: f64 = c.iter().sum();
    if total == 0.0 {
        return Ok([0.0; PLAYERS]);
    }
    let rho: Coins = std::array::from_fn(|i| c[i] / e[i]);
    let ratio_sum: f64 = rho.iter().sum();
    let ManifoldParams { v, w } = p;
    Ok(std::array::from_fn(|i| {
        let abs = GROWTH * (w * c[i] + (1.0 - w) * others_mean(c, i));
        let rel = GROWTH * (total / ratio_sum) * (w * rho[i] + (1.0 - w) * others_mean(&rho, i));
        v * rel + (1.0 - v) * abs
    }))
}

/// Payouts `weights_i * r * C`.
pub fn weights_to_payout(weights: &[f64; PLAYERS], c: &Coins) -> Coins {
    let pool = GROWTH * c.iter().sum::<f64>();
    std::array::from_fn(|i| weights[i] * pool)
}

pub fn designer_payout(policy: &GraphNetPolicy, e: &Coins, c: &Coins) -> Result<Coins> {
    check_round(e, c)?;
    let weights = policy.weights(e, c)?;
    Ok(weights_to_payout(&weights, c))
}

/// `d y_i / d c_j`.
pub fn payout_jacobian(m: &MechanismSpec, e: &Coins, c: &Coins) -> Result<Jacobian> {
    check_round(e, c)?;
    match m {
        MechanismSpec::Designer { policy, weights_ref } => {
            let policy = policy.as_ref().ok_or_else(|| {
                Error::Config(format!("designer weights `{weights_ref}` not loaded"))
            })?;
            policy.payout_jacobian(e, c)
        }
        MechanismSpec::Referee => Err(Error::Config("referee payouts are not differentiable".into())),
        other => manifold_jacobian(other.manifold_params().expect("manifold or named"), e, c),
    }
}

fn manifold_jacobian(p: ManifoldParams, e: &Coins, c: &Coins) -> Result<Jacobian> {
    p.validate()?;
    let k1 = (PLAYERS - 1) as f64;
    let ManifoldParams { v, w } = p;
    // mixing coefficient of j's quantity in i's blend
    let mix = |i: usize, j: usize| if i == j { w } else { (1.0 - w) / k1 };

    let total: f64 = c.iter().sum();
    let rho: Coins = std::array::from_fn(|i| c[i] / e[i]);
    let ratio_sum: f64 = rho.iter().sum();
    let needs_rel = v != 0.0;
    if needs_rel && ratio_sum == 0.0 {
        return Err(Error::Domain(
            "relative component has no derivative at an empty pool".into(),
        ));
    }

    let mut jac = [[0.0; PLAYERS]; PLAYERS];
    for i in 0..PLAYERS {
        let q_i = w * rho[i] + (1.0 - w) * others_mean(&rho, i);
        for j in 0..PLAYERS {
            let d_abs = GROWTH * mix(i, j);
            let d_rel = if needs_rel {
                let p = ratio_sum;
                GROWTH
                    * (q_i / p + total * mix(i, j) / (e[j] * p) - total * q_i / (p * p * e[j]))
            } else {
                0.0
            };
            jac[i][j] = v * d_rel + (1.0 - v) * d_abs;
        }
    }
    Ok(jac)
}
