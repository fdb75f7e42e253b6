use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::designer::{simulate_virtual_batch, BatchOutcome, BatchSpec};
use crate::error::{Error, Result};
use crate::game::{EndowmentProfile, PLAYERS};
use crate::mechanism::MechanismSpec;
use crate::nn::{sigmoid, Matrix};
use crate::players::{rational_player_step, RationalConfig, VirtualPlayerModel, VoteModel};
use crate::rng::{derive_seed, stream};

/// Who plays the simulated blocks.
#[derive(Debug, Clone)]
pub enum Population {
    Virtual(Arc<VirtualPlayerModel>),
    Rational(RationalConfig),
}

impl Population {
    pub fn name(&self) -> &'static str {
        match self {
            Population::Virtual(_) => "virtual",
            Population::Rational(_) => "rational",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteMode {
    /// Average vote probability.
    #[default]
    Expected,
    /// Bernoulli ballots drawn from the vote probability.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TournamentConfig {
    /// Blocks per ordered pairing, spread round-robin over `profiles`.
    pub blocks: usize,
    pub rounds: usize,
    pub profiles: Vec<EndowmentProfile>,
    pub vote: VoteModel,
    pub mode: VoteMode,
}

impl Default for TournamentConfig {
    fn default() -> Self {
        Self {
            blocks: 4096,
            rounds: 10,
            profiles: EndowmentProfile::evaluation_set(),
            vote: VoteModel::default(),
            mode: VoteMode::Expected,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadToHead {
    /// Share of votes for the first mechanism.
    pub share: f64,
    /// Standard error of `share` over blocks.
    pub std_error: f64,
    /// 95% Wilson score interval, counting every seat of every block as one vote.
    pub wilson: (f64, f64),
    pub blocks: usize,
}

/// 95% Wilson score interval for a proportion `p` observed over `n` trials.
pub fn wilson_interval(p: f64, n: usize) -> (f64, f64) {
    const Z: f64 = 1.959_963_984_540_054;
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn batch_spec(cfg: &TournamentConfig) -> Result<BatchSpec> {
    if cfg.blocks == 0 || cfg.profiles.is_empty() || cfg.rounds == 0 {
        return Err(Error::Config("tournament needs blocks, rounds and profiles".into()));
    }
    Ok(BatchSpec {
        profiles: (0..cfg.blocks)
            .map(|b| cfg.profiles[b % cfg.profiles.len()])
            .collect(),
        rounds: cfg.rounds,
    })
}

/// Plays every block of `spec` under `mech`. Rational players are drawn
/// per block from `stream(seed, [block])`; virtual players share one stream.
pub fn simulate_population(
    players: &Population,
    spec: &BatchSpec,
    mech: &MechanismSpec,
    seed: u64,
) -> Result<BatchOutcome> {
    let config = match players {
        Population::Virtual(model) => {
            return simulate_virtual_batch(model, spec, mech, &mut stream(seed, &[]))
        }
        Population::Rational(config) => config,
    };
    let batch = spec.len();
    let mut out = BatchOutcome {
        contributions: vec![Matrix::zeros((batch, PLAYERS)); spec.rounds],
        payouts: vec![Matrix::zeros((batch, PLAYERS)); spec.rounds],
        rpay: Matrix::zeros((batch, PLAYERS)),
    };
    for (b, profile) in spec.profiles.iter().enumerate() {
        let mut rng = stream(seed, &[b as u64]);
        let mut states: [_; PLAYERS] = std::array::from_fn(|_| config.sample(&mut rng));
        let e = profile.coins();
        for t in 0..spec.rounds {
            let c: [f64; PLAYERS] = std::array::from_fn(|i| states[i].contribution(e[i]));
            let y = mech.payout(&e, &c)?;
            for i in 0..PLAYERS {
                out.contributions[t][[b, i]] = c[i];
                out.payouts[t][[b, i]] = y[i];
                out.rpay[[b, i]] += y[i] / e[i];
                states[i] = rational_player_step(states[i], i, &e, &c, mech)?;
            }
        }
    }
    Ok(out)
}

/// Per-block vote shares for `a` over `b`.
fn block_shares(
    players: &Population,
    a: &MechanismSpec,
    b: &MechanismSpec,
    cfg: &TournamentConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let spec = batch_spec(cfg)?;
    // rational players are deterministic given their draw, so the same
    // players experience both mechanisms
    let seed_b = match players {
        Population::Virtual(_) => derive_seed(seed, &[1]),
        Population::Rational(_) => derive_seed(seed, &[0]),
    };
    let ra = simulate_population(players, &spec, a, derive_seed(seed, &[0]))?.rpay;
    let rb = simulate_population(players, &spec, b, seed_b)?.rpay;
    let mut ballots = stream(seed, &[2]);
    Ok((0..spec.len())
        .map(|k| {
            (0..PLAYERS)
                .map(|i| {
                    let p = sigmoid(cfg.vote.slope * (ra[[k, i]] - rb[[k, i]]));
                    match cfg.mode {
                        VoteMode::Expected => p,
                        VoteMode::Sampled => f64::from(u8::from(ballots.random::<f64>() < p)),
                    }
                })
                .sum::<f64>()
                / PLAYERS as f64
        })
        .collect())
}

/// Vote share of `a` in elections against `b` over `cfg.blocks` blocks.
pub fn head_to_head(
    a: &MechanismSpec,
    b: &MechanismSpec,
    players: &Population,
    cfg: &TournamentConfig,
    seed: u64,
) -> Result<HeadToHead> {
    let shares = block_shares(players, a, b, cfg, seed)?;
    let s = crate::designer::summarize_shares(&shares);
    Ok(HeadToHead {
        share: s.mean,
        std_error: s.std_error,
        wilson: wilson_interval(s.mean, shares.len() * PLAYERS),
        blocks: shares.len(),
    })
}

/// Row-versus-column vote shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    pub labels: Vec<String>,
    pub entries: Vec<Vec<f64>>,
    pub std_errors: Vec<Vec<f64>>,
}

impl PayoffMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Largest `|M_ij + M_ji - 1|` measured in combined standard errors.
    pub fn max_antisymmetry_z(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                let dev = (self.entries[i][j] + self.entries[j][i] - 1.0).abs();
                let se = self.std_errors[i][j].hypot(self.std_errors[j][i]);
                worst = worst.max(if se > 0.0 { dev / se } else if dev > 0.0 { f64::INFINITY } else { 0.0 });
            }
        }
        worst
    }

    /// Rows whose off-diagonal entries are all at least one half.
    pub fn dominant_rows(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| (0..self.len()).all(|j| i == j || self.entries[i][j] >= 0.5))
            .collect()
    }

    /// A cycle in the majority digraph (`i -> j` when row `i` wins against
    /// column `j` and loses the reverse election), if there is one.
    pub fn condorcet_cycle(&self) -> Option<Vec<usize>> {
        let n = self.len();
        let beats = |i: usize, j: usize| {
            i != j && self.entries[i][j] > 0.5 && self.entries[j][i] < 0.5
        };
        // 0 unvisited, 1 on stack, 2 finished
        let mut state = vec![0u8; n];
        let mut path = Vec::new();
        fn visit(
            v: usize,
            n: usize,
            beats: &dyn Fn(usize, usize) -> bool,
            state: &mut [u8],
            path: &mut Vec<usize>,
        ) -> Option<Vec<usize>> {
            state[v] = 1;
            path.push(v);
            for w in 0..n {
                if !beats(v, w) {
                    continue;
                }
                if state[w] == 1 {
                    let start = path.iter().position(|&x| x == w).expect("on stack");
                    return Some(path[start..].to_vec());
                }
                if state[w] == 0 {
                    if let Some(c) = visit(w, n, beats, state, path) {
                        return Some(c);
                    }
                }
            }
            state[v] = 2;
            path.pop();
            None
        }
        (0..n).find_map(|v| {
            if state[v] == 0 {
                visit(v, n, &beats, &mut state, &mut path)
            } else {
                None
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetagameReport {
    pub matrix: PayoffMatrix,
    pub dominant: Vec<String>,
    pub condorcet_cycle: Option<Vec<String>>,
    pub players: String,
    pub blocks: usize,
    pub seed: u64,
}

/// The 3 x 3 manifold grid `v, w in {0, 1/2, 1}`.
pub fn default_grid() -> Vec<MechanismSpec> {
    let mut grid = Vec::with_capacity(9);
    for v in [0.0, 0.5, 1.0] {
        for w in [0.0, 0.5, 1.0] {
            grid.push(MechanismSpec::manifold(v, w));
        }
    }
    grid
}

/// Round-robin elections between every ordered pair of `grid`. Each ordered
/// pairing has its own stream, so `M_ij` and `M_ji` are independent estimates.
pub fn run_metagame(
    grid: &[MechanismSpec],
    players: &Population,
    cfg: &TournamentConfig,
    seed: u64,
) -> Result<MetagameReport> {
    let n = grid.len();
    if n < 2 {
        return Err(Error::Config("a metagame needs at least two mechanisms".into()));
    }
    let mut entries = vec![vec![0.5; n]; n];
    let mut std_errors = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let h = head_to_head(&grid[i], &grid[j], players, cfg, derive_seed(seed, &[i as u64, j as u64]))?;
            entries[i][j] = h.share;
            std_errors[i][j] = h.std_error;
        }
    }
    let matrix = PayoffMatrix {
        labels: grid.iter().map(|m| m.to_string()).collect(),
        entries,
        std_errors,
    };
    let dominant = matrix.dominant_rows().into_iter().map(|i| matrix.labels[i].clone()).collect();
    let condorcet_cycle = matrix
        .condorcet_cycle()
        .map(|c| c.into_iter().map(|i| matrix.labels[i].clone()).collect());
    Ok(MetagameReport {
        matrix,
        dominant,
        condorcet_cycle,
        players: players.name().into(),
        blocks: cfg.blocks,
        seed,
    })
}
