use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::tournament::{simulate_population, Population};
use crate::designer::BatchSpec;
use crate::error::{Error, Result};
use crate::game::EndowmentProfile;
use crate::mechanism::MechanismSpec;
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mds {
    pub coords: Vec<[f64; 2]>,
    /// Top two eigenvalues of the double-centred Gram matrix.
    pub eigenvalues: [f64; 2],
    /// Every point coincides; coordinates are all zero.
    pub degenerate: bool,
}

/// Euclidean distances between the rows of `points`.
pub fn pairwise_distances(points: &[Vec<f64>]) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| {
        points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    })
}

/// Classical (Torgerson) scaling of a distance matrix into the plane.
pub fn classical_mds(distances: &DMatrix<f64>) -> Result<Mds> {
    let n = distances.nrows();
    if n == 0 || distances.ncols() != n {
        return Err(Error::Shape {
            op: "classical_mds",
            detail: format!("{}x{} distance matrix", n, distances.ncols()),
        });
    }
    if distances.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("distance matrix".into()));
    }
    let sq = distances.map(|d| d * d);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).mean()).collect();
    let grand = sq.mean();
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand));

    let scale = b.amax();
    if scale <= 1e-300 {
        return Ok(Mds {
            coords: vec![[0.0; 2]; n],
            eigenvalues: [0.0; 2],
            degenerate: true,
        });
    }
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top: Vec<usize> = order.into_iter().take(2).collect();
    let lambda: [f64; 2] = std::array::from_fn(|k| top.get(k).map_or(0.0, |&i| eig.eigenvalues[i].max(0.0)));
    let coords = (0..n)
        .map(|p| {
            std::array::from_fn(|k| match top.get(k) {
                Some(&i) => eig.eigenvectors[(p, i)] * lambda[k].sqrt(),
                None => 0.0,
            })
        })
        .collect();
    Ok(Mds {
        coords,
        eigenvalues: lambda,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldEmbedding {
    /// `(v, w)` of each grid mechanism.
    pub points: Vec<(f64, f64)>,
    /// Per mechanism: mean head then mean tail relative payout, round by round.
    pub features: Vec<Vec<f64>>,
    pub mds: Mds,
}

/// Simulates every mechanism of a `grid x grid` lattice over `(v, w)` and
/// embeds the per-round head/tail relative payouts in two dimensions.
pub fn manifold_embedding(
    grid: usize,
    players: &Population,
    profiles: &[EndowmentProfile],
    episodes_per_profile: usize,
    rounds: usize,
    seed: u64,
) -> Result<ManifoldEmbedding> {
    if grid < 2 || profiles.is_empty() || episodes_per_profile == 0 || rounds == 0 {
        return Err(Error::Config("embedding needs a grid, profiles and episodes".into()));
    }
    let spec = BatchSpec::grouped(profiles, episodes_per_profile, rounds);
    let step = 1.0 / (grid - 1) as f64;
    let mut points = Vec::with_capacity(grid * grid);
    let mut features = Vec::with_capacity(grid * grid);
    for a in 0..grid {
        for b in 0..grid {
            let (v, w) = (a as f64 * step, b as f64 * step);
            let mech = MechanismSpec::manifold(v, w);
            // common random numbers across mechanisms
            let out = simulate_population(players, &spec, &mech, derive_seed(seed, &[0]))?;
            let mut f = Vec::with_capacity(2 * rounds);
            let mut tail_part = Vec::with_capacity(rounds);
            for y in &out.payouts {
                let (mut head, mut tail, mut tails) = (0.0, 0.0, 0usize);
                for (k, p) in spec.profiles.iter().enumerate() {
                    let e = p.coins();
                    let h = p.head();
                    head += y[[k, h]] / e[h];
                    for t in p.tails() {
                        tail += y[[k, t]] / e[t];
                        tails += 1;
                    }
                }
                f.push(head / spec.len() as f64);
                tail_part.push(tail / tails as f64);
            }
            f.extend(tail_part);
            points.push((v, w));
            features.push(f);
        }
    }
    let mds = classical_mds(&pairwise_distances(&features))?;
    Ok(ManifoldEmbedding {
        points,
        features,
        mds,
    })
}
