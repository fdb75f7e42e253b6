//! Evaluation: elections between mechanisms, inequality metrics, payout
//! surfaces, the manifold embedding and the vote-determinant regression.

mod beach;
mod embedding;
mod metrics;
mod regression;
pub mod report;
mod tournament;

pub use beach::{beach_plot, BeachCell, BeachPlot};
pub use embedding::{classical_mds, manifold_embedding, pairwise_distances, ManifoldEmbedding, Mds};
pub use metrics::{gini, relative_payouts, surplus, GameMetrics};
pub use regression::{
    fit_logistic, fit_vote_regression, group_permutation_test, vote_observations,
    PermutationTest, VoteObservation, VoteRegression, PREDICTORS,
};
pub use tournament::{
    default_grid, head_to_head, run_metagame, simulate_population, wilson_interval, HeadToHead,
    MetagameReport, PayoffMatrix, Population, TournamentConfig, VoteMode,
};
