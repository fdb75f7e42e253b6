//! A laboratory for redistribution mechanisms in a four-player investment
//! game: the game itself, the two-parameter mechanism family, simulated
//! players, a graph-network mechanism designer trained to win votes, and the
//! analyses used to compare mechanisms.

pub mod arena;
pub mod designer;
pub mod error;
pub mod game;
pub mod mechanism;
pub mod nn;
pub mod players;
pub mod rng;

pub use error::{Error, Result};
