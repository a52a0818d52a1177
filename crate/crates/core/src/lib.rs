//! Analytical and simulation toolkit for slotted Aloha whose receiver can
//! resolve two-packet collisions with ZigZag decoding.
//!
//! * [`model`]: parameters, attempt distributions and the outcome of a frame.
//! * [`markov`]: dense Markov chains and stationary distributions.
//! * [`team`]: the cooperative backlog chain, its metrics and optimum.
//! * [`game`]: the tagged-user chain, best responses and symmetric equilibria.
//! * [`sim`]: a frame-level Monte Carlo simulator used as an oracle.
//! * [`experiments`]: parameter sweeps, figure reproduction and validation.

pub mod error;
pub mod experiments;
pub mod format;
pub mod game;
pub mod markov;
pub mod model;
pub mod search;
pub mod sim;
pub mod team;

pub use error::{Error, Result};
pub use game::{
    best_response, build_game_chain, find_equilibrium, tagged_metrics, EquilibriumResult,
    GameParams, GameState, TaggedMetrics,
};
pub use markov::{solve_stationary, validate_rows, StationaryDist, TransitionMatrix};
pub use model::{
    backlog_delta, classify_outcome, q_a, q_r, ChannelModel, OutcomeKind, SlotOutcome, SystemParams,
};
pub use team::{
    build_team_chain, build_team_chain_as_printed, optimize_team, team_metrics, TeamMetrics,
    TeamOptimum,
};
