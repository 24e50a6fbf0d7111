//! Decentralized two-timescale Q-learning for two-player zero-sum
//! discounted Markov games.
//!
//! The learning agents live in [`learner`] and never see the game model.
//! Code with full knowledge of the game sits in the other modules.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod error;
pub mod game;
pub mod harness;
pub mod learner;
pub mod matrix;
pub mod oracle;
pub mod report;
pub mod schedules;

pub use error::{Error, Result};
pub use game::{GameDef, JointAction, MarkovGame, Player, Quantifier, Reachability, StationaryStrategy};
pub use learner::{smoothed_best_response, AgentState};
pub use matrix::{matrix_value, MatrixGame, MatrixSolution};
pub use oracle::{best_response_value, exploitability, policy_eval, shapley_solve, SolutionCertificate};
pub use report::ValidationReport;
pub use schedules::{prop2_threshold, validate_schedule, ScheduleConfig, ScheduleParams, TemperatureMode};
