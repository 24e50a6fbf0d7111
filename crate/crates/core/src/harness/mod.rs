//! Experiment orchestration: game generation, simulation, logging and
//! multi-seed batches.

pub mod batch;
pub mod config;
pub mod generate;
pub mod log;
pub mod sim;

pub use batch::{run_batch, summarize, BatchOutput, BatchSummary};
pub use config::{ExperimentConfig, GameSource, InitialEstimates, Mode};
pub use generate::{generate_game, GeneratorSpec, KernelStyle, Preset, RewardStyle};
pub use log::{export_columns, LogMeta, LogRow, TrajectoryLog};
pub use sim::{run, run_rationality, run_self_play, Actor, Simulation, StageRecord};
