//! Experiment configuration, as read from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::game::{MarkovGame, Player, StationaryStrategy};
use crate::harness::generate::{generate_game, GeneratorSpec, Preset};
use crate::report::ValidationReport;
use crate::schedules::{validate_schedule, ScheduleConfig, ScheduleParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GameSource {
    /// Game JSON file, resolved relative to the config file.
    File {
        path: PathBuf,
    },
    Generator(GeneratorSpec),
    Preset {
        preset: Preset,
        seed: u64,
    },
}

impl GameSource {
    pub fn load(&self, base: Option<&Path>) -> Result<MarkovGame> {
        match self {
            GameSource::File { path } => match base {
                Some(dir) if path.is_relative() => MarkovGame::load(dir.join(path)),
                _ => MarkovGame::load(path),
            },
            GameSource::Generator(spec) => generate_game(spec),
            GameSource::Preset { preset, seed } => generate_game(&preset.generator(*seed)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    #[default]
    SelfPlay,
    /// `learner` runs the learning dynamics against a fixed stationary
    /// opponent.
    Rationality { learner: Player, opponent: StationaryStrategy },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InitialEstimates {
    pub q0: f64,
    pub v0: f64,
}

fn default_log_every() -> u64 {
    1000
}

fn default_lambda() -> f64 {
    1.01
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub game: GameSource,
    pub schedule: ScheduleParams,
    /// Player 2's schedule when it differs from player 1's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule2: Option<ScheduleParams>,
    pub num_stages: u64,
    pub seeds: Vec<u64>,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_lambda")]
    pub lambda_report: f64,
    #[serde(default)]
    pub initial: InitialEstimates,
    /// Log per-state exploitability of the average strategies.
    #[serde(default)]
    pub exploitability: bool,
}

impl ExperimentConfig {
    /// Self-play on a preset game with its schedule.
    pub fn preset(preset: Preset, game_seed: u64, num_stages: u64, seeds: Vec<u64>) -> Self {
        Self {
            game: GameSource::Preset { preset, seed: game_seed },
            schedule: preset.schedule(),
            schedule2: None,
            num_stages,
            seeds,
            log_every: default_log_every(),
            mode: Mode::SelfPlay,
            lambda_report: default_lambda(),
            initial: InitialEstimates::default(),
            exploitability: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(compact.as_bytes()))
    }

    pub fn schedule_for(&self, player: Player, d_bound: f64) -> ScheduleConfig {
        let params = match player {
            Player::One => self.schedule,
            Player::Two => self.schedule2.unwrap_or(self.schedule),
        };
        params.with_d_bound(d_bound)
    }

    pub fn validate(&self, game: &MarkovGame) -> ValidationReport {
        let mut report = ValidationReport::new();
        if self.num_stages == 0 {
            report.push("num_stages must be at least 1");
        }
        if self.log_every == 0 {
            report.push("log_every must be at least 1");
        }
        if self.seeds.is_empty() {
            report.push("at least one seed is required");
        }
        let gamma = game.gamma();
        if !(self.lambda_report > 1.0 && self.lambda_report * gamma < 1.0) {
            report.push(format!("lambda_report {} outside (1, 1/{gamma})", self.lambda_report));
        }
        let d = game.d_bound();
        if !(self.initial.q0.abs() <= d && self.initial.v0.abs() <= d) {
            report.push(format!("initial estimates must lie in [-{d}, {d}]"));
        }
        for player in [Player::One, Player::Two] {
            let sched = validate_schedule(&self.schedule_for(player, d));
            for v in &sched.report.violations {
                report.push(format!("schedule of {player:?}: {v}"));
            }
        }
        if let Mode::Rationality { learner, opponent } = &self.mode {
            let opp = learner.other();
            let shape = opponent.validate(game.action_counts(opp));
            for v in &shape.violations {
                report.push(format!("opponent strategy: {v}"));
            }
            if shape.is_empty() && !opponent.is_interior() {
                report.push("opponent strategy must put positive probability on every action");
            }
        }
        report
    }

    /// Loads the game and checks the config against it.
    pub fn resolve(&self, base: Option<&Path>) -> Result<MarkovGame> {
        let game = self.game.load(base)?;
        let report = self.validate(&game);
        if report.is_empty() {
            Ok(game)
        } else {
            Err(Error::InvalidArgument(format!("experiment config:\n{report}")))
        }
    }
}
