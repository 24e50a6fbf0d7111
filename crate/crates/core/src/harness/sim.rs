//! Simulation loops. The harness is the only place that holds both players
//! and the game; agents never see each other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{bound_constants, tracking_error};
use crate::error::{Error, Result};
use crate::game::{sample_index, JointAction, MarkovGame, Player, StationaryStrategy};
use crate::harness::config::{ExperimentConfig, Mode};
use crate::harness::log::{LogMeta, LogRow, TrajectoryLog};
use crate::learner::{smoothed_best_response, AgentState};
use crate::oracle::{best_response_value, exploitability, shapley_solve, DEFAULT_TOL};
use crate::schedules::ScheduleConfig;

/// Tolerance of the exploitability oracle used for logging.
const EXPLOIT_TOL: f64 = 1e-8;

/// One side of a simulation.
#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Actor {
    Learner { agent: AgentState, sched: ScheduleConfig },
    Fixed(StationaryStrategy),
}

impl Actor {
    fn act(&mut self, state: usize, rng: &mut ChaCha8Rng) -> usize {
        match self {
            Actor::Learner { agent, sched } => sample_index(agent.begin_stage(state, sched), rng),
            Actor::Fixed(strategy) => sample_index(strategy.probs(state), rng),
        }
    }

    fn observe(&mut self, state: usize, action: usize, reward: f64) -> Result<()> {
        match self {
            Actor::Learner { agent, sched } => agent.finish_stage(state, action, reward, sched),
            Actor::Fixed(_) => Ok(()),
        }
    }

    pub fn agent(&self) -> Option<&AgentState> {
        match self {
            Actor::Learner { agent, .. } => Some(agent),
            Actor::Fixed(_) => None,
        }
    }
}

/// What happened at one stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageRecord {
    pub stage: u64,
    pub state: usize,
    pub actions: JointAction,
    /// Reward to player 1; player 2 receives the negation.
    pub reward1: f64,
    pub next_state: usize,
}

/// Seeded stage-by-stage simulation. A single ChaCha8 stream drives the
/// initial state, both action draws and the transition, in that order.
pub struct Simulation<'g> {
    game: &'g MarkovGame,
    actors: [Actor; 2],
    rng: ChaCha8Rng,
    state: usize,
    stage: u64,
}

impl<'g> Simulation<'g> {
    pub fn new(game: &'g MarkovGame, actors: [Actor; 2], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let uniform = vec![1.0 / game.num_states() as f64; game.num_states()];
        let state = sample_index(&uniform, &mut rng);
        Self { game, actors, rng, state, stage: 0 }
    }

    /// Actors as described by the config's mode. The config must already
    /// be validated against `game`.
    pub fn from_config(game: &'g MarkovGame, cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        let d = game.d_bound();
        let learner = |player: Player| -> Result<Actor> {
            let agent =
                AgentState::with_initial(game.action_counts(player), game.gamma(), d, cfg.initial.q0, cfg.initial.v0)?;
            Ok(Actor::Learner { agent, sched: cfg.schedule_for(player, d) })
        };
        let actors = match &cfg.mode {
            Mode::SelfPlay => [learner(Player::One)?, learner(Player::Two)?],
            Mode::Rationality { learner: Player::One, opponent } => {
                [learner(Player::One)?, Actor::Fixed(opponent.clone())]
            }
            Mode::Rationality { learner: Player::Two, opponent } => {
                [Actor::Fixed(opponent.clone()), learner(Player::Two)?]
            }
        };
        Ok(Self::new(game, actors, seed))
    }

    pub fn game(&self) -> &MarkovGame {
        self.game
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Completed stages.
    pub fn stage(&self) -> u64 {
        self.stage
    }

    pub fn actor(&self, player: Player) -> &Actor {
        &self.actors[player.index()]
    }

    pub fn agent(&self, player: Player) -> Option<&AgentState> {
        self.actors[player.index()].agent()
    }

    pub fn schedule(&self, player: Player) -> Option<&ScheduleConfig> {
        match &self.actors[player.index()] {
            Actor::Learner { sched, .. } => Some(sched),
            Actor::Fixed(_) => None,
        }
    }

    pub fn step(&mut self) -> Result<StageRecord> {
        let s = self.state;
        let [one, two] = &mut self.actors;
        let a1 = one.act(s, &mut self.rng);
        let a2 = two.act(s, &mut self.rng);
        let r = self.game.reward1(s, a1, a2);
        one.observe(s, a1, r)?;
        two.observe(s, a2, -r)?;
        let actions = JointAction::new(a1, a2);
        let next = self.game.sample_transition(s, actions, &mut self.rng)?;
        self.stage += 1;
        self.state = next;
        Ok(StageRecord { stage: self.stage, state: s, actions, reward1: r, next_state: next })
    }

    /// Current smoothed best response of a learner at `s`, at the
    /// temperature of its latest visit (the first-visit temperature if `s`
    /// was never visited).
    pub fn smoothed_policy(&self, player: Player, s: usize) -> Option<Vec<f64>> {
        match &self.actors[player.index()] {
            Actor::Learner { agent, sched } => {
                let tau = sched.tau(agent.visits[s].max(1)).expect("count is positive");
                Some(smoothed_best_response(&agent.q_hat[s], tau).expect("temperature is positive"))
            }
            Actor::Fixed(_) => None,
        }
    }

    fn average_strategy(&self, player: Player) -> StationaryStrategy {
        match &self.actors[player.index()] {
            Actor::Learner { agent, .. } => StationaryStrategy(agent.pi_avg.clone()),
            Actor::Fixed(s) => s.clone(),
        }
    }

    /// Log row for the current stage.
    pub fn snapshot(&self, with_exploitability: bool) -> Result<LogRow> {
        let n = self.game.num_states();
        let per_player = |player: Player| -> Result<(Vec<f64>, Vec<f64>)> {
            let Some(agent) = self.agent(player) else {
                return Ok((Vec::new(), Vec::new()));
            };
            let eps = (0..n)
                .map(|s| {
                    let pi = self.smoothed_policy(player, s).expect("learner");
                    tracking_error(self.game, &agent.q_hat[s], &pi, &agent.v_hat, s, player)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((agent.v_hat.clone(), eps))
        };
        let (v1, eps1) = per_player(Player::One)?;
        let (v2, eps2) = per_player(Player::Two)?;
        let exploitability = if with_exploitability {
            let e = exploitability(
                self.game,
                &self.average_strategy(Player::One),
                &self.average_strategy(Player::Two),
                EXPLOIT_TOL,
            )?;
            e.player1.iter().zip(&e.player2).map(|(a, b)| a.max(*b)).collect()
        } else {
            Vec::new()
        };
        Ok(LogRow { stage: self.stage, state: self.state, v1, v2, eps1, eps2, exploitability })
    }
}

fn meta(game: &MarkovGame, cfg: &ExperimentConfig, seed: u64) -> Result<LogMeta> {
    let (mode, targets1, targets2) = match &cfg.mode {
        Mode::SelfPlay => {
            let cert = shapley_solve(game, DEFAULT_TOL)?;
            ("self_play".to_string(), cert.values1, cert.values2)
        }
        Mode::Rationality { learner, opponent } => {
            let br = best_response_value(game, opponent, *learner, DEFAULT_TOL)?.values;
            match learner {
                Player::One => ("rationality_one".to_string(), br, Vec::new()),
                Player::Two => ("rationality_two".to_string(), Vec::new(), br),
            }
        }
    };
    let bounds = bound_constants(game, cfg.lambda_report, cfg.schedule_for(Player::One, game.d_bound()).tau_limit())?;
    Ok(LogMeta {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.hash(),
        seed,
        mode,
        num_states: game.num_states(),
        gamma: game.gamma(),
        d_bound: game.d_bound(),
        targets1,
        targets2,
        value_radius: bounds.value_radius(),
    })
}

/// Runs one seed of the configured experiment, logging every `log_every`
/// stages and at the final stage.
pub fn run(game: &MarkovGame, cfg: &ExperimentConfig, seed: u64) -> Result<TrajectoryLog> {
    let report = cfg.validate(game);
    if !report.is_empty() {
        return Err(Error::InvalidArgument(format!("experiment config:\n{report}")));
    }
    let meta = meta(game, cfg, seed)?;
    let mut sim = Simulation::from_config(game, cfg, seed)?;
    let mut rows = Vec::with_capacity((cfg.num_stages / cfg.log_every) as usize + 1);
    for k in 1..=cfg.num_stages {
        sim.step()?;
        if k % cfg.log_every == 0 || k == cfg.num_stages {
            rows.push(sim.snapshot(cfg.exploitability)?);
        }
    }
    Ok(TrajectoryLog { meta, rows })
}

/// [`run`] for a self-play config.
pub fn run_self_play(game: &MarkovGame, cfg: &ExperimentConfig, seed: u64) -> Result<TrajectoryLog> {
    if cfg.mode != Mode::SelfPlay {
        return Err(Error::InvalidArgument("config is not in self-play mode".into()));
    }
    run(game, cfg, seed)
}

/// [`run`] for a config with a fixed opponent.
pub fn run_rationality(game: &MarkovGame, cfg: &ExperimentConfig, seed: u64) -> Result<TrajectoryLog> {
    if cfg.mode == Mode::SelfPlay {
        return Err(Error::InvalidArgument("config has no fixed opponent".into()));
    }
    run(game, cfg, seed)
}
