//! Finite two-player zero-sum discounted Markov games.
//!
//! Only player 1's reward is stored; player 2 receives its negation, so the
//! zero-sum property holds structurally. Games are immutable once built and
//! can be shared freely between simulation workers.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::ValidationReport;

/// Tolerance on `Σ p(·|s,a) = 1` for a game to count as valid.
pub const KERNEL_SUM_TOL: f64 = 1e-12;

/// Rows within this distance of summing to one are renormalized on load.
pub const RENORMALIZE_TOL: f64 = 1e-9;

/// Tolerance on strategy vectors summing to one.
pub const STRATEGY_SUM_TOL: f64 = 1e-12;

/// Plain-data form of a game, matching the JSON game file layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameDef {
    pub num_states: usize,
    pub actions1: Vec<usize>,
    pub actions2: Vec<usize>,
    pub gamma: f64,
    pub reward_bound: f64,
    /// `reward1[s][a1][a2]`
    pub reward1: Vec<Vec<Vec<f64>>>,
    /// `kernel[s][a1][a2][s']`
    pub kernel: Vec<Vec<Vec<Vec<f64>>>>,
}

/// Lists every violated game invariant. An empty report means the
/// definition can be turned into a [`MarkovGame`] without changes.
pub fn validate(def: &GameDef) -> ValidationReport {
    let mut report = ValidationReport::new();
    let n = def.num_states;
    if n == 0 {
        report.push("num_states must be positive");
    }
    if !(0.0..1.0).contains(&def.gamma) {
        report.push(format!("gamma = {} is outside [0, 1)", def.gamma));
    }
    if !(def.reward_bound > 0.0 && def.reward_bound.is_finite()) {
        report.push(format!("reward_bound = {} must be positive", def.reward_bound));
    }
    for (name, actions) in [("actions1", &def.actions1), ("actions2", &def.actions2)] {
        if actions.len() != n {
            report.push(format!("{name} has length {} but num_states = {n}", actions.len()));
        }
        for (s, &k) in actions.iter().enumerate() {
            if k == 0 {
                report.push(format!("{name}[{s}] must be positive"));
            }
        }
    }
    if def.reward1.len() != n {
        report.push(format!("reward1 has {} states, expected {n}", def.reward1.len()));
    }
    if def.kernel.len() != n {
        report.push(format!("kernel has {} states, expected {n}", def.kernel.len()));
    }
    if !report.is_empty() {
        return report;
    }

    for s in 0..n {
        let (n1, n2) = (def.actions1[s], def.actions2[s]);
        let rewards = &def.reward1[s];
        if rewards.len() != n1 || rewards.iter().any(|row| row.len() != n2) {
            report.push(format!("reward1[{s}] is not a {n1}x{n2} matrix"));
        } else {
            for (a1, row) in rewards.iter().enumerate() {
                for (a2, &r) in row.iter().enumerate() {
                    if !r.is_finite() || r.abs() > def.reward_bound {
                        report
                            .push(format!("reward1[{s}][{a1}][{a2}] = {r} exceeds reward_bound {}", def.reward_bound));
                    }
                }
            }
        }

        let rows = &def.kernel[s];
        if rows.len() != n1 || rows.iter().any(|r| r.len() != n2) {
            report.push(format!("kernel[{s}] is not a {n1}x{n2} array of rows"));
            continue;
        }
        for (a1, by_a2) in rows.iter().enumerate() {
            for (a2, probs) in by_a2.iter().enumerate() {
                if probs.len() != n {
                    report.push(format!("kernel[{s}][{a1}][{a2}] has length {}, expected {n}", probs.len()));
                    continue;
                }
                if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
                    report.push(format!("kernel[{s}][{a1}][{a2}] has invalid entry {p}"));
                    continue;
                }
                let sum: f64 = probs.iter().sum();
                if (sum - 1.0).abs() > KERNEL_SUM_TOL {
                    report.push(format!("kernel[{s}][{a1}][{a2}] sums to {sum} (deviation {:e})", sum - 1.0));
                }
            }
        }
    }
    report
}

/// Joint action of the two players at some state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JointAction {
    pub a1: usize,
    pub a2: usize,
}

impl JointAction {
    pub fn new(a1: usize, a2: usize) -> Self {
        Self { a1, a2 }
    }
}

/// Which player a quantity refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    One,
    Two,
}

impl Player {
    pub fn other(self) -> Self {
        match self {
            Player::One => Player::Two,
            Player::Two => Player::One,
        }
    }

    /// `+1` for player 1, `-1` for player 2.
    pub fn sign(self) -> f64 {
        match self {
            Player::One => 1.0,
            Player::Two => -1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Player::One => 0,
            Player::Two => 1,
        }
    }
}

/// A stationary Markov strategy for one player: a distribution over that
/// player's actions in every state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StationaryStrategy(pub Vec<Vec<f64>>);

impl StationaryStrategy {
    pub fn uniform(action_counts: &[usize]) -> Self {
        Self(action_counts.iter().map(|&n| vec![1.0 / n as f64; n]).collect())
    }

    /// Deterministic strategy playing `actions[s]` in state `s`.
    pub fn pure(action_counts: &[usize], actions: &[usize]) -> Self {
        Self(
            action_counts
                .iter()
                .zip(actions)
                .map(|(&n, &a)| {
                    let mut v = vec![0.0; n];
                    v[a] = 1.0;
                    v
                })
                .collect(),
        )
    }

    pub fn probs(&self, s: usize) -> &[f64] {
        &self.0[s]
    }

    pub fn num_states(&self) -> usize {
        self.0.len()
    }

    pub fn validate(&self, action_counts: &[usize]) -> ValidationReport {
        let mut report = ValidationReport::new();
        if self.0.len() != action_counts.len() {
            report.push(format!("strategy covers {} states, expected {}", self.0.len(), action_counts.len()));
            return report;
        }
        for (s, (p, &n)) in self.0.iter().zip(action_counts).enumerate() {
            if p.len() != n {
                report.push(format!("state {s}: {} probabilities for {n} actions", p.len()));
                continue;
            }
            if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                report.push(format!("state {s}: negative or non-finite probability"));
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > STRATEGY_SUM_TOL {
                report.push(format!("state {s}: probabilities sum to {sum}"));
            }
        }
        report
    }

    /// True if every state's distribution puts positive mass on every action.
    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|p| p.iter().all(|&x| x > 0.0))
    }
}

/// Quantifier over joint actions in the reachability fixpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantifier {
    /// Some joint action sequence reaches the target.
    Exists,
    /// Every joint action sequence reaches the target.
    Forall,
}

/// Outcome of a reachability check over all ordered state pairs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reachability {
    pub holds: bool,
    /// Largest first-hitting stage over all pairs; `None` when some pair is
    /// unreachable.
    pub horizon: Option<usize>,
    /// Pairs `(from, to)` for which the target is never hit.
    pub unreachable: Vec<(usize, usize)>,
}

/// Validated, immutable zero-sum Markov game.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovGame {
    num_states: usize,
    actions1: Vec<usize>,
    actions2: Vec<usize>,
    gamma: f64,
    reward_bound: f64,
    /// Per state, row-major `n1 x n2`.
    reward1: Vec<Vec<f64>>,
    /// Per state, `(a1 * n2 + a2) * num_states + s'`.
    kernel: Vec<Vec<f64>>,
}

impl MarkovGame {
    /// Builds a game, renormalizing kernel rows that are within
    /// [`RENORMALIZE_TOL`] of summing to one. Anything else invalid is
    /// rejected with the full report.
    pub fn new(mut def: GameDef) -> Result<Self> {
        for by_a1 in def.kernel.iter_mut() {
            for by_a2 in by_a1.iter_mut() {
                for probs in by_a2.iter_mut() {
                    let sum: f64 = probs.iter().sum();
                    if sum.is_finite() && sum > 0.0 && (sum - 1.0).abs() <= RENORMALIZE_TOL {
                        probs.iter_mut().for_each(|p| *p /= sum);
                    }
                }
            }
        }
        let report = validate(&def);
        if !report.is_empty() {
            return Err(Error::InvalidGame(report));
        }
        let n = def.num_states;
        let reward1 = def.reward1.iter().map(|m| m.iter().flatten().copied().collect()).collect();
        let kernel = def.kernel.iter().map(|m| m.iter().flatten().flatten().copied().collect::<Vec<f64>>()).collect();
        Ok(Self {
            num_states: n,
            actions1: def.actions1,
            actions2: def.actions2,
            gamma: def.gamma,
            reward_bound: def.reward_bound,
            reward1,
            kernel,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::new(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_def()).expect("game serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn to_def(&self) -> GameDef {
        let n = self.num_states;
        let mut reward1 = Vec::with_capacity(n);
        let mut kernel = Vec::with_capacity(n);
        for s in 0..n {
            let (n1, n2) = (self.actions1[s], self.actions2[s]);
            reward1.push((0..n1).map(|a1| self.reward1[s][a1 * n2..(a1 + 1) * n2].to_vec()).collect());
            kernel.push((0..n1).map(|a1| (0..n2).map(|a2| self.transition(s, a1, a2).to_vec()).collect()).collect());
        }
        GameDef {
            num_states: n,
            actions1: self.actions1.clone(),
            actions2: self.actions2.clone(),
            gamma: self.gamma,
            reward_bound: self.reward_bound,
            reward1,
            kernel,
        }
    }

    /// Re-checks the stored game; always empty for a constructed game.
    pub fn validate(&self) -> ValidationReport {
        validate(&self.to_def())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self, player: Player, s: usize) -> usize {
        match player {
            Player::One => self.actions1[s],
            Player::Two => self.actions2[s],
        }
    }

    pub fn actions1(&self) -> &[usize] {
        &self.actions1
    }

    pub fn actions2(&self) -> &[usize] {
        &self.actions2
    }

    pub fn action_counts(&self, player: Player) -> &[usize] {
        match player {
            Player::One => &self.actions1,
            Player::Two => &self.actions2,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn reward_bound(&self) -> f64 {
        self.reward_bound
    }

    /// `D = R / (1 - γ)`, a bound on every value-like quantity.
    pub fn d_bound(&self) -> f64 {
        self.reward_bound / (1.0 - self.gamma)
    }

    pub fn reward1(&self, s: usize, a1: usize, a2: usize) -> f64 {
        self.reward1[s][a1 * self.actions2[s] + a2]
    }

    pub fn reward2(&self, s: usize, a1: usize, a2: usize) -> f64 {
        -self.reward1(s, a1, a2)
    }

    pub fn reward(&self, player: Player, s: usize, a1: usize, a2: usize) -> f64 {
        match player {
            Player::One => self.reward1(s, a1, a2),
            Player::Two => self.reward2(s, a1, a2),
        }
    }

    /// Player 1's stage rewards at `s`, row-major `n1 x n2`.
    pub fn reward_matrix(&self, s: usize) -> &[f64] {
        &self.reward1[s]
    }

    /// `p(·|s, a1, a2)`.
    pub fn transition(&self, s: usize, a1: usize, a2: usize) -> &[f64] {
        let n = self.num_states;
        let j = a1 * self.actions2[s] + a2;
        &self.kernel[s][j * n..(j + 1) * n]
    }

    /// `Σ_{s'} p(s'|s,a1,a2) v[s']`.
    pub fn expected_next(&self, s: usize, a1: usize, a2: usize, v: &[f64]) -> f64 {
        self.transition(s, a1, a2).iter().zip(v).map(|(p, x)| p * x).sum()
    }

    fn check_joint(&self, s: usize, joint: JointAction) -> Result<()> {
        if s >= self.num_states {
            return Err(Error::OutOfRange(format!("state {s} of {}", self.num_states)));
        }
        if joint.a1 >= self.actions1[s] || joint.a2 >= self.actions2[s] {
            return Err(Error::OutOfRange(format!(
                "joint action ({}, {}) at state {s} with {}x{} actions",
                joint.a1, joint.a2, self.actions1[s], self.actions2[s]
            )));
        }
        Ok(())
    }

    /// Draws the next state from `p(·|s, joint)` by inverse CDF on a single
    /// uniform draw.
    pub fn sample_transition<R: Rng + ?Sized>(&self, s: usize, joint: JointAction, rng: &mut R) -> Result<usize> {
        self.check_joint(s, joint)?;
        Ok(sample_index(self.transition(s, joint.a1, joint.a2), rng))
    }

    /// Successor states with exactly positive probability.
    fn supports(&self) -> Vec<Vec<Vec<usize>>> {
        (0..self.num_states)
            .map(|s| {
                let joints = self.actions1[s] * self.actions2[s];
                (0..joints)
                    .map(|j| {
                        let row = &self.kernel[s][j * self.num_states..(j + 1) * self.num_states];
                        row.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(t, _)| t).collect()
                    })
                    .collect()
            })
            .collect()
    }

    /// `table[from][to]` is true when `to` is hit with positive probability
    /// at some stage `1..=stages` after starting in `from`, under the given
    /// quantifier over joint actions.
    pub fn hitting_table(&self, quantifier: Quantifier, stages: usize) -> Vec<Vec<bool>> {
        let n = self.num_states;
        let supports = self.supports();
        let mut table = vec![vec![false; n]; n];
        for target in 0..n {
            let mut hit = vec![false; n];
            for _ in 0..stages {
                let next = hitting_step(&supports, &hit, target, quantifier);
                if next == hit {
                    break;
                }
                hit = next;
            }
            for from in 0..n {
                table[from][target] = hit[from];
            }
        }
        table
    }

    fn reachability(&self, quantifier: Quantifier) -> Reachability {
        let n = self.num_states;
        let supports = self.supports();
        let mut horizon = 0;
        let mut unreachable = Vec::new();
        for target in 0..n {
            let mut hit = vec![false; n];
            let mut first = vec![None; n];
            for stage in 1..=n {
                let next = hitting_step(&supports, &hit, target, quantifier);
                for s in 0..n {
                    if next[s] && first[s].is_none() {
                        first[s] = Some(stage);
                    }
                }
                if next == hit {
                    break;
                }
                hit = next;
            }
            for (s, f) in first.iter().enumerate() {
                match f {
                    Some(k) => horizon = horizon.max(*k),
                    None => unreachable.push((s, target)),
                }
            }
        }
        let holds = unreachable.is_empty();
        Reachability { holds, horizon: holds.then_some(horizon), unreachable }
    }

    /// Every state can reach every state (including returning to itself)
    /// under at least one action sequence.
    pub fn check_reach_exists(&self) -> Reachability {
        self.reachability(Quantifier::Exists)
    }

    /// Every state reaches every state under every action sequence.
    pub fn check_reach_universal(&self) -> Reachability {
        self.reachability(Quantifier::Forall)
    }
}

fn hitting_step(supports: &[Vec<Vec<usize>>], hit: &[bool], target: usize, quantifier: Quantifier) -> Vec<bool> {
    supports
        .iter()
        .map(|joints| {
            let leads = |succ: &Vec<usize>| succ.iter().any(|&t| t == target || hit[t]);
            match quantifier {
                Quantifier::Exists => joints.iter().any(leads),
                Quantifier::Forall => joints.iter().all(leads),
            }
        })
        .collect()
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}
