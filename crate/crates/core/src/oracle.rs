//! Ground-truth solvers with full knowledge of the game.
//!
//! These are verification instruments only. The learning agents never call
//! into this module.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{MarkovGame, Player, StationaryStrategy};
use crate::matrix::{matrix_value, MatrixGame};

/// Default oracle tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Largest state count for which policy evaluation uses a direct solve.
pub const DIRECT_SOLVE_MAX_STATES: usize = 200;

/// Auxiliary stage game at `s` from `player`'s point of view: rows are the
/// player's own actions, columns the opponent's, and entries are
/// `r^i_s(a^1, a^2) + γ Σ_{s'} p(s'|s, a^1, a^2) v[s']`.
pub fn stage_matrix(game: &MarkovGame, player: Player, s: usize, v: &[f64]) -> MatrixGame {
    let (n1, n2) = (game.actions1()[s], game.actions2()[s]);
    let gamma = game.gamma();
    let entry = |a1: usize, a2: usize| game.reward(player, s, a1, a2) + gamma * game.expected_next(s, a1, a2, v);
    let m = match player {
        Player::One => MatrixGame::from_fn(n1, n2, entry),
        Player::Two => MatrixGame::from_fn(n2, n1, |a2, a1| entry(a1, a2)),
    };
    m.expect("action counts are positive")
}

/// One application of the Shapley operator for player 1.
pub fn shapley_operator(game: &MarkovGame, v: &[f64], tol: f64) -> Result<Vec<f64>> {
    (0..game.num_states()).map(|s| Ok(matrix_value(&stage_matrix(game, Player::One, s, v), tol)?.value)).collect()
}

/// Output of [`shapley_solve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionCertificate {
    pub values1: Vec<f64>,
    pub values2: Vec<f64>,
    /// `Q*^1[s][a1][a2]`, rebuilt from `values1`.
    pub q_star1: Vec<Vec<Vec<f64>>>,
    pub strategy1: StationaryStrategy,
    pub strategy2: StationaryStrategy,
    pub bellman_residual: f64,
    pub tolerance: f64,
    pub iterations: usize,
}

impl SolutionCertificate {
    pub fn values(&self, player: Player) -> &[f64] {
        match player {
            Player::One => &self.values1,
            Player::Two => &self.values2,
        }
    }
}

/// Shapley value iteration from `v = 0` until the sup-norm step is at most
/// `tol (1 - γ) / γ`, so the returned values are within `tol` of the fixed
/// point and the Bellman residual is at most `tol`.
pub fn shapley_solve(game: &MarkovGame, tol: f64) -> Result<SolutionCertificate> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    let gamma = game.gamma();
    let lp_tol = tol * 1e-2;
    let stop = if gamma > 0.0 { tol * (1.0 - gamma) / gamma } else { f64::INFINITY };
    let mut v = vec![0.0; game.num_states()];
    let mut iterations = 0;
    loop {
        let next = shapley_operator(game, &v, lp_tol)?;
        iterations += 1;
        let step = sup_dist(&next, &v);
        v = next;
        if step <= stop {
            break;
        }
    }

    let n = game.num_states();
    let mut q_star1 = Vec::with_capacity(n);
    let mut strategy1 = Vec::with_capacity(n);
    let mut strategy2 = Vec::with_capacity(n);
    let mut residual: f64 = 0.0;
    for s in 0..n {
        let m = stage_matrix(game, Player::One, s, &v);
        let sol = matrix_value(&m, lp_tol)?;
        residual = residual.max((sol.value - v[s]).abs());
        q_star1.push((0..m.rows()).map(|i| m.row(i).to_vec()).collect());
        strategy1.push(sol.row_strategy);
        strategy2.push(sol.col_strategy);
    }
    Ok(SolutionCertificate {
        values2: v.iter().map(|x| -x).collect(),
        values1: v,
        q_star1,
        strategy1: StationaryStrategy(strategy1),
        strategy2: StationaryStrategy(strategy2),
        bellman_residual: residual,
        tolerance: tol,
        iterations,
    })
}

fn check_strategy(game: &MarkovGame, player: Player, strat: &StationaryStrategy) -> Result<()> {
    let report = strat.validate(game.action_counts(player));
    if report.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("strategy for {player:?}: {report}")))
    }
}

/// Player 1's values `v = r_π + γ P_π v` under a stationary profile,
/// accurate to `tol` in sup-norm. Player 2's values are the negation.
pub fn policy_eval(
    game: &MarkovGame,
    strat1: &StationaryStrategy,
    strat2: &StationaryStrategy,
    tol: f64,
) -> Result<Vec<f64>> {
    check_strategy(game, Player::One, strat1)?;
    check_strategy(game, Player::Two, strat2)?;
    let n = game.num_states();
    let gamma = game.gamma();
    let mut r = vec![0.0; n];
    let mut p = vec![vec![0.0; n]; n];
    for s in 0..n {
        for (a1, &x) in strat1.probs(s).iter().enumerate() {
            for (a2, &y) in strat2.probs(s).iter().enumerate() {
                let w = x * y;
                if w == 0.0 {
                    continue;
                }
                r[s] += w * game.reward1(s, a1, a2);
                for (t, &q) in game.transition(s, a1, a2).iter().enumerate() {
                    p[s][t] += w * q;
                }
            }
        }
    }
    let apply = |v: &[f64]| -> Vec<f64> {
        (0..n).map(|s| r[s] + gamma * p[s].iter().zip(v).map(|(a, b)| a * b).sum::<f64>()).collect()
    };

    let mut v = if n <= DIRECT_SOLVE_MAX_STATES {
        let a = DMatrix::from_fn(n, n, |i, j| f64::from(u8::from(i == j)) - gamma * p[i][j]);
        let b = DVector::from_column_slice(&r);
        a.lu().solve(&b).map(|x| x.iter().copied().collect()).unwrap_or_else(|| vec![0.0; n])
    } else {
        vec![0.0; n]
    };
    // residual ≤ tol (1 - γ) bounds the error by tol
    let target = tol * (1.0 - gamma);
    loop {
        let next = apply(&v);
        let residual = sup_dist(&next, &v);
        if residual <= target {
            return Ok(v);
        }
        v = next;
    }
}

/// Best response of `for_player` against a fixed opponent strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    /// Values from `for_player`'s point of view.
    pub values: Vec<f64>,
    /// Greedy deterministic strategy.
    pub strategy: StationaryStrategy,
    pub actions: Vec<usize>,
}

/// Value iteration on the single-agent MDP induced by fixing the
/// opponent's stationary strategy. Values are within `tol` of optimal.
pub fn best_response_value(
    game: &MarkovGame,
    opponent: &StationaryStrategy,
    for_player: Player,
    tol: f64,
) -> Result<BestResponse> {
    check_strategy(game, for_player.other(), opponent)?;
    let n = game.num_states();
    let gamma = game.gamma();
    // action value of own action `a` at `s` against the opponent mix
    let backup = |s: usize, a: usize, v: &[f64]| -> f64 {
        opponent
            .probs(s)
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(b, &w)| {
                let (a1, a2) = match for_player {
                    Player::One => (a, b),
                    Player::Two => (b, a),
                };
                w * (game.reward(for_player, s, a1, a2) + gamma * game.expected_next(s, a1, a2, v))
            })
            .sum()
    };
    let sweep = |v: &[f64]| -> (Vec<f64>, Vec<usize>) {
        (0..n)
            .map(|s| {
                let own = game.num_actions(for_player, s);
                let mut best = (f64::NEG_INFINITY, 0);
                for a in 0..own {
                    let q = backup(s, a, v);
                    if q > best.0 {
                        best = (q, a);
                    }
                }
                best
            })
            .unzip()
    };
    let stop = if gamma > 0.0 { tol * (1.0 - gamma) / gamma } else { f64::INFINITY };
    let mut v = vec![0.0; n];
    loop {
        let (next, _) = sweep(&v);
        let step = sup_dist(&next, &v);
        v = next;
        if step <= stop {
            break;
        }
    }
    let (_, actions) = sweep(&v);
    Ok(BestResponse {
        strategy: StationaryStrategy::pure(game.action_counts(for_player), &actions),
        values: v,
        actions,
    })
}

/// Per-state exploitability gaps of a profile for each player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exploitability {
    pub player1: Vec<f64>,
    pub player2: Vec<f64>,
}

impl Exploitability {
    pub fn max(&self) -> f64 {
        self.player1.iter().chain(&self.player2).fold(f64::NEG_INFINITY, |m, x| m.max(*x))
    }
}

/// Best-response value minus the profile's own value, per player and state.
pub fn exploitability(
    game: &MarkovGame,
    strat1: &StationaryStrategy,
    strat2: &StationaryStrategy,
    tol: f64,
) -> Result<Exploitability> {
    let v1 = policy_eval(game, strat1, strat2, tol)?;
    let br1 = best_response_value(game, strat2, Player::One, tol)?;
    let br2 = best_response_value(game, strat1, Player::Two, tol)?;
    Ok(Exploitability {
        player1: br1.values.iter().zip(&v1).map(|(b, v)| b - v).collect(),
        player2: br2.values.iter().zip(&v1).map(|(b, v)| b + v).collect(),
    })
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
