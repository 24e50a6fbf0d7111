//! Harness-side instruments that need the full game: tracking error,
//! zero-sum drift, the neighbourhood bound constants and a numerical check
//! of Lyapunov descent along the continuous-time local flow.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{MarkovGame, Player};
use crate::learner::{log_sum_exp, softmax_into, AgentState};
use crate::matrix::{dot, matrix_value, MatrixGame};
use crate::oracle::{stage_matrix, DEFAULT_TOL};

/// `⟨π̄, q̂_s⟩ - val(Q̂_s)`, where `Q̂_s` is built from the true reward and
/// kernel and the agent's own value estimates.
pub fn tracking_error(
    game: &MarkovGame,
    q_hat: &[f64],
    pi_bar: &[f64],
    v_hat: &[f64],
    state: usize,
    player: Player,
) -> Result<f64> {
    let m = stage_matrix(game, player, state, v_hat);
    if q_hat.len() != m.rows() || pi_bar.len() != m.rows() {
        return Err(Error::InvalidArgument(format!(
            "{} local values for {} actions at state {state}",
            q_hat.len(),
            m.rows()
        )));
    }
    Ok(dot(pi_bar, q_hat) - matrix_value(&m, DEFAULT_TOL)?.value)
}

/// `v̂¹_s + v̂²_s` per state.
pub fn zero_sum_drift(agent1: &AgentState, agent2: &AgentState) -> Vec<f64> {
    agent1.v_hat.iter().zip(&agent2.v_hat).map(|(a, b)| a + b).collect()
}

/// Asymptotic bound on the drift, `λ ξ τ / (1 - λγ)`.
pub fn drift_bound(lambda: f64, xi: f64, tau: f64, gamma: f64) -> f64 {
    lambda * xi * tau / (1.0 - lambda * gamma)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub xi: f64,
    pub lambda: f64,
    pub g_value: f64,
    pub h_value: f64,
    /// Infimum of `g` over `λ ∈ (1, 1/γ)`, attained as `λ → 1`.
    pub g_plus: f64,
    pub h_plus: f64,
    pub epsilon: f64,
}

impl BoundConstants {
    /// Half-width `ε ξ g⁺` of the value neighbourhood.
    pub fn value_radius(&self) -> f64 {
        self.epsilon * self.xi * self.g_plus
    }

    /// Half-width `ε ξ h⁺` of the exploitability neighbourhood.
    pub fn strategy_radius(&self) -> f64 {
        self.epsilon * self.xi * self.h_plus
    }
}

pub fn g_of(gamma: f64, lambda: f64) -> f64 {
    (2.0 + lambda - lambda * gamma) / ((1.0 - lambda * gamma) * (1.0 - gamma))
}

pub fn h_of(gamma: f64, lambda: f64) -> f64 {
    (4.0 * gamma * g_of(gamma, lambda) + 2.0 * (1.0 + lambda) / (1.0 - lambda * gamma)) / (1.0 - gamma)
}

/// `max_s log(|A¹_s| |A²_s|)`.
pub fn xi_of(game: &MarkovGame) -> f64 {
    game.actions1().iter().zip(game.actions2()).map(|(&n1, &n2)| ((n1 * n2) as f64).ln()).fold(0.0, f64::max)
}

pub fn bound_constants(game: &MarkovGame, lambda: f64, epsilon: f64) -> Result<BoundConstants> {
    let gamma = game.gamma();
    if !(lambda > 1.0 && lambda * gamma < 1.0) {
        return Err(Error::OutOfRange(format!("lambda {lambda} outside (1, 1/{gamma})")));
    }
    Ok(BoundConstants {
        xi: xi_of(game),
        lambda,
        g_value: g_of(gamma, lambda),
        h_value: h_of(gamma, lambda),
        g_plus: (3.0 - gamma) / ((1.0 - gamma) * (1.0 - gamma)),
        h_plus: h_of(gamma, 1.0),
        epsilon,
    })
}

/// State of the local flow on one stage game. `big_q1` is `|A¹|×|A²|` and
/// `big_q2` is `|A²|×|A¹|`, each with the owner's actions as rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub pi1: Vec<f64>,
    pub pi2: Vec<f64>,
    pub big_q1: MatrixGame,
    pub big_q2: MatrixGame,
    pub tau: f64,
    pub lambda: f64,
}

impl FlowState {
    pub fn validate(&self) -> Result<()> {
        let (n1, n2) = (self.big_q1.rows(), self.big_q1.cols());
        if self.big_q2.rows() != n2 || self.big_q2.cols() != n1 {
            return Err(Error::InvalidArgument("payoff matrices have inconsistent shapes".into()));
        }
        if self.q1.len() != n1 || self.pi1.len() != n1 || self.q2.len() != n2 || self.pi2.len() != n2 {
            return Err(Error::InvalidArgument("vector lengths do not match the payoff matrices".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidArgument(format!("temperature {} must be positive", self.tau)));
        }
        for pi in [&self.pi1, &self.pi2] {
            if pi.iter().any(|&p| p < 0.0) || (pi.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument("strategy is not on the simplex".into()));
            }
        }
        Ok(())
    }

    /// `‖Q¹ + (Q²)ᵀ‖_max + τ log(|A¹||A²|)`.
    pub fn zeta(&self) -> f64 {
        let (n1, n2) = (self.big_q1.rows(), self.big_q1.cols());
        let mut dev: f64 = 0.0;
        for i in 0..n1 {
            for j in 0..n2 {
                dev = dev.max((self.big_q1.get(i, j) + self.big_q2.get(j, i)).abs());
            }
        }
        dev + self.tau * ((n1 * n2) as f64).ln()
    }

    /// `Σ_i LSE_τ(q^i) - λζ`.
    pub fn lse_bracket(&self) -> f64 {
        log_sum_exp(&self.q1, self.tau) + log_sum_exp(&self.q2, self.tau) - self.lambda * self.zeta()
    }

    /// `Σ_i ‖q^i - Q^i π^{-i}‖²`.
    pub fn belief_residual(&self) -> f64 {
        let sq = |q: &[f64], m: &MatrixGame, pi: &[f64]| -> f64 {
            q.iter().zip(m.mul_col(pi)).map(|(a, b)| (a - b) * (a - b)).sum()
        };
        sq(&self.q1, &self.big_q1, &self.pi2) + sq(&self.q2, &self.big_q2, &self.pi1)
    }

    /// Sup-norm of the flow's vector field at this state.
    pub fn derivative_norm(&self) -> f64 {
        let x = self.pack();
        let mut dx = vec![0.0; x.len()];
        self.field(&x, &mut dx);
        dx.iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    fn dims(&self) -> (usize, usize) {
        (self.q1.len(), self.q2.len())
    }

    fn pack(&self) -> Vec<f64> {
        [&self.q1[..], &self.q2, &self.pi1, &self.pi2].concat()
    }

    fn unpack(&mut self, x: &[f64]) {
        let (n1, n2) = self.dims();
        self.q1.copy_from_slice(&x[..n1]);
        self.q2.copy_from_slice(&x[n1..n1 + n2]);
        self.pi1.copy_from_slice(&x[n1 + n2..2 * n1 + n2]);
        self.pi2.copy_from_slice(&x[2 * n1 + n2..]);
    }

    fn field(&self, x: &[f64], dx: &mut [f64]) {
        let (n1, n2) = self.dims();
        let (q1, rest) = x.split_at(n1);
        let (q2, rest) = rest.split_at(n2);
        let (pi1, pi2) = rest.split_at(n1);
        let mut br1 = vec![0.0; n1];
        let mut br2 = vec![0.0; n2];
        softmax_into(q1, self.tau, &mut br1);
        softmax_into(q2, self.tau, &mut br2);
        let (dq1, rest) = dx.split_at_mut(n1);
        let (dq2, rest) = rest.split_at_mut(n2);
        let (dpi1, dpi2) = rest.split_at_mut(n1);
        for (i, d) in dq1.iter_mut().enumerate() {
            *d = dot(self.big_q1.row(i), &br2) - q1[i];
        }
        for (j, d) in dq2.iter_mut().enumerate() {
            *d = dot(self.big_q2.row(j), &br1) - q2[j];
        }
        for i in 0..n1 {
            dpi1[i] = br1[i] - pi1[i];
        }
        for j in 0..n2 {
            dpi2[j] = br2[j] - pi2[j];
        }
    }
}

/// `[Σ_i LSE_τ(q^i) - λζ]_+ + Σ_i ‖q^i - Q^i π^{-i}‖²`.
pub fn lyapunov_value(fs: &FlowState) -> Result<f64> {
    if !(fs.tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature {} must be positive", fs.tau)));
    }
    Ok(fs.lse_bracket().max(0.0) + fs.belief_residual())
}

/// Classical RK4 on the flow with `π` renormalized after every step.
/// Calls `observe(t, state)` at `t = 0` and after each step.
pub fn integrate_flow_with(
    fs: &FlowState,
    horizon: f64,
    dt: f64,
    mut observe: impl FnMut(f64, &FlowState),
) -> Result<FlowState> {
    if !(dt > 0.0 && horizon >= dt) {
        return Err(Error::InvalidArgument(format!("need 0 < dt ≤ horizon, got dt = {dt}, horizon = {horizon}")));
    }
    fs.validate()?;
    let (n1, n2) = fs.dims();
    let mut state = fs.clone();
    let mut x = state.pack();
    let len = x.len();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    let mut tmp = vec![0.0; len];
    let steps = (horizon / dt).round() as usize;
    observe(0.0, &state);
    for step in 1..=steps {
        state.field(&x, &mut k1);
        axpy(&x, 0.5 * dt, &k1, &mut tmp);
        state.field(&tmp, &mut k2);
        axpy(&x, 0.5 * dt, &k2, &mut tmp);
        state.field(&tmp, &mut k3);
        axpy(&x, dt, &k3, &mut tmp);
        state.field(&tmp, &mut k4);
        for i in 0..len {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        renormalize(&mut x[n1 + n2..2 * n1 + n2]);
        renormalize(&mut x[2 * n1 + n2..]);
        state.unpack(&x);
        observe(step as f64 * dt, &state);
    }
    Ok(state)
}

/// Full trajectory of [`integrate_flow_with`], including the initial state.
pub fn integrate_flow(fs: &FlowState, horizon: f64, dt: f64) -> Result<Vec<FlowState>> {
    let mut traj = Vec::new();
    integrate_flow_with(fs, horizon, dt, |_, s| traj.push(s.clone()))?;
    Ok(traj)
}

fn axpy(x: &[f64], h: f64, k: &[f64], out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(x).zip(k) {
        *o = a + h * b;
    }
}

fn renormalize(p: &mut [f64]) {
    p.iter_mut().for_each(|x| *x = x.max(0.0));
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
}

/// Outcome of a descent check along one trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentReport {
    pub initial: f64,
    pub terminal: f64,
    /// Largest one-step increase of `V` (negative if it always fell).
    pub worst_increase: f64,
    /// Steps with `V > positive_floor` whose rate `ΔV/dt` was not below
    /// `-strict_rate`.
    pub strict_violations: usize,
    pub steps: usize,
}

impl DescentReport {
    pub fn passes(&self, slack: f64) -> bool {
        self.worst_increase <= slack && self.strict_violations == 0
    }
}

pub const DESCENT_SLACK: f64 = 1e-9;
pub const POSITIVE_FLOOR: f64 = 1e-6;
pub const STRICT_RATE: f64 = 1e-10;

pub fn check_descent(fs: &FlowState, horizon: f64, dt: f64) -> Result<DescentReport> {
    let initial = lyapunov_value(fs)?;
    let mut prev = initial;
    let mut report =
        DescentReport { initial, terminal: initial, worst_increase: f64::NEG_INFINITY, strict_violations: 0, steps: 0 };
    integrate_flow_with(fs, horizon, dt, |t, s| {
        if t == 0.0 {
            return;
        }
        let v = s.lse_bracket().max(0.0) + s.belief_residual();
        let delta = v - prev;
        report.worst_increase = report.worst_increase.max(delta);
        if prev > POSITIVE_FLOOR && delta / dt >= -STRICT_RATE {
            report.strict_violations += 1;
        }
        report.steps += 1;
        prev = v;
    })?;
    report.terminal = prev;
    Ok(report)
}

/// Random flow instance with `‖Q^i‖_max ≤ d`. `Q²` is `-(Q¹)ᵀ` plus a
/// uniform perturbation of size `perturbation`, clipped to the bound.
pub fn random_flow_state<R: Rng + ?Sized>(
    rng: &mut R,
    n1: usize,
    n2: usize,
    d: f64,
    perturbation: f64,
    tau: f64,
    lambda: f64,
) -> FlowState {
    let big_q1 = MatrixGame::from_fn(n1, n2, |_, _| rng.random_range(-d..=d)).expect("positive dims");
    let big_q2 = MatrixGame::from_fn(n2, n1, |j, i| {
        let noise = if perturbation > 0.0 { rng.random_range(-perturbation..=perturbation) } else { 0.0 };
        (-big_q1.get(i, j) + noise).clamp(-d, d)
    })
    .expect("positive dims");
    let mut simplex = |n: usize| -> Vec<f64> {
        let mut p: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        renormalize(&mut p);
        p
    };
    let pi1 = simplex(n1);
    let pi2 = simplex(n2);
    let q1 = (0..n1).map(|_| rng.random_range(-d..=d)).collect();
    let q2 = (0..n2).map(|_| rng.random_range(-d..=d)).collect();
    FlowState { q1, q2, pi1, pi2, big_q1, big_q2, tau, lambda }
}
