//! One player's two-timescale Q-learning.
//!
//! An agent only ever sees the current state, its own action and its own
//! reward. It keeps a local Q estimate per state (fast timescale), a value
//! estimate per state (slow timescale), per-state visit counts and a
//! weighted time average of its smoothed best responses.
//!
//! A stage is split in two calls so the harness can sample actions in
//! between:
//!
//! 1. [`AgentState::begin_stage`] applies the deferred Q update for the
//!    previous stage (which needed the current state's value as a one-step
//!    lookahead), bumps the visit count and returns the smoothed best
//!    response to act from.
//! 2. [`AgentState::finish_stage`] takes the realised action and reward,
//!    moves the value estimate and the average strategy, and records what
//!    the next deferred update needs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedules::ScheduleConfig;

/// Softmax of `q / temperature`, the entropy-regularized best response.
pub fn smoothed_best_response(q: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature {temperature} must be positive")));
    }
    if q.is_empty() {
        return Err(Error::InvalidArgument("empty action set".into()));
    }
    let mut out = vec![0.0; q.len()];
    softmax_into(q, temperature, &mut out);
    Ok(out)
}

pub(crate) fn softmax_into(q: &[f64], temperature: f64, out: &mut [f64]) {
    let max = q.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(q) {
        // floor keeps every action in the support even if exp underflows
        *o = ((x - max) / temperature).exp().max(f64::MIN_POSITIVE);
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

/// `τ log Σ exp(q/τ)`, the value of the entropy-regularized maximization.
pub fn log_sum_exp(q: &[f64], temperature: f64) -> f64 {
    let max = q.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let sum: f64 = q.iter().map(|&x| ((x - max) / temperature).exp()).sum();
    max + temperature * sum.ln()
}

/// What the deferred Q update needs from the previous stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pending {
    pub prev_state: usize,
    pub prev_action: usize,
    /// Probability of `prev_action` at the moment it was drawn.
    pub prev_action_prob: f64,
    /// Visit count of `prev_state` at that stage (after its increment).
    pub prev_alpha_count: u64,
    pub prev_reward: f64,
    /// Value estimate of `prev_state` before that stage's value update; the
    /// lookahead uses it if the game stays in the same state.
    pub prev_value: f64,
}

/// The deferred Q update applied at the start of the latest stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AppliedUpdate {
    pub state: usize,
    pub action: usize,
    /// Unclamped normalized step `α_c / π̄[a]`.
    pub ratio: f64,
    /// Applied step `min{1, ratio}`.
    pub step: f64,
}

impl AppliedUpdate {
    pub fn clamped(&self) -> bool {
        self.ratio > 1.0
    }
}

/// One agent's full local view. Serializes to JSON for checkpointing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub q_hat: Vec<Vec<f64>>,
    pub v_hat: Vec<f64>,
    pub visits: Vec<u64>,
    pub pi_avg: Vec<Vec<f64>>,
    pub pending: Option<Pending>,
    pub d_bound: f64,
    pub gamma: f64,
    #[serde(skip)]
    pi_bar: Vec<f64>,
    #[serde(skip)]
    stage_state: Option<usize>,
    #[serde(skip)]
    last_update: Option<AppliedUpdate>,
}

impl AgentState {
    /// Zero-initialized estimates and uniform average strategy.
    pub fn new(own_actions: &[usize], gamma: f64, d_bound: f64) -> Self {
        Self {
            q_hat: own_actions.iter().map(|&n| vec![0.0; n]).collect(),
            v_hat: vec![0.0; own_actions.len()],
            visits: vec![0; own_actions.len()],
            pi_avg: own_actions.iter().map(|&n| vec![1.0 / n as f64; n]).collect(),
            pending: None,
            d_bound,
            gamma,
            pi_bar: Vec::new(),
            stage_state: None,
            last_update: None,
        }
    }

    /// Same as [`AgentState::new`] with constant initial estimates, which
    /// must lie in `[-D, D]`.
    pub fn with_initial(own_actions: &[usize], gamma: f64, d_bound: f64, q0: f64, v0: f64) -> Result<Self> {
        if !(q0.abs() <= d_bound && v0.abs() <= d_bound) {
            return Err(Error::InvalidArgument(format!(
                "initial estimates q0 = {q0}, v0 = {v0} must lie in [-{d_bound}, {d_bound}]"
            )));
        }
        let mut agent = Self::new(own_actions, gamma, d_bound);
        agent.q_hat.iter_mut().flatten().for_each(|q| *q = q0);
        agent.v_hat.iter_mut().for_each(|v| *v = v0);
        Ok(agent)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("agent state serializes")
    }

    pub fn num_states(&self) -> usize {
        self.v_hat.len()
    }

    pub fn num_actions(&self, s: usize) -> usize {
        self.q_hat[s].len()
    }

    /// Smoothed best response of the current stage.
    pub fn pi_bar(&self) -> &[f64] {
        &self.pi_bar
    }

    pub fn last_update(&self) -> Option<AppliedUpdate> {
        self.last_update
    }

    /// Observes the state, applies the deferred update from the previous
    /// stage and refreshes the belief. Returns the distribution to draw the
    /// own action from.
    pub fn begin_stage(&mut self, state: usize, sched: &ScheduleConfig) -> &[f64] {
        assert!(state < self.num_states(), "state {state} out of range");
        self.last_update = None;
        if let Some(p) = self.pending.take() {
            let lookahead = if p.prev_state == state { p.prev_value } else { self.v_hat[state] };
            let target = p.prev_reward + self.gamma * lookahead;
            let ratio = sched.alpha_at(p.prev_alpha_count as f64) / p.prev_action_prob;
            let step = ratio.min(1.0);
            let q = &mut self.q_hat[p.prev_state][p.prev_action];
            if step == 1.0 {
                *q = target;
            } else {
                *q += step * (target - *q);
            }
            self.last_update = Some(AppliedUpdate { state: p.prev_state, action: p.prev_action, ratio, step });
        }

        self.visits[state] += 1;
        let tau = sched.tau_at(self.visits[state] as f64);
        self.pi_bar.resize(self.q_hat[state].len(), 0.0);
        softmax_into(&self.q_hat[state], tau, &mut self.pi_bar);
        self.stage_state = Some(state);
        &self.pi_bar
    }

    /// Closes a stage: value and average-strategy updates after the own
    /// action was drawn from [`AgentState::pi_bar`] and the own reward
    /// observed.
    pub fn finish_stage(&mut self, state: usize, action: usize, reward: f64, sched: &ScheduleConfig) -> Result<()> {
        if self.stage_state != Some(state) {
            return Err(Error::InvalidArgument(format!("finish_stage({state}) without a matching begin_stage")));
        }
        if action >= self.pi_bar.len() {
            return Err(Error::OutOfRange(format!("action {action} at state {state}")));
        }
        self.stage_state = None;
        let c = self.visits[state] as f64;
        let beta = sched.beta_at(c);
        let alpha = sched.alpha_at(c);

        let expected: f64 = self.pi_bar.iter().zip(&self.q_hat[state]).map(|(p, q)| p * q).sum();
        let prev_value = self.v_hat[state];
        let v = &mut self.v_hat[state];
        if beta == 1.0 {
            *v = expected;
        } else {
            *v += beta * (expected - *v);
        }
        for (avg, &p) in self.pi_avg[state].iter_mut().zip(&self.pi_bar) {
            *avg += alpha * (p - *avg);
        }
        self.pending = Some(Pending {
            prev_state: state,
            prev_action: action,
            prev_action_prob: self.pi_bar[action],
            prev_alpha_count: self.visits[state],
            prev_reward: reward,
            prev_value,
        });
        Ok(())
    }

    /// True when `α_c exp(2D/τ_c) ≤ 1/|A|` at the state's current count,
    /// so the `min{1, ·}` clamp cannot bind for updates made at this count.
    pub fn reduced_update_active(&self, sched: &ScheduleConfig, state: usize) -> bool {
        let c = self.visits[state];
        if c == 0 {
            return false;
        }
        let ln_n = (self.num_actions(state) as f64).ln();
        sched.ln_clamp_factor(c).map(|x| x <= -ln_n).unwrap_or(false)
    }

    /// Exact check of `‖q̂_s‖_∞ ≤ D` and `|v̂_s| ≤ D` over all states.
    pub fn within_bounds(&self) -> bool {
        let d = self.d_bound;
        self.q_hat.iter().flatten().all(|q| q.abs() <= d) && self.v_hat.iter().all(|v| v.abs() <= d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::{prop2_threshold, ScheduleParams, TemperatureMode};
    use proptest::prelude::*;

    fn sched(mode: TemperatureMode, d: f64) -> ScheduleConfig {
        ScheduleParams { rho_alpha: 0.9, rho_beta: 1.0, rho: 0.7, tau_bar: 0.5, epsilon: 0.05, mode }.with_d_bound(d)
    }

    #[test]
    fn softmax_of_equal_entries_is_uniform() {
        for tau in [1e-3, 0.7, 50.0] {
            let p = smoothed_best_response(&[0.0, 0.0, 0.0], tau).unwrap();
            for x in p {
                assert!((x - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn softmax_two_actions() {
        let p = smoothed_best_response(&[1.0, 0.0], 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((p[0] - e / (1.0 + e)).abs() < 1e-15);
        assert!((p[0] - 0.731_058_578_630_004_9).abs() < 1e-6);
        assert!((p[1] - 0.268_941_421_369_995_1).abs() < 1e-6);
    }

    #[test]
    fn softmax_rejects_nonpositive_temperature() {
        assert!(smoothed_best_response(&[1.0], 0.0).is_err());
        assert!(smoothed_best_response(&[1.0], -1.0).is_err());
    }

    #[test]
    fn softmax_shift_exact_for_representable_shift() {
        let q = [0.5, -0.25, 1.0, 0.0];
        let a = smoothed_best_response(&q, 0.3).unwrap();
        let shifted: Vec<f64> = q.iter().map(|x| x + 3.0).collect();
        assert_eq!(a, smoothed_best_response(&shifted, 0.3).unwrap());
    }

    proptest! {
        #[test]
        fn softmax_is_a_positive_distribution(
            q in prop::collection::vec(-5.0f64..5.0, 1..8),
            tau in 1e-3f64..10.0,
            shift in -5.0f64..5.0,
        ) {
            let p = smoothed_best_response(&q, tau).unwrap();
            prop_assert!(p.iter().all(|&x| x > 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15 * q.len() as f64 + 1e-16);
            let shifted: Vec<f64> = q.iter().map(|x| x + shift).collect();
            let p2 = smoothed_best_response(&shifted, tau).unwrap();
            for (a, b) in p.iter().zip(&p2) {
                prop_assert!((a - b).abs() <= 1e-9 * a.max(*b) + 1e-300);
            }
        }

        #[test]
        fn log_sum_exp_entropy_bounds(q in prop::collection::vec(-5.0f64..5.0, 1..8), tau in 1e-3f64..10.0) {
            let max = q.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let lse = log_sum_exp(&q, tau);
            prop_assert!(lse >= max - 1e-12);
            prop_assert!(lse <= max + tau * (q.len() as f64).ln() + 1e-12);
        }
    }

    #[test]
    fn first_stage_only_counts_and_acts() {
        let s = sched(TemperatureMode::ToZero, 2.0);
        let mut a = AgentState::new(&[3, 2], 0.5, 2.0);
        let pi = a.begin_stage(1, &s).to_vec();
        assert_eq!(pi, vec![0.5, 0.5]);
        assert_eq!(a.visits, vec![0, 1]);
        assert!(a.last_update().is_none());
        assert_eq!(a.q_hat, vec![vec![0.0; 3], vec![0.0; 2]]);
    }

    #[test]
    fn first_visit_value_is_full_step() {
        let s = sched(TemperatureMode::ToEpsilon, 2.0);
        let mut a = AgentState::with_initial(&[2], 0.5, 2.0, 0.3, -1.0).unwrap();
        a.q_hat[0] = vec![0.7, -0.1];
        let pi = a.begin_stage(0, &s).to_vec();
        a.finish_stage(0, 1, 0.4, &s).unwrap();
        let expected = pi[0] * 0.7 + pi[1] * -0.1;
        assert_eq!(a.v_hat[0], expected);
        let p = a.pending.clone().unwrap();
        assert_eq!(p.prev_alpha_count, 1);
        assert_eq!(p.prev_action_prob, pi[1]);
        assert_eq!(p.prev_value, -1.0);
        // average strategy took a full step too
        assert_eq!(a.pi_avg[0], pi);
    }

    #[test]
    fn saturated_step_replaces_entry() {
        let s = sched(TemperatureMode::ToZero, 2.0);
        let mut a = AgentState::new(&[2, 2], 0.5, 2.0);
        a.v_hat = vec![0.0, 1.25];
        a.begin_stage(0, &s);
        a.finish_stage(0, 1, -0.75, &s).unwrap();
        a.begin_stage(1, &s);
        let u = a.last_update().unwrap();
        assert_eq!(u.step, 1.0);
        assert_eq!(a.q_hat[0][1], -0.75 + 0.5 * 1.25);
    }

    #[test]
    fn repeated_state_uses_value_from_before_its_update() {
        let s = sched(TemperatureMode::ToZero, 2.0);
        let mut a = AgentState::with_initial(&[2], 0.5, 2.0, 1.0, 0.5).unwrap();
        a.begin_stage(0, &s);
        a.finish_stage(0, 0, 0.2, &s).unwrap();
        // v moved to <pi, q> = 1.0, the lookahead still uses 0.5
        assert_eq!(a.v_hat[0], 1.0);
        a.begin_stage(0, &s);
        assert_eq!(a.q_hat[0][0], 0.2 + 0.5 * 0.5);
    }

    #[test]
    fn single_action_player_uses_plain_alpha() {
        let s = sched(TemperatureMode::ToEpsilon, 2.0);
        let mut a = AgentState::new(&[1], 0.5, 2.0);
        for k in 1..=5u64 {
            assert_eq!(a.begin_stage(0, &s), &[1.0]);
            if k > 1 {
                let u = a.last_update().unwrap();
                assert_eq!(u.step, s.alpha(k - 1).unwrap());
            }
            a.finish_stage(0, 0, 1.0, &s).unwrap();
        }
    }

    #[test]
    fn degenerate_game_converges_to_discounted_reward() {
        // with β_c = 1/c the error only decays like c^-(1-γ)
        let mut s = sched(TemperatureMode::ToEpsilon, 2.0);
        s.rho_alpha = 0.6;
        s.rho_beta = 0.7;
        let (r, gamma) = (0.8, 0.5);
        let mut a = AgentState::new(&[1], gamma, r / (1.0 - gamma));
        for _ in 0..100_000 {
            a.begin_stage(0, &s);
            a.finish_stage(0, 0, r, &s).unwrap();
            assert!(a.within_bounds());
        }
        assert!((a.v_hat[0] - r / (1.0 - gamma)).abs() < 1e-3, "{}", a.v_hat[0]);
    }

    #[test]
    fn finish_without_begin_is_rejected() {
        let s = sched(TemperatureMode::ToZero, 2.0);
        let mut a = AgentState::new(&[2], 0.5, 2.0);
        assert!(a.finish_stage(0, 0, 0.0, &s).is_err());
        a.begin_stage(0, &s);
        assert!(a.finish_stage(0, 2, 0.0, &s).is_err());
    }

    #[test]
    fn initial_estimates_must_be_bounded() {
        assert!(AgentState::with_initial(&[2], 0.5, 2.0, 2.5, 0.0).is_err());
        assert!(AgentState::with_initial(&[2], 0.5, 2.0, 0.0, -2.0).is_ok());
    }

    #[test]
    fn checkpoint_round_trip_keeps_pending() {
        let s = sched(TemperatureMode::ToZero, 2.0);
        let mut a = AgentState::new(&[2, 3], 0.5, 2.0);
        a.begin_stage(1, &s);
        a.finish_stage(1, 2, 0.5, &s).unwrap();
        let mut b = AgentState::from_json(&a.to_json()).unwrap();
        assert_eq!(b.pending, a.pending);
        a.begin_stage(0, &s);
        b.begin_stage(0, &s);
        assert_eq!(a.q_hat, b.q_hat);
        assert_eq!(a.pi_bar(), b.pi_bar());
    }

    #[test]
    fn reduced_update_at_first_visit_depends_on_parameters() {
        // α_1 exp(2D/τ̄) with D = 2, τ̄ = 0.5 is e^8 > 1/2
        let s = sched(TemperatureMode::ToZero, 2.0);
        let mut a = AgentState::new(&[2], 0.5, 2.0);
        a.begin_stage(0, &s);
        assert!(!a.reduced_update_active(&s, 0));
    }

    #[test]
    fn reduced_update_from_threshold_on() {
        let mut s = sched(TemperatureMode::ToZero, 0.2);
        s.tau_bar = 5.0;
        let t = prop2_threshold(&s, 2, 3).unwrap();
        let start = t.visits.unwrap();
        let mut a = AgentState::new(&[2], 0.5, 0.2);
        a.visits[0] = start - 1;
        for _ in 0..5000 {
            a.begin_stage(0, &s);
            assert!(a.reduced_update_active(&s, 0));
            a.finish_stage(0, 0, 0.0, &s).unwrap();
        }
    }

    #[test]
    fn clamp_never_binds_once_reduced_update_is_active() {
        let mut s = sched(TemperatureMode::ToZero, 1.0);
        s.tau_bar = 2.0;
        let mut a = AgentState::new(&[3], 0.0, 1.0);
        let mut checked = 0;
        for k in 0..20_000u64 {
            let active = a.reduced_update_active(&s, 0);
            a.begin_stage(0, &s);
            if let (true, Some(u)) = (active, a.last_update()) {
                assert!(!u.clamped());
                checked += 1;
            }
            let action = (k % 3) as usize;
            a.finish_stage(0, action, if action == 0 { 1.0 } else { -1.0 }, &s).unwrap();
        }
        assert!(checked > 0);
    }
}
