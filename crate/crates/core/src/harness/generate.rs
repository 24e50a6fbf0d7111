//! Random zero-sum Markov games and the four experiment presets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameDef, MarkovGame};
use crate::schedules::{ScheduleParams, TemperatureMode};

/// Attempts before [`KernelStyle::ExistentialOnly`] sampling gives up.
pub const MAX_REJECTIONS: usize = 10_000;

/// Smallest entry of a full-support kernel row (before it is capped for
/// very large state spaces).
pub const FULL_SUPPORT_FLOOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardStyle {
    /// Uniform entries scaled by `exp(s²)` with 1-based `s`, then normalized.
    ScaledExp,
    /// Uniform entries, normalized.
    Plain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelStyle {
    /// Every transition has positive probability.
    FullSupport,
    /// Sparse random supports; every state is reachable under some action
    /// sequence but not under all of them.
    ExistentialOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub num_states: usize,
    /// Actions per state, the same for both players.
    pub num_actions: usize,
    pub gamma: f64,
    pub reward_bound: f64,
    pub reward_style: RewardStyle,
    pub kernel_style: KernelStyle,
    pub seed: u64,
}

pub fn generate_game(spec: &GeneratorSpec) -> Result<MarkovGame> {
    if spec.num_states == 0 || spec.num_actions == 0 {
        return Err(Error::InvalidArgument("need at least one state and one action".into()));
    }
    if !(spec.reward_bound > 0.0) {
        return Err(Error::InvalidArgument(format!("reward bound {} must be positive", spec.reward_bound)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let reward1 = rewards(spec, &mut rng);
    let kernel = match spec.kernel_style {
        KernelStyle::FullSupport => full_support_kernel(spec, &mut rng),
        KernelStyle::ExistentialOnly => {
            if spec.num_states < 2 {
                return Err(Error::InvalidArgument("a single state always satisfies universal reachability".into()));
            }
            let mut attempt = 0;
            loop {
                if attempt == MAX_REJECTIONS {
                    return Err(Error::RejectionLimit(MAX_REJECTIONS));
                }
                attempt += 1;
                let kernel = sparse_kernel(spec, &mut rng);
                let candidate = MarkovGame::new(def(spec, reward1.clone(), kernel.clone()))?;
                if candidate.check_reach_exists().holds && !candidate.check_reach_universal().holds {
                    break kernel;
                }
            }
        }
    };
    MarkovGame::new(def(spec, reward1, kernel))
}

fn def(spec: &GeneratorSpec, reward1: Vec<Vec<Vec<f64>>>, kernel: Vec<Vec<Vec<Vec<f64>>>>) -> GameDef {
    GameDef {
        num_states: spec.num_states,
        actions1: vec![spec.num_actions; spec.num_states],
        actions2: vec![spec.num_actions; spec.num_states],
        gamma: spec.gamma,
        reward_bound: spec.reward_bound,
        reward1,
        kernel,
    }
}

fn rewards(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<Vec<f64>>> {
    let n = spec.num_actions;
    let mut r: Vec<Vec<Vec<f64>>> = (0..spec.num_states)
        .map(|s| {
            let scale = match spec.reward_style {
                RewardStyle::ScaledExp => (((s + 1) * (s + 1)) as f64).exp(),
                RewardStyle::Plain => 1.0,
            };
            (0..n).map(|_| (0..n).map(|_| scale * rng.random_range(-1.0..=1.0)).collect()).collect()
        })
        .collect();
    let max = r.iter().flatten().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    if max > 0.0 {
        r.iter_mut().flatten().flatten().for_each(|x| *x = *x / max * spec.reward_bound);
    }
    r
}

fn full_support_kernel(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<Vec<Vec<f64>>>> {
    let ns = spec.num_states;
    let floor = FULL_SUPPORT_FLOOR.min(0.5 / ns as f64);
    let row = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let w = dirichlet(rng, ns);
        let mut p: Vec<f64> = w.iter().map(|x| floor + (1.0 - ns as f64 * floor) * x).collect();
        let sum: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= sum);
        p
    };
    joint_rows(spec, rng, row)
}

fn sparse_kernel(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<Vec<Vec<f64>>>> {
    let ns = spec.num_states;
    let row = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut p = vec![0.0; ns];
        let first = rng.random_range(0..ns);
        if rng.random_bool(0.5) {
            p[first] = 1.0;
        } else {
            let second = (first + rng.random_range(1..ns)) % ns;
            let w = dirichlet(rng, 2);
            p[first] = w[0];
            p[second] = w[1];
        }
        p
    };
    joint_rows(spec, rng, row)
}

fn joint_rows(
    spec: &GeneratorSpec,
    rng: &mut ChaCha8Rng,
    mut row: impl FnMut(&mut ChaCha8Rng) -> Vec<f64>,
) -> Vec<Vec<Vec<Vec<f64>>>> {
    let n = spec.num_actions;
    (0..spec.num_states).map(|_| (0..n).map(|_| (0..n).map(|_| row(rng)).collect()).collect()).collect()
}

/// Uniform point on the simplex.
fn dirichlet(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    w
}

/// The four experiment setups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Case1,
    Case2,
    Case3,
    Case4,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Case1, Preset::Case2, Preset::Case3, Preset::Case4];

    pub fn generator(self, seed: u64) -> GeneratorSpec {
        let (num_states, num_actions, gamma, reward_bound, reward_style) = match self {
            Preset::Case1 | Preset::Case2 => (5, 3, 0.6, 1.0, RewardStyle::ScaledExp),
            Preset::Case3 | Preset::Case4 => (20, 10, 0.5, 2.0, RewardStyle::Plain),
        };
        let kernel_style = match self {
            Preset::Case1 | Preset::Case3 => KernelStyle::ExistentialOnly,
            Preset::Case2 | Preset::Case4 => KernelStyle::FullSupport,
        };
        GeneratorSpec { num_states, num_actions, gamma, reward_bound, reward_style, kernel_style, seed }
    }

    pub fn schedule(self) -> ScheduleParams {
        match self {
            Preset::Case1 => ScheduleParams {
                rho_alpha: 0.9,
                rho_beta: 1.0,
                rho: 0.0,
                tau_bar: 4.5e4,
                epsilon: 2e-4,
                mode: TemperatureMode::ToEpsilon,
            },
            Preset::Case2 => ScheduleParams {
                rho_alpha: 0.9,
                rho_beta: 1.0,
                rho: 0.7,
                tau_bar: 0.07,
                epsilon: 0.0,
                mode: TemperatureMode::ToZero,
            },
            Preset::Case3 | Preset::Case4 => ScheduleParams {
                rho_alpha: 0.9,
                rho_beta: 1.0,
                rho: 0.85,
                tau_bar: 0.1,
                epsilon: 2e-2,
                mode: if self == Preset::Case3 { TemperatureMode::MaxEpsilon } else { TemperatureMode::ToZero },
            },
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "case1" => Ok(Preset::Case1),
            "case2" => Ok(Preset::Case2),
            "case3" => Ok(Preset::Case3),
            "case4" => Ok(Preset::Case4),
            other => Err(Error::InvalidArgument(format!("unknown preset {other:?}"))),
        }
    }
}
