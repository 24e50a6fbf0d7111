//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails.

#![allow(clippy::needless_range_loop)]

use std::time::{Duration, Instant};

use decq_core::diagnostics::{check_descent, drift_bound, random_flow_state, xi_of, DESCENT_SLACK};
use decq_core::game::GameDef;
use decq_core::harness::{
    generate_game, run, run_rationality, ExperimentConfig, GameSource, GeneratorSpec, KernelStyle, Mode, Preset,
    RewardStyle, Simulation,
};
use decq_core::oracle::stage_matrix;
use decq_core::schedules::{ScheduleParams, TemperatureMode};
use decq_core::{matrix_value, prop2_threshold, shapley_solve, MarkovGame, MatrixGame, Player, StationaryStrategy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let o = f();
    (o, start.elapsed())
}

/// Row player's guaranteed payoff maximized over a grid on its simplex.
fn grid_value(m: &MatrixGame, step: usize) -> f64 {
    fn rec(m: &MatrixGame, step: usize, i: usize, left: usize, x: &mut Vec<f64>, best: &mut f64) {
        if i + 1 == m.rows() {
            x[i] = left as f64 / step as f64;
            let worst = m.mul_row(x).into_iter().fold(f64::INFINITY, f64::min);
            *best = best.max(worst);
            return;
        }
        for k in 0..=left {
            x[i] = k as f64 / step as f64;
            rec(m, step, i + 1, left - k, x, best);
        }
    }
    let mut best = f64::NEG_INFINITY;
    rec(m, step, 0, step, &mut vec![0.0; m.rows()], &mut best);
    best
}

/// Value by enumerating square equalizing supports of both players.
fn support_enumeration_value(m: &MatrixGame) -> f64 {
    let subsets = |n: usize, k: usize| -> Vec<Vec<usize>> {
        (0u32..1 << n)
            .filter(|b| b.count_ones() as usize == k)
            .map(|b| (0..n).filter(|i| b >> i & 1 == 1).collect())
            .collect()
    };
    // solves [B 1; 1ᵀ 0] [z; -v] = [0; 1] for the weights z and value v
    let equalize = |b: &dyn Fn(usize, usize) -> f64, k: usize| -> Option<(Vec<f64>, f64)> {
        let n = k + 1;
        let mut a = vec![vec![0.0; n + 1]; n];
        for r in 0..k {
            for c in 0..k {
                a[r][c] = b(r, c);
            }
            a[r][k] = -1.0;
        }
        for c in 0..k {
            a[k][c] = 1.0;
        }
        a[k][n] = 1.0;
        for col in 0..n {
            let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
            if a[piv][col].abs() < 1e-12 {
                return None;
            }
            a.swap(col, piv);
            for r in 0..n {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        let sol: Vec<f64> = (0..n).map(|r| a[r][n] / a[r][r]).collect();
        Some((sol[..k].to_vec(), sol[k]))
    };
    let (rows, cols) = (m.rows(), m.cols());
    for k in 1..=rows.min(cols) {
        for is in subsets(rows, k) {
            for js in subsets(cols, k) {
                let Some((x_s, v)) = equalize(&|r, c| m.get(is[c], js[r]), k) else { continue };
                let Some((y_s, v2)) = equalize(&|r, c| m.get(is[r], js[c]), k) else { continue };
                if x_s.iter().chain(&y_s).any(|&p| p < -1e-12) || (v - v2).abs() > 1e-9 {
                    continue;
                }
                let mut x = vec![0.0; rows];
                let mut y = vec![0.0; cols];
                is.iter().zip(&x_s).for_each(|(&i, &p)| x[i] = p);
                js.iter().zip(&y_s).for_each(|(&j, &p)| y[j] = p);
                if m.duality_gap(&x, &y) <= 1e-9 {
                    return v;
                }
            }
        }
    }
    f64::NAN
}

fn criterion1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut grid_checked = 0;
    for _ in 0..200 {
        let (r, c) = (rng.random_range(2..=5), rng.random_range(2..=5));
        let m = MatrixGame::from_fn(r, c, |_, _| rng.random_range(-1.0..=1.0)).unwrap();
        let v = matrix_value(&m, 1e-10).unwrap().value;
        // grid over the smaller side when it has at most three actions
        let small = if r <= c { m.clone() } else { m.transpose().map(|x| -x) };
        let brute = if small.rows() <= 3 {
            grid_checked += 1;
            let g = grid_value(&small, 1000);
            if r <= c {
                g
            } else {
                -g
            }
        } else {
            support_enumeration_value(&m)
        };
        worst = worst.max((v - brute).abs());
    }
    let mp = matrix_value(&MatrixGame::from_rows(&[vec![3.0, 0.0], vec![1.0, 2.0]]).unwrap(), 1e-10).unwrap();
    let fixed = (mp.value - 1.5).abs();
    outcome(
        worst <= 5e-3 && fixed <= 1e-8,
        format!("max |LP - brute force| = {worst:.2e} over 200 games ({grid_checked} by 1e-3 grid), |v - 1.5| = {fixed:.1e}"),
    )
}

fn criterion2() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for p in Preset::ALL {
        let game = generate_game(&p.generator(2)).unwrap();
        let start = Instant::now();
        let cert = shapley_solve(&game, 1e-10).unwrap();
        slowest = slowest.max(start.elapsed());
        worst = worst.max(cert.bellman_residual);
    }
    let payoff = vec![vec![0.3, -0.7, 0.1], vec![-0.2, 0.5, -0.4]];
    let game = MarkovGame::new(GameDef {
        num_states: 1,
        actions1: vec![2],
        actions2: vec![3],
        gamma: 0.8,
        reward_bound: 1.0,
        reward1: vec![payoff.clone()],
        kernel: vec![vec![vec![vec![1.0]; 3]; 2]],
    })
    .unwrap();
    let val = matrix_value(&MatrixGame::from_rows(&payoff).unwrap(), 1e-12).unwrap().value;
    let shift = (shapley_solve(&game, 1e-12).unwrap().values1[0] - val / 0.2).abs();
    outcome(
        worst <= 1e-10 && shift <= 1e-8 && slowest < Duration::from_secs(10),
        format!(
            "max residual {worst:.1e} on presets, single-state identity error {shift:.1e}, slowest solve {slowest:.2?}"
        ),
    )
}

fn case2_game(seed: u64) -> MarkovGame {
    generate_game(&GeneratorSpec {
        num_states: 5,
        num_actions: 3,
        gamma: 0.6,
        reward_bound: 1.0,
        reward_style: RewardStyle::ScaledExp,
        kernel_style: KernelStyle::FullSupport,
        seed,
    })
    .unwrap()
}

fn case2_config(stages: u64, seeds: Vec<u64>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(Preset::Case2, 0, stages, seeds);
    cfg.game = GameSource::File { path: "generated.json".into() };
    cfg
}

fn criterion3() -> Outcome {
    let game = case2_game(2024);
    let d = game.d_bound();
    let cfg = case2_config(1, vec![0]);
    let mut sim = Simulation::from_config(&game, &cfg, 11).unwrap();
    let mut violations = 0u64;
    let mut peak: f64 = 0.0;
    for _ in 0..1_000_000 {
        sim.step().unwrap();
        for p in [Player::One, Player::Two] {
            let a = sim.agent(p).unwrap();
            let m = a.q_hat.iter().flatten().chain(&a.v_hat).fold(0.0f64, |m, x| m.max(x.abs()));
            peak = peak.max(m);
            if !a.within_bounds() {
                violations += 1;
            }
        }
    }
    outcome(violations == 0, format!("{violations} violations in 1e6 stages, peak |estimate| {peak:.4} vs D = {d}"))
}

fn criterion4() -> Outcome {
    let params = Preset::Case2.schedule();
    let cfg = params.with_d_bound(2.5);
    let expected = (4.0 * cfg.d_bound / cfg.tau_bar).exp();
    let mut worst: f64 = 0.0;
    for c in [1u64, 10, 1_000, 1_000_000] {
        let lhs = cfg.alpha(c).unwrap().powf(cfg.rho) * (4.0 * cfg.d_bound / cfg.tau(c).unwrap()).exp();
        worst = worst.max((lhs / expected - 1.0).abs());
    }
    let mut finite = true;
    let mut details = Vec::new();
    for p in Preset::ALL {
        let g = p.generator(0);
        let sched = p.schedule().with_d_bound(g.reward_bound / (1.0 - g.gamma));
        match prop2_threshold(&sched, g.num_actions, g.num_actions) {
            Ok(t) if t.ln_visits.is_finite() => details.push(format!("ln C = {:.4e}", t.ln_visits)),
            _ => finite = false,
        }
    }
    outcome(worst <= 1e-9 && finite, format!("identity rel. error {worst:.1e}; thresholds {}", details.join(", ")))
}

/// Criteria 5 and 6 share their runs.
fn criteria5_6() -> (Outcome, Outcome) {
    const STAGES: u64 = 2_000_000;
    const LOG_EVERY: u64 = 1000;
    let game = case2_game(2024);
    let d = game.d_bound();
    let cert = shapley_solve(&game, 1e-10).unwrap();
    let cfg = case2_config(STAGES, (0..20).collect());
    let sched = cfg.schedule_for(Player::One, d);
    let (lambda, xi) = (1.01, xi_of(&game));

    let mut final_errors = Vec::new();
    let mut monotone = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut worst_drift: f64 = 0.0;
    let mut worst_strict: f64 = 0.0;
    for &seed in &cfg.seeds {
        let mut sim = Simulation::from_config(&game, &cfg, seed).unwrap();
        let mut trace = Vec::new();
        for k in 1..=STAGES {
            sim.step().unwrap();
            if k % LOG_EVERY == 0 {
                let a1 = sim.agent(Player::One).unwrap();
                let a2 = sim.agent(Player::Two).unwrap();
                let err = (0..game.num_states())
                    .map(|s| (a1.v_hat[s] - cert.values1[s]).abs().max((a2.v_hat[s] - cert.values2[s]).abs()))
                    .fold(0.0, f64::max);
                trace.push((k, err));
            }
        }
        let window = |lo: u64, hi: u64| -> f64 {
            let errs: Vec<f64> = trace.iter().filter(|(k, _)| *k > lo && *k <= hi).map(|(_, e)| *e).collect();
            errs.iter().sum::<f64>() / errs.len() as f64
        };
        let w = [window(STAGES / 1000, STAGES / 100), window(STAGES / 100, STAGES / 10), window(STAGES / 10, STAGES)];
        if w[0] >= w[1] && w[1] >= w[2] {
            monotone += 1;
        }
        final_errors.push(trace.last().unwrap().1);

        // the least-visited state has the largest temperature still in play
        let a1 = sim.agent(Player::One).unwrap();
        let a2 = sim.agent(Player::Two).unwrap();
        let tau_final = sched.tau((*a1.visits.iter().min().unwrap()).max(1)).unwrap();
        let limit = (0.05 * d).max(1.2 * drift_bound(lambda, xi, tau_final, game.gamma()));
        let drift = a1.v_hat.iter().zip(&a2.v_hat).fold(0.0f64, |m, (x, y)| m.max((x + y).abs()));
        worst_drift = worst_drift.max(drift);
        worst_ratio = worst_ratio.max(drift / limit);
        let tau_min = sched.tau(*a1.visits.iter().max().unwrap()).unwrap();
        worst_strict = worst_strict.max(drift / (0.05 * d).max(1.2 * drift_bound(lambda, xi, tau_min, game.gamma())));
    }
    let mean = final_errors.iter().sum::<f64>() / final_errors.len() as f64;
    let c5 = outcome(
        mean <= 0.1 * d && monotone >= 18,
        format!(
            "mean final error {mean:.4} (limit {:.3}), decade windows non-increasing for {monotone}/20 seeds",
            0.1 * d
        ),
    );
    let c6 = outcome(
        worst_ratio <= 1.0,
        format!(
            "worst final max_s |v1 + v2| = {worst_drift:.4}, at most {:.0}% of its limit ({:.0}% at the smallest final temperature)",
            100.0 * worst_ratio,
            100.0 * worst_strict
        ),
    );
    (c5, c6)
}

fn criterion7() -> Outcome {
    let game = MarkovGame::new(GameDef {
        num_states: 1,
        actions1: vec![2],
        actions2: vec![2],
        gamma: 0.5,
        reward_bound: 1.0,
        reward1: vec![vec![vec![1.0, -1.0], vec![-1.0, 1.0]]],
        kernel: vec![vec![vec![vec![1.0]; 2]; 2]],
    })
    .unwrap();
    let mut cfg = ExperimentConfig::preset(Preset::Case2, 0, 100_000, vec![5]);
    cfg.schedule = ScheduleParams {
        rho_alpha: 0.9,
        rho_beta: 1.0,
        rho: 0.7,
        tau_bar: 0.07,
        epsilon: 0.0,
        mode: TemperatureMode::ToZero,
    };
    let opponent = StationaryStrategy(vec![vec![0.75, 0.25]]);
    cfg.mode = Mode::Rationality { learner: Player::One, opponent };
    let log = run_rationality(&game, &cfg, 5).unwrap();
    let v = log.last().unwrap().v1[0];
    let mut sim = Simulation::from_config(&game, &cfg, 5).unwrap();
    for _ in 0..100_000 {
        sim.step().unwrap();
    }
    let q = &sim.agent(Player::One).unwrap().q_hat[0];
    let greedy = if q[0] >= q[1] { 0 } else { 1 };
    outcome(
        (v - 1.0).abs() <= 5e-2 && greedy == 0 && (log.meta.targets1[0] - 1.0).abs() < 1e-9,
        format!(
            "v = {v:.4} (target {:.4}), greedy action {greedy}, q = [{:.4}, {:.4}]",
            log.meta.targets1[0], q[0], q[1]
        ),
    )
}

fn criterion8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut passed = 0;
    let mut worst: f64 = f64::NEG_INFINITY;
    for k in 0..100 {
        let tau = if k % 2 == 0 { 0.05 } else { 0.5 };
        let perturbation = if k % 4 < 2 { 0.0 } else { 0.3 };
        let (n1, n2) = (rng.random_range(2..=4), rng.random_range(2..=4));
        let fs = random_flow_state(&mut rng, n1, n2, 1.0, perturbation, tau, 1.1);
        let r = check_descent(&fs, 20.0, 1e-3).unwrap();
        worst = worst.max(r.worst_increase);
        if r.passes(DESCENT_SLACK) {
            passed += 1;
        }
    }
    outcome(passed == 100, format!("{passed}/100 instances descend; largest one-step change {worst:.2e}"))
}

fn criterion9() -> Outcome {
    let spec = |kernel_style, seed| GeneratorSpec {
        num_states: 5,
        num_actions: 3,
        gamma: 0.6,
        reward_bound: 1.0,
        reward_style: RewardStyle::ScaledExp,
        kernel_style,
        seed,
    };
    let mut full = 0;
    let mut existential = 0;
    for seed in 0..50 {
        let g = generate_game(&spec(KernelStyle::FullSupport, seed)).unwrap();
        let u = g.check_reach_universal();
        if u.holds && u.horizon == Some(1) {
            full += 1;
        }
        let g = generate_game(&spec(KernelStyle::ExistentialOnly, seed)).unwrap();
        if g.check_reach_exists().holds && !g.check_reach_universal().holds {
            existential += 1;
        }
    }
    outcome(full == 50 && existential == 50, format!("full support {full}/50, existential only {existential}/50"))
}

fn criterion10() -> Outcome {
    let game = case2_game(7);
    let mut cfg = case2_config(50_000, vec![3]);
    cfg.exploitability = true;
    let a = run(&game, &cfg, 3).unwrap().to_csv().unwrap();
    let b = run(&game, &cfg, 3).unwrap().to_csv().unwrap();
    outcome(a == b, format!("{} bytes, identical = {}", a.len(), a == b))
}

fn criterion11() -> Outcome {
    let game = case2_game(2024);
    let cfg = case2_config(1, vec![0]);
    let mut sim = Simulation::from_config(&game, &cfg, 21).unwrap();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut stage = 0u64;
    while checked < 100 && stage < 5_000_000 {
        sim.step().unwrap();
        stage += 1;
        if !stage.is_multiple_of(997) {
            continue;
        }
        let s = sim.state();
        for player in [Player::One, Player::Two] {
            let (mut me, sched) = match sim.actor(player) {
                decq_core::harness::Actor::Learner { agent, sched } => (agent.clone(), *sched),
                _ => unreachable!(),
            };
            let mut opp = sim.agent(player.other()).unwrap().clone();
            let opp_sched = *sim.schedule(player.other()).unwrap();
            let pi = me.begin_stage(s, &sched).to_vec();
            let pi_opp = opp.begin_stage(s, &opp_sched).to_vec();
            let c = me.visits[s];
            let alpha = sched.alpha(c).unwrap();
            if pi.iter().any(|&p| alpha > p) {
                continue;
            }
            let q_before = me.q_hat[s].clone();
            let v_before = me.v_hat.clone();
            let mut expected = vec![0.0; pi.len()];
            for (a, &pa) in pi.iter().enumerate() {
                for (b, &pb) in pi_opp.iter().enumerate() {
                    let (a1, a2) = if player == Player::One { (a, b) } else { (b, a) };
                    let r = game.reward(player, s, a1, a2);
                    for (next, &pn) in game.transition(s, a1, a2).iter().enumerate() {
                        if pn == 0.0 {
                            continue;
                        }
                        let mut trial = me.clone();
                        trial.finish_stage(s, a, r, &sched).unwrap();
                        trial.begin_stage(next, &sched);
                        for (e, (after, before)) in expected.iter_mut().zip(trial.q_hat[s].iter().zip(&q_before)) {
                            *e += pa * pb * pn * (after - before);
                        }
                    }
                }
            }
            let target = stage_matrix(&game, player, s, &v_before).mul_col(&pi_opp);
            for ((e, t), q) in expected.iter().zip(&target).zip(&q_before) {
                worst = worst.max((e - alpha * (t - q)).abs());
            }
            checked += 1;
            if checked == 100 {
                break;
            }
        }
    }
    outcome(checked == 100 && worst <= 1e-12, format!("{checked} unclamped snapshots, max deviation {worst:.1e}"))
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome, Duration)> = Vec::new();
    let mut push = |n: usize, name: &'static str, (o, t): (Outcome, Duration)| results.push((n, name, o, t));
    push(1, "matrix oracle", timed(criterion1));
    push(2, "Shapley oracle", timed(criterion2));
    push(3, "iterate bound", timed(criterion3));
    push(4, "schedule identities", timed(criterion4));
    let start = Instant::now();
    let (c5, c6) = criteria5_6();
    let t56 = start.elapsed();
    push(5, "self-play convergence", (c5, t56));
    push(6, "zero-sum drift", (c6, Duration::ZERO));
    push(7, "rationality", timed(criterion7));
    push(8, "Lyapunov descent", timed(criterion8));
    push(9, "reachability checkers", timed(criterion9));
    push(10, "determinism", timed(criterion10));
    push(11, "expected synchronization", timed(criterion11));

    let mut failed = 0;
    for (n, name, o, t) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {n:>2} {name}: {} [{t:.1?}]", o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
