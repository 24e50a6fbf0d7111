use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use decq_core::diagnostics::{check_descent, random_flow_state, DESCENT_SLACK};
use decq_core::harness::{
    export_columns, generate_game, run, run_batch, ExperimentConfig, GeneratorSpec, KernelStyle, Mode, Preset,
    RewardStyle,
};
use decq_core::{shapley_solve, MarkovGame};

#[derive(Parser)]
#[command(name = "decq", version, about = "Decentralized Q-learning experiments on zero-sum Markov games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rewards {
    ScaledExp,
    Plain,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kernel {
    FullSupport,
    ExistentialOnly,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random game as JSON.
    Generate {
        /// Use a preset's game dimensions; the explicit flags are ignored.
        #[arg(long)]
        preset: Option<Preset>,
        #[arg(long, default_value_t = 5)]
        states: usize,
        #[arg(long, default_value_t = 3)]
        actions: usize,
        #[arg(long, default_value_t = 0.6)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        reward_bound: f64,
        #[arg(long, value_enum, default_value = "scaled-exp")]
        rewards: Rewards,
        #[arg(long, value_enum, default_value = "full-support")]
        kernel: Kernel,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Validate a game and report which reachability assumption it meets.
    Check { game: PathBuf },
    /// Solve a game with Shapley iteration and print the certificate.
    Solve {
        game: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run every seed of a self-play config, one CSV log per seed.
    Run(RunArgs),
    /// Run a config with a fixed opponent, one CSV log per seed.
    Rationality(RunArgs),
    /// Run all seeds in parallel and write per-seed and aggregate CSVs.
    Batch(RunArgs),
    /// Check Lyapunov descent of the local flow on random instances.
    Lyapunov {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 20.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 1.1)]
        lambda: f64,
        /// Temperatures cycled over the instances.
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.5")]
        tau: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Convert a log CSV to whitespace-separated columns.
    Export {
        log: PathBuf,
        /// Columns to keep (all when omitted); `stage` always comes first.
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(short, long, default_value = "out")]
    out_dir: PathBuf,
    /// Run only this seed, overriding the config's list.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) if e.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn write_or_print(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                out.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

fn load_config(args: &RunArgs) -> Result<(ExperimentConfig, MarkovGame)> {
    let mut cfg =
        ExperimentConfig::load(&args.config).with_context(|| format!("reading config {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    let game = cfg.resolve(args.config.parent())?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    Ok((cfg, game))
}

fn seed_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.csv"))
}

fn run_seeds(args: &RunArgs, rationality: bool) -> Result<()> {
    let (cfg, game) = load_config(args)?;
    match (&cfg.mode, rationality) {
        (Mode::SelfPlay, true) => bail!("config is in self-play mode; use `run`"),
        (Mode::Rationality { .. }, false) => bail!("config has a fixed opponent; use `rationality`"),
        _ => {}
    }
    for &seed in &cfg.seeds {
        let log = run(&game, &cfg, seed)?;
        let path = seed_path(&args.out_dir, seed);
        log.write_csv(&path)?;
        let last = log.last().expect("at least one row");
        println!(
            "seed {seed}: {} stages, final max |v - target| = {:.6}, log {}",
            last.stage,
            last.value_error(&log.meta),
            path.display()
        );
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate { preset, states, actions, gamma, reward_bound, rewards, kernel, seed, output } => {
            let spec = match preset {
                Some(p) => p.generator(seed),
                None => GeneratorSpec {
                    num_states: states,
                    num_actions: actions,
                    gamma,
                    reward_bound,
                    reward_style: match rewards {
                        Rewards::ScaledExp => RewardStyle::ScaledExp,
                        Rewards::Plain => RewardStyle::Plain,
                    },
                    kernel_style: match kernel {
                        Kernel::FullSupport => KernelStyle::FullSupport,
                        Kernel::ExistentialOnly => KernelStyle::ExistentialOnly,
                    },
                    seed,
                },
            };
            write_or_print(output.as_deref(), &generate_game(&spec)?.to_json())?;
        }
        Command::Check { game } => {
            let text = fs::read_to_string(&game).with_context(|| format!("reading {}", game.display()))?;
            let def: decq_core::GameDef = serde_json::from_str(&text)?;
            let report = decq_core::game::validate(&def);
            if !report.is_empty() {
                println!("invalid game:\n{report}");
                return Ok(ExitCode::FAILURE);
            }
            let g = MarkovGame::new(def)?;
            println!("game: {} states, gamma {}, D = {}", g.num_states(), g.gamma(), g.d_bound());
            for (name, r) in
                [("some action sequence", g.check_reach_exists()), ("every action sequence", g.check_reach_universal())]
            {
                match r.horizon {
                    Some(h) => {
                        println!("reachable under {name}: yes, within {h} stage{}", if h == 1 { "" } else { "s" })
                    }
                    None => println!("reachable under {name}: no ({} unreachable pairs)", r.unreachable.len()),
                }
            }
        }
        Command::Solve { game, tol, output } => {
            let g = MarkovGame::load(&game).with_context(|| format!("loading {}", game.display()))?;
            let cert = shapley_solve(&g, tol)?;
            write_or_print(output.as_deref(), &serde_json::to_string_pretty(&cert)?)?;
        }
        Command::Run(args) => run_seeds(&args, false)?,
        Command::Rationality(args) => run_seeds(&args, true)?,
        Command::Batch(args) => {
            let (cfg, game) = load_config(&args)?;
            let out = run_batch(&game, &cfg)?;
            for log in &out.logs {
                log.write_csv(seed_path(&args.out_dir, log.meta.seed))?;
            }
            let aggregate = args.out_dir.join("aggregate.csv");
            fs::write(&aggregate, out.summary.to_csv()?)?;
            let errors = &out.summary.final_errors;
            let mean = errors.iter().sum::<f64>() / errors.len() as f64;
            println!(
                "{} seeds, mean final max |v - target| = {mean:.6}, band half-width {:.6}, aggregate {}",
                errors.len(),
                out.summary.value_radius,
                aggregate.display()
            );
        }
        Command::Lyapunov { instances, horizon, dt, lambda, tau, seed } => {
            if tau.is_empty() {
                bail!("need at least one temperature");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut passed = 0;
            let mut worst = f64::NEG_INFINITY;
            for k in 0..instances {
                let perturbation = if k % 4 < 2 { 0.0 } else { 0.3 };
                let n1 = 2 + k % 3;
                let n2 = 2 + (k / 3) % 3;
                let fs = random_flow_state(&mut rng, n1, n2, 1.0, perturbation, tau[k % tau.len()], lambda);
                let r = check_descent(&fs, horizon, dt)?;
                worst = worst.max(r.worst_increase);
                if r.passes(DESCENT_SLACK) {
                    passed += 1;
                }
            }
            println!("{passed}/{instances} instances descend; worst one-step change of V: {worst:.3e}");
            if passed < instances {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Export { log, columns, output } => {
            let text = fs::read_to_string(&log).with_context(|| format!("reading {}", log.display()))?;
            write_or_print(output.as_deref(), &export_columns(&text, &columns)?)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
