//! Multi-seed runs and their aggregate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::MarkovGame;
use crate::harness::config::ExperimentConfig;
use crate::harness::log::TrajectoryLog;
use crate::harness::sim::run;

/// Environment variable holding the worker count for batch runs.
pub const WORKERS_ENV: &str = "DECQ_WORKERS";

pub fn worker_count() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(text) => match text.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::InvalidArgument(format!("{WORKERS_ENV}={text:?} is not a positive integer"))),
        },
    }
}

/// Per-stage mean and population standard deviation across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub seeds: Vec<u64>,
    pub stages: Vec<u64>,
    pub mean_v1: Vec<Vec<f64>>,
    pub std_v1: Vec<Vec<f64>>,
    pub mean_v2: Vec<Vec<f64>>,
    pub std_v2: Vec<Vec<f64>>,
    /// `max_{i,s} |v̂ - target|` at the last logged stage, per seed.
    pub final_errors: Vec<f64>,
    pub targets1: Vec<f64>,
    pub targets2: Vec<f64>,
    pub value_radius: f64,
}

pub struct BatchOutput {
    /// One log per seed, in the config's seed order.
    pub logs: Vec<TrajectoryLog>,
    pub summary: BatchSummary,
}

/// Runs every seed of `cfg` in parallel and aggregates.
pub fn run_batch(game: &MarkovGame, cfg: &ExperimentConfig) -> Result<BatchOutput> {
    let work = || cfg.seeds.par_iter().map(|&seed| run(game, cfg, seed)).collect::<Result<Vec<_>>>();
    let logs = match worker_count()? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    let summary = summarize(&logs)?;
    Ok(BatchOutput { logs, summary })
}

/// Aggregates logs of the same experiment. Seeds are processed in sorted
/// order so the result does not depend on the order of the input.
pub fn summarize(logs: &[TrajectoryLog]) -> Result<BatchSummary> {
    let first = logs.first().ok_or_else(|| Error::InvalidArgument("no logs to summarize".into()))?;
    let mut order: Vec<&TrajectoryLog> = logs.iter().collect();
    order.sort_by_key(|l| l.meta.seed);
    let stages: Vec<u64> = first.rows.iter().map(|r| r.stage).collect();
    for log in &order {
        if log.rows.iter().map(|r| r.stage).ne(stages.iter().copied()) {
            return Err(Error::InvalidArgument(format!("seed {} logged different stages", log.meta.seed)));
        }
    }
    let n = order.len() as f64;
    let moments = |pick: fn(&crate::harness::log::LogRow) -> &Vec<f64>, k: usize| -> (Vec<f64>, Vec<f64>) {
        let width = pick(&first.rows[k]).len();
        let mut mean = vec![0.0; width];
        for log in &order {
            for (m, v) in mean.iter_mut().zip(pick(&log.rows[k])) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for log in &order {
            for ((s, v), m) in var.iter_mut().zip(pick(&log.rows[k])).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        (mean, var.into_iter().map(|s| (s / n).sqrt()).collect())
    };
    let (mut mean_v1, mut std_v1, mut mean_v2, mut std_v2) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for k in 0..stages.len() {
        let (m, s) = moments(|r| &r.v1, k);
        mean_v1.push(m);
        std_v1.push(s);
        let (m, s) = moments(|r| &r.v2, k);
        mean_v2.push(m);
        std_v2.push(s);
    }
    Ok(BatchSummary {
        seeds: order.iter().map(|l| l.meta.seed).collect(),
        stages,
        mean_v1,
        std_v1,
        mean_v2,
        std_v2,
        final_errors: order.iter().map(|l| l.last().map_or(f64::NAN, |r| r.value_error(&l.meta))).collect(),
        targets1: first.meta.targets1.clone(),
        targets2: first.meta.targets2.clone(),
        value_radius: first.meta.value_radius,
    })
}

impl BatchSummary {
    /// Aggregate CSV: per state mean and standard deviation of each
    /// learner's values, plus the oracle target and band for reference.
    pub fn to_csv(&self) -> Result<String> {
        let n = self.targets1.len().max(self.targets2.len());
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["stage".to_string()];
        type Group<'a> = (&'a str, &'a Vec<Vec<f64>>, &'a Vec<Vec<f64>>, &'a Vec<f64>);
        let groups: Vec<Group> =
            [("v1", &self.mean_v1, &self.std_v1, &self.targets1), ("v2", &self.mean_v2, &self.std_v2, &self.targets2)]
                .into_iter()
                .filter(|g| g.1.first().is_some_and(|v| !v.is_empty()))
                .collect();
        for (name, ..) in &groups {
            for s in 0..n {
                header.extend([
                    format!("mean_{name}_s{s}"),
                    format!("std_{name}_s{s}"),
                    format!("lo_{name}_s{s}"),
                    format!("hi_{name}_s{s}"),
                ]);
            }
        }
        w.write_record(&header)?;
        for (k, stage) in self.stages.iter().enumerate() {
            let mut record = vec![stage.to_string()];
            for (_, mean, std, target) in &groups {
                for s in 0..n {
                    record.extend([
                        format!("{}", mean[k][s]),
                        format!("{}", std[k][s]),
                        format!("{}", target[s] - self.value_radius),
                        format!("{}", target[s] + self.value_radius),
                    ]);
                }
            }
            w.write_record(&record)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        let mut out =
            format!("# seeds: {}\n# value_radius: {}\n", serde_json::to_string(&self.seeds)?, self.value_radius);
        out.push_str(&String::from_utf8(bytes).expect("csv output is UTF-8"));
        Ok(out)
    }
}
