//! Trajectory logs and their CSV form.
//!
//! A log file starts with `# key: value` metadata lines (values are JSON),
//! followed by an RFC 4180 CSV table with one row per logged stage.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogMeta {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    /// `self_play`, or `rationality_one` / `rationality_two` naming the
    /// learner.
    pub mode: String,
    pub num_states: usize,
    pub gamma: f64,
    pub d_bound: f64,
    /// Oracle targets per player: equilibrium values in self-play, the
    /// best-response values for the learner in rationality runs. Empty for
    /// a fixed opponent.
    pub targets1: Vec<f64>,
    pub targets2: Vec<f64>,
    /// Half-width of the value neighbourhood, `ε ξ g⁺`.
    pub value_radius: f64,
}

/// One logged stage. Vectors are per state; a player that does not learn
/// has empty vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub stage: u64,
    pub state: usize,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub eps1: Vec<f64>,
    pub eps2: Vec<f64>,
    pub exploitability: Vec<f64>,
}

impl LogRow {
    /// `v̂¹_s + v̂²_s`, empty unless both players learn.
    pub fn zero_sum_drift(&self) -> Vec<f64> {
        if self.v1.is_empty() || self.v2.is_empty() {
            return Vec::new();
        }
        self.v1.iter().zip(&self.v2).map(|(a, b)| a + b).collect()
    }

    /// `max_{i,s} |v̂^i_s - target^i_s|` over the learning players.
    pub fn value_error(&self, meta: &LogMeta) -> f64 {
        let dist = |v: &[f64], t: &[f64]| v.iter().zip(t).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        dist(&self.v1, &meta.targets1).max(dist(&self.v2, &meta.targets2))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub meta: LogMeta,
    pub rows: Vec<LogRow>,
}

const GROUPS: [&str; 6] = ["v1", "v2", "sum", "eps1", "eps2", "expl"];

impl TrajectoryLog {
    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }

    fn group_present(&self) -> [bool; 6] {
        let Some(first) = self.rows.first() else {
            return [false; 6];
        };
        [
            !first.v1.is_empty(),
            !first.v2.is_empty(),
            !first.v1.is_empty() && !first.v2.is_empty(),
            !first.eps1.is_empty(),
            !first.eps2.is_empty(),
            !first.exploitability.is_empty(),
        ]
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = Vec::new();
        let meta = serde_json::to_value(&self.meta)?;
        for (key, value) in meta.as_object().expect("meta is an object") {
            writeln!(out, "# {key}: {value}")?;
        }
        let n = self.meta.num_states;
        let present = self.group_present();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["stage".to_string(), "state".to_string()];
        for (g, _) in GROUPS.iter().zip(present).filter(|(_, p)| *p) {
            header.extend((0..n).map(|s| format!("{g}_s{s}")));
        }
        w.write_record(&header)?;
        for row in &self.rows {
            let drift = row.zero_sum_drift();
            let groups: [&[f64]; 6] = [&row.v1, &row.v2, &drift, &row.eps1, &row.eps2, &row.exploitability];
            let mut record = vec![row.stage.to_string(), row.state.to_string()];
            for (vals, _) in groups.iter().zip(present).filter(|(_, p)| *p) {
                record.extend(vals.iter().map(|x| format!("{x}")));
            }
            w.write_record(&record)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut meta = serde_json::Map::new();
        let mut body = String::new();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("# ") {
                let (key, value) = rest
                    .split_once(": ")
                    .ok_or_else(|| Error::InvalidArgument(format!("bad metadata line {line:?}")))?;
                meta.insert(key.to_string(), serde_json::from_str(value)?);
            } else {
                body.push_str(line);
                body.push('\n');
            }
        }
        let meta: LogMeta = serde_json::from_value(serde_json::Value::Object(meta))?;
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let header = reader.headers()?.clone();
        let column_group = |name: &str| GROUPS.iter().position(|g| name.starts_with(&format!("{g}_s")));
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let parse = |i: usize| -> Result<f64> {
                record[i].parse().map_err(|_| Error::InvalidArgument(format!("bad number {:?}", &record[i])))
            };
            let mut groups: [Vec<f64>; 6] = Default::default();
            for (i, name) in header.iter().enumerate().skip(2) {
                if let Some(g) = column_group(name) {
                    groups[g].push(parse(i)?);
                }
            }
            let [v1, v2, _, eps1, eps2, exploitability] = groups;
            rows.push(LogRow {
                stage: parse(0)? as u64,
                state: parse(1)? as usize,
                v1,
                v2,
                eps1,
                eps2,
                exploitability,
            });
        }
        Ok(Self { meta, rows })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Rewrites a log CSV as whitespace-separated columns with a commented
/// header, the layout gnuplot reads directly. `columns` selects columns by
/// name (all when empty); `stage` always comes first.
pub fn export_columns(csv_text: &str, columns: &[String]) -> Result<String> {
    let body: String = csv_text.lines().filter(|l| !l.starts_with('#')).flat_map(|l| [l, "\n"]).collect();
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let header = reader.headers()?.clone();
    let mut picked = vec![0usize];
    if columns.is_empty() {
        picked.extend(1..header.len());
    } else {
        for c in columns {
            let i = header
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| Error::InvalidArgument(format!("no column named {c:?}")))?;
            if i != 0 {
                picked.push(i);
            }
        }
    }
    let mut out = String::from("#");
    for &i in &picked {
        out.push(' ');
        out.push_str(&header[i]);
    }
    out.push('\n');
    for record in reader.records() {
        let record = record?;
        let line: Vec<&str> = picked.iter().map(|&i| &record[i]).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrajectoryLog {
        TrajectoryLog {
            meta: LogMeta {
                version: "0.1.0".into(),
                config_hash: "ab".repeat(32),
                seed: 9,
                mode: "self_play".into(),
                num_states: 2,
                gamma: 0.5,
                d_bound: 2.0,
                targets1: vec![0.5, -0.25],
                targets2: vec![-0.5, 0.25],
                value_radius: 0.0,
            },
            rows: vec![
                LogRow {
                    stage: 10,
                    state: 1,
                    v1: vec![0.1, 0.2],
                    v2: vec![-0.1, -0.3],
                    eps1: vec![0.0, 1e-3],
                    eps2: vec![2e-3, 0.0],
                    exploitability: vec![],
                },
                LogRow {
                    stage: 20,
                    state: 0,
                    v1: vec![0.4, -0.2],
                    v2: vec![-0.45, 0.2],
                    eps1: vec![0.0, 0.0],
                    eps2: vec![0.0, 0.0],
                    exploitability: vec![],
                },
            ],
        }
    }

    #[test]
    fn csv_round_trip() {
        let log = sample();
        let text = log.to_csv().unwrap();
        assert!(text.starts_with("# "));
        assert!(text.contains("stage,state,v1_s0,v1_s1,v2_s0,v2_s1,sum_s0,sum_s1,eps1_s0"));
        assert_eq!(TrajectoryLog::from_csv(&text).unwrap(), log);
    }

    #[test]
    fn value_error_and_drift() {
        let log = sample();
        let row = log.last().unwrap();
        assert!((row.value_error(&log.meta) - 0.1).abs() < 1e-12);
        let d = row.zero_sum_drift();
        assert!((d[0] + 0.05).abs() < 1e-12 && d[1] == 0.0);
    }

    #[test]
    fn export_selects_columns() {
        let text = sample().to_csv().unwrap();
        let out = export_columns(&text, &["v1_s1".into(), "sum_s0".into()]).unwrap();
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "# stage v1_s1 sum_s0");
        assert_eq!(lines[1].split(' ').count(), 3);
        assert!(lines[2].starts_with("20 -0.2 "));
        assert!(export_columns(&text, &["nope".into()]).is_err());
    }
}
