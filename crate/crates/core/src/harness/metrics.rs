//! Per-episode metrics, comparisons and plot data.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    #[default]
    Train,
    Eval,
}

/// One episode's summary. Latency fields are `None` when no command
/// completed a loop during the episode.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub seed: u64,
    pub scenario: String,
    pub controller: String,
    pub phase: Phase,
    /// Index within the seed; evaluation episodes continue after training.
    pub episode: usize,
    pub steps: usize,
    pub cumulative_reward: f64,
    pub latency_mean_ms: Option<f64>,
    pub latency_p50_ms: Option<u64>,
    pub latency_p95_ms: Option<u64>,
    pub latency_min_ms: Option<u64>,
    pub latency_max_ms: Option<u64>,
    pub failures: u32,
    /// Periods completed inside the safety envelope.
    pub uninterrupted_steps: usize,
    /// Mean over periods of the squared normalized setpoint deviation.
    pub control_loss: f64,
    pub action_accuracy: f64,
    /// Share of simulated time the edge servers spend computing decisions.
    pub edge_utilization: f64,
    pub train_loss_mean: Option<f64>,
    pub epsilon: Option<f64>,
    pub rebalances: u32,
    pub allocation_violations: u32,
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path} line {line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("sequence lengths differ ({0} vs {1})")]
    Length(usize, usize),
    #[error("no metrics records")]
    Empty,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MetricsError + '_ {
    move |source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[u64], p: f64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Latency summary: (mean, p50, p95, min, max).
pub type LatencySummary = (Option<f64>, Option<u64>, Option<u64>, Option<u64>, Option<u64>);

pub fn latency_summary(samples: &[u64]) -> LatencySummary {
    if samples.is_empty() {
        return (None, None, None, None, None);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let mean = sorted.iter().map(|&v| v as f64).sum::<f64>() / sorted.len() as f64;
    (
        Some(mean),
        percentile(&sorted, 50.0),
        percentile(&sorted, 95.0),
        sorted.first().copied(),
        sorted.last().copied(),
    )
}

/// Fraction of positions where the two action sequences agree.
/// Empty sequences score 0.
pub fn action_accuracy(agent: &[usize], oracle: &[usize]) -> Result<f64, MetricsError> {
    if agent.len() != oracle.len() {
        return Err(MetricsError::Length(agent.len(), oracle.len()));
    }
    if agent.is_empty() {
        return Ok(0.0);
    }
    let hits = agent.iter().zip(oracle).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / agent.len() as f64)
}

pub fn write_jsonl(path: &Path, records: &[MetricsRecord]) -> Result<(), MetricsError> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("metrics serialize");
        buf.push(b'\n');
    }
    std::fs::write(path, buf).map_err(io_err(path))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<MetricsRecord>, MetricsError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| MetricsError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    HigherIsBetter,
    LowerIsBetter,
    /// Reported only.
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Win,
    Loss,
    Tie,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: String,
    pub mean_a: Option<f64>,
    pub mean_b: Option<f64>,
    /// `(a - b) / |b|`; `None` when `b` is zero and `a` is not, or a mean is missing.
    pub relative_delta: Option<f64>,
    pub direction: Direction,
    /// From `a`'s point of view.
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub records_a: usize,
    pub records_b: usize,
    pub metrics: Vec<MetricComparison>,
}

type Extractor = fn(&MetricsRecord) -> Option<f64>;

const COMPARED: &[(&str, Direction, Extractor)] = &[
    ("cumulative_reward", Direction::HigherIsBetter, |r| Some(r.cumulative_reward)),
    ("latency_mean_ms", Direction::LowerIsBetter, |r| r.latency_mean_ms),
    ("latency_p95_ms", Direction::LowerIsBetter, |r| r.latency_p95_ms.map(|v| v as f64)),
    ("failures", Direction::LowerIsBetter, |r| Some(r.failures as f64)),
    ("uninterrupted_steps", Direction::HigherIsBetter, |r| Some(r.uninterrupted_steps as f64)),
    ("control_loss", Direction::LowerIsBetter, |r| Some(r.control_loss)),
    ("action_accuracy", Direction::HigherIsBetter, |r| Some(r.action_accuracy)),
    ("edge_utilization", Direction::Neutral, |r| Some(r.edge_utilization)),
];

fn mean_of(records: &[MetricsRecord], f: Extractor) -> Option<f64> {
    let vals: Vec<f64> = records.iter().filter_map(f).collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

pub fn relative_delta(a: f64, b: f64) -> Option<f64> {
    if b == 0.0 {
        return (a == 0.0).then_some(0.0);
    }
    Some((a - b) / b.abs())
}

pub fn compare(a: &[MetricsRecord], b: &[MetricsRecord]) -> Result<Comparison, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::Empty);
    }
    let metrics = COMPARED
        .iter()
        .map(|&(name, direction, f)| {
            let (ma, mb) = (mean_of(a, f), mean_of(b, f));
            let delta = match (ma, mb) {
                (Some(x), Some(y)) => relative_delta(x, y),
                _ => None,
            };
            let outcome = match (ma, mb, direction) {
                (_, _, Direction::Neutral) | (None, _, _) | (_, None, _) => Outcome::NotApplicable,
                (Some(x), Some(y), _) if x == y => Outcome::Tie,
                (Some(x), Some(y), Direction::HigherIsBetter) => {
                    if x > y {
                        Outcome::Win
                    } else {
                        Outcome::Loss
                    }
                }
                (Some(x), Some(y), Direction::LowerIsBetter) => {
                    if x < y {
                        Outcome::Win
                    } else {
                        Outcome::Loss
                    }
                }
            };
            MetricComparison {
                metric: name.to_string(),
                mean_a: ma,
                mean_b: mb,
                relative_delta: delta,
                direction,
                outcome,
            }
        })
        .collect();
    Ok(Comparison {
        records_a: a.len(),
        records_b: b.len(),
        metrics,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

impl Comparison {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<22} {:>14} {:>14} {:>10}  {}\n",
            "metric", "mean_a", "mean_b", "delta", "a vs b"
        );
        for m in &self.metrics {
            let delta = m
                .relative_delta
                .map_or_else(|| "-".to_string(), |d| format!("{:+.1}%", d * 100.0));
            let outcome = match m.outcome {
                Outcome::Win => "win",
                Outcome::Loss => "loss",
                Outcome::Tie => "tie",
                Outcome::NotApplicable => "-",
            };
            out.push_str(&format!(
                "{:<22} {:>14} {:>14} {:>10}  {}\n",
                m.metric,
                fmt_opt(m.mean_a),
                fmt_opt(m.mean_b),
                delta,
                outcome
            ));
        }
        out
    }
}

/// Trailing mean over up to `window` values ending at each index.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

pub const PLOT_WINDOW: usize = 50;

/// Writes `episode,reward,reward_ma50,failures_cum` rows in record order.
pub fn write_plot_data<W: Write>(records: &[MetricsRecord], w: W) -> Result<(), MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let rewards: Vec<f64> = records.iter().map(|r| r.cumulative_reward).collect();
    let ma = moving_average(&rewards, PLOT_WINDOW);
    let mut wtr = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| MetricsError::Io {
        path: "plot data".into(),
        source: std::io::Error::other(e),
    };
    wtr.write_record(["episode", "reward", "reward_ma50", "failures_cum"])
        .map_err(csv_err)?;
    let mut failures = 0u64;
    for (i, r) in records.iter().enumerate() {
        failures += r.failures as u64;
        wtr.write_record([
            r.episode.to_string(),
            r.cumulative_reward.to_string(),
            ma[i].to_string(),
            failures.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| MetricsError::Io {
        path: "plot data".into(),
        source: e,
    })
}

pub fn emit_plot_data(records: &[MetricsRecord], path: &Path) -> Result<(), MetricsError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    write_plot_data(records, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rewarded(r: f64) -> MetricsRecord {
        MetricsRecord {
            cumulative_reward: r,
            ..MetricsRecord::default()
        }
    }

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<u64> = (1..=100).collect();
        assert_eq!(percentile(&v, 50.0), Some(50));
        assert_eq!(percentile(&v, 95.0), Some(95));
        assert_eq!(percentile(&[7], 95.0), Some(7));
        assert_eq!(percentile(&[], 50.0), None);
    }

    #[test]
    fn accuracy_edge_cases() {
        assert_eq!(action_accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(action_accuracy(&[1, 2, 3], &[4, 5, 6]).unwrap(), 0.0);
        assert!(action_accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn compare_reports_relative_deltas() {
        let c = compare(&[rewarded(890.0)], &[rewarded(750.0)]).unwrap();
        let d = c.metrics[0].relative_delta.unwrap();
        assert!((d * 100.0 - 18.7).abs() < 0.05, "{d}");
        assert_eq!(c.metrics[0].outcome, Outcome::Win);

        let c = compare(&[rewarded(3820.0)], &[rewarded(2810.0)]).unwrap();
        let d = c.metrics[0].relative_delta.unwrap();
        assert!((d * 100.0 - 35.9).abs() < 0.05, "{d}");
    }

    #[test]
    fn identical_inputs_have_zero_deltas() {
        let recs = vec![rewarded(-12.0), rewarded(4.0)];
        let c = compare(&recs, &recs).unwrap();
        for m in &c.metrics {
            if m.mean_a.is_some() {
                assert_eq!(m.relative_delta, Some(0.0), "{}", m.metric);
            }
        }
        assert!(c.to_table().contains("cumulative_reward"));
    }

    #[test]
    fn compare_rejects_empty() {
        assert!(compare(&[], &[rewarded(1.0)]).is_err());
    }

    #[test]
    fn moving_average_of_constant_is_constant() {
        let ma = moving_average(&[3.0; 120], 50);
        assert!(ma.iter().all(|&v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn one_episode_plot_has_header_and_one_row() {
        let mut buf = Vec::new();
        write_plot_data(&[rewarded(5.0)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().next().unwrap(), "episode,reward,reward_ma50,failures_cum");
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let recs = vec![
            MetricsRecord {
                latency_mean_ms: Some(300.0),
                latency_p50_ms: Some(300),
                epsilon: Some(0.123456789),
                ..rewarded(-1.5)
            },
            rewarded(0.1 + 0.2),
        ];
        write_jsonl(&path, &recs).unwrap();
        assert_eq!(read_jsonl(&path).unwrap(), recs);
    }
}
