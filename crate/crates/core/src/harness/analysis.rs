//! Cross-run summaries and plot series built from `metrics.ndjson` files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use super::config::RunConfig;
use super::run::{CONFIG_FILE, METRICS_FILE};
use crate::{Error, Result};

pub const DEFAULT_WINDOW: usize = 100;

pub const EPISODE_METRICS: &[&str] = &[
    "team_return",
    "mean_return",
    "length",
    "catches",
    "collisions",
    "landmark_distance",
    "option_switches",
    "transfer_weight",
    "epsilon",
];

/// One run's episode metric against the global step at which each episode ended.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub run: PathBuf,
    pub points: Vec<(u64, f64)>,
}

fn metric_of(record: &Value, metric: &str) -> Option<f64> {
    match metric {
        "mean_return" => {
            let r = record.get("returns")?.as_array()?;
            let vals: Option<Vec<f64>> = r.iter().map(Value::as_f64).collect();
            let vals = vals?;
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        }
        other => record.get(other)?.as_f64(),
    }
}

pub fn load_config(dir: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(dir.join(CONFIG_FILE))
        .map_err(|e| Error::usage(format!("{} is not a run directory: {e}", dir.display())))?;
    RunConfig::parse_str(&text)
}

pub fn load_series(dir: &Path, metric: &str) -> Result<Series> {
    if !EPISODE_METRICS.contains(&metric) {
        return Err(Error::usage(format!("unknown metric {metric:?}; expected one of {}", EPISODE_METRICS.join(", "))));
    }
    let text = std::fs::read_to_string(dir.join(METRICS_FILE))
        .map_err(|e| Error::usage(format!("cannot read metrics in {}: {e}", dir.display())))?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let record: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        if record.get("kind").and_then(Value::as_str) != Some("episode") {
            continue;
        }
        let step = record.get("step").and_then(Value::as_u64).unwrap_or(0);
        if let Some(v) = metric_of(&record, metric) {
            points.push((step, v));
        }
    }
    Ok(Series {
        run: dir.to_path_buf(),
        points,
    })
}

/// Trailing moving average over up to `window` points; `window = 1` is the identity.
pub fn smooth(points: &[(u64, f64)], window: usize) -> Vec<(u64, f64)> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(points.len());
    let mut sum = 0.0;
    for (i, &(s, v)) in points.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= points[i - window].1;
        }
        let count = (i + 1).min(window);
        out.push((s, if window == 1 { v } else { sum / count as f64 }));
    }
    out
}

/// Mean of the last `window` points.
pub fn final_mean(points: &[(u64, f64)], window: usize) -> Option<f64> {
    if points.is_empty() {
        return None;
    }
    let tail = &points[points.len().saturating_sub(window.max(1))..];
    Some(tail.iter().map(|p| p.1).sum::<f64>() / tail.len() as f64)
}

/// First step at which the smoothed series reaches `threshold` (`higher` = at
/// or above, otherwise at or below).
pub fn first_step_reaching(smoothed: &[(u64, f64)], threshold: f64, higher: bool) -> Option<u64> {
    smoothed
        .iter()
        .find(|&&(_, v)| if higher { v >= threshold } else { v <= threshold })
        .map(|p| p.0)
}

/// Linear-interpolation quantile of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareTable {
    pub scenario: String,
    pub metric: String,
    pub window: usize,
    pub methods: Vec<MethodSummary>,
}

/// Median and IQR over seeds of each run's final windowed mean, grouped by advisor.
pub fn compare(dirs: &[PathBuf], metric: &str, window: usize) -> Result<CompareTable> {
    if dirs.is_empty() {
        return Err(Error::usage("compare needs at least one run directory"));
    }
    let configs: Vec<RunConfig> = dirs.iter().map(|d| load_config(d)).collect::<Result<_>>()?;
    for (d, c) in dirs.iter().zip(&configs).skip(1) {
        if !c.same_scenario(&configs[0]) {
            return Err(Error::usage(format!(
                "{} ran {} ({} agents, layout {}) but {} ran {} ({} agents, layout {}); runs from different scenarios are not comparable",
                d.display(),
                c.scenario.name(),
                c.num_agents,
                c.layout,
                dirs[0].display(),
                configs[0].scenario.name(),
                configs[0].num_agents,
                configs[0].layout
            )));
        }
    }
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (d, c) in dirs.iter().zip(&configs) {
        let series = load_series(d, metric)?;
        let v = final_mean(&series.points, window)
            .ok_or_else(|| Error::usage(format!("{} has no finished episodes", d.display())))?;
        groups.entry(c.advisor.name().to_string()).or_default().push(v);
    }
    let methods = groups
        .into_iter()
        .map(|(method, values)| {
            let q1 = quantile(&values, 0.25);
            let q3 = quantile(&values, 0.75);
            MethodSummary {
                method,
                runs: values.len(),
                median: median(&values),
                q1,
                q3,
                iqr: q3 - q1,
                values,
            }
        })
        .collect();
    Ok(CompareTable {
        scenario: configs[0].scenario.name().into(),
        metric: metric.into(),
        window,
        methods,
    })
}

impl CompareTable {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("method\truns\tmedian\tq1\tq3\tiqr\n");
        for m in &self.methods {
            out.push_str(&format!("{}\t{}\t{}\t{}\t{}\t{}\n", m.method, m.runs, m.median, m.q1, m.q3, m.iqr));
        }
        out
    }
}

/// CSV over the union of episode-end steps: one smoothed, forward-filled
/// column per run plus their median.
pub fn plot_data(dirs: &[PathBuf], metric: &str, window: usize) -> Result<String> {
    let series: Vec<Series> = dirs.iter().map(|d| load_series(d, metric)).collect::<Result<_>>()?;
    let smoothed: Vec<Vec<(u64, f64)>> = series.iter().map(|s| smooth(&s.points, window)).collect();
    let mut steps: Vec<u64> = smoothed.iter().flatten().map(|p| p.0).collect();
    steps.sort_unstable();
    steps.dedup();
    let mut out = String::from("step");
    for s in &series {
        out.push(',');
        out.push_str(&csv_field(&s.run.display().to_string()));
    }
    out.push_str(",median\n");
    let mut cursor = vec![0usize; smoothed.len()];
    let mut last: Vec<Option<f64>> = vec![None; smoothed.len()];
    for step in steps {
        out.push_str(&step.to_string());
        for (k, col) in smoothed.iter().enumerate() {
            while cursor[k] < col.len() && col[cursor[k]].0 <= step {
                last[k] = Some(col[cursor[k]].1);
                cursor[k] += 1;
            }
            out.push(',');
            if let Some(v) = last[k] {
                out.push_str(&v.to_string());
            }
        }
        let present: Vec<f64> = last.iter().flatten().copied().collect();
        out.push(',');
        if !present.is_empty() {
            out.push_str(&median(&present).to_string());
        }
        out.push('\n');
    }
    Ok(out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
