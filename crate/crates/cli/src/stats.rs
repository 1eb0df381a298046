use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;

use stylus_teleport::harness::{ResultRow, TrialMetrics};
use stylus_teleport::stats::{iqr_filter, summarize, Summary};

use crate::StatsArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum GroupKey {
    Participant,
    Switch,
    Orient,
    Depth,
    Rotation,
    Rep,
}

impl GroupKey {
    fn name(self) -> &'static str {
        match self {
            GroupKey::Participant => "participant",
            GroupKey::Switch => "switch",
            GroupKey::Orient => "orient",
            GroupKey::Depth => "depth",
            GroupKey::Rotation => "rotation",
            GroupKey::Rep => "rep",
        }
    }

    fn value(self, row: &ResultRow) -> String {
        match self {
            GroupKey::Participant => row.participant.to_string(),
            GroupKey::Switch => row.switch.as_str().to_string(),
            GroupKey::Orient => row.orient.as_str().to_string(),
            GroupKey::Depth => row.depth.to_string(),
            GroupKey::Rotation => row.rotation.to_string(),
            GroupKey::Rep => row.rep.to_string(),
        }
    }
}

type Metric = (&'static str, fn(&TrialMetrics) -> f64);

const METRICS: [Metric; 8] = [
    ("task_ms", |m| m.task_completion_ms as f64),
    ("switch_in_ms", |m| m.switch_in_ms as f64),
    ("positioning_ms", |m| m.positioning_ms as f64),
    ("orientation_ms", |m| m.orientation_ms as f64),
    ("switch_out_ms", |m| m.switch_out_ms as f64),
    ("pos_err_m", |m| m.positioning_error_m),
    ("ori_err_deg", |m| m.orientation_error_deg),
    ("success", |m| if m.success { 1.0 } else { 0.0 }),
];

pub fn read_results(path: &std::path::Path) -> Result<Vec<ResultRow>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = ResultRow::from_json_line(&line)
            .with_context(|| format!("{} line {}", path.display(), i + 1))?;
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{} has no results", path.display());
    }
    Ok(rows)
}

pub fn run(args: &StatsArgs) -> Result<()> {
    let rows = read_results(&args.results)?;
    let mut keys = args.group_by.clone();
    keys.dedup();

    let mut groups: BTreeMap<Vec<String>, Vec<TrialMetrics>> = BTreeMap::new();
    let mut incomplete = 0usize;
    for row in &rows {
        match row.outcome.metrics() {
            Some(m) => groups
                .entry(keys.iter().map(|k| k.value(row)).collect())
                .or_default()
                .push(*m),
            None => incomplete += 1,
        }
    }
    if groups.is_empty() {
        bail!("no complete trials to summarize");
    }

    let mut table: Vec<(Vec<String>, usize, Vec<Summary>)> = Vec::new();
    let mut total = 0usize;
    let mut removed = 0usize;
    for (key, metrics) in &groups {
        let label = key.join("/");
        let task: Vec<f64> = metrics
            .iter()
            .map(|m| m.task_completion_ms as f64)
            .collect();
        let keep = iqr_filter(&task)
            .with_context(|| format!("group {label}: too few trials for outlier filtering"))?;
        let kept: Vec<&TrialMetrics> = metrics
            .iter()
            .zip(&keep)
            .filter_map(|(m, k)| k.then_some(m))
            .collect();
        total += metrics.len();
        removed += metrics.len() - kept.len();
        let summaries = METRICS
            .iter()
            .map(|(name, f)| {
                let values: Vec<f64> = kept.iter().map(|m| f(m)).collect();
                summarize(&values).with_context(|| format!("group {label}, {name}"))
            })
            .collect::<Result<Vec<_>>>()?;
        table.push((key.clone(), metrics.len() - kept.len(), summaries));
    }

    let key_header = keys.iter().map(|k| k.name()).collect::<Vec<_>>().join("/");
    println!(
        "{:<24} {:>5} {:>4} {:>16} {:>14} {:>14} {:>9}",
        key_header, "n", "out", "task_ms", "pos_err_m", "ori_err_deg", "success"
    );
    for (key, out, s) in &table {
        println!(
            "{:<24} {:>5} {:>4} {:>9.0} ±{:>5.0} {:>7.4} ±{:>5.4} {:>7.2} ±{:>5.2} {:>8.1}%",
            key.join("/"),
            s[0].n,
            out,
            s[0].mean,
            s[0].ci95,
            s[5].mean,
            s[5].ci95,
            s[6].mean,
            s[6].ci95,
            100.0 * s[7].mean
        );
    }
    println!(
        "filtered {removed} of {total} complete trials ({:.1}%); {incomplete} incomplete excluded",
        100.0 * removed as f64 / total as f64
    );

    if let Some(path) = &args.csv {
        let mut w =
            csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        let mut header: Vec<&str> = keys.iter().map(|k| k.name()).collect();
        header.extend(["metric", "n", "mean", "sd", "ci95"]);
        w.write_record(&header)?;
        for (key, _, summaries) in &table {
            for ((name, _), s) in METRICS.iter().zip(summaries) {
                let mut rec = key.clone();
                rec.extend([
                    name.to_string(),
                    s.n.to_string(),
                    s.mean.to_string(),
                    s.sd.to_string(),
                    s.ci95.to_string(),
                ]);
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
    }
    Ok(())
}
