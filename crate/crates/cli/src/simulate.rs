use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use stylus_teleport::harness::{simulate_participant, ResultRow, CSV_HEADER};
use stylus_teleport::trace::SyntheticUserParams;
use stylus_teleport::KernelConfig;

use crate::{read_json, SimulateArgs};

fn user_params(args: &SimulateArgs) -> Result<SyntheticUserParams> {
    let mut user = match &args.user {
        Some(p) => read_json(p)?,
        None => SyntheticUserParams::default(),
    };
    if args.noiseless {
        user.aim_noise_deg = 0.0;
        user.gaze_noise_deg = 0.0;
    }
    if let Some(v) = args.aim_noise_deg {
        user.aim_noise_deg = v;
    }
    if let Some(v) = args.gaze_noise_deg {
        user.gaze_noise_deg = v;
    }
    if let Err(msg) = user.validate() {
        bail!("invalid user parameters: {msg}");
    }
    Ok(user)
}

fn kernel_config(args: &SimulateArgs) -> Result<KernelConfig> {
    let mut config = match &args.config {
        Some(p) => read_json(p)?,
        None => KernelConfig::default(),
    };
    if let Some(v) = args.roll_gain {
        config.roll_gain = v;
    }
    if let Some(v) = args.hold_threshold_ms {
        config.hold_threshold_ms = v;
    }
    config.validate().context("invalid kernel config")?;
    Ok(config)
}

pub fn run(args: &SimulateArgs) -> Result<()> {
    let user = user_params(args)?;
    let config = kernel_config(args)?;

    let per_participant: Vec<Vec<ResultRow>> = (0..args.participants)
        .into_par_iter()
        .map(|p| simulate_participant(p, args.seed, &user, &config))
        .collect::<Result<_, _>>()?;
    let rows: Vec<ResultRow> = per_participant.into_iter().flatten().collect();

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let jsonl_path = args.out.join("results.jsonl");
    let mut jsonl = BufWriter::new(
        File::create(&jsonl_path).with_context(|| format!("creating {}", jsonl_path.display()))?,
    );
    for row in &rows {
        writeln!(jsonl, "{}", row.to_json_line())?;
    }
    jsonl.flush()?;

    let csv_path = args.out.join("results.csv");
    let mut csv = csv::Writer::from_path(&csv_path)
        .with_context(|| format!("creating {}", csv_path.display()))?;
    csv.write_record(CSV_HEADER)?;
    for row in &rows {
        csv.write_record(row.csv_record())?;
    }
    csv.flush()?;

    if !args.quiet {
        print_summary(&rows);
        println!(
            "wrote {} rows to {} and {}",
            rows.len(),
            jsonl_path.display(),
            csv_path.display()
        );
    }
    Ok(())
}

#[derive(Default)]
struct Tally {
    complete: usize,
    incomplete: usize,
    success: usize,
    task_ms: f64,
    pos_err: f64,
    ori_err: f64,
}

fn print_summary(rows: &[ResultRow]) {
    let mut cells: BTreeMap<(&str, &str), Tally> = BTreeMap::new();
    for r in rows {
        let t = cells
            .entry((r.switch.as_str(), r.orient.as_str()))
            .or_default();
        match r.outcome.metrics() {
            Some(m) => {
                t.complete += 1;
                t.success += m.success as usize;
                t.task_ms += m.task_completion_ms as f64;
                t.pos_err += m.positioning_error_m;
                t.ori_err += m.orientation_error_deg;
            }
            None => t.incomplete += 1,
        }
    }
    println!(
        "{:<8} {:<13} {:>5} {:>5} {:>8} {:>9} {:>10} {:>10}",
        "switch", "orient", "n", "inc", "success", "task_ms", "pos_err_m", "ori_err"
    );
    for ((switch, orient), t) in &cells {
        let n = t.complete.max(1) as f64;
        println!(
            "{:<8} {:<13} {:>5} {:>5} {:>7.1}% {:>9.0} {:>10.4} {:>10.2}",
            switch,
            orient,
            t.complete,
            t.incomplete,
            100.0 * t.success as f64 / n,
            t.task_ms / n,
            t.pos_err / n,
            t.ori_err / n
        );
    }
}
