//! CSV and manifest serialization of experiment results, plus the matching
//! parsers. Numbers are written in shortest round-trip form, so parsing a
//! file back reproduces every value bit-for-bit and any plot rendered from
//! a file is a pure function of that file.

use crate::error::{Error, Result};
use crate::experiment::{
    DemoRun, ExperimentConfig, RunRecord, SweepResult, SweepSummary,
};
use crate::filter::FilterKind;
use crate::metrics::Metric;
use std::fmt::Write as _;
use std::path::Path;

fn parse_f64(field: &str, what: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::InvalidArgument(format!("bad {what} value '{field}'")))
}

fn parse_int<T: std::str::FromStr>(field: &str, what: &str) -> Result<T> {
    field
        .parse::<T>()
        .map_err(|_| Error::InvalidArgument(format!("bad {what} value '{field}'")))
}

/// `runs.csv`: one row per (cell, filter, replicate, metric) total.
pub fn runs_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("run_id,filter,alpha,I,seed,replicate_id,truth_hash,metric,value\n");
    for rec in records {
        for (mi, metric) in Metric::ALL.into_iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:016x},{},{}",
                rec.run_id(),
                rec.filter,
                rec.alpha,
                rec.obs_count,
                rec.seed,
                rec.replicate,
                rec.truth_hash,
                metric,
                rec.totals[mi]
            );
        }
    }
    out
}

/// Parse `runs.csv` back into records (totals only).
pub fn parse_runs_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut records: Vec<RunRecord> = Vec::new();
    for line in text.lines().skip(1) {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::InvalidArgument(format!(
                "runs.csv row has {} fields, expected 9",
                f.len()
            )));
        }
        let filter: FilterKind = f[1].parse()?;
        let alpha = parse_f64(f[2], "alpha")?;
        let obs_count: usize = parse_int(f[3], "I")?;
        let seed: u64 = parse_int(f[4], "seed")?;
        let replicate: u64 = parse_int(f[5], "replicate_id")?;
        let truth_hash = u64::from_str_radix(f[6], 16)
            .map_err(|_| Error::InvalidArgument(format!("bad truth hash '{}'", f[6])))?;
        let metric: Metric = f[7].parse()?;
        let value = parse_f64(f[8], "metric")?;

        let key_matches = |r: &RunRecord| {
            r.alpha.to_bits() == alpha.to_bits()
                && r.obs_count == obs_count
                && r.filter == filter
                && r.replicate == replicate
        };
        let slot = Metric::ALL.iter().position(|m| *m == metric).unwrap();
        match records.iter_mut().rev().find(|r| key_matches(r)) {
            Some(rec) => rec.totals[slot] = value,
            None => {
                let mut totals = [f64::NAN; 4];
                totals[slot] = value;
                records.push(RunRecord {
                    alpha,
                    obs_count,
                    filter,
                    seed,
                    replicate,
                    truth_hash,
                    totals,
                    series: None,
                });
            }
        }
    }
    Ok(records)
}

/// `series.csv`: metric time series per (cell, filter, replicate).
pub fn series_csv(records: &[RunRecord], dt: f64) -> String {
    let mut out = String::from("run_id,filter,alpha,I,seed,replicate_id,metric,t,value\n");
    for rec in records {
        let Some(series) = &rec.series else { continue };
        for (mi, metric) in Metric::ALL.into_iter().enumerate() {
            for (n, value) in series[mi].iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    rec.run_id(),
                    rec.filter,
                    rec.alpha,
                    rec.obs_count,
                    rec.seed,
                    rec.replicate,
                    metric,
                    n as f64 * dt,
                    value
                );
            }
        }
    }
    out
}

/// `summary.csv`: quantile rows per (filter, α, I, metric).
pub fn summary_csv(summaries: &[SweepSummary]) -> String {
    let mut out = String::from("filter,alpha,I,metric,min,q25,median,q75,max,mean,count\n");
    for s in summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            s.filter, s.alpha, s.obs_count, s.metric, s.min, s.q25, s.median, s.q75, s.max,
            s.mean, s.count
        );
    }
    out
}

pub fn parse_summary_csv(text: &str) -> Result<Vec<SweepSummary>> {
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(Error::InvalidArgument(format!(
                "summary.csv row has {} fields, expected 11",
                f.len()
            )));
        }
        out.push(SweepSummary {
            filter: f[0].parse()?,
            alpha: parse_f64(f[1], "alpha")?,
            obs_count: parse_int(f[2], "I")?,
            metric: f[3].parse()?,
            min: parse_f64(f[4], "min")?,
            q25: parse_f64(f[5], "q25")?,
            median: parse_f64(f[6], "median")?,
            q75: parse_f64(f[7], "q75")?,
            max: parse_f64(f[8], "max")?,
            mean: parse_f64(f[9], "mean")?,
            count: parse_int(f[10], "count")?,
        });
    }
    Ok(out)
}

/// `manifest.json`: config echo, sweep grids, failures, crate version.
pub fn manifest_json(sweep: &SweepResult) -> Result<String> {
    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": sweep.config,
        "alphas": sweep.alphas,
        "obs_counts": sweep.obs_counts,
        "base_seed": sweep.config.base_seed,
        "replicates": sweep.config.replicates,
        "failures": sweep.failures,
    });
    Ok(serde_json::to_string_pretty(&manifest)?)
}

/// Write `runs.csv`, `series.csv`, `summary.csv`, and `manifest.json`.
pub fn write_sweep_outputs(dir: &Path, sweep: &SweepResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("runs.csv"), runs_csv(&sweep.records))?;
    std::fs::write(
        dir.join("series.csv"),
        series_csv(&sweep.records, sweep.config.dt),
    )?;
    std::fs::write(dir.join("summary.csv"), summary_csv(&sweep.summaries))?;
    std::fs::write(dir.join("manifest.json"), manifest_json(sweep)?)?;
    Ok(())
}

/// Truth trajectory dump: `n,t,k,x,u`.
pub fn truth_csv(demo: &DemoRun) -> String {
    let mut out = String::from("n,t,k,x,u\n");
    for field in &demo.truth {
        let n = field.time_index;
        let t = demo.ta.time(n);
        for k in 0..demo.grid.node_count() {
            let _ = writeln!(out, "{},{},{},{},{}", n, t, k, demo.grid.node(k), field.values[k]);
        }
    }
    out
}

/// Posterior dump for one filter: `n,t,k,x,mean,var`.
pub fn posterior_csv(demo: &DemoRun, kind: FilterKind) -> Result<String> {
    let run = demo
        .runs
        .iter()
        .find(|(k, _, _)| *k == kind)
        .ok_or_else(|| Error::InvalidArgument(format!("no {kind} run in this demo")))?;
    let mut out = String::from("n,t,k,x,mean,var\n");
    for state in &run.1.states {
        let n = state.time_index;
        let t = demo.ta.time(n);
        for k in 0..demo.grid.node_count() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                n,
                t,
                k,
                demo.grid.node(k),
                state.mean[k],
                state.cov[(k, k)]
            );
        }
    }
    Ok(out)
}

/// Observation dump: `m,t,i,y,Y`.
pub fn observations_csv(demo: &DemoRun) -> String {
    let mut out = String::from("m,t,i,y,Y\n");
    for obs in &demo.observations {
        let t = demo.ta.time(obs.time_index);
        for (i, &y) in obs.locations.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{},{}", obs.obs_index, t, i, y, obs.values[i]);
        }
    }
    out
}

/// Pseudo-observation trajectories of the DLF run: `m,i,n,t,x,mean,var`.
pub fn characteristics_csv(demo: &DemoRun) -> String {
    let mut out = String::from("m,i,n,t,x,mean,var\n");
    for (_, run, _) in demo.runs.iter().filter(|(k, _, _)| *k == FilterKind::Dlf) {
        for c in &run.characteristics {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.origin,
                c.member,
                c.time_index,
                demo.ta.time(c.time_index),
                c.position,
                c.mean,
                c.var
            );
        }
    }
    out
}

/// Metric dump: `run_id,filter,alpha,I,seed,metric,scope,t,value` with one
/// `total` row and a full `series` per metric per filter.
pub fn metrics_csv(demo: &DemoRun, cfg: &ExperimentConfig, replicate: u64) -> String {
    let run_id = format!("a{}-i{}-r{}", cfg.alpha, cfg.obs_count, replicate);
    let mut out = String::from("run_id,filter,alpha,I,seed,metric,scope,t,value\n");
    for (kind, _, metrics) in &demo.runs {
        for metric in Metric::ALL {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},total,,{}",
                run_id,
                kind,
                cfg.alpha,
                cfg.obs_count,
                cfg.base_seed,
                metric,
                metrics.total(metric)
            );
            for (n, value) in metrics.series(metric).iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},series,{},{}",
                    run_id,
                    kind,
                    cfg.alpha,
                    cfg.obs_count,
                    cfg.base_seed,
                    metric,
                    demo.ta.time(n),
                    value
                );
            }
        }
    }
    out
}

/// Write every demo artifact; returns the file names written.
pub fn write_demo_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    demo: &DemoRun,
    replicate: u64,
) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut emit = |name: &str, content: String| -> Result<()> {
        std::fs::write(dir.join(name), content)?;
        written.push(name.to_string());
        Ok(())
    };
    emit("truth.csv", truth_csv(demo))?;
    for (kind, _, _) in &demo.runs {
        emit(&format!("posterior_{kind}.csv"), posterior_csv(demo, *kind)?)?;
    }
    emit("observations.csv", observations_csv(demo))?;
    if demo.runs.iter().any(|(k, _, _)| *k == FilterKind::Dlf) {
        emit("characteristics.csv", characteristics_csv(demo))?;
    }
    emit("metrics.csv", metrics_csv(demo, cfg, replicate))?;
    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "replicate": replicate,
        "truth_hash": format!("{:016x}", demo.truth_hash),
        "sampled_init": { "amplitude": demo.sampled_init.0, "phase": demo.sampled_init.1 },
    });
    emit("manifest.json", serde_json::to_string_pretty(&manifest)?)?;
    Ok(written)
}
