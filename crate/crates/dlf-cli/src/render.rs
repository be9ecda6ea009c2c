//! Render SVG figures from the CSV artifacts in an output directory. Every
//! figure is a pure function of the files, so re-rendering reproduces byte
//! -identical SVGs without recomputation.

use crate::plot::{
    colormap, draw_box, draw_frame, legend, padded_range, Canvas, Scale, DLF_COLOR, KF_COLOR,
};
use anyhow::{bail, Context, Result};
use std::collections::BTreeMap;
use std::path::Path;

struct FieldGrid {
    times: Vec<f64>,
    positions: Vec<f64>,
    /// Row-major values[time][node].
    values: Vec<Vec<f64>>,
}

fn parse_field_csv(text: &str, value_column: usize) -> Result<FieldGrid> {
    let mut times = Vec::new();
    let mut positions = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for line in text.lines().skip(1) {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let n: usize = f[0].parse().context("bad time index")?;
        let t: f64 = f[1].parse().context("bad time")?;
        let k: usize = f[2].parse().context("bad node index")?;
        let x: f64 = f[3].parse().context("bad position")?;
        let v: f64 = f[value_column].parse().context("bad value")?;
        if n == times.len() {
            times.push(t);
            values.push(Vec::new());
        }
        if n == 0 {
            debug_assert_eq!(k, positions.len());
            positions.push(x);
        }
        values[n].push(v);
    }
    if times.is_empty() {
        bail!("field file holds no rows");
    }
    Ok(FieldGrid {
        times,
        positions,
        values,
    })
}

fn parse_observations_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        out.push((f[1].parse()?, f[3].parse()?));
    }
    Ok(out)
}

/// Characteristic trajectories keyed by (origin, member), split at wraps.
fn parse_characteristics_csv(text: &str, domain: f64) -> Result<Vec<Vec<(f64, f64)>>> {
    let mut tracks: BTreeMap<(usize, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for line in text.lines().skip(1) {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let key = (f[0].parse::<usize>()?, f[1].parse::<usize>()?);
        tracks
            .entry(key)
            .or_default()
            .push((f[3].parse()?, f[4].parse()?));
    }
    let mut segments = Vec::new();
    for (_, track) in tracks {
        let mut current: Vec<(f64, f64)> = Vec::new();
        for point in track {
            if let Some(&(_, last_x)) = current.last() {
                if (point.1 - last_x).abs() > domain / 2.0 {
                    segments.push(std::mem::take(&mut current));
                }
            }
            current.push(point);
        }
        if current.len() > 1 {
            segments.push(current);
        }
    }
    Ok(segments)
}

struct MetricRow {
    filter: String,
    metric: String,
    scope: String,
    t: f64,
    value: f64,
}

fn parse_metrics_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        out.push(MetricRow {
            filter: f[1].to_string(),
            metric: f[5].to_string(),
            scope: f[6].to_string(),
            t: if f[7].is_empty() { f64::NAN } else { f[7].parse()? },
            value: f[8].parse()?,
        });
    }
    Ok(out)
}

const FILTERS: [(&str, &str); 2] = [("kf", KF_COLOR), ("dlf", DLF_COLOR)];
const METRICS: [&str; 4] = ["rms", "mass", "com", "calibration"];

fn heatmap_svg(
    field: &FieldGrid,
    title: &str,
    value_range: (f64, f64),
    observations: &[(f64, f64)],
    characteristics: &[Vec<(f64, f64)>],
) -> String {
    let (width, height) = (760.0, 520.0);
    let mut canvas = Canvas::new(width, height);
    let t_hi = *field.times.last().unwrap();
    let dx = if field.positions.len() > 1 {
        field.positions[1] - field.positions[0]
    } else {
        1.0
    };
    let x_scale = Scale {
        lo: 0.0,
        hi: t_hi,
        px_lo: 70.0,
        px_hi: width - 90.0,
        log: false,
    };
    let y_scale = Scale {
        lo: 0.0,
        hi: field.positions.last().unwrap() + dx,
        px_lo: height - 60.0,
        px_hi: 30.0,
        log: false,
    };
    let n_t = field.times.len();
    let cell_w = (x_scale.px_hi - x_scale.px_lo) / n_t as f64;
    let cell_h = (y_scale.px_lo - y_scale.px_hi) / field.positions.len() as f64;
    let (lo, hi) = value_range;
    let span = (hi - lo).max(1e-12);
    for (n, row) in field.values.iter().enumerate() {
        let px = x_scale.px_lo + n as f64 * cell_w;
        for (k, &v) in row.iter().enumerate() {
            let py = y_scale.px_lo - (k + 1) as f64 * cell_h;
            canvas.rect(px, py, cell_w + 0.3, cell_h + 0.3, &colormap((v - lo) / span));
        }
    }
    for segment in characteristics {
        let points: Vec<(f64, f64)> = segment
            .iter()
            .map(|&(t, x)| (x_scale.map(t), y_scale.map(x)))
            .collect();
        canvas.polyline(&points, "black", 0.7);
    }
    for &(t, y) in observations {
        canvas.circle(x_scale.map(t), y_scale.map(y), 2.2, "black");
    }
    draw_frame(&mut canvas, x_scale, y_scale, title, "t", "x");

    // Color bar.
    let bar_x = width - 60.0;
    for i in 0..100 {
        let frac = i as f64 / 99.0;
        let py = y_scale.px_lo - frac * (y_scale.px_lo - y_scale.px_hi);
        canvas.rect(bar_x, py - 2.5, 16.0, 3.0, &colormap(frac));
    }
    canvas.text(bar_x + 8.0, y_scale.px_lo + 14.0, 9.0, "middle", &format!("{lo:.2}"));
    canvas.text(bar_x + 8.0, y_scale.px_hi - 6.0, 9.0, "middle", &format!("{hi:.2}"));
    canvas.finish()
}

fn metric_series_svg(rows: &[MetricRow], metric: &str) -> Option<String> {
    let series: Vec<(&str, &str, Vec<(f64, f64)>)> = FILTERS
        .iter()
        .filter_map(|&(name, color)| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.filter == name && r.metric == metric && r.scope == "series")
                .map(|r| (r.t, r.value))
                .collect();
            (!pts.is_empty()).then_some((name, color, pts))
        })
        .collect();
    if series.is_empty() {
        return None;
    }
    let (width, height) = (760.0, 420.0);
    let mut canvas = Canvas::new(width, height);
    let t_hi = series
        .iter()
        .flat_map(|(_, _, pts)| pts.iter().map(|p| p.0))
        .fold(0.0f64, f64::max);
    let (lo, hi) = padded_range(series.iter().flat_map(|(_, _, pts)| pts.iter().map(|p| p.1)));
    let x = Scale {
        lo: 0.0,
        hi: t_hi,
        px_lo: 80.0,
        px_hi: width - 30.0,
        log: false,
    };
    let y = Scale {
        lo: lo.min(0.0).max(if metric == "calibration" { 0.0 } else { lo.min(0.0) }),
        hi: if metric == "calibration" { 1.02 } else { hi },
        px_lo: height - 50.0,
        px_hi: 30.0,
        log: false,
    };
    for (_, color, pts) in &series {
        let mapped: Vec<(f64, f64)> = pts.iter().map(|&(t, v)| (x.map(t), y.map(v))).collect();
        canvas.polyline(&mapped, color, 1.8);
    }
    draw_frame(&mut canvas, x, y, &format!("{metric} over time"), "t", metric);
    let entries: Vec<(&str, &str)> = series.iter().map(|&(n, c, _)| (n, c)).collect();
    legend(&mut canvas, width - 130.0, 46.0, &entries);
    Some(canvas.finish())
}

fn box_plots_svg(summaries: &[dlf::experiment::SweepSummary], metric: &str) -> Option<String> {
    let rows: Vec<&dlf::experiment::SweepSummary> = summaries
        .iter()
        .filter(|s| s.metric.name() == metric)
        .collect();
    if rows.is_empty() {
        return None;
    }
    let mut cells: Vec<(u64, usize)> = rows
        .iter()
        .map(|s| (s.alpha.to_bits(), s.obs_count))
        .collect();
    cells.sort_unstable();
    cells.dedup();

    let (width, height) = (120.0 + 90.0 * cells.len() as f64, 440.0);
    let mut canvas = Canvas::new(width, height);
    let (lo, hi) = padded_range(rows.iter().flat_map(|s| [s.min, s.max].into_iter()));
    let y = Scale {
        lo,
        hi,
        px_lo: height - 70.0,
        px_hi: 30.0,
        log: false,
    };
    let x = Scale {
        lo: 0.0,
        hi: cells.len() as f64,
        px_lo: 70.0,
        px_hi: width - 30.0,
        log: false,
    };
    for (ci, &(alpha_bits, obs_count)) in cells.iter().enumerate() {
        let center = x.map(ci as f64 + 0.5);
        for (fi, &(name, color)) in FILTERS.iter().enumerate() {
            if let Some(s) = rows.iter().find(|s| {
                s.alpha.to_bits() == alpha_bits
                    && s.obs_count == obs_count
                    && s.filter.name() == name
            }) {
                let cx = center + (fi as f64 - 0.5) * 26.0;
                draw_box(
                    &mut canvas, cx, 10.0, y, s.min, s.q25, s.median, s.q75, s.max, color,
                );
            }
        }
        canvas.text(
            center,
            height - 52.0,
            10.0,
            "middle",
            &format!("α={}", f64::from_bits(alpha_bits)),
        );
        canvas.text(center, height - 40.0, 10.0, "middle", &format!("I={obs_count}"));
    }
    canvas.line(x.px_lo, y.px_lo, x.px_hi, y.px_lo, "#444", 1.0);
    canvas.line(x.px_lo, y.px_lo, x.px_lo, y.px_hi, "#444", 1.0);
    for i in 0..=5 {
        let v = lo + (hi - lo) * i as f64 / 5.0;
        let py = y.map(v);
        canvas.line(x.px_lo - 4.0, py, x.px_lo, py, "#444", 1.0);
        canvas.text(x.px_lo - 6.0, py + 3.0, 10.0, "end", &format!("{v:.4}"));
    }
    canvas.text(
        (x.px_lo + x.px_hi) / 2.0,
        18.0,
        14.0,
        "middle",
        &format!("{metric}: replicate quantiles per cell"),
    );
    legend(&mut canvas, width - 120.0, 40.0, &[("kf", KF_COLOR), ("dlf", DLF_COLOR)]);
    Some(canvas.finish())
}

fn alpha_curve_svg(summaries: &[dlf::experiment::SweepSummary], metric: &str) -> Option<String> {
    let rows: Vec<&dlf::experiment::SweepSummary> = summaries
        .iter()
        .filter(|s| s.metric.name() == metric)
        .collect();
    let mut alphas: Vec<f64> = rows.iter().map(|s| s.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    if alphas.len() < 2 {
        return None;
    }
    let (width, height) = (760.0, 420.0);
    let mut canvas = Canvas::new(width, height);
    let (lo, hi) = padded_range(rows.iter().map(|s| s.mean));
    let x = Scale {
        lo: alphas[0],
        hi: *alphas.last().unwrap(),
        px_lo: 80.0,
        px_hi: width - 30.0,
        log: true,
    };
    let y = Scale {
        lo,
        hi,
        px_lo: height - 50.0,
        px_hi: 30.0,
        log: false,
    };
    for &(name, color) in &FILTERS {
        let mut pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|s| s.filter.name() == name)
            .map(|s| (s.alpha, s.mean))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pts.is_empty() {
            continue;
        }
        let mapped: Vec<(f64, f64)> = pts.iter().map(|&(a, v)| (x.map(a), y.map(v))).collect();
        canvas.polyline(&mapped, color, 1.8);
        for &(px, py) in &mapped {
            canvas.dot(px, py, 2.5, color);
        }
    }
    draw_frame(
        &mut canvas,
        x,
        y,
        &format!("mean {metric} vs relative diffusion"),
        "alpha (log)",
        metric,
    );
    legend(&mut canvas, width - 130.0, 46.0, &[("kf", KF_COLOR), ("dlf", DLF_COLOR)]);
    Some(canvas.finish())
}

/// Render every figure the directory's CSV files support; returns the names
/// of the SVG files written.
pub fn render_dir(dir: &Path) -> Result<Vec<String>> {
    let mut written = Vec::new();
    let read = |name: &str| -> Option<String> { std::fs::read_to_string(dir.join(name)).ok() };

    // Field heatmaps share one color scale across panels.
    let mut fields: Vec<(String, FieldGrid)> = Vec::new();
    if let Some(text) = read("truth.csv") {
        fields.push(("truth".into(), parse_field_csv(&text, 4)?));
    }
    for name in ["kf", "dlf"] {
        if let Some(text) = read(&format!("posterior_{name}.csv")) {
            fields.push((name.into(), parse_field_csv(&text, 4)?));
        }
    }
    if !fields.is_empty() {
        let lo = fields
            .iter()
            .flat_map(|(_, f)| f.values.iter().flatten())
            .fold(f64::INFINITY, |a, &b| a.min(b));
        let hi = fields
            .iter()
            .flat_map(|(_, f)| f.values.iter().flatten())
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let observations = match read("observations.csv") {
            Some(text) => parse_observations_csv(&text)?,
            None => Vec::new(),
        };
        let domain = fields[0]
            .1
            .positions
            .last()
            .copied()
            .unwrap_or(1.0)
            + fields[0].1.positions.get(1).copied().unwrap_or(0.0);
        let characteristics = match read("characteristics.csv") {
            Some(text) => parse_characteristics_csv(&text, domain)?,
            None => Vec::new(),
        };
        for (name, field) in &fields {
            let svg = heatmap_svg(
                field,
                &format!("posterior mean: {name}"),
                (lo, hi),
                &observations,
                &characteristics,
            );
            let file = format!("field_{name}.svg");
            std::fs::write(dir.join(&file), svg)?;
            written.push(file);
        }
    }

    if let Some(text) = read("metrics.csv") {
        let rows = parse_metrics_csv(&text)?;
        for metric in METRICS {
            if let Some(svg) = metric_series_svg(&rows, metric) {
                let file = format!("metric_{metric}.svg");
                std::fs::write(dir.join(&file), svg)?;
                written.push(file);
            }
        }
    }

    if let Some(text) = read("summary.csv") {
        let summaries = dlf::output::parse_summary_csv(&text)
            .map_err(|e| anyhow::anyhow!("summary.csv: {e}"))?;
        for metric in METRICS {
            if let Some(svg) = box_plots_svg(&summaries, metric) {
                let file = format!("box_{metric}.svg");
                std::fs::write(dir.join(&file), svg)?;
                written.push(file);
            }
            if let Some(svg) = alpha_curve_svg(&summaries, metric) {
                let file = format!("alpha_{metric}.svg");
                std::fs::write(dir.join(&file), svg)?;
                written.push(file);
            }
        }
    }
    Ok(written)
}
