//! Deterministic writers for experiment artifacts.
//!
//! Every writer produces byte-identical output for identical inputs: field
//! order is fixed by struct definitions, floating-point values use Rust's
//! shortest round-trip formatting, and no timestamps or environment data
//! leak into the files. CSV rows end in `\n`; JSON files end in a trailing
//! newline. All I/O errors carry the offending path.

use crate::sim::{ExperimentConfig, GainAuditReport, SyncReport, TrajectoryRecord};
use crate::{Error, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Header of per-episode CSV logs.
pub const TRAJECTORY_HEADER: &str =
    "t,norm_x,norm_u,norm_w,mode,y_max,est_error,stage_cost,running_cost";
/// Header of the synchronization-example CSV log.
pub const SYNC_HEADER: &str = "t,norm_x,norm_y,norm_z,est_error";

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })
}

/// Renders an episode as CSV (header always present, one row per step).
pub fn trajectory_csv(record: &TrajectoryRecord) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for s in &record.steps {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            s.t,
            norm(&s.x),
            norm(&s.u),
            norm(&s.w),
            s.mode,
            s.y_max,
            s.est_error,
            s.stage_cost,
            s.running_cost
        ));
    }
    out
}

/// Writes an episode CSV to `path`.
pub fn write_trajectory_csv(path: &Path, record: &TrajectoryRecord) -> Result<()> {
    write_text(path, &trajectory_csv(record))
}

/// Renders the synchronization example as CSV.
pub fn sync_csv(report: &SyncReport) -> String {
    let mut out = String::from(SYNC_HEADER);
    out.push('\n');
    for s in &report.steps {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.t, s.norm_x, s.norm_y, s.norm_z, s.est_error
        ));
    }
    out
}

/// Writes the synchronization CSV to `path`.
pub fn write_sync_csv(path: &Path, report: &SyncReport) -> Result<()> {
    write_text(path, &sync_csv(report))
}

/// Writes any serializable report as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

/// A named curve for the SVG line plot.
pub struct Series<'a> {
    pub label: &'a str,
    pub values: &'a [f64],
}

const SVG_WIDTH: f64 = 860.0;
const SVG_HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 44.0;
const MARGIN_BOTTOM: f64 = 52.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s.is_empty() {
            "0".to_string()
        } else {
            s.to_string()
        }
    }
}

/// Renders named curves as a standalone SVG line plot. With `log_y` the
/// vertical axis is decimal-logarithmic and non-positive samples are
/// clamped to a floor one decade below the smallest positive sample.
pub fn render_line_plot(title: &str, y_label: &str, series: &[Series<'_>], log_y: bool) -> String {
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_WIDTH}\" height=\"{SVG_HEIGHT}\" \
         viewBox=\"0 0 {SVG_WIDTH} {SVG_HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{title}</text>\n",
        SVG_WIDTH / 2.0
    ));

    let max_len = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let finite: Vec<f64> = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .filter(|v| v.is_finite())
        .collect();
    if max_len < 2 || finite.is_empty() {
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"14\" \
             text-anchor=\"middle\">no data</text>\n</svg>\n",
            SVG_WIDTH / 2.0,
            SVG_HEIGHT / 2.0
        ));
        return svg;
    }

    let plot_w = SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = SVG_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_max = (max_len - 1) as f64;

    // Vertical domain, with the log transform folded into `map_y`.
    let (floor, y_lo, y_hi) = if log_y {
        let min_pos = finite
            .iter()
            .copied()
            .filter(|v| *v > 0.0)
            .fold(f64::INFINITY, f64::min);
        let min_pos = if min_pos.is_finite() { min_pos } else { 1e-12 };
        let floor = min_pos / 10.0;
        let hi = finite
            .iter()
            .copied()
            .fold(floor, f64::max)
            .max(floor * 10.0);
        (floor, floor.log10(), hi.log10())
    } else {
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pad = (hi - lo).abs().max(1e-12) * 0.05;
        (f64::NEG_INFINITY, lo - pad, hi + pad)
    };
    let span = (y_hi - y_lo).max(1e-12);
    let map_x = |t: f64| MARGIN_LEFT + plot_w * t / x_max.max(1.0);
    let map_y = |v: f64| {
        let v = if log_y { v.max(floor).log10() } else { v };
        MARGIN_TOP + plot_h * (1.0 - (v - y_lo) / span)
    };

    // Axes and horizontal grid with tick labels.
    svg.push_str(&format!(
        "<rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{plot_w}\" height=\"{plot_h}\" \
         fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n"
    ));
    let ticks = 5usize;
    for k in 0..=ticks {
        let frac = k as f64 / ticks as f64;
        let yv = y_lo + span * frac;
        let y_pix = MARGIN_TOP + plot_h * (1.0 - frac);
        let label = if log_y {
            fmt_tick(10f64.powf(yv))
        } else {
            fmt_tick(yv)
        };
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_LEFT}\" y1=\"{y_pix:.2}\" x2=\"{:.2}\" y2=\"{y_pix:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            MARGIN_LEFT + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{label}</text>\n",
            MARGIN_LEFT - 6.0,
            y_pix + 4.0
        ));
        let tv = x_max * frac;
        let x_pix = map_x(tv);
        svg.push_str(&format!(
            "<text x=\"{x_pix:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{}</text>\n",
            MARGIN_TOP + plot_h + 18.0,
            fmt_tick(tv)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">t</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        SVG_HEIGHT - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\" transform=\"rotate(-90 18 {:.1})\">{y_label}</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    ));

    // Curves and legend.
    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let points: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(t, v)| format!("{:.2},{:.2}", map_x(t as f64), map_y(*v)))
            .collect();
        if points.len() >= 2 {
            svg.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\" \
                 points=\"{}\"/>\n",
                points.join(" ")
            ));
        }
        let ly = MARGIN_TOP + 14.0 + 18.0 * idx as f64;
        let lx = MARGIN_LEFT + plot_w - 150.0;
        svg.push_str(&format!(
            "<line x1=\"{lx:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>\n",
            lx + 22.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            lx + 28.0,
            ly + 4.0,
            s.label
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes the full artifact set of an experiment into `dir`: one CSV per
/// episode, a state-norm plot and a JSON report. Returns the written paths.
pub fn emit_experiment(
    dir: &Path,
    config: &ExperimentConfig,
    records: &[TrajectoryRecord],
) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut written = Vec::new();
    for record in records {
        let path = dir.join(format!("trajectory_{}.csv", record.run));
        write_trajectory_csv(&path, record)?;
        written.push(path);
    }

    let norms: Vec<Vec<f64>> = records
        .iter()
        .map(|r| {
            let mut c: Vec<f64> = r.steps.iter().map(|s| norm(&s.x)).collect();
            c.push(norm(&r.final_x));
            c
        })
        .collect();
    let labels: Vec<String> = records.iter().map(|r| format!("run {}", r.run)).collect();
    let series: Vec<Series<'_>> = norms
        .iter()
        .zip(&labels)
        .map(|(values, label)| Series { label, values })
        .collect();
    let plot_path = dir.join("plot.svg");
    write_text(
        &plot_path,
        &render_line_plot("state norm per episode", "|x_t|", &series, true),
    )?;
    written.push(plot_path);

    #[derive(Serialize)]
    struct Report<'a> {
        config: &'a ExperimentConfig,
        episodes: Vec<EpisodeSummary>,
    }
    #[derive(Serialize)]
    struct EpisodeSummary {
        run: usize,
        steps: usize,
        diverged: bool,
        peak_running_cost: f64,
        final_norm_x: f64,
    }
    let report = Report {
        config,
        episodes: records
            .iter()
            .map(|r| EpisodeSummary {
                run: r.run,
                steps: r.steps.len(),
                diverged: r.diverged,
                peak_running_cost: r.peak_running_cost,
                final_norm_x: norm(&r.final_x),
            })
            .collect(),
    };
    let report_path = dir.join("report.json");
    write_json(&report_path, &report)?;
    written.push(report_path);
    Ok(written)
}

/// Writes the synchronization-example artifacts: CSV, a log-scale plot of
/// the three chain norms plus the estimate error, and the JSON report.
pub fn emit_sync(dir: &Path, report: &SyncReport) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let csv_path = dir.join("sync.csv");
    write_sync_csv(&csv_path, report)?;

    let xs: Vec<f64> = report.steps.iter().map(|s| s.norm_x).collect();
    let ys: Vec<f64> = report.steps.iter().map(|s| s.norm_y).collect();
    let zs: Vec<f64> = report.steps.iter().map(|s| s.norm_z).collect();
    let es: Vec<f64> = report.steps.iter().map(|s| s.est_error).collect();
    let series = [
        Series {
            label: "|x| = |z - y|",
            values: &xs,
        },
        Series {
            label: "|y| (reference)",
            values: &ys,
        },
        Series {
            label: "|z| (controlled)",
            values: &zs,
        },
        Series {
            label: "estimate error",
            values: &es,
        },
    ];
    let plot_path = dir.join("sync.svg");
    write_text(
        &plot_path,
        &render_line_plot("two-chain synchronization", "norm", &series, true),
    )?;

    let report_path = dir.join("sync_report.json");
    write_json(&report_path, report)?;
    Ok(vec![csv_path, plot_path, report_path])
}

/// Writes the gain-audit report as JSON. Returns the written path.
pub fn emit_audit(dir: &Path, report: &GainAuditReport) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let path = dir.join("audit.json");
    write_json(&path, report)?;
    Ok(vec![path])
}
