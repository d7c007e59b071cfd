//! Plot-ready exports: tab-separated panels and small self-rendered SVG
//! line charts.
//!
//! Every emitted file starts with a `# config_hash=… version=…` comment so
//! a chart can always be traced back to the exact configuration that
//! produced it. The TSV files are the primary artifact — numbers are
//! written in shortest-round-trip form, so reading them back reproduces
//! the plotted values bit for bit. The SVG charts are convenience views
//! rendered here directly, with no external tooling.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::experiments::{aggregate_sweep, observation_adaptation_series, EnsemblePoint, RunRecord};
use crate::{Error, Result, VERSION};

/// Column names of the per-run dynamics panel, in emitted order.
pub const DYNAMICS_COLUMNS: [&str; 8] = [
    "epoch",
    "train_loss",
    "test_loss",
    "trace",
    "effective_rank",
    "label_alignment",
    "misalignment",
    "adaptation_rate",
];

/// Metrics exported per sweep point (each expands to `_mean` and `_stderr`
/// columns after the leading `sweep_value`).
pub const SWEEP_METRICS: [&str; 8] = [
    "min_test_loss",
    "trace_init",
    "trace_min",
    "beta",
    "gamma_min",
    "chi_min",
    "label_alignment_min",
    "epochs_to_min",
];

fn header_line(config_hash: &str) -> String {
    format!("# config_hash={config_hash} version={VERSION}\n")
}

fn push_field(row: &mut String, value: Option<f64>) {
    row.push('\t');
    if let Some(v) = value {
        let _ = write!(row, "{v}");
    }
}

/// Render the training-dynamics panel of one run: one row per tangent-kernel
/// snapshot, carrying the losses recorded at that epoch so dynamics can be
/// plotted against training progress rather than wall time. The
/// adaptation-rate column is recomputed from the stored observations with
/// the run's own smoothing recipe.
pub fn dynamics_tsv(record: &RunRecord) -> String {
    let observations = &record.trace.observations;
    let chi_series = observation_adaptation_series(observations)
        .expect("window derived from series length always fits");
    let mut out = header_line(&record.config_hash);
    out.push_str(&DYNAMICS_COLUMNS.join("\t"));
    out.push('\n');
    for (obs, chi) in observations.iter().zip(chi_series) {
        let mut row = format!("{}", obs.epoch);
        push_field(&mut row, Some(obs.train_loss));
        push_field(&mut row, Some(obs.test_loss));
        push_field(&mut row, Some(obs.trace));
        push_field(&mut row, Some(obs.effective_rank));
        push_field(&mut row, Some(obs.label_alignment));
        push_field(&mut row, Some(obs.misalignment));
        push_field(&mut row, chi);
        row.push('\n');
        out.push_str(&row);
    }
    out
}

/// Render the scaling panel: one row per sweep value, with ensemble mean and
/// standard-error columns for every exported metric.
pub fn sweep_tsv(config_hash: &str, points: &[EnsemblePoint]) -> String {
    let mut out = header_line(config_hash);
    out.push_str("sweep_value");
    for metric in SWEEP_METRICS {
        let _ = write!(out, "\t{metric}_mean\t{metric}_stderr");
    }
    out.push('\n');
    for point in points {
        let mut row = format!("{}", point.sweep_value);
        let stats = [
            Some(&point.min_test_loss),
            Some(&point.trace_init),
            Some(&point.trace_min),
            Some(&point.beta),
            Some(&point.gamma_min),
            point.chi_min.as_ref(),
            Some(&point.label_alignment_min),
            Some(&point.epochs_to_min),
        ];
        for stat in stats {
            push_field(&mut row, stat.map(|s| s.mean));
            push_field(&mut row, stat.map(|s| s.stderr));
        }
        row.push('\n');
        out.push_str(&row);
    }
    out
}

/// Parse a TSV produced by this module back into its header line, column
/// names, and numeric rows (`None` for empty fields).
///
/// # Errors
/// Fails when the header or column line is missing, a row has the wrong
/// field count, or a non-empty field is not a number.
pub fn parse_tsv(text: &str) -> Result<(String, Vec<String>, Vec<Vec<Option<f64>>>)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .filter(|l| l.starts_with('#'))
        .ok_or_else(|| Error::Records {
            message: "missing `# config_hash=…` header line".to_string(),
        })?
        .to_string();
    let columns: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Records {
            message: "missing column-name line".to_string(),
        })?
        .split('\t')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (index, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != columns.len() {
            return Err(Error::Records {
                message: format!(
                    "row {} has {} fields, expected {}",
                    index + 3,
                    fields.len(),
                    columns.len()
                ),
            });
        }
        let mut row = Vec::with_capacity(fields.len());
        for field in fields {
            if field.is_empty() {
                row.push(None);
            } else {
                let value = field.parse::<f64>().map_err(|_| Error::Records {
                    message: format!("row {}: `{field}` is not a number", index + 3),
                })?;
                row.push(Some(value));
            }
        }
        rows.push(row);
    }
    Ok((header, columns, rows))
}

/// One named line on a chart.
#[derive(Clone, Debug)]
pub struct Series {
    /// Legend label.
    pub label: String,
    /// `(x, y)` points; non-finite points are skipped.
    pub points: Vec<(f64, f64)>,
}

const CHART_WIDTH: f64 = 640.0;
const CHART_HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 48.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn axis_span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        // Degenerate span: pad so the line sits mid-chart.
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn escape_xml(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render series as a minimal standalone SVG line chart.
///
/// When every x (or y) value is strictly positive and spans more than two
/// decades the axis switches to a log10 scale, which is the natural view
/// for scaling sweeps; endpoint tick labels always show the original
/// values.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let finite: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let log_x = finite.iter().all(|&(x, _)| x > 0.0)
        && !finite.is_empty()
        && finite.iter().map(|&(x, _)| x).fold(f64::INFINITY, f64::min) * 100.0
            < finite.iter().map(|&(x, _)| x).fold(0.0, f64::max);
    let log_y = finite.iter().all(|&(_, y)| y > 0.0)
        && !finite.is_empty()
        && finite.iter().map(|&(_, y)| y).fold(f64::INFINITY, f64::min) * 100.0
            < finite.iter().map(|&(_, y)| y).fold(0.0, f64::max);
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let ty = |y: f64| if log_y { y.log10() } else { y };
    let (x_lo, x_hi) = axis_span(finite.iter().map(|&(x, _)| tx(x)));
    let (y_lo, y_hi) = axis_span(finite.iter().map(|&(_, y)| ty(y)));
    let plot_w = CHART_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = CHART_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |x: f64| MARGIN_LEFT + (tx(x) - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: f64| MARGIN_TOP + plot_h - (ty(y) - y_lo) / (y_hi - y_lo) * plot_h;
    let back = |t: f64, log: bool| if log { 10f64.powf(t) } else { t };

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{CHART_WIDTH}\" height=\"{CHART_HEIGHT}\" \
         viewBox=\"0 0 {CHART_WIDTH} {CHART_HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        CHART_WIDTH / 2.0,
        escape_xml(title)
    );
    // Axes.
    let x0 = MARGIN_LEFT;
    let x1 = CHART_WIDTH - MARGIN_RIGHT;
    let y0 = MARGIN_TOP + plot_h;
    let y1 = MARGIN_TOP;
    let _ = writeln!(
        svg,
        "<line x1=\"{x0:.1}\" y1=\"{y0:.1}\" x2=\"{x1:.1}\" y2=\"{y0:.1}\" stroke=\"black\"/>\n\
         <line x1=\"{x0:.1}\" y1=\"{y0:.1}\" x2=\"{x0:.1}\" y2=\"{y1:.1}\" stroke=\"black\"/>"
    );
    // Endpoint tick labels in data units.
    let _ = writeln!(
        svg,
        "<text x=\"{x0:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.4}</text>\n\
         <text x=\"{x1:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.4}</text>",
        y0 + 18.0,
        back(x_lo, log_x),
        y0 + 18.0,
        back(x_hi, log_x),
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{y0:.1}\" text-anchor=\"end\">{:.4}</text>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.4}</text>",
        x0 - 6.0,
        back(y_lo, log_y),
        x0 - 6.0,
        y1 + 4.0,
        back(y_hi, log_y),
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
        (x0 + x1) / 2.0,
        CHART_HEIGHT - 10.0,
        escape_xml(&if log_x {
            format!("{x_label} (log)")
        } else {
            x_label.to_string()
        })
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape_xml(&if log_y {
            format!("{y_label} (log)")
        } else {
            y_label.to_string()
        })
    );
    // Series polylines and legend.
    for (index, s) in series.iter().enumerate() {
        let color = PALETTE[index % PALETTE.len()];
        let coords: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| {
                x.is_finite() && y.is_finite() && (!log_x || *x > 0.0) && (!log_y || *y > 0.0)
            })
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            coords.join(" ")
        );
        let ly = MARGIN_TOP + 14.0 * index as f64 + 4.0;
        let _ = writeln!(
            svg,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"3\" fill=\"{color}\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            x1 - 150.0,
            ly,
            x1 - 136.0,
            ly + 5.0,
            escape_xml(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn sanitize_value(value: f64) -> String {
    format!("{value}").replace('.', "p").replace('-', "n")
}

/// Write the full set of plot files for a batch of run records into
/// `out_dir`: one dynamics TSV + SVG per run, and (when at least one sweep
/// point has a surviving member) a scaling TSV + SVG across sweep values.
///
/// Returns the paths written, in creation order.
///
/// # Errors
/// Fails on an empty record list or on I/O problems; aggregation issues
/// (for example every member of a point failed) propagate from the
/// ensemble summary.
pub fn export_plots(out_dir: &Path, records: &[RunRecord]) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::Records {
            message: "no records to export".to_string(),
        });
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for record in records {
        let stem = format!(
            "dynamics_v{}_m{}",
            sanitize_value(record.sweep_value),
            record.member
        );
        let tsv_path = out_dir.join(format!("{stem}.tsv"));
        std::fs::write(&tsv_path, dynamics_tsv(record)).map_err(|e| Error::io(&tsv_path, e))?;
        written.push(tsv_path);

        let observations = &record.trace.observations;
        let loss_series = Series {
            label: "train loss".to_string(),
            points: record
                .trace
                .losses
                .iter()
                .map(|p| (p.epoch as f64, p.train_loss))
                .collect(),
        };
        let trace_series = Series {
            label: "kernel trace".to_string(),
            points: observations
                .iter()
                .map(|o| (o.epoch as f64, o.trace))
                .collect(),
        };
        let rank_series = Series {
            label: "effective rank".to_string(),
            points: observations
                .iter()
                .map(|o| (o.epoch as f64, o.effective_rank))
                .collect(),
        };
        let svg = line_chart_svg(
            &format!(
                "Run dynamics (sweep value {}, member {})",
                record.sweep_value, record.member
            ),
            "epoch",
            "value",
            &[loss_series, trace_series, rank_series],
        );
        let svg_path = out_dir.join(format!("{stem}.svg"));
        std::fs::write(&svg_path, svg).map_err(|e| Error::io(&svg_path, e))?;
        written.push(svg_path);
    }

    let surviving: Vec<RunRecord> = records.iter().filter(|r| !r.failed).cloned().collect();
    if !surviving.is_empty() {
        let points = aggregate_sweep(&surviving)?;
        let tsv_path = out_dir.join("scaling.tsv");
        std::fs::write(&tsv_path, sweep_tsv(&records[0].config_hash, &points))
            .map_err(|e| Error::io(&tsv_path, e))?;
        written.push(tsv_path);

        let beta = Series {
            label: "trace ratio".to_string(),
            points: points
                .iter()
                .map(|p| (p.sweep_value, p.beta.mean))
                .collect(),
        };
        let gamma = Series {
            label: "effective rank at minimum".to_string(),
            points: points
                .iter()
                .map(|p| (p.sweep_value, p.gamma_min.mean))
                .collect(),
        };
        let loss = Series {
            label: "min test loss".to_string(),
            points: points
                .iter()
                .map(|p| (p.sweep_value, p.min_test_loss.mean))
                .collect(),
        };
        let svg = line_chart_svg(
            "Scaling across the sweep",
            "sweep value",
            "ensemble mean",
            &[beta, gamma, loss],
        );
        let svg_path = out_dir.join("scaling.svg");
        std::fs::write(&svg_path, svg).map_err(|e| Error::io(&svg_path, e))?;
        written.push(svg_path);
    }
    Ok(written)
}
