//! CSV and SVG artifacts. Missing values (`None`, NaN) are empty fields.

use std::fmt::Write as _;
use std::path::Path;

use crate::diagnostics::DiagnosticsOutput;
use crate::error::{io_err, Result};
use crate::experiment::{Algorithm, Containment, EluderRow, ExperimentOutput};
use crate::median;

pub const TRACE_HEADER: [&str; 10] =
    ["run_id", "t", "task", "action", "reward", "inst_regret", "cum_regret", "beta", "width", "contained"];

pub const SUMMARY_HEADER: [&str; 10] = [
    "key",
    "algorithm",
    "tasks",
    "horizon",
    "runs",
    "median_per_task_regret",
    "mean_per_task_regret",
    "median_total_regret",
    "containment_rate",
    "endpoints",
];

/// Shortest round-trip decimal; NaN becomes an empty field.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(file))
}

/// One row per step (or episode) and task of every run's primary trace.
pub fn write_trace(path: &Path, out: &ExperimentOutput) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(TRACE_HEADER)?;
    for run in &out.runs {
        let id = out.run_id(run);
        let (_, trace) = &run.traces[0];
        for r in &trace.records {
            w.write_record([
                id.clone(),
                r.t.to_string(),
                r.task.to_string(),
                r.action.to_string(),
                fmt_f64(r.reward),
                fmt_f64(r.inst_regret),
                fmt_f64(r.cum_regret),
                fmt_f64(r.beta),
                fmt_opt(r.width),
                r.contained.map(|c| c.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub key: String,
    pub algorithm: Algorithm,
    pub tasks: usize,
    pub horizon: usize,
    pub runs: usize,
    pub median_per_task_regret: f64,
    pub mean_per_task_regret: f64,
    pub median_total_regret: f64,
    pub containment_rate: Option<f64>,
    /// Per-task regret at the end of each run, in run order.
    pub endpoints: Vec<f64>,
}

/// One row per sweep key and algorithm, in sorted key order.
pub fn summarize(out: &ExperimentOutput) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for (key, setting) in &out.keys {
        let runs: Vec<_> = out.runs.iter().filter(|r| &r.key == key).collect();
        let Some(first) = runs.first() else { continue };
        for (slot, (algorithm, _)) in first.traces.iter().enumerate() {
            let traces: Vec<_> = runs.iter().map(|r| &r.traces[slot].1).collect();
            let endpoints: Vec<f64> = traces.iter().map(|t| t.total_regret() / t.tasks as f64).collect();
            let totals: Vec<f64> = traces.iter().map(|t| t.total_regret()).collect();
            let containment = traces.iter().map(|t| t.all_contained()).collect::<Option<Vec<bool>>>();
            rows.push(SummaryRow {
                key: key.clone(),
                algorithm: *algorithm,
                tasks: setting.tasks,
                horizon: setting.horizon,
                runs: traces.len(),
                median_per_task_regret: median(&endpoints),
                mean_per_task_regret: endpoints.iter().sum::<f64>() / endpoints.len() as f64,
                median_total_regret: median(&totals),
                containment_rate: containment
                    .map(|c| c.iter().filter(|&&b| b).count() as f64 / c.len() as f64),
                endpoints,
            });
        }
    }
    rows
}

pub fn write_summary(path: &Path, out: &ExperimentOutput) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for row in summarize(out) {
        w.write_record([
            row.key,
            row.algorithm.label().to_string(),
            row.tasks.to_string(),
            row.horizon.to_string(),
            row.runs.to_string(),
            fmt_f64(row.median_per_task_regret),
            fmt_f64(row.mean_per_task_regret),
            fmt_f64(row.median_total_regret),
            fmt_opt(row.containment_rate),
            row.endpoints.iter().map(|&e| fmt_f64(e)).collect::<Vec<_>>().join(";"),
        ])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_containment(path: &Path, tasks: usize, horizon: usize, c: &Containment) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["tasks", "horizon", "runs", "contained", "frequency"])?;
    w.write_record([
        tasks.to_string(),
        horizon.to_string(),
        c.runs.to_string(),
        c.contained.to_string(),
        fmt_f64(c.frequency()),
    ])?;
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_eluder(path: &Path, rows: &[EluderRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["eps", "functions", "domain", "exhaustive", "greedy"])?;
    for r in rows {
        w.write_record([
            fmt_f64(r.eps),
            r.functions.to_string(),
            r.domain.to_string(),
            r.exhaustive.to_string(),
            r.greedy.to_string(),
        ])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// `summary.csv` (per training size), `bonus.csv` (per heldout point) and
/// `kernel.csv` (category kernel entries).
pub fn write_diagnostics(dir: &Path, d: &DiagnosticsOutput) -> Result<()> {
    let path = dir.join("summary.csv");
    let mut w = writer(&path)?;
    w.write_record(["training_size", "runs", "mean_bonus", "median_bonus", "mean_abs_error", "covered"])?;
    for r in &d.rows {
        w.write_record([
            r.training_size.to_string(),
            r.runs.to_string(),
            fmt_f64(r.mean_bonus),
            fmt_f64(r.median_bonus),
            fmt_f64(r.mean_abs_error),
            fmt_f64(r.covered),
        ])?;
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("bonus.csv");
    let mut w = writer(&path)?;
    w.write_record(["training_size", "run_id", "task", "error", "bonus"])?;
    for (n, run, p) in &d.points {
        w.write_record([n.to_string(), run.to_string(), p.task.to_string(), fmt_f64(p.error), fmt_f64(p.bonus)])?;
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("kernel.csv");
    let mut w = writer(&path)?;
    w.write_record(["i", "j", "value"])?;
    let c = &d.kernel.c;
    for i in 0..c.nrows() {
        for j in 0..c.ncols() {
            w.write_record([i.to_string(), j.to_string(), fmt_f64(c[(i, j)])])?;
        }
    }
    w.flush().map_err(io_err(&path))?;
    Ok(())
}

const PALETTE: [&str; 8] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"];

/// Median (over runs) per-task cumulative regret at every step, per sweep
/// key and algorithm.
pub fn median_curves(out: &ExperimentOutput) -> Vec<(String, Vec<f64>)> {
    let mut curves = Vec::new();
    for (key, _) in &out.keys {
        let runs: Vec<_> = out.runs.iter().filter(|r| &r.key == key).collect();
        let Some(first) = runs.first() else { continue };
        for (slot, (algorithm, _)) in first.traces.iter().enumerate() {
            let cums: Vec<Vec<f64>> = runs
                .iter()
                .map(|r| {
                    let t = &r.traces[slot].1;
                    t.cumulative_by_step().iter().map(|c| c / t.tasks as f64).collect()
                })
                .collect();
            let len = cums.iter().map(Vec::len).min().unwrap_or(0);
            let curve = (0..len).map(|s| median(&cums.iter().map(|c| c[s]).collect::<Vec<_>>())).collect();
            curves.push((format!("{key} {}", algorithm.label()), curve));
        }
    }
    curves
}

/// Static line chart of the median per-task cumulative regret curves.
pub fn render_svg(out: &ExperimentOutput) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 60.0, 180.0, 20.0, 40.0);
    let curves = median_curves(out);
    let t_max = curves.iter().map(|(_, c)| c.len()).max().unwrap_or(1).max(1) as f64;
    let y_max = curves.iter().flat_map(|(_, c)| c.iter().copied()).fold(0.0, f64::max).max(1e-9);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">"
    );
    let _ = writeln!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<path d=\"M{left} {top} V{} H{}\" fill=\"none\" stroke=\"black\"/>",
        top + ph,
        left + pw
    );
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">t</text>", left + pw / 2.0, h - 8.0);
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">per-task cumulative regret</text>",
        top + ph / 2.0,
        top + ph / 2.0
    );
    let _ = writeln!(s, "<text x=\"{left}\" y=\"{}\" text-anchor=\"middle\">0</text>", top + ph + 14.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{t_max}</text>", left + pw, top + ph + 14.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.3}</text>", left - 4.0, top + 4.0, y_max);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">0</text>", left - 4.0, top + ph);
    for (n, (label, curve)) in curves.iter().enumerate() {
        let color = PALETTE[n % PALETTE.len()];
        let stride = (curve.len() / 400).max(1);
        let pts: Vec<String> = curve
            .iter()
            .enumerate()
            .filter(|(i, _)| i % stride == 0 || *i + 1 == curve.len())
            .map(|(i, v)| {
                format!("{:.2},{:.2}", left + pw * (i + 1) as f64 / t_max, top + ph * (1.0 - v / y_max))
            })
            .collect();
        let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>", pts.join(" "));
        let ly = top + 14.0 * (n as f64 + 1.0);
        let _ = writeln!(
            s,
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            left + pw + 10.0,
            left + pw + 30.0
        );
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\">{}</text>", left + pw + 34.0, ly + 4.0, escape(label));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_svg(path: &Path, out: &ExperimentOutput) -> Result<()> {
    std::fs::write(path, render_svg(out)).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_is_empty_and_values_round_trip() {
        assert_eq!(fmt_f64(f64::NAN), "");
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        let x = 1.0 / 3.0;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn escape_markup() {
        assert_eq!(escape("a<b&c>"), "a&lt;b&amp;c&gt;");
    }
}
