use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{json, Value};

use super::{read_records, MethodName, OrchestratorError, RunRecord, SCHEMA_VERSION};
use crate::metrics::{aggregate, AggregateReport, CellRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    JsonlSummary,
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl-summary" | "jsonl" => Ok(ReportFormat::JsonlSummary),
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            _ => Err(format!("unknown report format `{s}` (expected jsonl-summary, csv or md)")),
        }
    }
}

type Metric = fn(&CellRow) -> f64;

/// Plot panels: file stem, title and the row value shown.
pub const PANELS: [(&str, &str, Metric); 5] = [
    ("crystal_bleu", "CrystalBLEU", |r| r.mean_crystal_bleu),
    ("pass_at_1_comp", "Pass@1 (comp)", |r| r.pass_at_1_comp),
    ("pass_at_1_func", "Pass@1 (func)", |r| r.pass_at_1_func),
    ("wrong_format_rate", "Wrong Format Error", |r| r.wrong_format_rate),
    ("repetition_rate", "Repetition Error", |r| r.repetition_rate),
];

/// Metric parameters recorded with the first non-errored run.
fn metadata(records: &[RunRecord]) -> Value {
    records
        .iter()
        .find(|r| !r.is_errored())
        .or(records.first())
        .and_then(|r| r.config_snapshot.get("metrics").cloned())
        .unwrap_or(Value::Null)
}

/// Aggregate a record file and render it; optionally write plots to
/// `plots_dir`.
pub fn emit_report(
    records_path: &Path,
    format: ReportFormat,
    plots_dir: Option<&Path>,
) -> Result<String, OrchestratorError> {
    let records = read_records(records_path)?;
    let report = aggregate(&records)?;
    if let Some(dir) = plots_dir {
        render_svg_panels(&report, dir)?;
    }
    render_report(&report, &metadata(&records), format)
}

pub fn render_report(
    report: &AggregateReport,
    metrics: &Value,
    format: ReportFormat,
) -> Result<String, OrchestratorError> {
    match format {
        ReportFormat::JsonlSummary => {
            let mut out = json!({
                "kind": "metadata",
                "schema_version": SCHEMA_VERSION,
                "errored_runs": report.errored_runs,
                "metrics": metrics,
            })
            .to_string();
            out.push('\n');
            for row in &report.rows {
                let mut v = serde_json::to_value(row).expect("rows serialize");
                v.as_object_mut().expect("row is an object").insert("kind".into(), "row".into());
                out.push_str(&v.to_string());
                out.push('\n');
            }
            Ok(out)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in &report.rows {
                w.serialize(row).map_err(|e| OrchestratorError::Config(format!("csv: {e}")))?;
            }
            let bytes = w.into_inner().map_err(|e| OrchestratorError::Config(format!("csv: {e}")))?;
            Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
        }
        ReportFormat::Markdown => Ok(markdown(report, metrics)),
    }
}

fn markdown(report: &AggregateReport, metrics: &Value) -> String {
    let mut s = String::from("# Evaluation summary\n\n");
    if let Some(obj) = metrics.as_object() {
        for (k, v) in obj {
            let v = v.as_str().map_or_else(|| v.to_string(), str::to_owned);
            let _ = writeln!(s, "- {k}: {v}");
        }
    }
    let _ = writeln!(s, "- errored runs (excluded): {}\n", report.errored_runs);
    s.push_str(
        "| task | model | method | runs | CrystalBLEU | pass@1 (comp) | pass@1 (func) | wrong format | repetition | input tokens | output tokens |\n",
    );
    s.push_str("|---|---|---|---:|---:|---:|---:|---:|---:|---:|---:|\n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {:.4} | {:.2} | {:.2} | {:.3} | {:.3} | {} | {} |",
            r.task_id,
            r.model_id,
            r.method,
            r.runs,
            r.mean_crystal_bleu,
            r.pass_at_1_comp,
            r.pass_at_1_func,
            r.wrong_format_rate,
            r.repetition_rate,
            r.input_tokens,
            r.output_tokens
        );
    }
    s
}

const COLORS: [&str; 4] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52"];

/// One grouped bar chart per (model, panel): tasks on the x axis, one bar
/// per method. Returns the written paths.
pub fn render_svg_panels(report: &AggregateReport, dir: &Path) -> Result<Vec<PathBuf>, OrchestratorError> {
    fs::create_dir_all(dir).map_err(|source| OrchestratorError::Io { path: dir.to_owned(), source })?;
    let mut models: Vec<&str> = report.rows.iter().map(|r| r.model_id.as_str()).collect();
    models.sort_unstable();
    models.dedup();
    let mut written = Vec::new();
    for model in models {
        let rows: Vec<&CellRow> = report.rows.iter().filter(|r| r.model_id == model).collect();
        for (stem, title, value) in PANELS {
            let svg = bar_chart(&format!("{title}: {model}"), &rows, value);
            let path = dir.join(format!("{}_{stem}.svg", sanitize(model)));
            fs::write(&path, svg).map_err(|source| OrchestratorError::Io { path: path.clone(), source })?;
            written.push(path);
        }
    }
    Ok(written)
}

fn bar_chart(title: &str, rows: &[&CellRow], value: Metric) -> String {
    let mut tasks: Vec<&str> = rows.iter().map(|r| r.task_id.as_str()).collect();
    tasks.sort_unstable();
    tasks.dedup();
    let methods: Vec<MethodName> =
        MethodName::ALL.into_iter().filter(|m| rows.iter().any(|r| r.method == *m)).collect();

    let (bar_w, gap, left, top, plot_h) = (22.0, 28.0, 50.0, 40.0, 200.0);
    let group_w = bar_w * methods.len() as f64;
    let width = left + tasks.len() as f64 * (group_w + gap) + 150.0;
    let height = top + plot_h + 50.0;
    let base = top + plot_h;

    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    let _ = writeln!(s, "<text x=\"{left}\" y=\"20\" font-size=\"14\">{}</text>", escape(title));
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let y = base - v * plot_h;
        let _ = writeln!(
            s,
            "<line x1=\"{left}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#ddd\"/><text x=\"{}\" y=\"{}\" text-anchor=\"end\">{v:.2}</text>",
            width - 150.0,
            left - 6.0,
            y + 4.0
        );
    }
    for (ti, task) in tasks.iter().enumerate() {
        let x0 = left + gap / 2.0 + ti as f64 * (group_w + gap);
        for (mi, m) in methods.iter().enumerate() {
            let Some(row) = rows.iter().find(|r| r.task_id == *task && r.method == *m) else { continue };
            let v = value(row).clamp(0.0, 1.0);
            let h = v * plot_h;
            let _ = writeln!(
                s,
                "<rect x=\"{}\" y=\"{}\" width=\"{bar_w}\" height=\"{h}\" fill=\"{}\"><title>{} {}: {:.4}</title></rect>",
                x0 + mi as f64 * bar_w,
                base - h,
                COLORS[mi % COLORS.len()],
                escape(task),
                m,
                value(row)
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            x0 + group_w / 2.0,
            base + 16.0,
            escape(task)
        );
    }
    let legend_x = width - 140.0;
    for (mi, m) in methods.iter().enumerate() {
        let y = top + mi as f64 * 18.0;
        let _ = writeln!(
            s,
            "<rect x=\"{legend_x}\" y=\"{y}\" width=\"12\" height=\"12\" fill=\"{}\"/><text x=\"{}\" y=\"{}\">{m}</text>",
            COLORS[mi % COLORS.len()],
            legend_x + 18.0,
            y + 10.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}
