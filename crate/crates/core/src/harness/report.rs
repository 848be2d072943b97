use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Method, RunRecord};
use crate::error::{Error, Result};

/// Aggregate over one (noise level, method) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub noise: f64,
    pub method: Method,
    pub success_rate: f64,
    /// Mean wall time over successful episodes only; `None` without successes.
    pub mean_runtime_s: Option<f64>,
    pub n: usize,
    pub successes: usize,
    pub mean_prior_queries: f64,
    /// Mean search iterations over successful episodes only.
    pub mean_iterations_success: Option<f64>,
    pub goal_plan_violations: usize,
    pub prob_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn row(&self, noise: f64, method: Method) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.noise.to_bits() == noise.to_bits())
    }

    pub fn noise_levels(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.rows.iter().map(|r| r.noise).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub fn aggregate(records: &[RunRecord]) -> Summary {
    let mut groups: BTreeMap<(u64, Method), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((ordered_bits(r.noise_level), r.method)).or_default().push(r);
    }
    let rows = groups
        .into_values()
        .map(|g| {
            let n = g.len();
            let wins: Vec<&&RunRecord> = g.iter().filter(|r| r.success).collect();
            SummaryRow {
                noise: g[0].noise_level,
                method: g[0].method,
                success_rate: wins.len() as f64 / n as f64,
                mean_runtime_s: mean(wins.iter().map(|r| r.wall_time)),
                n,
                successes: wins.len(),
                mean_prior_queries: mean(g.iter().map(|r| r.prior_queries as f64)).unwrap_or(0.0),
                mean_iterations_success: mean(wins.iter().map(|r| r.iterations as f64)),
                goal_plan_violations: g.iter().map(|r| r.goal_plan_violations).sum(),
                prob_violations: g.iter().map(|r| r.prob_violations).sum(),
            }
        })
        .collect();
    Summary { rows }
}

/// Bit pattern that sorts like the float for non-negative values.
fn ordered_bits(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

pub const CSV_HEADER: [&str; 10] = [
    "noise",
    "method",
    "success_rate",
    "mean_runtime_s",
    "n",
    "successes",
    "mean_prior_queries",
    "mean_iterations_success",
    "goal_plan_violations",
    "prob_violations",
];

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "N/A".to_string(), |v| v.to_string())
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s == "N/A" {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|e| Error::Format(format!("bad number `{s}`: {e}")))
    }
}

pub fn write_summary_csv(summary: &Summary, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(CSV_HEADER).map_err(|e| csv_err(path, e))?;
    for r in &summary.rows {
        w.write_record([
            r.noise.to_string(),
            r.method.as_str().to_string(),
            r.success_rate.to_string(),
            opt(r.mean_runtime_s),
            r.n.to_string(),
            r.successes.to_string(),
            r.mean_prior_queries.to_string(),
            opt(r.mean_iterations_success),
            r.goal_plan_violations.to_string(),
            r.prob_violations.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Format(format!("{}: {e}", path.display()))
    }
}

pub fn read_summary_csv(path: &Path) -> Result<Summary> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = rd.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().take(5).ne(CSV_HEADER.iter().take(5).copied()) {
        return Err(Error::Format(format!("{}: unexpected header", path.display())));
    }
    let num = |s: &str| -> Result<f64> {
        s.parse().map_err(|e| Error::Format(format!("bad number `{s}`: {e}")))
    };
    let int = |s: &str| -> Result<u64> {
        s.parse().map_err(|e| Error::Format(format!("bad integer `{s}`: {e}")))
    };
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != CSV_HEADER.len() {
            return Err(Error::Format(format!("{}: row has {} fields", path.display(), rec.len())));
        }
        rows.push(SummaryRow {
            noise: num(&rec[0])?,
            method: Method::parse(&rec[1])?,
            success_rate: num(&rec[2])?,
            mean_runtime_s: parse_opt(&rec[3])?,
            n: int(&rec[4])? as usize,
            successes: int(&rec[5])? as usize,
            mean_prior_queries: num(&rec[6])?,
            mean_iterations_success: parse_opt(&rec[7])?,
            goal_plan_violations: int(&rec[8])? as usize,
            prob_violations: int(&rec[9])?,
        });
    }
    Ok(Summary { rows })
}

/// Grouped bar chart: one group per noise level, one bar per method.
fn bar_chart(summary: &Summary, title: &str, y_label: &str, value: impl Fn(&SummaryRow) -> Option<f64>) -> String {
    let noises = summary.noise_levels();
    let methods = [Method::PriorOnly, Method::Vlaps];
    let colors = ["#8c8c8c", "#1f77b4"];
    let (w, h, left, bottom, top) = (640.0, 360.0, 60.0, 50.0, 40.0);
    let plot_h = h - bottom - top;
    let max = summary
        .rows
        .iter()
        .filter_map(&value)
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let group_w = (w - left - 20.0) / noises.len().max(1) as f64;
    let bar_w = group_w * 0.35;

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n\
         <text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">{y_label}</text>\n\
         <line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{left}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        w / 2.0,
        top + plot_h / 2.0,
        top + plot_h / 2.0,
        h - bottom,
        h - bottom,
        w - 20.0,
        h - bottom,
    );
    for (gi, noise) in noises.iter().enumerate() {
        let gx = left + gi as f64 * group_w;
        for (mi, method) in methods.iter().enumerate() {
            let Some(row) = summary.row(*noise, *method) else { continue };
            let x = gx + group_w * 0.12 + mi as f64 * bar_w;
            match value(row) {
                Some(v) => {
                    let bh = plot_h * v / max;
                    svg += &format!(
                        "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{bar_w:.1}\" height=\"{bh:.1}\" fill=\"{}\"><title>{} {v:.4}</title></rect>\n",
                        h - bottom - bh,
                        colors[mi],
                        method.as_str()
                    );
                }
                None => {
                    svg += &format!(
                        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"10\">N/A</text>\n",
                        x + bar_w / 2.0,
                        h - bottom - 4.0
                    );
                }
            }
        }
        svg += &format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">noise {noise}</text>\n",
            gx + group_w / 2.0,
            h - bottom + 18.0
        );
    }
    for (mi, method) in methods.iter().enumerate() {
        let y = h - 12.0;
        let x = left + mi as f64 * 120.0;
        svg += &format!(
            "<rect x=\"{x}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{}\" y=\"{y}\">{}</text>\n",
            y - 9.0,
            colors[mi],
            x + 14.0,
            method.as_str()
        );
    }
    svg += &format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{max:.3}</text>\n</svg>\n",
        left - 4.0,
        top + 4.0
    );
    svg
}

/// Writes `summary.csv`, `summary.json`, `success_rate.svg` and
/// `mean_runtime.svg` into `dir`, returning the paths written.
pub fn render_report(summary: &Summary, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("summary.csv");
    write_summary_csv(summary, &csv_path)?;
    let json_path = dir.join("summary.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(summary)?).map_err(|e| Error::io(&json_path, e))?;
    let sr_path = dir.join("success_rate.svg");
    std::fs::write(&sr_path, bar_chart(summary, "Success rate by prior noise", "success rate", |r| Some(r.success_rate)))
        .map_err(|e| Error::io(&sr_path, e))?;
    let rt_path = dir.join("mean_runtime.svg");
    std::fs::write(&rt_path, bar_chart(summary, "Mean runtime of successful episodes", "seconds", |r| r.mean_runtime_s))
        .map_err(|e| Error::io(&rt_path, e))?;
    Ok(vec![csv_path, json_path, sr_path, rt_path])
}
