//! Report emission: per-round CSV, a mean ± std summary over seeds and two
//! SVG line charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use fedfair_core::engine::{ExperimentResult, StopReason};
use fedfair_core::metrics::mean_and_sample_std;

use crate::error::{Error, Result};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;
pub const ROUNDS_CSV: &str = "rounds.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const VARIANCE_SVG: &str = "variance_by_round.svg";
pub const ACCURACY_SVG: &str = "accuracy_by_clock.svg";

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    round: u32,
    policy: &'a str,
    seed: u64,
    global_acc: f64,
    acc_variance: f64,
    cosine_unif: Option<f64>,
    jain_participation: f64,
    sim_clock_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; `None` for a single seed.
    pub std: Option<f64>,
    pub n: usize,
}

impl Stat {
    fn of(values: &[f64]) -> Result<Self> {
        let (mean, std) = mean_and_sample_std(values)?;
        Ok(Self {
            mean,
            std,
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub label: String,
    pub seeds: Vec<u64>,
    pub rounds: Stat,
    pub global_accuracy: Stat,
    pub accuracy_variance: Stat,
    /// Computed over the seeds whose final model is not all-zero accuracy.
    pub cosine_uniformity: Option<Stat>,
    pub jain_participation: Option<Stat>,
    pub sim_clock_s: Stat,
    pub energy: Stat,
    pub compute: Stat,
    pub stop_reasons: Vec<StopReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    /// Variances are on the fraction scale; multiply by 1e4 for percent².
    pub accuracy_scale: &'static str,
    pub policies: Vec<PolicySummary>,
}

/// Groups results by label, keeping first-seen order.
fn grouped(results: &[ExperimentResult]) -> Vec<(&str, Vec<&ExperimentResult>)> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&ExperimentResult>> = BTreeMap::new();
    for r in results {
        let entry = groups.entry(r.label.as_str()).or_default();
        if entry.is_empty() {
            order.push(&r.label);
        }
        entry.push(r);
    }
    order.into_iter().map(|l| (l, groups.remove(l).unwrap_or_default())).collect()
}

pub fn summarize(results: &[ExperimentResult]) -> Result<Summary> {
    let mut policies = Vec::new();
    for (label, runs) in grouped(results) {
        let collect = |f: &dyn Fn(&ExperimentResult) -> f64| runs.iter().map(|r| f(r)).collect::<Vec<_>>();
        let cosine: Vec<f64> = runs
            .iter()
            .filter_map(|r| fedfair_core::metrics::cosine_uniformity(&r.final_client_accuracy).ok())
            .collect();
        let jain: Vec<f64> = runs.iter().filter_map(|r| r.rounds.last().map(|x| x.jain_participation)).collect();
        policies.push(PolicySummary {
            label: label.to_string(),
            seeds: runs.iter().map(|r| r.seed).collect(),
            rounds: Stat::of(&collect(&|r| r.rounds.len() as f64))?,
            global_accuracy: Stat::of(&collect(&|r| r.final_global_accuracy))?,
            accuracy_variance: Stat::of(&collect(&|r| r.final_accuracy_variance))?,
            cosine_uniformity: Stat::of(&cosine).ok(),
            jain_participation: Stat::of(&jain).ok(),
            sim_clock_s: Stat::of(&collect(&|r| r.sim_clock_s))?,
            energy: Stat::of(&collect(&|r| r.resource_usage.energy))?,
            compute: Stat::of(&collect(&|r| r.resource_usage.compute))?,
            stop_reasons: runs.iter().map(|r| r.stop_reason).collect(),
        });
    }
    Ok(Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        accuracy_scale: "fraction",
        policies,
    })
}

pub fn write_csv(results: &[ExperimentResult], path: &Path) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Serialize(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in results {
        for rec in &r.rounds {
            w.serialize(CsvRow {
                round: rec.round,
                policy: &r.label,
                seed: r.seed,
                global_acc: rec.global_accuracy,
                acc_variance: rec.accuracy_variance,
                cosine_unif: rec.cosine_uniformity,
                jain_participation: rec.jain_participation,
                sim_clock_s: rec.sim_clock_s,
            })
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Series of `(x, y)` points, one per label.
type Series = Vec<(String, Vec<(f64, f64)>)>;

/// Averages a per-round quantity over seeds, truncating to the shortest run.
fn mean_series(results: &[ExperimentResult], x: impl Fn(&ExperimentResult, usize) -> f64, y: impl Fn(&ExperimentResult, usize) -> f64) -> Series {
    grouped(results)
        .into_iter()
        .map(|(label, runs)| {
            let len = runs.iter().map(|r| r.rounds.len()).min().unwrap_or(0);
            let k = runs.len() as f64;
            let points = (0..len)
                .map(|i| {
                    let mx = runs.iter().map(|r| x(r, i)).sum::<f64>() / k;
                    let my = runs.iter().map(|r| y(r, i)).sum::<f64>() / k;
                    (mx, my)
                })
                .collect();
            (label.to_string(), points)
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// A minimal line chart.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &Series) -> String {
    const W: f64 = 720.0;
    const H: f64 = 440.0;
    const L: f64 = 70.0;
    const R: f64 = 170.0;
    const T: f64 = 40.0;
    const B: f64 = 50.0;
    let points = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
    let py = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<polyline points="{L},{T} {L},{} {},{}" fill="none" stroke="black"/>"#,
        H - B,
        W - R,
        H - B
    );
    for i in 0..=4 {
        let f = f64::from(i) / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, px(xv), H - B + 16.0, tick(xv));
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, L - 6.0, py(yv) + 4.0, tick(yv));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (L + W - R) / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        (T + H - B) / 2.0,
        escape(y_label)
    );
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            coords.join(" ")
        );
        let ly = T + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{2}" y="{3}">{4}</text>"#,
            W - R + 12.0,
            W - R + 32.0,
            W - R + 38.0,
            ly + 4.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e4).contains(&a) {
        format!("{v:.1e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

/// Paths of the files written by [`emit_reports`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub variance_chart: PathBuf,
    pub accuracy_chart: PathBuf,
}

pub fn emit_reports(results: &[ExperimentResult], out_dir: &Path) -> Result<ReportFiles> {
    if results.is_empty() {
        return Err(Error::Invalid(vec!["reports: no results to emit".into()]));
    }
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let files = ReportFiles {
        csv: out_dir.join(ROUNDS_CSV),
        summary: out_dir.join(SUMMARY_JSON),
        variance_chart: out_dir.join(VARIANCE_SVG),
        accuracy_chart: out_dir.join(ACCURACY_SVG),
    };
    write_csv(results, &files.csv)?;

    let summary = summarize(results)?;
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Serialize(e.to_string()))?;
    fs::write(&files.summary, json + "\n").map_err(io(&files.summary))?;

    let variance = mean_series(
        results,
        |r, i| f64::from(r.rounds[i].round),
        |r, i| r.rounds[i].accuracy_variance,
    );
    let chart = line_chart("Per-client accuracy variance", "round", "variance", &variance);
    fs::write(&files.variance_chart, chart).map_err(io(&files.variance_chart))?;

    let accuracy = mean_series(results, |r, i| r.rounds[i].sim_clock_s, |r, i| r.rounds[i].global_accuracy);
    let chart = line_chart("Global accuracy", "simulated clock (s)", "accuracy", &accuracy);
    fs::write(&files.accuracy_chart, chart).map_err(io(&files.accuracy_chart))?;
    Ok(files)
}
