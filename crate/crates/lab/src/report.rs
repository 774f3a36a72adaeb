//! Output artifacts: `report.json`, `series.csv` and `plots.svg`.
//!
//! All three are pure functions of the report and the configuration, so
//! repeated runs with the same seed produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::equiv::EquivalenceReport;
use crate::error::LabError;

pub const SCHEMA_VERSION: &str = "1.0.0";
pub const GENERATOR: &str = concat!("celab ", env!("CARGO_PKG_VERSION"));
pub const SERIES_HEADER: [&str; 5] = ["n", "a_n", "ce2_min_log", "expshrink_max_log_diam", "sr_dist"];

/// Bundled schema for `report.json`.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");
/// Bundled schema for the run configuration.
pub const CONFIG_SCHEMA: &str = include_str!("../schema/config.schema.json");

#[derive(Serialize)]
struct Envelope<'a> {
    schema_version: &'static str,
    generator: &'static str,
    seed: u64,
    config: &'a RunConfig,
    report: &'a EquivalenceReport,
}

pub fn report_json(rep: &EquivalenceReport, cfg: &RunConfig) -> String {
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        generator: GENERATOR,
        seed: cfg.seed,
        config: cfg,
        report: rep,
    };
    let mut s = serde_json::to_string_pretty(&env).expect("report serializes");
    s.push('\n');
    s
}

/// One row per `n`; `None` where a series is absent or shorter.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesRow {
    pub n: usize,
    pub a_n: Option<f64>,
    pub ce2_min_log: Option<f64>,
    pub expshrink_max_log_diam: Option<f64>,
    pub sr_dist: Option<f64>,
}

/// Worst case over `Crit′` at each `n`: smallest exponent, smallest
/// derivative, largest diameter, smallest distance.
pub fn series(rep: &EquivalenceReport) -> Vec<SeriesRow> {
    fn fold_at(series: &[&[f64]], k: usize, pick: fn(f64, f64) -> f64) -> Option<f64> {
        series.iter().filter_map(|s| s.get(k).copied()).reduce(pick)
    }
    let a: Vec<&[f64]> = rep.ce.iter().flat_map(|b| &b.estimates).map(|e| &e.per_n_exponents[..]).collect();
    let m: Vec<&[f64]> = rep.ce2.iter().flat_map(|b| &b.estimates).map(|e| &e.per_n_min_log[..]).collect();
    let d: Vec<&[f64]> = rep.sr.iter().flat_map(|b| &b.estimates).map(|r| &r.estimate.distance_series[..]).collect();
    // diameters are indexed from depth 0
    let diam: Vec<f64> = rep
        .expshrink
        .as_ref()
        .map(|b| b.estimate.per_n_max_diam.iter().skip(1).map(|x| x.ln()).collect())
        .unwrap_or_default();
    let len = a
        .iter()
        .chain(&m)
        .chain(&d)
        .map(|s| s.len())
        .chain([diam.len()])
        .max()
        .unwrap_or(0);
    (0..len)
        .map(|k| SeriesRow {
            n: k + 1,
            a_n: fold_at(&a, k, f64::min),
            ce2_min_log: fold_at(&m, k, f64::min),
            expshrink_max_log_diam: diam.get(k).copied(),
            sr_dist: fold_at(&d, k, f64::min),
        })
        .collect()
}

fn cell(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v}"),
        _ => String::new(),
    }
}

pub fn series_csv(rep: &EquivalenceReport) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(SERIES_HEADER).expect("in-memory write");
    for r in series(rep) {
        w.write_record([
            r.n.to_string(),
            cell(r.a_n),
            cell(r.ce2_min_log),
            cell(r.expshrink_max_log_diam),
            cell(r.sr_dist),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("ascii")
}

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 220.0;
const MARGIN: f64 = 40.0;

fn panel(out: &mut String, x0: f64, y0: f64, title: &str, pts: &[(f64, f64)]) {
    let (w, h) = (PANEL_W - 2.0 * MARGIN, PANEL_H - 2.0 * MARGIN);
    let (left, top) = (x0 + MARGIN, y0 + MARGIN);
    let _ = writeln!(out, r#"<g><text x="{:.1}" y="{:.1}" font-size="13">{title}</text>"#, left, y0 + 20.0);
    let _ = writeln!(
        out,
        r#"<polyline fill="none" stroke="black" points="{:.1},{:.1} {:.1},{:.1} {:.1},{:.1}"/>"#,
        left,
        top,
        left,
        top + h,
        left + w,
        top + h
    );
    if pts.is_empty() {
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="11">no data</text></g>"#, left + 10.0, top + h / 2.0);
        return;
    }
    let (xmin, xmax) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (mut ymin, mut ymax) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if ymax - ymin < 1e-12 {
        ymin -= 0.5;
        ymax += 0.5;
    }
    let xspan = (xmax - xmin).max(1.0);
    let sx = |x: f64| left + (x - xmin) / xspan * w;
    let sy = |y: f64| top + h - (y - ymin) / (ymax - ymin) * h;
    let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
    let _ = writeln!(out, r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#, coords.join(" "));
    for (y, v) in [(top + h, ymin), (top + 4.0, ymax)] {
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{v:.3}</text>"#, left - 4.0, y);
    }
    for (x, v) in [(left, xmin), (left + w, xmax)] {
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{v}</text>"#, x, top + h + 14.0);
    }
    out.push_str("</g>\n");
}

/// Four log-linear panels against `n`.
pub fn plots_svg(rep: &EquivalenceReport, cfg: &RunConfig) -> String {
    let rows = series(rep);
    let collect = |get: fn(&SeriesRow) -> Option<f64>, log: bool| -> Vec<(f64, f64)> {
        rows.iter()
            .filter_map(|r| get(r).map(|v| (r.n as f64, if log { v.ln() } else { v })))
            .filter(|p| p.1.is_finite())
            .collect()
    };
    let panels = [
        ("a_n = (1/n) log |(f^n)'(f(c))|", collect(|r| r.a_n, false)),
        ("log min |(f^n)'| over f^-n(c)", collect(|r| r.ce2_min_log, false)),
        ("log max diam of pullbacks", collect(|r| r.expshrink_max_log_diam, false)),
        ("log dist(f^n(c), Crit')", collect(|r| r.sr_dist, true)),
    ];
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif">"#,
        2.0 * PANEL_W,
        2.0 * PANEL_H
    );
    let _ = writeln!(out, "<desc>{GENERATOR}, seed {}</desc>", cfg.seed);
    for (i, (title, pts)) in panels.iter().enumerate() {
        panel(&mut out, (i % 2) as f64 * PANEL_W, (i / 2) as f64 * PANEL_H, title, pts);
    }
    out.push_str("</svg>\n");
    out
}

/// Checks a serialized report against [`REPORT_SCHEMA`].
pub fn validate_report(text: &str) -> Result<(), LabError> {
    let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).expect("bundled schema is JSON");
    let compiled = jsonschema::JSONSchema::compile(&schema).expect("bundled schema compiles");
    let doc: serde_json::Value =
        serde_json::from_str(text).map_err(|e| LabError::Numeric(format!("report is not JSON: {e}")))?;
    if let Err(errors) = compiled.validate(&doc) {
        let msgs: Vec<String> = errors.map(|e| format!("{e} at {}", e.instance_path)).collect();
        return Err(LabError::Numeric(format!("report violates its schema: {}", msgs.join("; "))));
    }
    Ok(())
}

/// Writes the three artifacts into `dir`, creating it if needed. The report
/// is checked against the bundled schema before anything is written.
pub fn emit_report(rep: &EquivalenceReport, cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>, LabError> {
    let json = report_json(rep, cfg);
    validate_report(&json)?;
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let files = [
        (&cfg.output.report, json),
        (&cfg.output.series, series_csv(rep)),
        (&cfg.output.plots, plots_svg(rep, cfg)),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| LabError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
