//! Rendering of analysis results as CSV, JSON, SVG or Markdown.
//!
//! All renderers are pure functions of their input, so identical results give
//! byte-identical output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{AtlasRow, LayerRow, SeriesRates, ShareSlice};
use crate::comparative::{DriftTopSet, OverlapReport};
use crate::diachronic::{ImplicitBreakdown, SliceSeries, WindowDelta};
use crate::evidence::EvidenceBundle;
use crate::store::ValidationReport;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
    Md,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" => Ok(Format::Svg),
            "md" | "markdown" => Ok(Format::Md),
            _ => Err(Error::UnknownFormat(s.to_string())),
        }
    }
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Svg => "svg",
            Format::Md => "md",
        }
    }
}

/// Any analysis result that can be emitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "analysis", content = "result", rename_all = "snake_case")]
pub enum Report {
    Atlas(Vec<AtlasRow>),
    Trajectory(Vec<SliceSeries>),
    Rates(Vec<SeriesRates>),
    Shares(Vec<ShareSlice>),
    WindowDelta(Vec<WindowDelta>),
    Drift(Vec<DriftTopSet>),
    Overlap(Vec<OverlapReport>),
    CrossLayer(Vec<LayerRow>),
    Implicit(Vec<ImplicitBreakdown>),
    Evidence(Vec<EvidenceBundle>),
    Validation(Vec<ValidationReport>),
}

impl Report {
    pub fn kind(&self) -> &'static str {
        match self {
            Report::Atlas(_) => "atlas",
            Report::Trajectory(_) => "trajectory",
            Report::Rates(_) => "rates",
            Report::Shares(_) => "shares",
            Report::WindowDelta(_) => "window_delta",
            Report::Drift(_) => "drift",
            Report::Overlap(_) => "overlap",
            Report::CrossLayer(_) => "cross_layer",
            Report::Implicit(_) => "implicit",
            Report::Evidence(_) => "evidence",
            Report::Validation(_) => "validation",
        }
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

fn table(report: &Report) -> Table {
    let (header, rows): (Vec<&'static str>, Vec<Vec<String>>) = match report {
        Report::Atlas(rows) => (
            vec![
                "concept_id",
                "corpus",
                "implicit_ratio",
                "diversity",
                "peak_year",
                "turn_year",
                "turn_intensity",
                "salient_count",
                "threshold",
            ],
            rows.iter()
                .map(|r| {
                    vec![
                        r.concept_id.clone(),
                        r.corpus.clone(),
                        opt(r.implicit_ratio),
                        num(r.diversity),
                        r.peak_year.to_string(),
                        opt(r.turn_year),
                        opt(r.turn_intensity),
                        r.salient_count.to_string(),
                        num(r.threshold),
                    ]
                })
                .collect(),
        ),
        Report::Trajectory(series) => (
            vec!["series", "corpus", "conditioning", "year", "value", "count"],
            series
                .iter()
                .flat_map(|s| {
                    s.years.iter().enumerate().map(move |(i, y)| {
                        vec![
                            s.key.scope.to_string(),
                            opt(s.key.corpus.as_deref()),
                            s.key.conditioning.clone(),
                            y.to_string(),
                            opt(s.values[i]),
                            s.counts[i].to_string(),
                        ]
                    })
                })
                .collect(),
        ),
        Report::Rates(all) => (
            vec!["series", "corpus", "conditioning", "from_year", "to_year", "rate"],
            all.iter()
                .flat_map(|s| {
                    s.rates.iter().map(move |r| {
                        vec![
                            s.key.scope.to_string(),
                            opt(s.key.corpus.as_deref()),
                            s.key.conditioning.clone(),
                            r.from_year.to_string(),
                            r.to_year.to_string(),
                            num(r.rate),
                        ]
                    })
                })
                .collect(),
        ),
        Report::Shares(slices) => (
            vec![
                "concept_id",
                "corpus",
                "year",
                "units",
                "label",
                "mean",
                "share",
                "entropy",
                "reorganization",
            ],
            slices
                .iter()
                .flat_map(|s| {
                    s.composition.components.iter().map(move |c| {
                        vec![
                            s.composition.concept_id.clone(),
                            s.composition.corpus.clone(),
                            opt(s.composition.year),
                            s.composition.unit_count.to_string(),
                            c.label.clone(),
                            num(c.mean),
                            num(c.share),
                            num(s.entropy),
                            opt(s.reorganization),
                        ]
                    })
                })
                .collect(),
        ),
        Report::WindowDelta(deltas) => (
            vec![
                "concept_id",
                "corpus",
                "conditioning",
                "window_a",
                "window_b",
                "label",
                "share_a",
                "share_b",
                "delta",
            ],
            deltas
                .iter()
                .flat_map(|d| {
                    d.components.iter().map(move |c| {
                        vec![
                            d.concept_id.clone(),
                            d.corpus.clone(),
                            d.conditioning.clone(),
                            d.window_a.to_string(),
                            d.window_b.to_string(),
                            c.label.clone(),
                            num(c.share_a),
                            num(c.share_b),
                            num(c.delta),
                        ]
                    })
                })
                .collect(),
        ),
        Report::Drift(sets) => (
            vec!["concept_id", "corpus", "rank", "feature", "drift"],
            sets.iter()
                .flat_map(|s| {
                    s.features.iter().enumerate().map(move |(i, f)| {
                        vec![
                            s.concept_id.clone(),
                            s.corpus.clone(),
                            (i + 1).to_string(),
                            f.feature.to_string(),
                            num(f.drift),
                        ]
                    })
                })
                .collect(),
        ),
        Report::Overlap(reports) => (
            vec!["concept_id", "corpus_a", "corpus_b", "k", "jaccard", "part", "feature"],
            reports
                .iter()
                .flat_map(|r| {
                    [("shared", &r.shared), ("only_a", &r.only_a), ("only_b", &r.only_b)]
                        .into_iter()
                        .flat_map(move |(part, ids)| {
                            ids.iter().map(move |f| {
                                vec![
                                    r.concept_id.clone(),
                                    r.corpus_a.clone(),
                                    r.corpus_b.clone(),
                                    r.k.to_string(),
                                    num(r.jaccard),
                                    part.to_string(),
                                    f.to_string(),
                                ]
                            })
                        })
                })
                .collect(),
        ),
        Report::CrossLayer(rows) => (
            vec![
                "layer",
                "peak_year",
                "turn_year",
                "turn_intensity",
                "avg_jaccard",
                "fingerprint_size",
            ],
            rows.iter()
                .map(|r| {
                    vec![
                        r.layer.clone(),
                        r.peak_year.to_string(),
                        opt(r.turn_year),
                        opt(r.turn_intensity),
                        num(r.avg_jaccard),
                        r.fingerprint_size.to_string(),
                    ]
                })
                .collect(),
        ),
        Report::Implicit(rows) => (
            vec![
                "concept_id",
                "corpus",
                "salient_count",
                "anchored_count",
                "implicit_count",
                "anchored_mass",
                "implicit_mass",
                "implicit_ratio",
            ],
            rows.iter()
                .map(|r| {
                    vec![
                        r.concept_id.clone(),
                        r.corpus.clone(),
                        r.salient_count.to_string(),
                        r.anchored_count.to_string(),
                        r.implicit_count.to_string(),
                        num(r.anchored_mass),
                        num(r.implicit_mass),
                        opt(r.implicit_ratio),
                    ]
                })
                .collect(),
        ),
        Report::Evidence(bundles) => (
            vec![
                "target", "rule", "year_1", "year_2", "rank", "displayed", "unit_id", "corpus", "year",
                "activation", "text",
            ],
            bundles
                .iter()
                .flat_map(|b| {
                    let rule = match b.rule {
                        crate::evidence::EvidenceRule::DiachronicPeakPair => "diachronic_peak_pair",
                        crate::evidence::EvidenceRule::CrossCorpusTop30 => "cross_corpus_top30",
                    };
                    b.items.iter().enumerate().map(move |(i, item)| {
                        vec![
                            b.target.describe(),
                            rule.to_string(),
                            opt(b.year_pair.map(|p| p.0)),
                            opt(b.year_pair.map(|p| p.1)),
                            (i + 1).to_string(),
                            (i < b.display).to_string(),
                            item.unit_id.clone(),
                            item.corpus.clone(),
                            item.year.to_string(),
                            num(item.activation),
                            item.text.clone(),
                        ]
                    })
                })
                .collect(),
        ),
        Report::Validation(reports) => (
            vec!["store", "file", "line", "message"],
            reports
                .iter()
                .flat_map(|r| {
                    r.errors.iter().map(move |e| {
                        vec![r.path.clone(), e.file.clone(), opt(e.line), e.message.clone()]
                    })
                })
                .collect(),
        ),
    };
    Table { header, rows }
}

fn render_csv(report: &Report) -> Result<String> {
    let t = table(report);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&t.header)?;
    for row in &t.rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

fn render_markdown(report: &Report) -> String {
    if let Report::Evidence(bundles) = report {
        return bundles
            .iter()
            .map(EvidenceBundle::to_markdown)
            .collect::<Vec<_>>()
            .join("\n");
    }
    let t = table(report);
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", t.header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(t.header.len()));
    for row in &t.rows {
        let cells: Vec<String> = row.iter().map(|c| md_cell(c)).collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

struct Line {
    label: String,
    points: Vec<(i32, f64)>,
}

/// Line chart with one polyline per line; absent points are skipped.
fn line_chart(title: &str, lines: &[Line]) -> String {
    let (w, h) = (720.0, 400.0);
    let (left, right, top, bottom) = (60.0, 200.0, 40.0, 50.0);
    let xs: Vec<i32> = lines.iter().flat_map(|l| l.points.iter().map(|p| p.0)).collect();
    let ys: Vec<f64> = lines.iter().flat_map(|l| l.points.iter().map(|p| p.1)).collect();
    let x_min = xs.iter().copied().min().unwrap_or(0);
    let x_max = xs.iter().copied().max().unwrap_or(1).max(x_min + 1);
    let y_min = ys.iter().copied().fold(0.0_f64, f64::min);
    let mut y_max = ys.iter().copied().fold(0.0_f64, f64::max);
    if y_max <= y_min {
        y_max = y_min + 1.0;
    }
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let px = |x: i32| left + (x - x_min) as f64 / (x_max - x_min) as f64 * plot_w;
    let py = |y: f64| top + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{left}" y="22" font-size="14">{}</text>"#,
        xml_escape(title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        top + plot_h,
        left + plot_w,
        top + plot_h
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{:.2}" stroke="black"/>"#,
        top + plot_h
    );
    let step = ((x_max - x_min) / 10).max(1);
    let mut x = x_min;
    while x <= x_max {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x}</text>"#,
            px(x),
            top + plot_h + 16.0
        );
        x += step;
    }
    for i in 0..=4 {
        let v = y_min + (y_max - y_min) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 6.0,
            py(v) + 4.0,
            format_tick(v)
        );
    }
    for (i, line) in lines.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = line
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
            pts.join(" "),
            xml_escape(&line.label)
        );
        let ly = top + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" fill="{color}">{}</text>"#,
            left + plot_w + 10.0,
            ly + 4.0,
            xml_escape(&line.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64) -> String {
    let t = format!("{v:.3}");
    let t = t.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" { "0".into() } else { t.to_string() }
}

/// Heatmap with one row per component and one column per window contrast.
fn heatmap(deltas: &[WindowDelta]) -> String {
    let mut rows: Vec<String> = Vec::new();
    for d in deltas {
        for c in &d.components {
            let key = format!("{} / {}", d.concept_id, c.label);
            if !rows.contains(&key) {
                rows.push(key);
            }
        }
    }
    let cols: Vec<String> = deltas
        .iter()
        .map(|d| format!("{} [{}]", d.contrast_label(), d.corpus))
        .collect();
    let max_abs = deltas
        .iter()
        .flat_map(|d| d.components.iter().map(|c| c.delta.abs()))
        .fold(0.0_f64, f64::max);
    let (cell_w, cell_h, left, top) = (150.0, 28.0, 320.0, 60.0);
    let w = left + cell_w * cols.len() as f64 + 20.0;
    let h = top + cell_h * rows.len() as f64 + 20.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for (j, col) in cols.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            left + cell_w * (j as f64 + 0.5),
            top - 10.0,
            xml_escape(col)
        );
    }
    for (i, row) in rows.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 8.0,
            top + cell_h * (i as f64 + 0.5) + 4.0,
            xml_escape(row)
        );
    }
    for (j, d) in deltas.iter().enumerate() {
        for c in &d.components {
            let key = format!("{} / {}", d.concept_id, c.label);
            let i = rows.iter().position(|r| *r == key).expect("row registered");
            let t = if max_abs > 0.0 { c.delta / max_abs } else { 0.0 };
            let fill = diverging(t);
            let (x, y) = (left + cell_w * j as f64, top + cell_h * i as f64);
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{cell_w}" height="{cell_h}" fill="{fill}" stroke="white"><title>{}</title></rect>"#,
                num(c.delta)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:+.3}</text>"#,
                x + cell_w / 2.0,
                y + cell_h / 2.0 + 4.0,
                c.delta
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Blue for negative, red for positive, white at zero; `t` in `[-1, 1]`.
fn diverging(t: f64) -> String {
    let t = t.clamp(-1.0, 1.0);
    let fade = |k: f64| (255.0 - 155.0 * k).round() as u8;
    let (r, g, b) = if t >= 0.0 {
        (255, fade(t), fade(t))
    } else {
        (fade(-t), fade(-t), 255)
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn render_svg(report: &Report) -> Result<String> {
    match report {
        Report::Trajectory(series) => {
            let lines: Vec<Line> = series
                .iter()
                .map(|s| Line {
                    label: s.key.label(),
                    points: s.present(),
                })
                .collect();
            Ok(line_chart("Slice means", &lines))
        }
        Report::Rates(all) => {
            let lines: Vec<Line> = all
                .iter()
                .map(|s| Line {
                    label: s.key.label(),
                    points: s.rates.iter().map(|r| (r.to_year, r.rate)).collect(),
                })
                .collect();
            Ok(line_chart("Relative change rate", &lines))
        }
        Report::WindowDelta(deltas) => Ok(heatmap(deltas)),
        other => Err(Error::UnsupportedFormat {
            format: "svg".into(),
            kind: other.kind().into(),
        }),
    }
}

pub fn render(report: &Report, format: Format) -> Result<String> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        Format::Csv => render_csv(report),
        Format::Md => Ok(render_markdown(report)),
        Format::Svg => render_svg(report),
    }
}

/// Renders `report` and writes it to `out`.
pub fn emit_report(report: &Report, format: Format, out: &Path) -> Result<()> {
    let text = render(report, format)?;
    fs::write(out, text).map_err(|e| Error::io(out, e))
}
