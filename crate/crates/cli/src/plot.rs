//! Static SVG bar charts from report CSVs: one panel of minFDE@K per subset,
//! one of fluctuation per subset, a bar group per subset and a bar per report.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use streamcast::metrics::ReportRow;

const COLORS: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];
const PANEL_W: f64 = 520.0;
const PANEL_H: f64 = 240.0;
const MARGIN: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn panel(out: &mut String, top: f64, title: &str, column: &str, reports: &[(String, Vec<ReportRow>)]) {
    let labels: Vec<&str> = reports[0].1.iter().map(|r| r.label.as_str()).collect();
    let value = |rows: &[ReportRow], label: &str| rows.iter().find(|r| r.label == label).and_then(|r| r.column(column));
    let max = reports
        .iter()
        .flat_map(|(_, rows)| labels.iter().filter_map(|l| value(rows, l)))
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let base = top + PANEL_H;
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="{:.1}" font-size="14">{}</text>"#, top - 8.0, escape(title));
    let _ = writeln!(
        out,
        r#"<line x1="{MARGIN}" y1="{base:.1}" x2="{:.1}" y2="{base:.1}" stroke="black"/>"#,
        MARGIN + PANEL_W
    );
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{max:.3}</text>"#, MARGIN - 4.0, top + 4.0);
    let group_w = PANEL_W / labels.len() as f64;
    let bar_w = group_w * 0.8 / reports.len() as f64;
    for (g, label) in labels.iter().enumerate() {
        let gx = MARGIN + g as f64 * group_w + group_w * 0.1;
        for (i, (_, rows)) in reports.iter().enumerate() {
            let x = gx + i as f64 * bar_w;
            match value(rows, label) {
                Some(v) => {
                    let h = v / max * PANEL_H;
                    let _ = writeln!(
                        out,
                        r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{}"><title>{v}</title></rect>"#,
                        base - h,
                        bar_w * 0.95,
                        COLORS[i % COLORS.len()]
                    );
                }
                None => {
                    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="middle">NA</text>"#, x + bar_w / 2.0, base - 3.0);
                }
            }
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
            gx + group_w * 0.4,
            base + 14.0,
            escape(label)
        );
    }
}

/// `reports` are `(name, rows)` pairs; every report must list the same rows.
pub fn render_svg(reports: &[(String, Vec<ReportRow>)]) -> Result<String> {
    if reports.is_empty() {
        bail!("nothing to plot: no reports given");
    }
    let labels: Vec<&String> = reports[0].1.iter().map(|r| &r.label).collect();
    for (name, rows) in reports {
        if rows.iter().map(|r| &r.label).collect::<Vec<_>>() != labels {
            bail!("report '{name}' has different rows than '{}'", reports[0].0);
        }
    }
    let legend_h = 18.0 * reports.len() as f64;
    let width = PANEL_W + 2.0 * MARGIN;
    let height = 2.0 * (PANEL_H + 2.0 * MARGIN) + legend_h;
    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    out.push('\n');
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    panel(&mut out, MARGIN, "minFDE@K (m)", "min_fde_k", reports);
    panel(&mut out, PANEL_H + 3.0 * MARGIN, "fluctuation (m/frame)", "fluctuation", reports);
    let ly = 2.0 * (PANEL_H + 2.0 * MARGIN);
    for (i, (name, _)) in reports.iter().enumerate() {
        let y = ly + 18.0 * i as f64;
        let _ = writeln!(out, r#"<rect x="{MARGIN}" y="{:.1}" width="12" height="12" fill="{}"/>"#, y - 10.0, COLORS[i % COLORS.len()]);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{y:.1}" font-size="12">{}</text>"#, MARGIN + 18.0, escape(name));
    }
    out.push_str("</svg>\n");
    Ok(out)
}
