//! Minimal deterministic SVG plots.

use std::fmt::Write as _;
use std::path::Path;

use super::{EvalError, EvalReport, Projection2D};

pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub const BAR_CHART_HEIGHT: f64 = 200.0;
const BAR_WIDTH: f64 = 40.0;
const BAR_GAP: f64 = 20.0;
const MARGIN: f64 = 40.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{w:.0}" height="{h:.0}" fill="white"/>"#
    );
}

/// One bar per class; bar height is `recall · BAR_CHART_HEIGHT`.
pub fn recall_bar_chart(names: &[String], recalls: &[f64]) -> String {
    let w = 2.0 * MARGIN + names.len() as f64 * (BAR_WIDTH + BAR_GAP);
    let h = BAR_CHART_HEIGHT + 2.0 * MARGIN;
    let base = MARGIN + BAR_CHART_HEIGHT;
    let mut out = String::new();
    header(&mut out, w, h);
    let _ = writeln!(
        out,
        r#"<line x1="{MARGIN}" y1="{base}" x2="{:.1}" y2="{base}" stroke="black"/>"#,
        w - MARGIN
    );
    for (i, (name, &r)) in names.iter().zip(recalls).enumerate() {
        let x = MARGIN + BAR_GAP / 2.0 + i as f64 * (BAR_WIDTH + BAR_GAP);
        let bh = r * BAR_CHART_HEIGHT;
        let _ = writeln!(
            out,
            r#"<rect class="bar" x="{x:.3}" y="{:.6}" width="{BAR_WIDTH}" height="{bh:.6}" fill="{}"/>"#,
            base - bh,
            PALETTE[i % PALETTE.len()]
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">{r:.3}</text>"#,
            x + BAR_WIDTH / 2.0,
            base - bh - 4.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">{}</text>"#,
            x + BAR_WIDTH / 2.0,
            base + 14.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Row-normalized heatmap with raw counts printed in each cell.
pub fn confusion_heatmap(names: &[String], counts: &[Vec<u64>]) -> String {
    let cell = 48.0;
    let left = 90.0;
    let top = 30.0;
    let k = counts.len() as f64;
    let mut out = String::new();
    header(&mut out, left + k * cell + 20.0, top + k * cell + 60.0);
    for (i, row) in counts.iter().enumerate() {
        let total: u64 = row.iter().sum();
        for (j, &c) in row.iter().enumerate() {
            let frac = if total == 0 {
                0.0
            } else {
                c as f64 / total as f64
            };
            let shade = (255.0 * (1.0 - frac)).round() as u8;
            let (x, y) = (left + j as f64 * cell, top + i as f64 * cell);
            let _ = writeln!(
                out,
                r##"<rect class="cell" x="{x:.1}" y="{y:.1}" width="{cell}" height="{cell}" fill="#{shade:02x}{shade:02x}ff" stroke="#cccccc"/>"##
            );
            let color = if frac > 0.5 { "white" } else { "black" };
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" fill="{color}">{c}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    for (i, name) in names.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            top + i as f64 * cell + cell / 2.0 + 4.0,
            escape(name)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            left + i as f64 * cell + cell / 2.0,
            top + k * cell + 16.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Scatter plot colored by label; unlabeled points are gray.
pub fn tsne_scatter(projection: &Projection2D) -> String {
    let size = 400.0;
    let pad = 20.0;
    let mut classes: Vec<&str> = projection
        .labels
        .iter()
        .flatten()
        .map(String::as_str)
        .collect();
    classes.sort_unstable();
    classes.dedup();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &projection.points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let scale = |v: f64, d: usize| {
        let span = hi[d] - lo[d];
        if span > 0.0 {
            pad + (v - lo[d]) / span * (size - 2.0 * pad)
        } else {
            size / 2.0
        }
    };
    let legend_w = 110.0;
    let mut out = String::new();
    header(&mut out, size + legend_w, size);
    for (p, label) in projection.points.iter().zip(&projection.labels) {
        let color = label
            .as_deref()
            .and_then(|l| classes.iter().position(|c| *c == l))
            .map_or("#999999", |i| PALETTE[i % PALETTE.len()]);
        let _ = writeln!(
            out,
            r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="{color}" fill-opacity="0.8"/>"#,
            scale(p[0], 0),
            size - scale(p[1], 1)
        );
    }
    for (i, c) in classes.iter().enumerate() {
        let y = pad + i as f64 * 18.0;
        let _ = writeln!(
            out,
            r#"<circle cx="{:.1}" cy="{y:.1}" r="5" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            size + 10.0,
            PALETTE[i % PALETTE.len()],
            size + 20.0,
            y + 4.0,
            escape(c)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn write(path: &Path, text: &str) -> Result<(), EvalError> {
    std::fs::write(path, text).map_err(|e| EvalError::Write(path.to_owned(), e))
}

/// Writes `<stem>_recall.svg` and `<stem>_confusion.svg` into `dir`.
pub fn emit_report_plots(report: &EvalReport, dir: &Path, stem: &str) -> Result<(), EvalError> {
    write(
        &dir.join(format!("{stem}_recall.svg")),
        &recall_bar_chart(&report.class_names, &report.recalls()),
    )?;
    write(
        &dir.join(format!("{stem}_confusion.svg")),
        &confusion_heatmap(&report.class_names, &report.confusion),
    )
}

pub fn emit_projection_plot(projection: &Projection2D, path: &Path) -> Result<(), EvalError> {
    write(path, &tsne_scatter(projection))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attr(line: &str, name: &str) -> f64 {
        let key = format!(r#"{name}=""#);
        let start = line.find(&key).unwrap() + key.len();
        let end = start + line[start..].find('"').unwrap();
        line[start..end].parse().unwrap()
    }

    #[test]
    fn bars_proportional_to_recall() {
        let names: Vec<String> = ["Sing", "Scream", "NoVocal"].map(String::from).to_vec();
        let recalls = [1.0, 0.25, 0.6];
        let svg = recall_bar_chart(&names, &recalls);
        let bars: Vec<&str> = svg
            .lines()
            .filter(|l| l.contains(r#"class="bar""#))
            .collect();
        assert_eq!(bars.len(), 3);
        for (line, r) in bars.iter().zip(recalls) {
            assert!((attr(line, "height") - r * BAR_CHART_HEIGHT).abs() < 1e-6);
        }
    }

    #[test]
    fn heatmap_has_k_squared_cells() {
        let names: Vec<String> = ["a", "b"].map(String::from).to_vec();
        let svg = confusion_heatmap(&names, &[vec![3, 1], vec![0, 0]]);
        assert_eq!(svg.matches(r#"class="cell""#).count(), 4);
    }

    #[test]
    fn scatter_is_deterministic() {
        let proj = Projection2D {
            points: vec![[0.0, 1.0], [2.0, -1.0], [1.0, 0.5]],
            labels: vec![Some("Sing".into()), Some("NoVocal".into()), None],
            perplexity: 1.0,
            seed: 0,
            initial_kl: 1.0,
            post_exaggeration_kl: 0.5,
            final_kl: 0.1,
        };
        assert_eq!(tsne_scatter(&proj), tsne_scatter(&proj.clone()));
        assert_eq!(tsne_scatter(&proj).matches("<circle").count(), 5);
    }
}
