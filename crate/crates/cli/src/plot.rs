//! Test accuracy against cumulative backpropagated samples, as SVG.

use std::fmt::Write as _;
use std::path::Path;

use evolved_sampling::metrics::{parse_csv, MetricsRow};

use crate::failure::{io_err, Failure};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Series in order of first appearance.
fn group(rows: &[MetricsRow]) -> Vec<(&str, Vec<(f64, f64)>)> {
    let mut series: Vec<(&str, Vec<(f64, f64)>)> = Vec::new();
    for r in rows {
        let pt = (r.cum_bp_samples as f64, r.test_acc * 100.0);
        match series.iter_mut().find(|s| s.0 == r.run_id) {
            Some(s) => s.1.push(pt),
            None => series.push((&r.run_id, vec![pt])),
        }
    }
    series
}

pub fn render_svg(rows: &[MetricsRow]) -> String {
    let series = group(rows);
    let finite = rows.iter().filter(|r| r.test_acc.is_finite());
    let x_max = rows.iter().map(|r| r.cum_bp_samples).max().unwrap_or(1).max(1) as f64;
    let (mut y_min, mut y_max) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r.test_acc * 100.0), hi.max(r.test_acc * 100.0))
    });
    if !y_min.is_finite() {
        (y_min, y_max) = (0.0, 100.0);
    }
    if y_max - y_min < 1e-9 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad = (y_max - y_min) * 0.05;
    let (y_min, y_max) = (y_min - pad, y_max + pad);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + x / x_max * plot_w;
    let sy = |y: f64| TOP + (y_max - y) / (y_max - y_min) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (x0, y0, x1, y1) = (LEFT, TOP + plot_h, LEFT + plot_w, TOP);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let (xv, yv) = (f * x_max, y_min + f * (y_max - y_min));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{xv:.0}</text>"#, y0 + 20.0);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.2}</text>"#, x0 - 8.0, py + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">cumulative BP samples</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">test accuracy (%)</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );
    for (k, (id, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> =
            pts.iter().filter(|(_, y)| y.is_finite()).map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ =
            writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, points.join(" "));
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = LEFT + plot_w + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#,
            lx + 20.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(id));
    }
    s.push_str("</svg>\n");
    s
}

pub fn cmd_plot(metrics: &Path, out: &Path) -> Result<(), Failure> {
    let text = std::fs::read_to_string(metrics).map_err(io_err(format!("cannot read {}", metrics.display())))?;
    let rows = parse_csv(&text).map_err(|e| Failure::Usage(format!("{}: {e}", metrics.display())))?;
    std::fs::write(out, render_svg(&rows)).map_err(io_err(format!("cannot write {}", out.display())))
}
