//! CSV and SVG emission.
//!
//! Floats are written with 17 significant digits so files round-trip
//! exactly and reruns diff clean. SVG plots are deliberately small hand
//! -rolled line charts for quick visual regression, not publication
//! figures.

use std::fmt::Write as _;
use std::path::Path;

use crate::diagnostics::DiagRow;
use crate::error::Result;
use crate::scheme::{GridSpec, SystemState};

/// 17 significant digits; enough to reconstruct the exact f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Snapshot CSV: `t, lane, x_center, u`, lanes stacked, one row per cell.
pub fn snapshot_csv(snapshots: &[SystemState], grid: &GridSpec) -> String {
    let mut out = String::from("t,lane,x_center,u\n");
    for state in snapshots {
        for (k, lane) in state.u.iter().enumerate() {
            for (i, &u) in lane.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    fmt_f64(state.t),
                    k + 1,
                    fmt_f64(grid.x_center(i)),
                    fmt_f64(u)
                );
            }
        }
    }
    out
}

/// Diagnostics CSV: `step, t, mass_total, mass_per_lane..., tv_per_lane...,
/// min_u, max_u`.
pub fn diagnostics_csv(rows: &[DiagRow]) -> String {
    let n_lanes = rows.first().map_or(0, |r| r.mass_per_lane.len());
    let mut out = String::from("step,t,mass_total");
    for k in 1..=n_lanes {
        let _ = write!(out, ",mass_lane{k}");
    }
    for k in 1..=n_lanes {
        let _ = write!(out, ",tv_lane{k}");
    }
    out.push_str(",min_u,max_u\n");
    for r in rows {
        let _ = write!(out, "{},{},{}", r.step, fmt_f64(r.t), fmt_f64(r.mass_total));
        for m in &r.mass_per_lane {
            let _ = write!(out, ",{}", fmt_f64(*m));
        }
        for tv in &r.tv_per_lane {
            let _ = write!(out, ",{}", fmt_f64(*tv));
        }
        let _ = writeln!(out, ",{},{}", fmt_f64(r.min_u), fmt_f64(r.max_u));
    }
    out
}

/// Kernel weight dump: `p, zeta`.
pub fn weights_csv(zeta: &[f64]) -> String {
    let mut out = String::from("p,zeta\n");
    for (p, z) in zeta.iter().enumerate() {
        let _ = writeln!(out, "{p},{}", fmt_f64(*z));
    }
    out
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    if let Some(parent) = path.as_ref().parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// One named series of a line plot.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];
const W: f64 = 720.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;

/// Minimal multi-series line plot.
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
            y_lo = y_lo.min(y);
            y_hi = y_hi.max(y);
        }
    }
    if !x_lo.is_finite() {
        (x_lo, x_hi, y_lo, y_hi) = (0.0, 1.0, 0.0, 1.0);
    }
    if x_hi - x_lo < 1e-300 {
        x_hi = x_lo + 1.0;
    }
    if y_hi - y_lo < 1e-300 {
        y_hi = y_lo + 1.0;
    }
    // 5% headroom on y
    let pad = 0.05 * (y_hi - y_lo);
    y_lo -= pad;
    y_hi += pad;

    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y_lo) / (y_hi - y_lo) * (H - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        W / 2.0,
        title
    );
    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        r = W - MARGIN,
        t = MARGIN,
        b = H - MARGIN
    );
    // tick labels at the extremes
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{:.4}</text>"#,
        MARGIN,
        H - MARGIN + 16.0,
        x_lo
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{:.4}</text>"#,
        W - MARGIN,
        H - MARGIN + 16.0,
        x_hi
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{:.4}</text>"#,
        MARGIN - 6.0,
        H - MARGIN,
        y_lo
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{:.4}</text>"#,
        MARGIN - 6.0,
        MARGIN + 4.0,
        y_hi
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        W / 2.0,
        H - 14.0,
        x_label
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        y_label
    );

    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let mut path = String::new();
        for (j, &(x, y)) in s.points.iter().enumerate() {
            let _ = write!(path, "{}{:.2},{:.2} ", if j == 0 { "M" } else { "L" }, sx(x), sy(y));
        }
        let _ = writeln!(
            svg,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.trim_end()
        );
        let ly = MARGIN + 16.0 * idx as f64 + 8.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{x0}" y1="{ly}" x2="{x1}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{xt}" y="{yt}" font-family="sans-serif" font-size="12">{label}</text>"#,
            x0 = W - MARGIN - 130.0,
            x1 = W - MARGIN - 110.0,
            xt = W - MARGIN - 104.0,
            yt = ly + 4.0,
            label = s.label
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Snapshot plot of all lanes at the recorded times.
pub fn snapshot_svg(snapshots: &[SystemState], grid: &GridSpec, title: &str) -> String {
    let mut series = Vec::new();
    let mut labels = Vec::new();
    for state in snapshots {
        for k in 0..state.n_lanes() {
            labels.push(format!("u{} t={:.3}", k + 1, state.t));
        }
    }
    let mut li = 0;
    for state in snapshots {
        for lane in &state.u {
            let points = lane
                .iter()
                .enumerate()
                .map(|(i, &u)| (grid.x_center(i), u))
                .collect();
            series.push(Series {
                label: &labels[li],
                points,
            });
            li += 1;
        }
    }
    line_plot_svg(title, "x", "density", &series)
}
