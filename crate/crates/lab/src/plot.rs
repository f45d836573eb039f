//! Static SVG line charts built from result tables.

use std::fmt::Write;

use crate::table::{ResultTable, TableError};

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f"];

#[derive(Clone, Debug)]
pub struct PlotSpec {
    pub title: String,
    pub x: String,
    pub y: String,
    /// Rows sharing a value in this column form one line.
    pub group: Option<String>,
    pub log_x: bool,
    pub log_y: bool,
}

pub type Series = (String, Vec<(f64, f64)>);

/// Groups the table's rows into series following `spec`. Rows whose x or y
/// is not numeric, or not positive on a log axis, are dropped.
pub fn series_from_table(table: &ResultTable, spec: &PlotSpec) -> Result<Vec<Series>, TableError> {
    let xi = table.column_index(&spec.x)?;
    let yi = table.column_index(&spec.y)?;
    let gi = spec.group.as_deref().map(|g| table.column_index(g)).transpose()?;
    let mut out: Vec<Series> = Vec::new();
    for row in table.rows() {
        let (Some(x), Some(y)) = (row[xi].as_f64(), row[yi].as_f64()) else {
            continue;
        };
        if (spec.log_x && x <= 0.0) || (spec.log_y && y <= 0.0) || !x.is_finite() || !y.is_finite() {
            continue;
        }
        let name = gi.map(|g| format!("{}={}", spec.group.as_deref().unwrap_or(""), row[g])).unwrap_or_default();
        match out.iter_mut().find(|s| s.0 == name) {
            Some(s) => s.1.push((x, y)),
            None => out.push((name, vec![(x, y)])),
        }
    }
    for s in &mut out {
        s.1.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(out)
}

pub fn render_svg(spec: &PlotSpec, series: &[Series]) -> String {
    let tx = |v: f64| if spec.log_x { v.log10() } else { v };
    let ty = |v: f64| if spec.log_y { v.log10() } else { v };
    let pts = series.iter().flat_map(|s| s.1.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(tx(x));
        x1 = x1.max(tx(x));
        y0 = y0.min(ty(y));
        y1 = y1.max(ty(y));
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let px = |v: f64| MARGIN + (tx(v) - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let py = |v: f64| H - MARGIN - (ty(v) - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(&spec.title));
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{b}" stroke="black"/>"#,
        b = H - MARGIN,
        r = W - MARGIN
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (vx, vy) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let lx = if spec.log_x { 10f64.powf(vx) } else { vx };
        let ly = if spec.log_y { 10f64.powf(vy) } else { vy };
        let gx = MARGIN + f * (W - 2.0 * MARGIN);
        let gy = H - MARGIN - f * (H - 2.0 * MARGIN);
        let _ = writeln!(s, r#"<text x="{gx}" y="{}" text-anchor="middle">{}</text>"#, H - MARGIN + 18.0, tick(lx));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN - 6.0, gy + 4.0, tick(ly));
    }
    let axis = |name: &str, log: bool| if log { format!("{name} (log)") } else { name.to_string() };
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, escape(&axis(&spec.x, spec.log_x)));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(&axis(&spec.y, spec.log_y))
    );
    for (k, (name, p)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        for &(x, y) in p {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(y));
        }
        if !name.is_empty() {
            let ly = MARGIN + 16.0 * k as f64;
            let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#, W - MARGIN - 110.0, escape(name));
        }
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
