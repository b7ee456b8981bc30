use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::sweep::{grid_means, SweepRecord};

/// Render a float with 10 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.9e}")
}

/// CSV text for `records`, rows sorted by `(grid_value, seed)`, columns in
/// [`SweepRecord::COLUMNS`] order.
pub fn records_to_csv(records: &[SweepRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::invalid("records", "nothing to write"));
    }
    let mut rows: Vec<&SweepRecord> = records.iter().collect();
    rows.sort_by(|a, b| a.grid_value.total_cmp(&b.grid_value).then(a.seed.cmp(&b.seed)));
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(SweepRecord::COLUMNS)?;
    for r in rows {
        let f = format_float;
        w.write_record([
            f(r.grid_value),
            r.seed.to_string(),
            f(r.mse_kd),
            f(r.mse_no_kd),
            f(r.risk_asymptotic_kd),
            f(r.risk_asymptotic_no_kd),
            f(r.i_ts_closed),
            f(r.i_sy_closed),
            f(r.i_ts_ksg),
            f(r.i_sy_ksg),
            f(r.mi_gap),
            r.cch_beneficial.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn emit_csv(records: &[SweepRecord], path: &Path) -> Result<()> {
    let text = records_to_csv(records)?;
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Parse a file written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<SweepRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != SweepRecord::COLUMNS {
        return Err(Error::Config(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let num = |i: usize| -> Result<f64> {
            row[i].parse().map_err(|_| Error::Config(format!("column {} is not a number: {}", SweepRecord::COLUMNS[i], &row[i])))
        };
        out.push(SweepRecord {
            grid_value: num(0)?,
            seed: row[1].parse().map_err(|_| Error::Config(format!("bad seed {}", &row[1])))?,
            mse_kd: num(2)?,
            mse_no_kd: num(3)?,
            risk_asymptotic_kd: num(4)?,
            risk_asymptotic_no_kd: num(5)?,
            i_ts_closed: num(6)?,
            i_sy_closed: num(7)?,
            i_ts_ksg: num(8)?,
            i_sy_ksg: num(9)?,
            mi_gap: num(10)?,
            cch_beneficial: row[11].parse().map_err(|_| Error::Config(format!("bad flag {}", &row[11])))?,
        });
    }
    Ok(out)
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    (0..=4).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect()
}

/// Standalone SVG line chart of the seed-averaged `y_columns` against the grid.
pub fn render_svg(records: &[SweepRecord], y_columns: &[&str], x_label: &str) -> Result<String> {
    if y_columns.is_empty() {
        return Err(Error::invalid("y_columns", "no columns requested"));
    }
    if let Some(bad) = y_columns.iter().find(|c| SweepRecord::COLUMNS.iter().all(|k| k != *c)) {
        return Err(Error::invalid("y_columns", format!("unknown column {bad}")));
    }
    let series: Vec<Vec<(f64, f64)>> = y_columns.iter().map(|c| grid_means(records, c)).collect();
    if series[0].len() < 2 {
        return Err(Error::InsufficientSamples("a line plot needs at least two grid values".into()));
    }
    let xs: Vec<f64> = series[0].iter().map(|p| p.0).collect();
    let (x0, x1) = (xs[0], xs[xs.len() - 1]);
    let ys = series.iter().flatten().map(|p| p.1);
    let (mut y0, mut y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if y1 - y0 < 1e-12 * y0.abs().max(1e-300) {
        let pad = y0.abs().max(1.0) * 0.05;
        y0 -= pad;
        y1 += pad;
    } else {
        let pad = (y1 - y0) * 0.05;
        y0 -= pad;
        y1 += pad;
    }
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for t in ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, short(t));
    }
    for t in ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, y + 4.0, short(t));
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape("seed-averaged value")
    );
    for (i, (name, line)) in y_columns.iter().zip(&series).enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = line.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        for &(x, y) in line {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{:.2}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn short(v: f64) -> String {
    if v == 0.0 || (1e-3..1e4).contains(&v.abs()) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

pub fn emit_svg(records: &[SweepRecord], path: &Path, y_columns: &[&str], x_label: &str) -> Result<()> {
    let svg = render_svg(records, y_columns, x_label)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

/// The two figure panels: `{prefix}mse.svg` and `{prefix}mi.svg`. Returns the paths written.
pub fn emit_figure_pair(records: &[SweepRecord], prefix: &str, x_label: &str) -> Result<[std::path::PathBuf; 2]> {
    let mse = std::path::PathBuf::from(format!("{prefix}mse.svg"));
    let mi = std::path::PathBuf::from(format!("{prefix}mi.svg"));
    emit_svg(records, &mse, &["mse_kd", "mse_no_kd"], x_label)?;
    emit_svg(records, &mi, &["i_ts_closed", "i_sy_closed"], x_label)?;
    Ok([mse, mi])
}
