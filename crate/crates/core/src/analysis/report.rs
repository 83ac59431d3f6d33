//! CSV tables and standalone SVG figures for rankings and EDF curves.
//!
//! Every number is written with a fixed precision so equal inputs give
//! equal bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{EdfCurve, RankingTable};
use crate::error::{Error, Result};

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 48.0;
const PALETTE: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn file_stem(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// `choice,avg_rank,rank_<r>...` with one count column per rank value seen.
pub fn ranking_csv(table: &RankingTable) -> String {
    let (values, counts) = table.histogram();
    let mut s = String::from("choice,avg_rank");
    for v in &values {
        let _ = write!(s, ",rank_{v}");
    }
    s.push('\n');
    for (c, row) in table.choices.iter().zip(counts) {
        let _ = write!(s, "{},{:.6}", csv_field(&c.choice), c.average_rank);
        for n in row {
            let _ = write!(s, ",{n}");
        }
        s.push('\n');
    }
    s
}

/// `score,f_at,f_above`: one row per distinct score, scores strictly
/// increasing. `f_at` is `F(s)` and `f_above` the value just above `s`.
pub fn edf_csv(curve: &EdfCurve) -> String {
    let mut s = String::from("score,f_at,f_above\n");
    for (x, at, above) in curve.breakpoints() {
        let _ = writeln!(s, "{x:.10},{at:.10},{above:.10}");
    }
    s
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, WIDTH / 2.0, escape(title));
    let (x0, y0, x1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN / 2.0);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{}" stroke="black"/>"#, MARGIN / 2.0);
    s
}

/// Bar chart of average ranks with each choice's rank histogram drawn as
/// a mirrored strip (violin data without smoothing).
pub fn ranking_svg(table: &RankingTable) -> String {
    let mut s = svg_open(&format!("average rank: {}", table.dimension));
    let k = table.choices.len() as f64;
    let plot_w = WIDTH - 1.5 * MARGIN;
    let plot_h = HEIGHT - 1.5 * MARGIN;
    let slot = plot_w / k;
    let y_of = |rank: f64| HEIGHT - MARGIN - plot_h * rank / k;
    let (values, counts) = table.histogram();
    for r in 1..=table.choices.len() {
        let y = y_of(r as f64);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{r}</text>"#, MARGIN - 4.0, y + 4.0);
    }
    for (i, (c, row)) in table.choices.iter().zip(&counts).enumerate() {
        let cx = MARGIN + slot * (i as f64 + 0.5);
        let colour = PALETTE[i % PALETTE.len()];
        let top = y_of(c.average_rank);
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{colour}" fill-opacity="0.35"/>"#,
            cx - slot * 0.3,
            slot * 0.6,
            HEIGHT - MARGIN - top
        );
        let most = row.iter().copied().max().unwrap_or(1).max(1) as f64;
        for (v, &n) in values.iter().zip(row) {
            if n == 0 {
                continue;
            }
            let half = slot * 0.25 * n as f64 / most;
            let y = y_of(*v);
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{colour}" stroke-width="3"/>"#,
                cx - half,
                cx + half
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            HEIGHT - MARGIN + 14.0,
            escape(&c.choice)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Step plots of several EDFs on a shared score axis.
pub fn edf_svg(title: &str, curves: &[EdfCurve]) -> String {
    let mut s = svg_open(title);
    let lo = curves.iter().filter_map(|c| c.scores().first()).copied().fold(f64::INFINITY, f64::min);
    let hi = curves.iter().filter_map(|c| c.scores().last()).copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let plot_w = WIDTH - 1.5 * MARGIN;
    let plot_h = HEIGHT - 1.5 * MARGIN;
    let x_of = |v: f64| MARGIN + plot_w * (v - lo) / span;
    let y_of = |f: f64| HEIGHT - MARGIN - plot_h * f;
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="{:.2}" text-anchor="middle">{lo:.3}</text>"#, HEIGHT - MARGIN + 14.0);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{hi:.3}</text>"#,
        MARGIN + plot_w,
        HEIGHT - MARGIN + 14.0
    );
    for (i, c) in curves.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let mut pts = format!("{:.2},{:.2}", x_of(lo), y_of(0.0));
        for (x, at, above) in c.breakpoints() {
            let _ = write!(pts, " {:.2},{:.2} {:.2},{:.2}", x_of(x), y_of(at), x_of(x), y_of(above));
        }
        let _ = write!(pts, " {:.2},{:.2}", x_of(hi), y_of(1.0));
        let _ = writeln!(s, r#"<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" fill="{colour}">{}</text>"#,
            MARGIN + 8.0,
            MARGIN / 2.0 + 14.0 * (i as f64 + 1.0),
            escape(&c.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn write(dir: &Path, name: &str, body: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| Error::Analysis(format!("cannot write {}: {e}", path.display())))?;
    written.push(path);
    Ok(())
}

/// Writes `rank_<dim>.csv/.svg` per table, `edf_<name>.csv` per curve and
/// one `edf.svg` overlaying all curves. Returns the paths written.
pub fn emit_report(tables: &[RankingTable], curves: &[EdfCurve], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if tables.is_empty() && curves.is_empty() {
        return Err(Error::Analysis("nothing to report".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::Analysis(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut written = Vec::new();
    for t in tables {
        let stem = file_stem(&t.dimension);
        write(out_dir, &format!("rank_{stem}.csv"), &ranking_csv(t), &mut written)?;
        write(out_dir, &format!("rank_{stem}.svg"), &ranking_svg(t), &mut written)?;
    }
    for c in curves {
        write(out_dir, &format!("edf_{}.csv", file_stem(&c.name)), &edf_csv(c), &mut written)?;
    }
    if !curves.is_empty() {
        write(out_dir, "edf.svg", &edf_svg("empirical distribution of scores", curves), &mut written)?;
    }
    Ok(written)
}
