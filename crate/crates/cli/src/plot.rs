//! SVG figures drawn from CSV artifacts. Nothing here computes physics; each
//! figure is a pure function of CSV text.

use std::fmt::Write;
use std::path::Path;

use anyhow::{Context, Result};

use crate::settings::usage;

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 56.0;

/// A parsed CSV file with a header row.
#[derive(Debug, Clone)]
pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn parse(text: &str) -> Result<Csv> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| usage("empty CSV"))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let rows = lines
            .map(|l| l.split(',').map(|s| s.trim().to_string()).collect())
            .collect();
        Ok(Csv { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| usage(format!("CSV has no column `{name}`")))?;
        self.rows
            .iter()
            .map(|r| {
                let v = r.get(i).ok_or_else(|| usage("short CSV row"))?;
                v.parse::<f64>()
                    .map_err(|_| usage(format!("bad number `{v}` in `{name}`")))
            })
            .collect()
    }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(xs: &[f64], ys: &[f64]) -> Frame {
        let (x0, x1) = finite_range(xs);
        let (y0, y1) = finite_range(ys);
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * MARGIN)
    }
}

fn finite_range(v: &[f64]) -> (f64, f64) {
    let lo = v
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .fold(f64::INFINITY, f64::min);
    let hi = v
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn open(out: &mut String) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (l, r, t, b) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
    let _ = writeln!(
        out,
        r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        r - l,
        b - t
    );
    for (v, x) in [(f.x0, l), (f.x1, r)] {
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{}" font-size="12" text-anchor="middle">{v:.3}</text>"#,
            b + 16.0
        );
    }
    for (v, y) in [(f.y0, b), (f.y1, t)] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{y}" font-size="12" text-anchor="end">{v:.3}</text>"#,
            l - 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{xlabel}</text>"#,
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" font-size="14" text-anchor="middle" transform="rotate(-90 16 {})">{ylabel}</text>"#,
        H / 2.0,
        H / 2.0
    );
}

fn polyline(out: &mut String, f: &Frame, xs: &[f64], ys: &[f64], color: &str) {
    let pts: Vec<String> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(x, y)| format!("{:.2},{:.2}", f.px(*x), f.py(*y)))
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
        pts.join(" ")
    );
}

/// Energy against `t` from a `path.csv`.
pub fn profile_svg(path_csv: &str) -> Result<String> {
    let csv = Csv::parse(path_csv)?;
    let (t, e) = (csv.column("t")?, csv.column("energy")?);
    let f = Frame::fit(&t, &e);
    let mut out = String::new();
    open(&mut out);
    axes(&mut out, &f, "t", "energy");
    polyline(&mut out, &f, &t, &e, "#1f4e9c");
    out.push_str("</svg>\n");
    Ok(out)
}

/// Blue to yellow ramp for `v` in [0, 1].
fn ramp(v: f64) -> String {
    let stops = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let v = v.clamp(0.0, 1.0) * (stops.len() - 1) as f64;
    let i = (v.floor() as usize).min(stops.len() - 2);
    let f = v - i as f64;
    let mix = |a: f64, b: f64| (a + (b - a) * f).round() as u8;
    let (a, b) = (stops[i], stops[i + 1]);
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(a.0, b.0),
        mix(a.1, b.1),
        mix(a.2, b.2)
    )
}

/// Sampled energy grid from `grid.csv` with the path from `path.csv` on top.
/// Colors saturate at the 90th energy percentile so steep walls do not wash
/// out the basins.
pub fn path_svg(grid_csv: &str, path_csv: &str) -> Result<String> {
    let grid = Csv::parse(grid_csv)?;
    let (gx, gy, ge) = (grid.column("x")?, grid.column("y")?, grid.column("energy")?);
    let path = Csv::parse(path_csv)?;
    let (px, py) = (path.column("x")?, path.column("y")?);
    let f = Frame::fit(&gx, &gy);
    let mut sorted: Vec<f64> = ge.iter().copied().filter(|e| e.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = match sorted.len() {
        0 => (0.0, 1.0),
        n => (sorted[0], sorted[((n - 1) * 9) / 10].max(sorted[0] + 1e-12)),
    };
    let distinct = |v: &[f64]| {
        let mut u: Vec<f64> = v.to_vec();
        u.sort_by(f64::total_cmp);
        u.dedup();
        u.len().max(2)
    };
    let cw = (W - 2.0 * MARGIN) / (distinct(&gx) - 1) as f64;
    let ch = (H - 2.0 * MARGIN) / (distinct(&gy) - 1) as f64;
    let mut out = String::new();
    open(&mut out);
    for ((x, y), e) in gx.iter().zip(&gy).zip(&ge) {
        let color = if e.is_finite() {
            ramp((e - lo) / (hi - lo))
        } else {
            "#ffffff".to_string()
        };
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
            f.px(*x) - cw / 2.0,
            f.py(*y) - ch / 2.0,
            cw + 0.5,
            ch + 0.5
        );
    }
    axes(&mut out, &f, "x", "y");
    polyline(&mut out, &f, &px, &py, "#d62728");
    out.push_str("</svg>\n");
    Ok(out)
}

const CURVE_COLORS: [&str; 5] = ["#1f4e9c", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

/// Overlay of `epoch,mean_ts_error` curves.
pub fn curves_svg(curves: &[(String, String)]) -> Result<String> {
    let mut series = Vec::new();
    for (name, text) in curves {
        let csv = Csv::parse(text)?;
        series.push((
            name.clone(),
            csv.column("epoch")?,
            csv.column("mean_ts_error")?,
        ));
    }
    let xs: Vec<f64> = series.iter().flat_map(|s| s.1.clone()).collect();
    let mut ys: Vec<f64> = series.iter().flat_map(|s| s.2.clone()).collect();
    ys.push(0.0);
    let f = Frame::fit(&xs, &ys);
    let mut out = String::new();
    open(&mut out);
    axes(&mut out, &f, "epoch", "mean TS energy error");
    for (k, (name, x, y)) in series.iter().enumerate() {
        let color = CURVE_COLORS[k % CURVE_COLORS.len()];
        let (x, y) = if x.len() == 1 {
            // a single value is drawn as a flat line across the frame
            (vec![f.x0, f.x1], vec![y[0], y[0]])
        } else {
            (x.clone(), y.clone())
        };
        polyline(&mut out, &f, &x, &y, color);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{name}</text>"#,
            W - MARGIN - 100.0,
            MARGIN + 16.0 * (k + 1) as f64
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn read(dir: &Path, name: &str) -> Result<Option<String>> {
    let p = dir.join(name);
    if !p.exists() {
        return Ok(None);
    }
    Ok(Some(
        std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
    ))
}

/// Regenerate every figure whose CSV inputs are present in `dir`. Returns
/// the files written.
pub fn plot_dir(dir: &Path) -> Result<Vec<String>> {
    if !dir.is_dir() {
        return Err(usage(format!("no such directory {}", dir.display())));
    }
    let mut written = Vec::new();
    if let Some(path) = read(dir, "path.csv")? {
        std::fs::write(dir.join("profile.svg"), profile_svg(&path)?)?;
        written.push("profile.svg".to_string());
        if let Some(grid) = read(dir, "grid.csv")? {
            std::fs::write(dir.join("path.svg"), path_svg(&grid, &path)?)?;
            written.push("path.svg".to_string());
        }
    }
    let mut names: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("errors_") && n.ends_with(".csv"))
        .collect();
    names.sort();
    if !names.is_empty() {
        let curves = names
            .iter()
            .map(|n| {
                let label = n
                    .trim_start_matches("errors_")
                    .trim_end_matches(".csv")
                    .to_string();
                Ok((label, read(dir, n)?.expect("listed")))
            })
            .collect::<Result<Vec<_>>>()?;
        std::fs::write(dir.join("errors.svg"), curves_svg(&curves)?)?;
        written.push("errors.svg".to_string());
    }
    if written.is_empty() {
        return Err(usage(format!(
            "nothing to plot in {}: expected path.csv or errors_*.csv",
            dir.display()
        )));
    }
    Ok(written)
}
