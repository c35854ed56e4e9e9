//! Static SVG panels with mean ± std marks per grid point.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    RandomLabels,
    SampleSize,
    Sigma,
    Norms,
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random-labels" => Ok(PlotKind::RandomLabels),
            "sample-size" => Ok(PlotKind::SampleSize),
            "sigma" => Ok(PlotKind::Sigma),
            "norms" => Ok(PlotKind::Norms),
            other => Err(Error::arg(format!(
                "unknown plot kind `{other}` (random-labels, sample-size, sigma, norms)"
            ))),
        }
    }
}

impl PlotKind {
    fn x_column(self) -> &'static str {
        match self {
            PlotKind::RandomLabels => "r",
            PlotKind::SampleSize | PlotKind::Norms => "n",
            PlotKind::Sigma => "sigma2",
        }
    }

    fn series(self) -> &'static [&'static str] {
        match self {
            PlotKind::RandomLabels | PlotKind::SampleSize => &[
                "total",
                "test_error",
                "margin_loss",
                "effective_curvature",
                "l2_term",
            ],
            PlotKind::Sigma => &["total", "effective_curvature", "l2_term"],
            PlotKind::Norms => &["l2_sq", "spec_prod"],
        }
    }
}

struct Point {
    x: f64,
    mean: f64,
    std: f64,
}

fn group(xs: &[f64], ys: &[f64]) -> Vec<Point> {
    let mut keys: Vec<f64> = xs.to_vec();
    keys.sort_by(f64::total_cmp);
    keys.dedup();
    keys.into_iter()
        .map(|x| {
            let v: Vec<f64> = xs
                .iter()
                .zip(ys)
                .filter(|(a, _)| **a == x)
                .map(|(_, y)| *y)
                .collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let std = if v.len() > 1 {
                (v.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (v.len() - 1) as f64)
                    .sqrt()
            } else {
                0.0
            };
            Point { x, mean, std }
        })
        .collect()
}

const PANEL_W: f64 = 260.0;
const PANEL_H: f64 = 200.0;
const MARGIN: f64 = 40.0;

/// Renders the panels for `kind` from CSV text. Rows with a `status` other
/// than `ok` are skipped.
pub fn render_svg(csv: &str, kind: PlotKind) -> Result<String> {
    let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::arg("CSV is empty"))?
        .split(',')
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::arg(format!("CSV has no `{name}` column")))
    };
    let xi = col(kind.x_column())?;
    let series: Vec<(&str, usize)> = kind
        .series()
        .iter()
        .map(|&s| col(s).map(|i| (s, i)))
        .collect::<Result<_>>()?;
    let status = header.iter().position(|h| *h == "status");

    let mut xs = Vec::new();
    let mut ys: Vec<Vec<f64>> = vec![Vec::new(); series.len()];
    for (ln, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != header.len() {
            return Err(Error::arg(format!(
                "data row {} has {} fields, header has {}",
                ln + 1,
                f.len(),
                header.len()
            )));
        }
        if status.is_some_and(|s| f[s] != "ok") {
            continue;
        }
        let parse = |i: usize| {
            f[i].parse::<f64>()
                .map_err(|_| Error::arg(format!("data row {}: `{}` is not a number", ln + 1, f[i])))
        };
        xs.push(parse(xi)?);
        for (k, &(_, i)) in series.iter().enumerate() {
            ys[k].push(parse(i)?);
        }
    }
    if xs.is_empty() {
        return Err(Error::arg("CSV has no data rows to plot"));
    }

    let width = series.len() as f64 * (PANEL_W + MARGIN) + MARGIN;
    let height = PANEL_H + 2.0 * MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, &(name, _)) in series.iter().enumerate() {
        let pts = group(&xs, &ys[k]);
        let x0 = MARGIN + k as f64 * (PANEL_W + MARGIN);
        let y0 = MARGIN;
        let (xmin, xmax) = span(pts.iter().map(|p| p.x));
        let (ymin, ymax) = span(pts.iter().flat_map(|p| [p.mean - p.std, p.mean + p.std]));
        let sx = |x: f64| x0 + 10.0 + (x - xmin) / (xmax - xmin) * (PANEL_W - 20.0);
        let sy = |y: f64| y0 + PANEL_H - 10.0 - (y - ymin) / (ymax - ymin) * (PANEL_H - 20.0);

        let _ = writeln!(svg, r#"<g class="series" data-name="{name}">"#);
        let _ = writeln!(
            svg,
            r#"<rect x="{x0:.2}" y="{y0:.2}" width="{PANEL_W:.2}" height="{PANEL_H:.2}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{name}</text>"#,
            x0 + PANEL_W / 2.0,
            y0 - 8.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x0 + PANEL_W / 2.0,
            y0 + PANEL_H + 16.0,
            kind.x_column()
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="start">{ymax:.4}</text>"#,
            x0 + 2.0,
            y0 + 10.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="start">{ymin:.4}</text>"#,
            x0 + 2.0,
            y0 + PANEL_H - 2.0
        );
        let path: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.mean)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="steelblue"/>"#,
            path.join(" ")
        );
        for p in &pts {
            let (cx, cy) = (sx(p.x), sy(p.mean));
            let _ = writeln!(
                svg,
                r#"<line class="errorbar" x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="gray"/>"#,
                sy(p.mean - p.std),
                sy(p.mean + p.std)
            );
            let _ = writeln!(
                svg,
                r#"<circle class="mark" cx="{cx:.2}" cy="{cy:.2}" r="3" fill="steelblue"><title>{}: {} ± {}</title></circle>"#,
                p.x, p.mean, p.std
            );
        }
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

/// Reads `csv_path` and writes the SVG to `out_path`; nothing is written on error.
pub fn emit_plot(csv_path: &Path, kind: PlotKind, out_path: &Path) -> Result<()> {
    let csv = fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let svg = render_svg(&csv, kind)?;
    fs::write(out_path, svg).map_err(|e| Error::io(out_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const NORMS: &str = "n,seed,l2_sq,spec_prod,l2_sq_per_n,spec_prod_per_n\n\
        100,0,20,3,0.2,0.03\n100,1,22,3.5,0.22,0.035\n1000,0,30,9,0.03,0.009\n1000,1,31,10,0.031,0.01\n";

    #[test]
    fn two_point_sweep_has_two_marks_per_series() {
        let svg = render_svg(NORMS, PlotKind::Norms).unwrap();
        assert_eq!(svg.matches(r#"class="series""#).count(), 2);
        assert_eq!(svg.matches(r#"class="mark""#).count(), 4);
        for block in svg.split(r#"<g class="series""#).skip(1) {
            assert_eq!(block.matches(r#"class="mark""#).count(), 2);
        }
    }

    #[test]
    fn deterministic_output() {
        assert_eq!(
            render_svg(NORMS, PlotKind::Norms).unwrap(),
            render_svg(NORMS, PlotKind::Norms).unwrap()
        );
    }

    #[test]
    fn errors_write_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("empty.csv");
        fs::write(&csv, "n,seed,l2_sq,spec_prod,l2_sq_per_n,spec_prod_per_n\n").unwrap();
        let out = dir.path().join("plot.svg");
        assert!(emit_plot(&csv, PlotKind::Norms, &out).is_err());
        assert!(!out.exists());
        fs::write(&csv, NORMS).unwrap();
        assert!(emit_plot(&csv, PlotKind::Sigma, &out).is_err());
        assert!(!out.exists());
        assert!("bars".parse::<PlotKind>().is_err());
        emit_plot(&csv, PlotKind::Norms, &out).unwrap();
        assert!(out.exists());
    }
}
