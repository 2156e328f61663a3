//! Static plots. Every renderer is a pure function of its [`PlotSpec`]: SVG
//! output uses fixed six-decimal coordinates and no timestamps, and each
//! payload has a CSV sidecar that parses back to the same data.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qsim::{CircuitSpec, Cityscape, OutcomeHistogram, PauliTerm};

pub const BLOCH_NORM_TOLERANCE: f64 = 1e-9;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const CELL_LABEL_LIMIT: usize = 16;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Error)]
pub enum VizError {
    #[error("invalid {kind} payload: {reason}")]
    Invalid { kind: &'static str, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn invalid<T>(kind: &'static str, reason: impl Into<String>) -> Result<T, VizError> {
    Err(VizError::Invalid {
        kind,
        reason: reason.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlotData {
    /// Re ρ and Im ρ, row-major, with basis labels.
    Cityscape {
        labels: Vec<String>,
        real: Vec<Vec<f64>>,
        imag: Vec<Vec<f64>>,
    },
    PauliBars {
        labels: Vec<String>,
        values: Vec<f64>,
    },
    Bloch {
        vectors: Vec<[f64; 3]>,
    },
    Histogram {
        labels: Vec<String>,
        counts: Vec<u64>,
    },
    Curve {
        series: Vec<Series>,
    },
}

impl PlotData {
    pub fn kind(&self) -> &'static str {
        match self {
            PlotData::Cityscape { .. } => "cityscape",
            PlotData::PauliBars { .. } => "pauli_bars",
            PlotData::Bloch { .. } => "bloch",
            PlotData::Histogram { .. } => "histogram",
            PlotData::Curve { .. } => "curve",
        }
    }

    pub fn validate(&self) -> Result<(), VizError> {
        let kind = self.kind();
        match self {
            PlotData::Cityscape { labels, real, imag } => {
                let d = labels.len();
                if d == 0 {
                    return invalid(kind, "no basis labels");
                }
                for (name, m) in [("real", real), ("imag", imag)] {
                    if m.len() != d || m.iter().any(|row| row.len() != d) {
                        return invalid(kind, format!("{name} part is not {d}x{d}"));
                    }
                }
                finite(kind, real.iter().chain(imag).flatten().copied())
            }
            PlotData::PauliBars { labels, values } => {
                if labels.len() != values.len() {
                    return invalid(kind, format!("{} labels for {} values", labels.len(), values.len()));
                }
                finite(kind, values.iter().copied())
            }
            PlotData::Bloch { vectors } => {
                if vectors.is_empty() {
                    return invalid(kind, "no qubits");
                }
                finite(kind, vectors.iter().flatten().copied())?;
                for (q, v) in vectors.iter().enumerate() {
                    let norm = norm3(v);
                    if norm > 1.0 + BLOCH_NORM_TOLERANCE {
                        return invalid(kind, format!("qubit {q} has norm {norm}"));
                    }
                }
                Ok(())
            }
            PlotData::Histogram { labels, counts } => {
                if labels.len() != counts.len() {
                    return invalid(kind, format!("{} labels for {} counts", labels.len(), counts.len()));
                }
                Ok(())
            }
            PlotData::Curve { series } => {
                if series.is_empty() {
                    return invalid(kind, "no series");
                }
                finite(kind, series.iter().flat_map(|s| &s.points).flat_map(|&(x, y)| [x, y]))
            }
        }
    }

    pub fn from_cityscape(c: &Cityscape) -> Self {
        PlotData::Cityscape {
            labels: c.labels.clone(),
            real: c.real.clone(),
            imag: c.imag.clone(),
        }
    }

    pub fn from_pauli_terms(terms: &[PauliTerm]) -> Self {
        PlotData::PauliBars {
            labels: terms.iter().map(|t| t.label.clone()).collect(),
            values: terms.iter().map(|t| t.value).collect(),
        }
    }

    /// Every basis state of the register, including zero counts.
    pub fn from_histogram(h: &OutcomeHistogram) -> Self {
        PlotData::Histogram {
            labels: (0..1usize << h.n_qubits)
                .map(|i| crate::qsim::basis_label(i, h.n_qubits))
                .collect(),
            counts: h.dense_counts(),
        }
    }

    /// Long-format CSV with a header row.
    pub fn to_csv(&self) -> Result<String, VizError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        match self {
            PlotData::Cityscape { labels, real, imag } => {
                w.write_record(["row", "col", "real", "imag"])?;
                for (i, r) in labels.iter().enumerate() {
                    for (j, c) in labels.iter().enumerate() {
                        w.write_record([r.clone(), c.clone(), real[i][j].to_string(), imag[i][j].to_string()])?;
                    }
                }
            }
            PlotData::PauliBars { labels, values } => {
                w.write_record(["label", "value"])?;
                for (l, v) in labels.iter().zip(values) {
                    w.write_record([l.clone(), v.to_string()])?;
                }
            }
            PlotData::Bloch { vectors } => {
                w.write_record(["qubit", "x", "y", "z"])?;
                for (q, v) in vectors.iter().enumerate() {
                    w.write_record([q.to_string(), v[0].to_string(), v[1].to_string(), v[2].to_string()])?;
                }
            }
            PlotData::Histogram { labels, counts } => {
                w.write_record(["bitstring", "count"])?;
                for (l, c) in labels.iter().zip(counts) {
                    w.write_record([l.clone(), c.to_string()])?;
                }
            }
            PlotData::Curve { series } => {
                w.write_record(["series", "x", "y"])?;
                for s in series {
                    for (x, y) in &s.points {
                        w.write_record([s.name.clone(), x.to_string(), y.to_string()])?;
                    }
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Inverse of [`to_csv`](Self::to_csv) for the given kind.
    pub fn from_csv(kind: &str, text: &str) -> Result<Self, VizError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rows: Vec<csv::StringRecord> = r.records().collect::<Result<_, _>>()?;
        let num = |s: &str| -> Result<f64, VizError> {
            s.parse().map_err(|_| VizError::Invalid {
                kind: "csv",
                reason: format!("not a number: {s:?}"),
            })
        };
        let int = |s: &str| -> Result<u64, VizError> {
            s.parse().map_err(|_| VizError::Invalid {
                kind: "csv",
                reason: format!("not a count: {s:?}"),
            })
        };
        let data = match kind {
            "cityscape" => {
                let d = (rows.len() as f64).sqrt().round() as usize;
                if d * d != rows.len() {
                    return invalid("cityscape", format!("{} cells is not a square", rows.len()));
                }
                let labels = rows.iter().step_by(d).map(|r| r[0].to_string()).collect();
                let mut real = vec![vec![0.0; d]; d];
                let mut imag = vec![vec![0.0; d]; d];
                for (k, row) in rows.iter().enumerate() {
                    real[k / d][k % d] = num(&row[2])?;
                    imag[k / d][k % d] = num(&row[3])?;
                }
                PlotData::Cityscape { labels, real, imag }
            }
            "pauli_bars" => PlotData::PauliBars {
                labels: rows.iter().map(|r| r[0].to_string()).collect(),
                values: rows.iter().map(|r| num(&r[1])).collect::<Result<_, _>>()?,
            },
            "bloch" => PlotData::Bloch {
                vectors: rows
                    .iter()
                    .map(|r| Ok([num(&r[1])?, num(&r[2])?, num(&r[3])?]))
                    .collect::<Result<_, VizError>>()?,
            },
            "histogram" => PlotData::Histogram {
                labels: rows.iter().map(|r| r[0].to_string()).collect(),
                counts: rows.iter().map(|r| int(&r[1])).collect::<Result<_, _>>()?,
            },
            "curve" => {
                let mut series: Vec<Series> = Vec::new();
                for r in &rows {
                    let point = (num(&r[1])?, num(&r[2])?);
                    match series.last_mut() {
                        Some(s) if s.name == r[0] => s.points.push(point),
                        _ => series.push(Series {
                            name: r[0].to_string(),
                            points: vec![point],
                        }),
                    }
                }
                PlotData::Curve { series }
            }
            other => {
                return Err(VizError::Invalid {
                    kind: "csv",
                    reason: format!("unknown plot kind {other:?}"),
                })
            }
        };
        Ok(data)
    }
}

fn finite(kind: &'static str, mut values: impl Iterator<Item = f64>) -> Result<(), VizError> {
    if values.all(f64::is_finite) {
        Ok(())
    } else {
        invalid(kind, "non-finite value")
    }
}

fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub data: PlotData,
}

impl PlotSpec {
    pub fn new(
        title: impl Into<String>,
        x_label: impl Into<String>,
        y_label: impl Into<String>,
        data: PlotData,
    ) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            data,
        }
    }

    pub fn render_svg(&self) -> Result<String, VizError> {
        self.data.validate()?;
        let mut svg = Svg::new(self.canvas());
        svg.text(svg.width / 2.0, 24.0, "middle", 16.0, &self.title);
        match &self.data {
            PlotData::Cityscape { labels, real, imag } => self.cityscape(&mut svg, labels, real, imag),
            PlotData::PauliBars { labels, values } => self.bars(&mut svg, labels, values, true),
            PlotData::Bloch { vectors } => self.bloch(&mut svg, vectors),
            PlotData::Histogram { labels, counts } => {
                let values: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
                self.bars(&mut svg, labels, &values, false)
            }
            PlotData::Curve { series } => self.curve(&mut svg, series),
        }
        Ok(svg.finish())
    }

    /// Writes `<stem>.svg` and `<stem>.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf), VizError> {
        let svg_path = dir.join(format!("{stem}.svg"));
        let csv_path = dir.join(format!("{stem}.csv"));
        write_text(&svg_path, &self.render_svg()?)?;
        write_text(&csv_path, &self.data.to_csv()?)?;
        Ok((svg_path, csv_path))
    }

    fn canvas(&self) -> (f64, f64) {
        match &self.data {
            PlotData::Cityscape { labels, .. } => {
                let side = cell_size(labels.len()) * labels.len() as f64;
                (2.0 * side + 3.0 * MARGIN, side + 2.0 * MARGIN)
            }
            PlotData::Bloch { vectors } => (vectors.len() as f64 * 180.0 + 40.0, 260.0),
            PlotData::PauliBars { labels, .. } | PlotData::Histogram { labels, .. } => {
                ((labels.len() as f64 * 14.0 + 2.0 * MARGIN).max(WIDTH), HEIGHT)
            }
            PlotData::Curve { .. } => (WIDTH, HEIGHT),
        }
    }

    fn cityscape(&self, svg: &mut Svg, labels: &[String], real: &[Vec<f64>], imag: &[Vec<f64>]) {
        let d = labels.len();
        let cell = cell_size(d);
        let side = cell * d as f64;
        let vmax = real
            .iter()
            .chain(imag)
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        for (p, (name, part)) in [("re", real), ("im", imag)].into_iter().enumerate() {
            let x0 = MARGIN + p as f64 * (side + MARGIN);
            let y0 = MARGIN;
            svg.text(
                x0 + side / 2.0,
                y0 - 8.0,
                "middle",
                12.0,
                if p == 0 { "Re" } else { "Im" },
            );
            for (i, row) in part.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    let (x, y) = (x0 + j as f64 * cell, y0 + i as f64 * cell);
                    let _ = writeln!(
                        svg.body,
                        r#"<rect class="{name}" x="{}" y="{}" width="{}" height="{}" fill="{}" data-value="{}"/>"#,
                        num(x),
                        num(y),
                        num(cell),
                        num(cell),
                        diverging(v / vmax),
                        num(v)
                    );
                    if d <= CELL_LABEL_LIMIT {
                        svg.text(x + cell / 2.0, y + cell / 2.0 + 3.0, "middle", 8.0, &format!("{v:.3}"));
                    }
                }
            }
            if d <= CELL_LABEL_LIMIT {
                for (k, l) in labels.iter().enumerate() {
                    let c = k as f64 * cell + cell / 2.0;
                    svg.text(x0 - 4.0, y0 + c + 3.0, "end", 8.0, l);
                    svg.text(x0 + c, y0 + side + 12.0, "middle", 8.0, l);
                }
            }
        }
        svg.text(svg.width / 2.0, svg.height - 8.0, "middle", 12.0, &self.x_label);
    }

    fn bars(&self, svg: &mut Svg, labels: &[String], values: &[f64], signed: bool) {
        let (w, h) = (svg.width, svg.height);
        let (lo, hi) = if signed {
            let m = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
            (-m, m)
        } else {
            (0.0, values.iter().copied().fold(0.0f64, f64::max).max(1.0))
        };
        let frame = Frame::new(w, h, (0.0, values.len().max(1) as f64), (lo, hi));
        frame.axes(svg, &self.x_label, &self.y_label);
        let zero = frame.y(0.0);
        let slot = (w - 2.0 * MARGIN) / values.len().max(1) as f64;
        for (k, (label, &v)) in labels.iter().zip(values).enumerate() {
            let top = frame.y(v);
            let _ = writeln!(
                svg.body,
                r##"<rect class="bar" x="{}" y="{}" width="{}" height="{}" fill="#1f77b4" data-value="{}"/>"##,
                num(frame.x(k as f64) + slot * 0.1),
                num(top.min(zero)),
                num(slot * 0.8),
                num((top - zero).abs()),
                num(v)
            );
            if labels.len() <= 64 {
                svg.text(frame.x(k as f64 + 0.5), h - MARGIN + 12.0, "middle", 8.0, label);
            }
        }
    }

    fn bloch(&self, svg: &mut Svg, vectors: &[[f64; 3]]) {
        let r = 70.0;
        for (q, v) in vectors.iter().enumerate() {
            let (cx, cy) = (110.0 + q as f64 * 180.0, 130.0);
            let _ = writeln!(
                svg.body,
                r##"<circle cx="{}" cy="{}" r="{}" fill="none" stroke="#888888"/>"##,
                num(cx),
                num(cy),
                num(r)
            );
            let _ = writeln!(
                svg.body,
                r##"<line class="bloch" x1="{}" y1="{}" x2="{}" y2="{}" stroke="#d62728" stroke-width="2" data-x="{}" data-y="{}" data-z="{}"/>"##,
                num(cx),
                num(cy),
                num(cx + r * v[0]),
                num(cy - r * v[2]),
                num(v[0]),
                num(v[1]),
                num(v[2])
            );
            svg.text(cx, cy + r + 20.0, "middle", 10.0, &format!("qubit {q}"));
            svg.text(
                cx,
                cy + r + 34.0,
                "middle",
                9.0,
                &format!("({:.3}, {:.3}, {:.3}) |r|={:.3}", v[0], v[1], v[2], norm3(v)),
            );
        }
        svg.text(svg.width / 2.0, svg.height - 6.0, "middle", 10.0, &self.x_label);
    }

    fn curve(&self, svg: &mut Svg, series: &[Series]) {
        let pts = || series.iter().flat_map(|s| s.points.iter());
        let xr = span(pts().map(|p| p.0));
        let yr = span(pts().map(|p| p.1));
        let frame = Frame::new(svg.width, svg.height, xr, yr);
        frame.axes(svg, &self.x_label, &self.y_label);
        for (k, s) in series.iter().enumerate() {
            let colour = PALETTE[k % PALETTE.len()];
            let coords: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{},{}", num(frame.x(x)), num(frame.y(y))))
                .collect();
            let _ = writeln!(
                svg.body,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
                coords.join(" ")
            );
            let ly = MARGIN + 14.0 * k as f64;
            svg.text(svg.width - MARGIN - 4.0, ly, "end", 10.0, &s.name);
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), VizError> {
    fs::write(path, text).map_err(|source| VizError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn cell_size(d: usize) -> f64 {
    (320.0 / d as f64).clamp(3.0, 40.0)
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    }
}

/// Fixed six-decimal formatting without negative zero.
fn num(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

/// Blue for −1, white for 0, red for +1.
fn diverging(t: f64) -> String {
    let t = t.clamp(-1.0, 1.0);
    let fade = |c: f64| (255.0 - (255.0 - c) * t.abs()).round() as u8;
    let (r, g, b) = if t >= 0.0 {
        (fade(214.0), fade(39.0), fade(40.0))
    } else {
        (fade(31.0), fade(119.0), fade(180.0))
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    fn new((width, height): (f64, f64)) -> Self {
        Self {
            width,
            height,
            body: String::new(),
        }
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, size: f64, content: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" text-anchor="{anchor}" font-size="{}">{}</text>"#,
            num(x),
            num(y),
            num(size),
            escape(content)
        );
    }

    fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
             <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n{}</svg>\n",
            self.body,
            w = num(self.width),
            h = num(self.height),
        )
    }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Frame {
    fn new(w: f64, h: f64, xr: (f64, f64), yr: (f64, f64)) -> Self {
        Self {
            x0: MARGIN,
            x1: w - MARGIN,
            y0: h - MARGIN,
            y1: MARGIN,
            xr,
            yr,
        }
    }

    fn x(&self, v: f64) -> f64 {
        self.x0 + (v - self.xr.0) / (self.xr.1 - self.xr.0) * (self.x1 - self.x0)
    }

    fn y(&self, v: f64) -> f64 {
        self.y0 + (v - self.yr.0) / (self.yr.1 - self.yr.0) * (self.y1 - self.y0)
    }

    fn axes(&self, svg: &mut Svg, x_label: &str, y_label: &str) {
        for (a, b, c, d) in [
            (self.x0, self.y0, self.x1, self.y0),
            (self.x0, self.y0, self.x0, self.y1),
        ] {
            let _ = writeln!(
                svg.body,
                r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#000000"/>"##,
                num(a),
                num(b),
                num(c),
                num(d)
            );
        }
        svg.text(self.x0 - 4.0, self.y0, "end", 9.0, &format!("{:.4}", self.yr.0));
        svg.text(self.x0 - 4.0, self.y1 + 6.0, "end", 9.0, &format!("{:.4}", self.yr.1));
        svg.text(self.x0, self.y0 + 24.0, "start", 9.0, &format!("{}", self.xr.0));
        svg.text(self.x1, self.y0 + 24.0, "end", 9.0, &format!("{}", self.xr.1));
        svg.text((self.x0 + self.x1) / 2.0, self.y0 + 40.0, "middle", 12.0, x_label);
        let cy = (self.y0 + self.y1) / 2.0;
        let _ = writeln!(
            svg.body,
            r#"<text x="16.000000" y="{}" text-anchor="middle" font-size="12.000000" transform="rotate(-90 16.000000 {})">{}</text>"#,
            num(cy),
            num(cy),
            escape(y_label)
        );
    }
}

/// One line per qubit: `q0: |0⟩──[H]──[M]══`, aligned on the gate columns.
pub fn circuit_ascii(circuit: &CircuitSpec) -> String {
    let n = circuit.n_qubits();
    let width = format!("q{}", n.saturating_sub(1)).len();
    (0..n)
        .map(|q| format!("{:>width$}: |0⟩──[H]──[M]══\n", format!("q{q}")))
        .collect()
}
