//! Empirical density-limit records, residuals against the theoretical curve,
//! and a log-log SVG comparison figure.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::params::density_limit;
use crate::{Error, Result};

/// Exact header of machine record files.
pub const RECORD_HEADER: [&str; 5] = ["machine", "family", "B_tesla", "n_limit_per_m3", "reference"];
/// Header of `residuals.csv`.
pub const RESIDUAL_HEADER: [&str; 7] =
    ["machine", "family", "B_tesla", "n_observed", "n_predicted", "ratio", "log10_ratio"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Tokamak,
    Stellarator,
    SphericalTokamak,
    Other,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Tokamak => "tokamak",
            Family::Stellarator => "stellarator",
            Family::SphericalTokamak => "spherical_tokamak",
            Family::Other => "other",
        }
    }

    /// Parse a family name; `None` when it is not one of the known names.
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tokamak" => Some(Family::Tokamak),
            "stellarator" => Some(Family::Stellarator),
            "spherical_tokamak" => Some(Family::SphericalTokamak),
            "other" => Some(Family::Other),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MachineRecord {
    pub name: String,
    pub family: Family,
    pub field_b: f64,
    pub density_limit_n: f64,
    pub reference: String,
}

impl MachineRecord {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::Input("machine name is empty".into()));
        }
        if !(self.field_b > 0.0 && self.field_b.is_finite()) {
            return Err(Error::Domain(format!("B_tesla must be positive, got {}", self.field_b)));
        }
        if !(self.density_limit_n > 0.0 && self.density_limit_n.is_finite()) {
            return Err(Error::Domain(format!("n_limit_per_m3 must be positive, got {}", self.density_limit_n)));
        }
        Ok(())
    }
}

/// Parsed records plus warnings about unknown families.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadedRecords {
    pub records: Vec<MachineRecord>,
    pub warnings: Vec<String>,
}

/// Parse records from CSV text with the exact [`RECORD_HEADER`].
pub fn parse_records<R: Read>(input: R) -> Result<LoadedRecords> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
    let mut out = LoadedRecords::default();
    let mut rows = rdr.records();
    match rows.next() {
        Some(h) => {
            let h = h?;
            if h.iter().ne(RECORD_HEADER) {
                return Err(Error::Parse { line: 1, message: format!("expected header {}", RECORD_HEADER.join(",")) });
            }
        }
        None => return Err(Error::Parse { line: 1, message: "missing header".into() }),
    }
    for row in rows {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let fail = |message: String| Error::Parse { line, message };
        if row.len() != RECORD_HEADER.len() {
            return Err(fail(format!("expected {} fields, found {}", RECORD_HEADER.len(), row.len())));
        }
        let number = |k: usize| -> Result<f64> {
            row[k].trim().parse::<f64>().map_err(|_| fail(format!("{} is not a number: {:?}", RECORD_HEADER[k], &row[k])))
        };
        let family = match Family::parse(&row[1]) {
            Some(f) => f,
            None => {
                let w = format!("line {line}: unknown family {:?} treated as other", &row[1]);
                log::warn!("{w}");
                out.warnings.push(w);
                Family::Other
            }
        };
        let rec = MachineRecord {
            name: row[0].to_string(),
            family,
            field_b: number(2)?,
            density_limit_n: number(3)?,
            reference: row[4].to_string(),
        };
        rec.validate().map_err(|e| fail(e.to_string()))?;
        out.records.push(rec);
    }
    Ok(out)
}

pub fn load_records(path: &Path) -> Result<Vec<MachineRecord>> {
    Ok(parse_records(std::fs::File::open(path)?)?.records)
}

pub fn write_records<W: Write>(records: &[MachineRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RECORD_HEADER)?;
    for r in records {
        out.write_record([
            r.name.as_str(),
            r.family.as_str(),
            &r.field_b.to_string(),
            &r.density_limit_n.to_string(),
            r.reference.as_str(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_records(records: &[MachineRecord], path: &Path) -> Result<()> {
    write_records(records, std::io::BufWriter::new(std::fs::File::create(path)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub record: MachineRecord,
    pub n_predicted: f64,
    pub ratio: f64,
    pub log10_ratio: f64,
}

/// Observed over predicted density for every record.
pub fn residuals(records: &[MachineRecord]) -> Result<Vec<Residual>> {
    records
        .iter()
        .map(|r| {
            let n_predicted = density_limit(r.field_b)?;
            let ratio = r.density_limit_n / n_predicted;
            Ok(Residual { record: r.clone(), n_predicted, ratio, log10_ratio: ratio.log10() })
        })
        .collect()
}

pub fn write_residuals<W: Write>(res: &[Residual], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RESIDUAL_HEADER)?;
    for r in res {
        out.write_record([
            r.record.name.as_str(),
            r.record.family.as_str(),
            &r.record.field_b.to_string(),
            &r.record.density_limit_n.to_string(),
            &r.n_predicted.to_string(),
            &r.ratio.to_string(),
            &format!("{:.3}", r.log10_ratio),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Pixel geometry of the comparison figure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FigureLayout {
    pub width: f64,
    pub height: f64,
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
    /// Decades shown on each axis, `[log10 min, log10 max]`.
    pub log_b: [f64; 2],
    pub log_n: [f64; 2],
}

/// Field range of the figure when none is given \[T\].
pub const DEFAULT_B_RANGE: [f64; 2] = [0.1, 10.0];

pub const FIGURE_WIDTH: f64 = 1000.0;
pub const FIGURE_HEIGHT: f64 = 700.0;

impl FigureLayout {
    /// Layout covering `b_range` and, on the density axis, whole decades
    /// around the theoretical line and every record.
    pub fn new(records: &[MachineRecord], b_range: [f64; 2]) -> Result<Self> {
        let [b0, b1] = b_range;
        if !(b0 > 0.0 && b1.is_finite() && b0 < b1) {
            return Err(Error::Domain(format!("B range must satisfy 0 < min < max, got [{b0}, {b1}]")));
        }
        let mut lo = density_limit(b0)?.log10();
        let mut hi = density_limit(b1)?.log10();
        for r in records {
            lo = lo.min(r.density_limit_n.log10());
            hi = hi.max(r.density_limit_n.log10());
        }
        Ok(FigureLayout {
            width: FIGURE_WIDTH,
            height: FIGURE_HEIGHT,
            left: 110.0,
            right: 960.0,
            top: 40.0,
            bottom: 620.0,
            log_b: [b0.log10(), b1.log10()],
            log_n: [lo.floor(), hi.ceil().max(lo.floor() + 1.0)],
        })
    }

    pub fn x(&self, b: f64) -> f64 {
        self.left + (b.log10() - self.log_b[0]) / (self.log_b[1] - self.log_b[0]) * (self.right - self.left)
    }

    pub fn y(&self, n: f64) -> f64 {
        self.bottom - (n.log10() - self.log_n[0]) / (self.log_n[1] - self.log_n[0]) * (self.bottom - self.top)
    }
}

fn marker(out: &mut String, family: Family, x: f64, y: f64, class: &str) {
    let r = 6.0;
    let _ = match family {
        Family::Tokamak => writeln!(out, r#"<circle class="{class}" cx="{x:.3}" cy="{y:.3}" r="{r}" fill="none" stroke="black"/>"#),
        Family::Stellarator => writeln!(
            out,
            r#"<rect class="{class}" x="{:.3}" y="{:.3}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x - r,
            y - r,
            2.0 * r,
            2.0 * r
        ),
        Family::SphericalTokamak => writeln!(
            out,
            r#"<polygon class="{class}" points="{:.3},{:.3} {:.3},{:.3} {:.3},{:.3}" fill="none" stroke="black"/>"#,
            x,
            y - r,
            x + r,
            y + r,
            x - r,
            y + r
        ),
        Family::Other => writeln!(
            out,
            r#"<polygon class="{class}" points="{:.3},{:.3} {:.3},{:.3} {:.3},{:.3} {:.3},{:.3}" fill="black" stroke="black"/>"#,
            x,
            y - r,
            x + r,
            y,
            x,
            y + r,
            x - r,
            y
        ),
    };
}

/// Self-contained SVG: records as family markers over the dotted theoretical line.
pub fn render_svg(records: &[MachineRecord], b_range: [f64; 2]) -> Result<String> {
    let lay = FigureLayout::new(records, b_range)?;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = lay.width,
        h = lay.height
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#, lay.width, lay.height);
    let _ = writeln!(
        s,
        r#"<path class="axes" d="M{l:.3},{t:.3} L{l:.3},{b:.3} L{r:.3},{b:.3}" fill="none" stroke="black"/>"#,
        l = lay.left,
        t = lay.top,
        b = lay.bottom,
        r = lay.right
    );
    let first = lay.log_b[0].ceil() as i32;
    for d in first..=lay.log_b[1].floor() as i32 {
        let x = lay.x(10f64.powi(d));
        let _ = writeln!(s, r#"<line x1="{x:.3}" y1="{b:.3}" x2="{x:.3}" y2="{:.3}" stroke="black"/>"#, lay.bottom + 6.0, b = lay.bottom);
        let _ = writeln!(
            s,
            r#"<text x="{x:.3}" y="{:.3}" font-size="14" text-anchor="middle">1e{d}</text>"#,
            lay.bottom + 24.0
        );
    }
    for d in lay.log_n[0] as i32..=lay.log_n[1] as i32 {
        let y = lay.y(10f64.powi(d));
        let _ = writeln!(s, r#"<line x1="{:.3}" y1="{y:.3}" x2="{l:.3}" y2="{y:.3}" stroke="black"/>"#, lay.left - 6.0, l = lay.left);
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="{:.3}" font-size="14" text-anchor="end">1e{d}</text>"#,
            lay.left - 10.0,
            y + 5.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="{:.3}" font-size="16" text-anchor="middle">B [T]</text>"#,
        0.5 * (lay.left + lay.right),
        lay.height - 30.0
    );
    let _ = writeln!(
        s,
        r#"<text x="30" y="{y:.3}" font-size="16" text-anchor="middle" transform="rotate(-90 30 {y:.3})">n [m⁻³]</text>"#,
        y = 0.5 * (lay.top + lay.bottom)
    );
    let (b0, b1) = (10f64.powf(lay.log_b[0]), 10f64.powf(lay.log_b[1]));
    let _ = writeln!(
        s,
        r#"<polyline class="theory" points="{:.3},{:.3} {:.3},{:.3}" fill="none" stroke="black" stroke-width="1.5" stroke-dasharray="2,4"/>"#,
        lay.x(b0),
        lay.y(density_limit(b0)?),
        lay.x(b1),
        lay.y(density_limit(b1)?)
    );
    for r in records {
        marker(&mut s, r.family, lay.x(r.field_b), lay.y(r.density_limit_n), "marker");
    }
    let mut families: Vec<Family> = records.iter().map(|r| r.family).collect();
    families.sort_by_key(|f| f.as_str());
    families.dedup();
    for (i, f) in families.iter().enumerate() {
        let y = lay.top + 20.0 + 22.0 * i as f64;
        marker(&mut s, *f, lay.left + 30.0, y, "legend");
        let _ = writeln!(s, r#"<text x="{:.3}" y="{:.3}" font-size="14">{}</text>"#, lay.left + 45.0, y + 5.0, f.as_str());
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Render the figure and write it to `path`.
pub fn export_figure(records: &[MachineRecord], b_range: [f64; 2], path: &Path) -> Result<String> {
    let svg = render_svg(records, b_range)?;
    std::fs::write(path, &svg)?;
    Ok(svg)
}
