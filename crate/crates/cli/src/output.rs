//! CSV tables with metadata comments, and a minimal SVG writer.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::CliError;

/// A CSV file whose first line is `# config_hash=<hash>`, followed by any
/// further `#` metadata lines and a header row.
pub struct CsvTable {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvTable {
    pub fn create(
        path: &Path,
        config_hash: &str,
        meta: &[(&str, String)],
        header: &[&str],
    ) -> Result<Self, CliError> {
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let mut file = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(file, "# config_hash={config_hash}").map_err(io)?;
        for (k, v) in meta {
            writeln!(file, "# {k}={v}").map_err(io)?;
        }
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(header)?;
        Ok(CsvTable {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.writer
            .flush()
            .map_err(|e| CliError::Io(format!("{}: {e}", self.path.display())))?;
        Ok(self.path)
    }
}

/// Shortest round-trip formatting; non-finite values as `inf`, `-inf`, `nan`.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else if v != 0.0 && !(1e-4..1e16).contains(&v.abs()) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// SVG 1.1 built from rectangles and polylines.
pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Svg {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}"/>"#,
            fmt(x),
            fmt(y),
            fmt(w),
            fmt(h)
        );
    }

    pub fn frame(&mut self, x: f64, y: f64, w: f64, h: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="{stroke}" stroke-width="1"/>"#,
            fmt(x),
            fmt(y),
            fmt(w),
            fmt(h)
        );
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], stroke: &str, width: f64) {
        if points.len() < 2 {
            return;
        }
        let pts: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{},{}", fmt(x), fmt(y)))
            .collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{}"/>"#,
            pts.join(" "),
            fmt(width)
        );
    }

    pub fn render(&self) -> String {
        format!(
            concat!(
                r#"<?xml version="1.0" encoding="UTF-8"?>"#,
                "\n",
                r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
                "\n{body}</svg>\n"
            ),
            w = fmt(self.width),
            h = fmt(self.height),
            body = self.body
        )
    }

    pub fn save(&self, path: &Path) -> Result<PathBuf, CliError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.render())
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path.to_path_buf())
    }
}

fn fmt(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Affine map from a data box onto a pixel box, with `y` pointing up.
#[derive(Debug, Clone, Copy)]
pub struct Panel {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

impl Panel {
    pub fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let (x0, x1) = self.x_range;
        let (y0, y1) = self.y_range;
        (
            self.left + self.width * (x - x0) / (x1 - x0),
            self.top + self.height * (1.0 - (y - y0) / (y1 - y0)),
        )
    }

    /// Data range of `values` padded by 5%, or `(0, 1)` when empty.
    pub fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
        let (lo, hi) = values
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v), b.max(v))
            });
        if !lo.is_finite() {
            return (0.0, 1.0);
        }
        let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
        (lo - pad, hi + pad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting() {
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(num(5e-11), "5e-11");
        assert_eq!(fmt(2.0), "2");
        assert_eq!(fmt(-0.0001), "0");
        assert_eq!(fmt(1.25), "1.25");
    }

    #[test]
    fn svg_is_well_formed() {
        let mut s = Svg::new(10.0, 10.0);
        s.rect(0.0, 0.0, 5.0, 5.0, "#000");
        s.polyline(&[(0.0, 0.0), (1.0, 1.0)], "red", 1.0);
        s.polyline(&[(0.0, 0.0)], "red", 1.0);
        let text = s.render();
        assert!(text.starts_with("<?xml"));
        assert_eq!(text.matches("<rect").count(), 1);
        assert_eq!(text.matches("<polyline").count(), 1);
        assert!(text.trim_end().ends_with("</svg>"));
    }
}
