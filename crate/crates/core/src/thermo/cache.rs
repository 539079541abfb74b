//! On-disk cache of pressure curves. Reads and writes are best effort.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::PressurePoint;

pub(crate) struct CurveCache {
    path: PathBuf,
    key: String,
    header: String,
}

impl CurveCache {
    pub fn new(dir: &Path, parts: &[&str]) -> Self {
        let mut hasher = Sha256::new();
        for p in parts {
            hasher.update(p.as_bytes());
            hasher.update([0u8]);
        }
        let key = hex::encode(hasher.finalize());
        CurveCache {
            path: dir.join(format!("pressure-{}.csv", &key[..16])),
            header: parts.join(" | "),
            key,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Cached points keyed by the bit pattern of `s`; empty on any failure.
    pub fn load(&self) -> BTreeMap<u64, PressurePoint> {
        self.try_load().unwrap_or_default()
    }

    fn try_load(&self) -> Option<BTreeMap<u64, PressurePoint>> {
        let file = fs::File::open(&self.path).ok()?;
        let mut reader = BufReader::new(file);
        let mut first = String::new();
        reader.read_line(&mut first).ok()?;
        let expected = format!("# key={}", self.key);
        if !first.trim_end().starts_with(&expected) {
            return None;
        }
        let mut csv = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut out = BTreeMap::new();
        for record in csv.records() {
            let record = record.ok()?;
            let num = |i: usize| record.get(i)?.parse::<f64>().ok();
            let point = PressurePoint {
                s: num(0)?,
                p: num(1)?,
                eigenvalue: num(2)?,
                residual: num(3)?,
            };
            out.insert(point.s.to_bits(), point);
        }
        Some(out)
    }

    pub fn store(&self, points: &BTreeMap<u64, PressurePoint>, method: &str, n: usize) -> bool {
        self.try_store(points, method, n).is_ok()
    }

    fn try_store(
        &self,
        points: &BTreeMap<u64, PressurePoint>,
        method: &str,
        n: usize,
    ) -> std::io::Result<()> {
        if let Some(dir) = self.path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = self.path.with_extension("csv.tmp");
        {
            let mut file = fs::File::create(&tmp)?;
            writeln!(file, "# key={} {}", self.key, self.header)?;
            let mut w = csv::Writer::from_writer(&mut file);
            w.write_record(["s", "p", "eigenvalue", "residual", "method", "N"])?;
            let mut sorted: Vec<&PressurePoint> = points.values().collect();
            sorted.sort_by(|a, b| a.s.total_cmp(&b.s));
            for pt in sorted {
                w.write_record([
                    format!("{:e}", pt.s),
                    format!("{:e}", pt.p),
                    format!("{:e}", pt.eigenvalue),
                    format!("{:e}", pt.residual),
                    method.to_string(),
                    n.to_string(),
                ])?;
            }
            w.flush()?;
        }
        fs::rename(tmp, &self.path)
    }
}
