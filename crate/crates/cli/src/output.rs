//! Result sets: column tables with units, scalar diagnostics and pass/fail
//! checks, written as CSV tables plus a JSON sidecar.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
    #[serde(skip)]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
}

impl Table {
    pub fn new(name: &str) -> Self {
        Table {
            name: name.into(),
            columns: Vec::new(),
        }
    }

    /// Appends a column; all columns of a table must have equal length.
    pub fn col(mut self, name: &str, unit: &str, values: Vec<f64>) -> Self {
        if let Some(first) = self.columns.first() {
            assert_eq!(first.values.len(), values.len(), "column {name} has the wrong length");
        }
        self.columns.push(Column {
            name: name.into(),
            unit: unit.into(),
            values,
        });
        self
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.values.len())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|c| c.name == name).map(|c| c.values.as_slice())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))
            .expect("in-memory write");
        for r in 0..self.rows() {
            w.write_record(self.columns.iter().map(|c| fmt_f64(c.values[r])))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }
}

/// Shortest round-trip representation; `inf`, `-inf` and `nan` for the
/// non-finite values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:?}")
    }
}

fn ser_f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_str(&fmt_f64(*x))
    }
}

fn ser_f64_map<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut map = s.serialize_map(Some(m.len()))?;
    for (k, v) in m {
        map.serialize_entry(k, &Finite(*v))?;
    }
    map.end()
}

struct Finite(f64);

impl Serialize for Finite {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ser_f64(&self.0, s)
    }
}

/// A named quantity compared against a threshold; `pass` is decided by the
/// experiment, since some checks are lower bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    #[serde(serialize_with = "ser_f64")]
    pub value: f64,
    #[serde(serialize_with = "ser_f64")]
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub experiment: String,
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub parallel: bool,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` overrides the clock.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultSet {
    pub metadata: Metadata,
    pub tables: Vec<Table>,
    #[serde(serialize_with = "ser_f64_map")]
    pub diagnostics: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    /// Extra files (name suffix, contents), e.g. trajectory dumps.
    #[serde(skip)]
    pub attachments: Vec<(String, String)>,
}

pub fn config_hash(normalized: &str) -> String {
    let digest = Sha256::digest(normalized.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse().ok()) {
        return t;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl ResultSet {
    pub fn new(metadata: Metadata) -> Self {
        ResultSet {
            metadata,
            tables: Vec::new(),
            diagnostics: BTreeMap::new(),
            checks: Vec::new(),
            attachments: Vec::new(),
        }
    }

    pub fn table(&mut self, t: Table) {
        self.tables.push(t);
    }

    pub fn diag(&mut self, name: &str, value: f64) {
        self.diagnostics.insert(name.into(), value);
    }

    /// Records `value ≤ threshold`.
    pub fn check_le(&mut self, name: &str, value: f64, threshold: f64) {
        self.check(name, value, threshold, value <= threshold);
    }

    /// Records `value ≥ threshold`.
    pub fn check_ge(&mut self, name: &str, value: f64, threshold: f64) {
        self.check(name, value, threshold, value >= threshold);
    }

    pub fn check(&mut self, name: &str, value: f64, threshold: f64, pass: bool) {
        self.checks.push(Check {
            name: name.into(),
            value,
            threshold,
            pass,
        });
    }

    pub fn get_table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn sidecar_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result set serializes");
        s.push('\n');
        s
    }

    /// Writes `<stem>.json`, `<stem>_<table>.csv` and attachments into `dir`,
    /// each via a temporary file renamed into place.
    pub fn write(&self, dir: &Path, stem: &str) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for t in &self.tables {
            let p = dir.join(format!("{stem}_{}.csv", t.name));
            write_atomic(&p, t.to_csv().as_bytes())?;
            written.push(p);
        }
        for (suffix, body) in &self.attachments {
            let p = dir.join(format!("{stem}_{suffix}"));
            write_atomic(&p, body.as_bytes())?;
            written.push(p);
        }
        let p = dir.join(format!("{stem}.json"));
        write_atomic(&p, self.sidecar_json().as_bytes())?;
        written.push(p);
        Ok(written)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
