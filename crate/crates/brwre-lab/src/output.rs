//! CSV tables, JSON reports and the run manifest.

use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::LabResult;

/// A CSV table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> LabResult<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }
}

/// Shortest round-trip decimal form of a real.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Everything one command produces.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub tables: Vec<Table>,
    pub reports: Vec<(String, serde_json::Value)>,
}

impl Artifacts {
    pub fn table(&mut self, t: Table) {
        self.tables.push(t);
    }

    pub fn report<T: Serialize>(&mut self, name: &str, value: &T) -> LabResult<()> {
        self.reports
            .push((name.into(), serde_json::to_value(value)?));
        Ok(())
    }

    pub fn extend(&mut self, other: Artifacts) {
        self.tables.extend(other.tables);
        self.reports.extend(other.reports);
    }

    /// Serialized files in a fixed order: tables, then reports.
    pub fn files(&self) -> LabResult<Vec<(String, Vec<u8>)>> {
        let mut out = Vec::new();
        for t in &self.tables {
            out.push((format!("{}.csv", t.name), t.to_csv()?));
        }
        for (name, v) in &self.reports {
            let mut bytes = serde_json::to_vec_pretty(v)?;
            bytes.push(b'\n');
            out.push((format!("{name}.json"), bytes));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn build(
        command: &str,
        seed: u64,
        config: serde_json::Value,
        files: &[(String, Vec<u8>)],
    ) -> LabResult<Self> {
        let canonical = serde_json::to_vec(&config)?;
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            core_version: brwre_core::VERSION.into(),
            command: command.into(),
            seed,
            config,
            config_sha256: sha256_hex(&canonical),
            files: files
                .iter()
                .map(|(name, b)| FileEntry {
                    name: name.clone(),
                    sha256: sha256_hex(b),
                    bytes: b.len() as u64,
                })
                .collect(),
        })
    }

    /// Hashes of the listed files, the part that must be identical across reruns.
    pub fn digest(&self) -> Vec<(&str, &str)> {
        self.files
            .iter()
            .map(|f| (f.name.as_str(), f.sha256.as_str()))
            .collect()
    }
}

/// Writes every artifact plus `manifest.json` into `dir`.
pub fn write_all(
    dir: &Path,
    command: &str,
    seed: u64,
    config: serde_json::Value,
    art: &Artifacts,
) -> LabResult<Manifest> {
    fs::create_dir_all(dir)?;
    let files = art.files()?;
    for (name, bytes) in &files {
        fs::write(dir.join(name), bytes)?;
    }
    let manifest = Manifest::build(command, seed, config, &files)?;
    let mut m = serde_json::to_vec_pretty(&manifest)?;
    m.push(b'\n');
    fs::write(dir.join("manifest.json"), m)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_fields() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(vec!["x,y".into(), num(0.1)]);
        assert_eq!(
            String::from_utf8(t.to_csv().unwrap()).unwrap(),
            "a,b\n\"x,y\",0.1\n"
        );
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, -2.5e10] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn manifest_lists_every_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut art = Artifacts::default();
        let mut t = Table::new("rows", &["n"]);
        t.push(vec!["1".into()]);
        art.table(t);
        art.report("summary", &serde_json::json!({"ok": true}))
            .unwrap();
        let m = write_all(dir.path(), "test", 7, serde_json::json!({"k": 1}), &art).unwrap();
        assert_eq!(m.files.len(), 2);
        for f in &m.files {
            let bytes = fs::read(dir.path().join(&f.name)).unwrap();
            assert_eq!(sha256_hex(&bytes), f.sha256);
        }
        let again = write_all(dir.path(), "test", 7, serde_json::json!({"k": 1}), &art).unwrap();
        assert_eq!(m, again);
    }
}
