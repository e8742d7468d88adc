//! CSV/JSON emission and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Bumped whenever a CSV column order or JSON field set changes.
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A table with a frozen header; cells are written with shortest
/// round-trip formatting.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::DimensionMismatch {
                expected: self.header.len(),
                got: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header.iter().position(|h| *h == name)?;
        self.rows
            .iter()
            .map(|r| match r[idx] {
                Cell::Num(v) => Some(v),
                Cell::Int(v) => Some(v as f64),
                Cell::Text(_) => None,
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            for (i, c) in row.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                match c {
                    Cell::Num(v) => write!(s, "{v:?}").unwrap(),
                    Cell::Int(v) => write!(s, "{v}").unwrap(),
                    Cell::Text(t) => s.push_str(t),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Provenance of one run: enough to reproduce and verify every output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub artifact_version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    /// File name to sha256 of its bytes.
    pub outputs: BTreeMap<String, String>,
}

/// Single owner of an output directory. Files are staged in memory and
/// written together by `finish`.
#[derive(Debug)]
pub struct OutputSet {
    files: BTreeMap<String, Vec<u8>>,
}

impl Default for OutputSet {
    fn default() -> Self {
        Self::new()
    }
}

impl OutputSet {
    pub fn new() -> Self {
        Self { files: BTreeMap::new() }
    }

    fn insert(&mut self, name: &str, bytes: Vec<u8>) -> Result<()> {
        if name == MANIFEST_FILE || name.contains(['/', '\\']) {
            return Err(Error::invalid(format!("reserved or invalid output name `{name}`")));
        }
        if self.files.insert(name.to_string(), bytes).is_some() {
            return Err(Error::invalid(format!("output `{name}` written twice")));
        }
        Ok(())
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> Result<()> {
        self.insert(name, table.to_csv().into_bytes())
    }

    /// Pretty JSON with a `format_version` field added at the top level.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut v = serde_json::to_value(value)?;
        if let serde_json::Value::Object(map) = &mut v {
            map.insert("format_version".into(), FORMAT_VERSION.into());
        }
        let mut bytes = serde_json::to_vec_pretty(&v)?;
        bytes.push(b'\n');
        self.insert(name, bytes)
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.get(name).map(Vec::as_slice)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    pub fn manifest(&self, command: &str, config_raw: &str, seed: Option<u64>) -> RunManifest {
        RunManifest {
            format_version: FORMAT_VERSION,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_sha256: sha256_hex(config_raw.as_bytes()),
            seed,
            outputs: self
                .files
                .iter()
                .map(|(k, v)| (k.clone(), sha256_hex(v)))
                .collect(),
        }
    }

    /// Writes every file plus the manifest into `dir`, returning the paths.
    pub fn finish(&self, dir: &Path, manifest: &RunManifest) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let p = dir.join(name);
            fs::write(&p, bytes)?;
            written.push(p);
        }
        let p = dir.join(MANIFEST_FILE);
        let mut bytes = serde_json::to_vec_pretty(manifest)?;
        bytes.push(b'\n');
        fs::write(&p, bytes)?;
        written.push(p);
        Ok(written)
    }
}

/// Re-hashes the files listed in a manifest; returns the names that differ
/// or are missing.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let manifest: RunManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    let mut bad = Vec::new();
    for (name, hash) in &manifest.outputs {
        match fs::read(dir.join(name)) {
            Ok(bytes) if sha256_hex(&bytes) == *hash => {}
            _ => bad.push(name.clone()),
        }
    }
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_formatting() {
        let mut t = Table::new(vec!["t_ns", "p", "label"]);
        t.push(vec![0.1.into(), 1e-20.into(), "hv".into()]).unwrap();
        t.push(vec![2.0.into(), 3u64.into(), "pm".into()]).unwrap();
        assert_eq!(t.to_csv(), "t_ns,p,label\n0.1,1e-20,hv\n2.0,3,pm\n");
        assert!(t.push(vec![1.0.into()]).is_err());
        assert_eq!(t.column("t_ns").unwrap(), vec![0.1, 2.0]);
        assert!(t.column("label").is_none());
    }

    #[test]
    fn manifest_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputSet::new();
        let mut t = Table::new(vec!["x"]);
        t.push(vec![1.0.into()]).unwrap();
        out.csv("a.csv", &t).unwrap();
        out.json("b.json", &serde_json::json!({"v": 1})).unwrap();
        assert!(out.csv("a.csv", &t).is_err());
        assert!(out.csv(MANIFEST_FILE, &t).is_err());
        let m = out.manifest("test", "raw", Some(3));
        assert_eq!(m.outputs.len(), 2);
        out.finish(dir.path(), &m).unwrap();
        assert!(verify_manifest(dir.path()).unwrap().is_empty());
        fs::write(dir.path().join("a.csv"), "x\n2.0\n").unwrap();
        assert_eq!(verify_manifest(dir.path()).unwrap(), vec!["a.csv".to_string()]);
    }
}
