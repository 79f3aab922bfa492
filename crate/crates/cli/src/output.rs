//! Run directories: CSV tables, JSON documents and the manifest.
//!
//! Every file is a deterministic function of the inputs and the resolved
//! configuration. The manifest carries no timestamps and no absolute output
//! paths, so two identical runs produce byte-identical directories.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::failure::{Classify, Kind, Outcome};

/// Shortest text that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_file(path: &Path) -> Outcome<String> {
    let bytes = std::fs::read(path).or_fail(Kind::Data, format!("cannot read {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Rows of strings with a header, encoded through the csv writer.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn encode(&self) -> Outcome<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).or_fail(Kind::Data, "cannot encode table")?;
        for r in &self.rows {
            w.write_record(r).or_fail(Kind::Data, "cannot encode table")?;
        }
        w.into_inner().or_fail(Kind::Data, "cannot encode table")
    }
}

pub struct RunDir {
    root: PathBuf,
    command: String,
    config: BTreeMap<String, Value>,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<(String, String)>,
    outputs: BTreeMap<String, String>,
}

impl RunDir {
    pub fn create(root: &Path, command: &str) -> Outcome<Self> {
        std::fs::create_dir_all(root).or_fail(Kind::Usage, format!("cannot create output directory {}", root.display()))?;
        Ok(RunDir {
            root: root.to_path_buf(),
            command: command.to_string(),
            config: BTreeMap::new(),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn record(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("config values serialize");
        self.config.insert(key.to_string(), v);
    }

    pub fn seed(&mut self, key: &str, seed: u64) {
        self.seeds.insert(key.to_string(), seed);
    }

    pub fn input(&mut self, path: &Path) -> Outcome<()> {
        let digest = digest_file(path)?;
        self.inputs.push((path.display().to_string(), digest));
        Ok(())
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Outcome<()> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).or_fail(Kind::Usage, format!("cannot create {}", parent.display()))?;
        }
        std::fs::write(&path, bytes).or_fail(Kind::Usage, format!("cannot write {}", path.display()))?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> Outcome<()> {
        let bytes = table.encode()?;
        self.write_bytes(name, &bytes)
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Outcome<()> {
        let mut bytes = serde_json::to_vec_pretty(value).or_fail(Kind::Numerical, format!("cannot encode {name}"))?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    /// Registers a file written by other means (e.g. the series writer).
    pub fn register(&mut self, name: &str) -> Outcome<()> {
        let digest = digest_file(&self.root.join(name))?;
        self.outputs.insert(name.to_string(), digest);
        Ok(())
    }

    pub fn finish(mut self) -> Outcome<()> {
        let manifest = json!({
            "tool": "torhsmm",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config": self.config,
            "seeds": self.seeds,
            "inputs": self.inputs.iter().map(|(p, d)| json!({"path": p, "sha256": d})).collect::<Vec<_>>(),
            "outputs": self.outputs.iter().map(|(p, d)| json!({"path": p, "sha256": d})).collect::<Vec<_>>(),
        });
        let outputs = std::mem::take(&mut self.outputs);
        self.write_json("manifest.json", &manifest)?;
        self.outputs = outputs;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, -3.0, 1e-300, 123456789.123, f64::MIN_POSITIVE, 2.0f64.sqrt()] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn manifest_lists_outputs_with_digests() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = RunDir::create(dir.path(), "demo").unwrap();
        run.record("states", 2);
        run.seed("seed", 7);
        let mut t = Table::new(["a", "b"]);
        t.push(vec!["1".into(), "x,y".into()]);
        run.write_table("t.csv", &t).unwrap();
        run.finish().unwrap();
        let m: Value = serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["command"], "demo");
        assert_eq!(m["config"]["states"], 2);
        assert_eq!(m["outputs"][0]["path"], "t.csv");
        assert_eq!(std::fs::read_to_string(dir.path().join("t.csv")).unwrap(), "a,b\n1,\"x,y\"\n");
    }
}
