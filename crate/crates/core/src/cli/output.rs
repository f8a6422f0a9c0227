//! Run directories: named outputs, their column schema and the manifest.

use crate::error::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub const MANIFEST: &str = "manifest.json";
pub const SCHEMA: &str = "schema.json";

/// `sha256` of the problem file bytes, hex encoded.
pub fn config_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct Column {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileSchema {
    pub description: String,
    /// Empty for JSON files.
    pub columns: Vec<Column>,
}

/// Shorthand for `(name, description)` column lists.
pub fn columns(cols: &[(&str, &str)]) -> Vec<Column> {
    cols.iter()
        .map(|(n, d)| Column {
            name: n.to_string(),
            description: d.to_string(),
        })
        .collect()
}

/// Space-time coordinate columns for the grid dimension.
pub fn coordinate_columns(dim: usize) -> Vec<Column> {
    let mut c = columns(&[("t", "time level t_k"), ("x", "first spatial coordinate of the node")]);
    if dim == 2 {
        c.extend(columns(&[("y", "second spatial coordinate of the node")]));
    }
    c
}

/// Collects outputs of one run under a directory.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    outputs: Vec<String>,
    schema: BTreeMap<String, FileSchema>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            outputs: Vec::new(),
            schema: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    fn register(&mut self, name: &str, schema: FileSchema) {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        self.schema.insert(name.to_string(), schema);
    }

    /// Write a CSV through `body`; floats must be formatted with `{:.16e}`.
    pub fn csv(
        &mut self,
        name: &str,
        description: &str,
        cols: Vec<Column>,
        body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
    ) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.root.join(name))?);
        body(&mut w)?;
        w.flush()?;
        self.register(
            name,
            FileSchema {
                description: description.into(),
                columns: cols,
            },
        );
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, description: &str, value: &T) -> Result<()> {
        write_json(&self.root.join(name), value)?;
        self.register(
            name,
            FileSchema {
                description: description.into(),
                columns: Vec::new(),
            },
        );
        Ok(())
    }

    /// A binary file written through `body`.
    pub fn binary(
        &mut self,
        name: &str,
        description: &str,
        body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
    ) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.root.join(name))?);
        body(&mut w)?;
        w.flush()?;
        self.register(
            name,
            FileSchema {
                description: description.into(),
                columns: Vec::new(),
            },
        );
        Ok(())
    }

    /// Record an output produced elsewhere (e.g. a sweep cell directory).
    pub fn record(&mut self, name: &str, description: &str) {
        self.register(
            name,
            FileSchema {
                description: description.into(),
                columns: Vec::new(),
            },
        );
    }

    /// Write `schema.json` when anything besides the manifest was produced.
    pub fn write_schema(&mut self) -> Result<()> {
        if self.outputs.is_empty() {
            return Ok(());
        }
        write_json(&self.root.join(SCHEMA), &self.schema)?;
        self.outputs.push(SCHEMA.into());
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub hierctrl: &'static str,
    pub manifest_format: u32,
    pub target: String,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            hierctrl: env!("CARGO_PKG_VERSION"),
            manifest_format: 1,
            target: format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Error,
}

/// What a run did and where its outputs went.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub problem: Option<String>,
    /// `sha256` of the problem file bytes.
    pub config_hash: String,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub wall_time_seconds: f64,
    pub versions: Versions,
    pub status: RunStatus,
    pub error: Option<String>,
    pub warnings: Vec<String>,
    /// Command-specific facts too small for a separate file.
    pub details: serde_json::Value,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join(MANIFEST), self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_sha256_of_bytes() {
        assert_eq!(
            config_hash(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn outputs_and_schema_are_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = RunDir::create(dir.path()).unwrap();
        run.csv("a.csv", "test", columns(&[("v", "value")]), |w| {
            writeln!(w, "v\n{:.16e}", 0.1)
        })
        .unwrap();
        run.json("b.json", "test", &[1.0, 2.0]).unwrap();
        run.write_schema().unwrap();
        assert_eq!(run.outputs(), ["a.csv", "b.json", "schema.json"]);
        let text = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
        assert_eq!(text, "v\n1.0000000000000001e-1\n");
        let schema: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(SCHEMA)).unwrap()).unwrap();
        assert_eq!(schema["a.csv"]["columns"][0]["name"], "v");
    }
}
