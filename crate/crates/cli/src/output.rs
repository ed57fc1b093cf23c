use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

/// Shortest decimal that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// One CSV file held in memory until the run has finished.
#[derive(Debug)]
pub struct Table {
    pub file: String,
    /// Schema identifier recorded in the manifest.
    pub schema: &'static str,
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(file: impl Into<String>, schema: &'static str, header: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header)?;
        Ok(Table {
            file: file.into(),
            schema,
            writer,
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub(crate) fn into_bytes(self) -> Result<Vec<u8>> {
        self.writer.into_inner().context("flushing csv buffer")
    }
}

/// What a run leaves behind besides its CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub library_version: String,
    /// How replication seeds derive from `config.seed`.
    pub seed_rule: String,
    /// File name to schema identifier.
    pub outputs: BTreeMap<String, String>,
    pub config: ExperimentConfig,
}

pub const SEED_RULE: &str = "replication i (0-based) draws its sample with seed + i; single runs use seed";

/// Writes the tables and `manifest.toml` into `dir`.
pub fn write_run(dir: &Path, command: &str, config: &ExperimentConfig, tables: Vec<Table>) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut outputs = BTreeMap::new();
    for t in tables {
        outputs.insert(t.file.clone(), t.schema.to_string());
        let path = dir.join(&t.file);
        fs::write(&path, t.into_bytes()?).with_context(|| format!("writing {}", path.display()))?;
    }
    let manifest = Manifest {
        command: command.to_string(),
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        seed_rule: SEED_RULE.to_string(),
        outputs,
        config: config.clone(),
    };
    let path = dir.join("manifest.toml");
    fs::write(&path, toml::to_string(&manifest)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.toml");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0, 1e-7, 123456.789, -2.5e300, 1.0 / 3.0] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(0.1), "0.1");
        assert_eq!(opt_num(None), "");
    }

    #[test]
    fn table_writes_header_first() {
        let mut t = Table::new("x.csv", "x/v1", &["a", "b"]).unwrap();
        t.row([num(1.0), num(2.5)]).unwrap();
        assert_eq!(String::from_utf8(t.into_bytes().unwrap()).unwrap(), "a,b\n1.0,2.5\n");
    }
}
