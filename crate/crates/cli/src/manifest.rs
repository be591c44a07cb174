use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use incongruity::corpus::sha256_hex;
use incongruity::Result;
use serde::Serialize;

use crate::config::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one artifact-producing run. It holds no timestamps, so equal
/// inputs give byte-identical manifests.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub config_hash: String,
    /// Input path to content hash.
    pub inputs: BTreeMap<String, String>,
    pub data_hash: String,
    /// Output file (relative to the output directory) to content hash.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Result<Self> {
        Ok(Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed: config.seed()?,
            config: config.values().clone(),
            config_hash: config.hash(),
            inputs: BTreeMap::new(),
            data_hash: sha256_hex(b""),
            outputs: BTreeMap::new(),
        })
    }

    /// Hashes an input file and folds it into `data_hash`.
    pub fn input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        let joined: String = self.inputs.iter().map(|(p, h)| format!("{p}\t{h}\n")).collect();
        self.data_hash = sha256_hex(joined.as_bytes());
        Ok(bytes)
    }

    /// Writes `bytes` to `dir/rel` and records its hash.
    pub fn output(&mut self, dir: &Path, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.outputs.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Records a file already written under `dir`.
    pub fn record(&mut self, dir: &Path, rel: &str) -> Result<()> {
        let bytes = fs::read(dir.join(rel))?;
        self.outputs.insert(rel.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
