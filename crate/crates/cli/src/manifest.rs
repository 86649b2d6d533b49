//! Run manifests: one `manifest.json` per output directory recording the
//! command, seed, toolkit version and the SHA-256 digest of every input and
//! output file.
//!
//! Manifests are deterministic: reruns with identical inputs and seed produce
//! byte-identical outputs and therefore byte-identical manifests. Wall-clock
//! time is only recorded when `SOURCE_DATE_EPOCH` is set, following the
//! reproducible-builds convention.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    /// Master seed for seeded commands, null otherwise.
    seed: Option<u64>,
    /// Unix epoch seconds from `SOURCE_DATE_EPOCH`, if set.
    timestamp: Option<u64>,
    inputs: &'a BTreeMap<String, String>,
    outputs: &'a BTreeMap<String, String>,
}

pub struct ManifestBuilder {
    command: String,
    seed: Option<u64>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ManifestBuilder {
    pub fn new(command: &str, seed: Option<u64>) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            seed,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    /// Digest an input file (never modified).
    pub fn record_input(&mut self, path: &Path) -> io::Result<()> {
        let bytes = fs::read(path)?;
        self.inputs
            .insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    /// Write one output file into the output directory and digest it.
    pub fn write_output(&mut self, out_dir: &Path, name: &str, bytes: &[u8]) -> io::Result<()> {
        fs::write(out_dir.join(name), bytes)?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Write `manifest.json` last, so it covers every output.
    pub fn finish(self, out_dir: &Path) -> io::Result<()> {
        let timestamp = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|v| v.parse().ok());
        let manifest = Manifest {
            command: &self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            timestamp,
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        fs::write(out_dir.join("manifest.json"), json)
    }
}
