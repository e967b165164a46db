use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance block embedded in every JSON report.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub version: &'static str,
    pub schema_version: u32,
    pub command_line: Vec<String>,
    pub seeds: Vec<u64>,
    pub threads: usize,
    pub max_bits: Option<u32>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub wall_time_seconds: f64,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    manifest: &'a RunManifest,
    result: &'a T,
}

pub struct Recorder {
    started: Instant,
    seeds: Vec<u64>,
    inputs: Vec<InputDigest>,
    outputs: Vec<PathBuf>,
    max_bits: Option<u32>,
}

impl Recorder {
    pub fn new(max_bits: Option<u32>) -> Self {
        Self {
            started: Instant::now(),
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            max_bits,
        }
    }

    pub fn seed(&mut self, seed: u64) {
        self.seeds.push(seed);
    }

    /// Reads an input file and records its digest.
    pub fn read(&mut self, path: &Path) -> Result<String> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))
    }

    /// Writes an output file; its manifest goes to a `.manifest.json` sidecar.
    pub fn write(&mut self, path: &Path, contents: &str) -> Result<()> {
        std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    pub fn manifest(self) -> RunManifest {
        RunManifest {
            version: env!("CARGO_PKG_VERSION"),
            schema_version: SCHEMA_VERSION,
            command_line: std::env::args().collect(),
            seeds: self.seeds,
            threads: rayon::current_num_threads(),
            max_bits: self.max_bits,
            inputs: self.inputs,
            outputs: self
                .outputs
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
        }
    }
}

pub fn to_json<T: Serialize>(manifest: &RunManifest, result: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(&Envelope {
        manifest,
        result,
    })?)
}

pub fn sidecar_path(output: &str) -> PathBuf {
    PathBuf::from(format!("{output}.manifest.json"))
}
