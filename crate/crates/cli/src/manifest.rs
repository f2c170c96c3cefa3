//! Run manifests: enough provenance to reproduce any artifact byte for byte.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub seed: u64,
    pub argv: Vec<String>,
    pub input_digests: Vec<(String, String)>,
    pub outputs: Vec<(String, String)>,
    pub wall_clock_ms: u128,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

pub fn digest_file(path: &Path) -> anyhow::Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    started: std::time::Instant,
    out_dir: PathBuf,
}

impl ManifestBuilder {
    pub fn new(subcommand: &str, seed: u64, argv: Vec<String>, out_dir: &Path) -> Self {
        ManifestBuilder {
            manifest: RunManifest {
                subcommand: subcommand.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                argv,
                input_digests: Vec::new(),
                outputs: Vec::new(),
                wall_clock_ms: 0,
            },
            started: std::time::Instant::now(),
            out_dir: out_dir.to_path_buf(),
        }
    }

    pub fn record_input(&mut self, label: &str, bytes: &[u8]) {
        self.manifest
            .input_digests
            .push((label.to_string(), sha256_hex(bytes)));
    }

    /// Write an artifact into the output directory and record its digest.
    pub fn write_artifact(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
        fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join(name);
        fs::write(&path, bytes)?;
        self.manifest
            .outputs
            .push((name.to_string(), sha256_hex(bytes)));
        Ok(path)
    }

    pub fn finish(mut self) -> anyhow::Result<RunManifest> {
        let elapsed: Duration = self.started.elapsed();
        self.manifest.wall_clock_ms = elapsed.as_millis();
        fs::create_dir_all(&self.out_dir)?;
        // The manifest itself records wall clock, so it is not part of the
        // reproducibility contract; everything in `outputs` is.
        let path = self.out_dir.join("manifest.json");
        fs::write(&path, serde_json::to_vec_pretty(&self.manifest)?)?;
        Ok(self.manifest)
    }
}
