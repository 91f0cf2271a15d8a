use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::{Path, PathBuf};

use bmf_core::backtest::BacktestPlan;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

/// Reproducibility record of a backtest run.
///
/// Wall-clock figures live in the files under `timed_outputs`, which are
/// listed without hashes, so identical runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: String,
    pub seed: u64,
    pub dataset: String,
    pub dataset_sha256: String,
    pub outputs: Vec<OutputFile>,
    pub timed_outputs: Vec<String>,
}

impl RunManifest {
    pub fn build(
        plan: &BacktestPlan,
        dataset: &Path,
        dataset_sha256: &str,
        files: &[PathBuf],
        timed: &[&str],
    ) -> io::Result<Self> {
        let mut outputs = Vec::new();
        let mut timed_outputs: Vec<String> = timed.iter().map(|s| s.to_string()).collect();
        for p in files {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            if timed.contains(&name.as_str()) {
                continue;
            }
            outputs.push(OutputFile { file: name, sha256: sha256_file(p)? });
        }
        timed_outputs.sort();
        Ok(Self {
            tool: "bmf".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: plan.to_config(),
            seed: plan.seed,
            dataset: dataset.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            dataset_sha256: dataset_sha256.into(),
            outputs,
            timed_outputs,
        })
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self).map(|s| s + "\n")
    }
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut r = BufReader::new(File::open(path)?);
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}
