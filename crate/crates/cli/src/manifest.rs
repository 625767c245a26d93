//! Per-stage manifests: output checksums plus the checksums of the upstream
//! manifests each stage consumed, so stale artifacts are refused.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    /// Upstream stage name to the checksum of its manifest when consumed.
    pub inputs: BTreeMap<String, String>,
    /// Output path, relative to the run directory, to its checksum.
    pub files: BTreeMap<String, String>,
    pub summary: Value,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

fn manifest_path(out: &Path, stage: &str) -> std::path::PathBuf {
    out.join(stage).join(MANIFEST)
}

pub fn write(
    out: &Path,
    stage: &str,
    inputs: &[&str],
    files: &[String],
    summary: Value,
) -> Result<Manifest, CliError> {
    let mut m = Manifest {
        stage: stage.to_string(),
        inputs: BTreeMap::new(),
        files: BTreeMap::new(),
        summary,
    };
    for s in inputs {
        m.inputs.insert(s.to_string(), sha256_file(&manifest_path(out, s))?);
    }
    for f in files {
        m.files.insert(f.clone(), sha256_file(&out.join(f))?);
    }
    let path = manifest_path(out, stage);
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(m)
}

/// Reads a stage manifest and checks it and everything upstream of it.
pub fn verify(out: &Path, stage: &str) -> Result<Manifest, CliError> {
    let path = manifest_path(out, stage);
    let text = fs::read_to_string(&path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: std::io::Error::new(e.kind(), format!("{e}; run `{stage}` first")),
    })?;
    let m: Manifest =
        serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    for (file, sum) in &m.files {
        if sha256_file(&out.join(file))? != *sum {
            return Err(CliError::Stale {
                path: file.clone(),
                manifest: path.display().to_string(),
                stage: stage.to_string(),
            });
        }
    }
    for (upstream, sum) in &m.inputs {
        verify(out, upstream)?;
        if sha256_file(&manifest_path(out, upstream))? != *sum {
            return Err(CliError::Stale {
                path: format!("{upstream}/{MANIFEST}"),
                manifest: path.display().to_string(),
                stage: stage.to_string(),
            });
        }
    }
    Ok(m)
}
