use std::path::Path;

use curvestop_core::synth::{generate_dataset, GeneratorConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset_io::{encode, DatasetFormat};
use crate::error::{CliError, Result};
use crate::fsio;

pub const MANIFEST_FORMAT: &str = "curvestop-generator-manifest";
pub const MANIFEST_VERSION: u32 = 1;

/// Everything needed to regenerate a synthetic dataset and to check that a
/// file on disk is that dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub generator: GeneratorConfig,
    pub records: usize,
    /// SHA-256 of the JSONL encoding.
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Generates the dataset and its manifest.
pub fn generate(gen: &GeneratorConfig) -> Result<(curvestop_core::dataset::CurveDataset, Manifest)> {
    let dataset = generate_dataset(gen)?;
    let jsonl = encode(&dataset, DatasetFormat::Jsonl)?;
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        generator: gen.clone(),
        records: dataset.len(),
        sha256: sha256_hex(jsonl.as_bytes()),
    };
    Ok((dataset, manifest))
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let m: Manifest = serde_json::from_str(&fsio::read_to_string(path)?)
        .map_err(|e| CliError::validation(format!("{}: malformed manifest: {e}", path.display())))?;
    if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
        return Err(CliError::validation(format!(
            "{}: unsupported manifest {} v{}",
            path.display(),
            m.format,
            m.version
        )));
    }
    Ok(m)
}

/// Regenerates from `manifest` and checks the checksum.
pub fn regenerate(manifest: &Manifest) -> Result<curvestop_core::dataset::CurveDataset> {
    let (dataset, fresh) = generate(&manifest.generator)?;
    if fresh.sha256 != manifest.sha256 {
        return Err(CliError::runtime(format!(
            "regenerated dataset checksum {} differs from manifest {}",
            fresh.sha256, manifest.sha256
        )));
    }
    Ok(dataset)
}
