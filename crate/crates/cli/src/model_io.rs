use std::path::Path;

use curvestop_core::srm::SequentialRegressionModel;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::fsio;

pub const MODEL_FORMAT: &str = "curvestop-srm";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub model: SequentialRegressionModel,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

pub fn encode_model(model: &SequentialRegressionModel) -> Result<Vec<u8>> {
    fsio::to_json_bytes(&ModelDocument { format: MODEL_FORMAT.into(), version: MODEL_VERSION, model: model.clone() })
}

pub fn decode_model(text: &str) -> Result<SequentialRegressionModel> {
    // check the header first so a newer layout is reported as such rather
    // than as a field error
    let header: Header =
        serde_json::from_str(text).map_err(|e| CliError::validation(format!("malformed model document: {e}")))?;
    if header.format != MODEL_FORMAT {
        return Err(CliError::validation(format!("not a model document (format `{}`)", header.format)));
    }
    if header.version != MODEL_VERSION {
        return Err(CliError::validation(format!(
            "model document version {} is not supported (expected {MODEL_VERSION})",
            header.version
        )));
    }
    let doc: ModelDocument =
        serde_json::from_str(text).map_err(|e| CliError::validation(format!("malformed model document: {e}")))?;
    Ok(doc.model.validated()?)
}

pub fn save_model(path: &Path, model: &SequentialRegressionModel) -> Result<()> {
    fsio::write_atomic(path, &encode_model(model)?)
}

pub fn load_model(path: &Path) -> Result<SequentialRegressionModel> {
    decode_model(&fsio::read_to_string(path)?).map_err(|e| match e {
        CliError::Validation(m) => CliError::validation(format!("{}: {m}", path.display())),
        other => other,
    })
}
