//! Model documents on disk: the shared network (`sbb-v1`) or per-segment
//! logit fits (`logit-v1`).

use std::path::Path;

use mkalloc::forecaster::FORMAT_VERSION;
use mkalloc::SemiBlackBoxModel;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const LOGIT_VERSION: &str = "logit-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitSegment {
    pub id: String,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitDocument {
    pub version: String,
    /// Sorted by id.
    pub segments: Vec<LogitSegment>,
}

impl LogitDocument {
    pub fn new(mut segments: Vec<LogitSegment>) -> Self {
        segments.sort_by(|x, y| x.id.cmp(&y.id));
        Self {
            version: LOGIT_VERSION.to_string(),
            segments,
        }
    }

    fn find(&self, id: &str) -> Option<&LogitSegment> {
        self.segments
            .binary_search_by(|s| s.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.segments[i])
    }
}

pub enum LoadedModel {
    Shared(SemiBlackBoxModel),
    Logit(LogitDocument),
}

impl LoadedModel {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let bad = |message: String| CliError::Format {
            path: path.to_path_buf(),
            message,
        };
        #[derive(Deserialize)]
        struct Header {
            version: String,
        }
        let header: Header = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        match header.version.as_str() {
            v if v == FORMAT_VERSION => SemiBlackBoxModel::from_json(&text)
                .map(LoadedModel::Shared)
                .map_err(|e| bad(e.to_string())),
            LOGIT_VERSION => {
                let mut doc: LogitDocument = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
                doc.segments.sort_by(|x, y| x.id.cmp(&y.id));
                Ok(LoadedModel::Logit(doc))
            }
            other => Err(bad(format!("unsupported model version {other:?}"))),
        }
    }

    /// `(a, b)` of a segment's response curve, if the model knows it.
    pub fn logit_params(&self, id: &str) -> Option<(f64, f64)> {
        match self {
            LoadedModel::Shared(m) => m.logit_params(id).ok(),
            LoadedModel::Logit(doc) => doc.find(id).map(|s| (s.a, s.b)),
        }
    }
}
