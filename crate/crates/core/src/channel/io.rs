//! JSON channel files.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BroadcastPair, Dmc};
use crate::error::{Error, Result};

/// On-disk form of a broadcast pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFile {
    pub num_inputs: usize,
    pub num_outputs: usize,
    pub w1: Vec<Vec<f64>>,
    pub w2: Vec<Vec<f64>>,
}

impl ChannelFile {
    pub fn from_pair(pair: &BroadcastPair) -> Self {
        Self {
            num_inputs: pair.num_inputs(),
            num_outputs: pair.num_outputs(),
            w1: pair.w1.rows().to_vec(),
            w2: pair.w2.rows().to_vec(),
        }
    }

    pub fn into_pair(self) -> Result<BroadcastPair> {
        for (name, w) in [("w1", &self.w1), ("w2", &self.w2)] {
            if w.len() != self.num_inputs || w.iter().any(|r| r.len() != self.num_outputs) {
                return Err(Error::DimensionMismatch(format!(
                    "{name} does not match the declared {}x{} shape",
                    self.num_inputs, self.num_outputs
                )));
            }
        }
        BroadcastPair::new(Dmc::new(self.w1)?, Dmc::new(self.w2)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("channel file serializes")
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Reads and validates a channel file; also returns its content digest.
    pub fn load(path: &Path) -> Result<(BroadcastPair, String)> {
        let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone()).map_err(|e| Error::Parse(e.to_string()))?;
        let pair = Self::parse(&text)?.into_pair()?;
        Ok((pair, channel_digest(&bytes)))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}

/// Hex SHA-256 of raw channel-file bytes.
pub fn channel_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
