use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Path relative to the run directory.
    pub path: String,
    /// Hex SHA-256 of the file contents.
    pub sha256: String,
}

/// Everything needed to repeat a run and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    /// Resolved parameters, defaults included, in the config's JSON mirror.
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    pub code_version: String,
    pub wall_time_s: f64,
    pub outputs: Vec<OutputRecord>,
}

impl RunManifest {
    pub fn new(experiment: &str, parameters: serde_json::Value, seed: Option<u64>) -> Self {
        RunManifest {
            experiment: experiment.to_string(),
            parameters,
            seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: 0.0,
            outputs: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Record an output file under `dir` with its digest.
    pub fn record(&mut self, dir: &Path, rel: &str) -> Result<()> {
        let sha256 = file_digest(&dir.join(rel))?;
        self.outputs.retain(|o| o.path != rel);
        self.outputs.push(OutputRecord {
            path: rel.to_string(),
            sha256,
        });
        Ok(())
    }

    /// Outputs whose current digest differs from the recorded one.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for o in &self.outputs {
            if file_digest(&dir.join(&o.path))? != o.sha256 {
                bad.push(o.path.clone());
            }
        }
        Ok(bad)
    }
}

pub fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(digest(&std::fs::read(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            digest(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn json_round_trip() {
        let mut m = RunManifest::new(
            "capacity",
            serde_json::json!({"run": {"sizes": "64"}}),
            Some(9),
        );
        m.wall_time_s = 0.1 + 0.2;
        m.outputs.push(OutputRecord {
            path: "results.csv".into(),
            sha256: digest(b"x"),
        });
        assert_eq!(RunManifest::from_json(&m.to_json().unwrap()).unwrap(), m);
    }
}
