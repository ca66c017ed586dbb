//! Report emission with full provenance: resolved config, input digest, and
//! toolkit version. Re-running from the echoed config reproduces the file
//! byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use calkit_core::Result;

#[derive(Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_sha256: Option<String>,
    pub config: BTreeMap<String, String>,
    pub report: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(
        command: &str,
        input: Option<&Path>,
        config: BTreeMap<String, String>,
        report: T,
    ) -> Result<Self> {
        let input_sha256 = match input {
            Some(path) => Some(sha256_file(path)?),
            None => None,
        };
        Ok(Self {
            tool: "calkit",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            input_sha256,
            config,
            report,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        std::fs::write(path, bytes)?;
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Write CSV rows with deterministic float formatting (shortest
/// round-trippable representation).
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::with_capacity(rows.len() * 32 + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}
