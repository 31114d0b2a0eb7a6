use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Envelope for every JSON result.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunResult<T> {
    pub tool_version: String,
    pub command: String,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_hash: Option<String>,
    pub wall_time_s: f64,
    pub payload: T,
}

/// Writes atomically to `out`, or to stdout.
pub fn emit(out: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(path) => optidesign::io::write_atomic(path, bytes)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

pub fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    emit(out, &bytes)
}
