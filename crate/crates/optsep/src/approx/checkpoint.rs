//! Checkpoint files: one JSON header line, then the raw parameter vector as
//! little-endian 64-bit floats. The header carries a SHA-256 checksum of the
//! payload so truncation or corruption is detected on load.

use super::{AgentParams, ApproxError, Architecture};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub step: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    architecture: Architecture,
    seed: u64,
    step: u64,
    num_params: usize,
    checksum: String,
}

fn payload_bytes(params: &AgentParams) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(params.values().len() * 8);
    for v in params.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

fn checksum(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Write `params` plus metadata to `path`. Round-trips bitwise-exactly.
pub fn save_checkpoint(
    path: &Path,
    params: &AgentParams,
    meta: &CheckpointMeta,
) -> Result<(), ApproxError> {
    let payload = payload_bytes(params);
    let header = Header {
        format_version: FORMAT_VERSION,
        architecture: params.arch().clone(),
        seed: meta.seed,
        step: meta.step,
        num_params: params.values().len(),
        checksum: checksum(&payload),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &header)
        .map_err(|e| ApproxError::FormatVersionMismatch(e.to_string()))?;
    out.write_all(b"\n")?;
    out.write_all(&payload)?;
    Ok(())
}

/// Read a checkpoint back, verifying format version, parameter count, and
/// checksum.
pub fn load_checkpoint(path: &Path) -> Result<(AgentParams, CheckpointMeta), ApproxError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut header_line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = reader.read(&mut byte)?;
        if n == 0 {
            return Err(ApproxError::FormatVersionMismatch(
                "missing header line".into(),
            ));
        }
        if byte[0] == b'\n' {
            break;
        }
        header_line.push(byte[0]);
    }
    let header: Header = serde_json::from_slice(&header_line)
        .map_err(|e| ApproxError::FormatVersionMismatch(format!("bad header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(ApproxError::FormatVersionMismatch(format!(
            "format version {} unsupported (expected {FORMAT_VERSION})",
            header.format_version
        )));
    }
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    if payload.len() != header.num_params * 8 || checksum(&payload) != header.checksum {
        return Err(ApproxError::ChecksumMismatch);
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let params = AgentParams::from_values(header.architecture, values)?;
    Ok((
        params,
        CheckpointMeta {
            seed: header.seed,
            step: header.step,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{init_params, ActionSpec, Activation};

    fn arch() -> Architecture {
        Architecture {
            input_dim: 5,
            hidden: vec![7],
            activation: Activation::Tanh,
            num_options: 2,
            action_spec: ActionSpec::Continuous(3),
        }
    }

    #[test]
    fn round_trip_is_bitwise_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.ck");
        let params = init_params(&arch(), 99);
        let meta = CheckpointMeta { seed: 99, step: 1234 };
        save_checkpoint(&path, &params, &meta).unwrap();
        let (loaded, loaded_meta) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.values(), params.values());
        assert_eq!(loaded.arch(), params.arch());
        assert_eq!(loaded_meta, meta);
    }

    #[test]
    fn truncated_file_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.ck");
        let params = init_params(&arch(), 1);
        save_checkpoint(&path, &params, &CheckpointMeta { seed: 1, step: 0 }).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 16]).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(ApproxError::ChecksumMismatch)
        ));
    }

    #[test]
    fn corrupted_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.ck");
        let params = init_params(&arch(), 1);
        save_checkpoint(&path, &params, &CheckpointMeta { seed: 1, step: 0 }).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // bump the declared format version
        let text = String::from_utf8_lossy(&bytes).to_string();
        let patched = text.replacen("\"format_version\":1", "\"format_version\":2", 1);
        bytes = patched.into_bytes();
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(ApproxError::FormatVersionMismatch(_))
        ));
    }
}
