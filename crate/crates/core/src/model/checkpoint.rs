//! Binary checkpoint: `CHECKPOINT_MAGIC`, u32 LE feature count, f64 LE
//! dropout rate, then `count + 1` f64 LE weights (bias last). The training
//! configuration goes to a `.json` sidecar next to it.

use std::fs;
use std::path::{Path, PathBuf};

use super::{ReferenceModel, TrainConfig, FEATURE_COUNT};
use crate::atomic::write_atomic;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LFMODEL1";

pub fn encode_checkpoint(m: &ReferenceModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 8 * m.weights.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(m.weights.len() as u32 - 1).to_le_bytes());
    out.extend_from_slice(&m.dropout_rate.to_le_bytes());
    for w in &m.weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ReferenceModel> {
    let bad = |msg: String| Error::BadCheckpoint(msg);
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("missing magic".into()));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if count != FEATURE_COUNT {
        return Err(bad(format!("{count} features, expected {FEATURE_COUNT}")));
    }
    let expected = 20 + 8 * (count + 1);
    if bytes.len() != expected {
        return Err(bad(format!("{} bytes, expected {expected}", bytes.len())));
    }
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let m = ReferenceModel {
        dropout_rate: f64_at(12),
        weights: (0..=count).map(|k| f64_at(20 + 8 * k)).collect(),
    };
    m.validate().map_err(|e| bad(e.to_string()))?;
    if m.weights.iter().any(|w| !w.is_finite()) {
        return Err(bad("non-finite weight".into()));
    }
    Ok(m)
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Saves the weights and, when given, the training configuration sidecar.
pub fn save_checkpoint(path: &Path, m: &ReferenceModel, cfg: Option<&TrainConfig>) -> Result<()> {
    if let Some(cfg) = cfg {
        write_atomic(&sidecar(path), &serde_json::to_vec_pretty(cfg)?)?;
    }
    Ok(write_atomic(path, &encode_checkpoint(m))?)
}

/// Loads weights and the sidecar configuration if present.
pub fn load_checkpoint(path: &Path) -> Result<(ReferenceModel, Option<TrainConfig>)> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_owned()),
        _ => Error::Io(e),
    })?;
    let m = decode_checkpoint(&bytes)?;
    let cfg = match fs::read(sidecar(path)) {
        Ok(b) => Some(serde_json::from_slice(&b)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };
    Ok((m, cfg))
}
