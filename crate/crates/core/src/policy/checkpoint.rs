//! Binary parameter checkpoints.
//!
//! Layout (little-endian): 8-byte magic, four `u32` architecture fields
//! (`|V|`, `d`, `W`, `h`), `u64` vocabulary fingerprint, `u64` parameter
//! count, then the parameters as `f64`.

use std::path::Path;

use super::network::{Architecture, PolicyParams};
use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

const MAGIC: &[u8; 8] = b"TRJPREF1";
const HEADER_LEN: usize = 8 + 4 * 4 + 8 + 8;

pub fn to_bytes(params: &PolicyParams, vocab: &Vocabulary) -> Vec<u8> {
    let a = params.arch;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.len());
    out.extend_from_slice(MAGIC);
    for v in [a.vocab_size, a.embed_dim, a.window, a.hidden] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&vocab.fingerprint().to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in &params.theta {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8], vocab: &Vocabulary) -> Result<PolicyParams> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("missing or unknown header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let arch = Architecture {
        vocab_size: u32_at(8),
        embed_dim: u32_at(12),
        window: u32_at(16),
        hidden: u32_at(20),
    };
    let fingerprint = u64_at(24);
    if fingerprint != vocab.fingerprint() {
        return Err(Error::Checkpoint(format!(
            "vocabulary fingerprint {fingerprint:016x} does not match {:016x}",
            vocab.fingerprint()
        )));
    }
    if arch.vocab_size != vocab.len() {
        return Err(Error::Checkpoint("architecture vocabulary size mismatch".into()));
    }
    let count = u64_at(32) as usize;
    if count != arch.param_count() || bytes.len() != HEADER_LEN + 8 * count {
        return Err(Error::Checkpoint(format!(
            "expected {} parameters, header says {count} and payload holds {}",
            arch.param_count(),
            (bytes.len() - HEADER_LEN) / 8
        )));
    }
    let theta = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    PolicyParams::from_vec(arch, theta).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save(path: &Path, params: &PolicyParams, vocab: &Vocabulary) -> Result<()> {
    std::fs::write(path, to_bytes(params, vocab))?;
    Ok(())
}

pub fn load(path: &Path, vocab: &Vocabulary) -> Result<PolicyParams> {
    from_bytes(&std::fs::read(path)?, vocab)
}
