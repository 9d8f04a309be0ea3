//! Binary state files: raw coefficients bound to the producing system
//! through a canonical-JSON hash, so a state can never be replayed against
//! the wrong model.

use std::path::Path;

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::error::{PfvError, Result};
use crate::solver::QuantumState;
use crate::spec::SystemSpec;

const MAGIC: &[u8; 4] = b"PFVW";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 32 + 8;

fn spec_digest(spec: &SystemSpec) -> Result<[u8; 32]> {
    // serde_json emits struct fields in declaration order, so the encoding
    // is deterministic for a given spec value.
    let json = serde_json::to_string(spec)?;
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    Ok(hasher.finalize().into())
}

/// Hex digest identifying the system a state belongs to.
pub fn spec_hash(spec: &SystemSpec) -> Result<String> {
    let digest = spec_digest(spec)?;
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    Ok(out)
}

/// Write a state file: magic, format version, spec hash, dimension, then
/// the coefficients as little-endian (re, im) pairs.
pub fn save_state(path: impl AsRef<Path>, spec: &SystemSpec, state: &QuantumState) -> Result<()> {
    let digest = spec_digest(spec)?;
    let mut bytes = Vec::with_capacity(HEADER_LEN + state.coeffs.len() * 16);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&digest);
    bytes.extend_from_slice(&(state.coeffs.len() as u64).to_le_bytes());
    for c in &state.coeffs {
        bytes.extend_from_slice(&c.re.to_le_bytes());
        bytes.extend_from_slice(&c.im.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Read a state file back, verifying the header and that it was produced by
/// exactly the given system.
pub fn load_state(path: impl AsRef<Path>, spec: &SystemSpec) -> Result<Vec<Complex64>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < HEADER_LEN {
        return Err(PfvError::StateFile(format!(
            "corrupt state file: expected at least {HEADER_LEN} header bytes, found {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(PfvError::StateFile("not a state file: bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(PfvError::StateFile(format!(
            "unsupported state-file version {version}, expected {VERSION}"
        )));
    }
    let digest = spec_digest(spec)?;
    if bytes[8..40] != digest {
        return Err(PfvError::StateFile(
            "system hash mismatch: the state was produced by a different spec".into(),
        ));
    }
    let dim = u64::from_le_bytes(bytes[40..48].try_into().unwrap()) as usize;
    let expected = HEADER_LEN + dim * 16;
    if bytes.len() != expected {
        return Err(PfvError::StateFile(format!(
            "corrupt state file: expected {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let mut coeffs = Vec::with_capacity(dim);
    for k in 0..dim {
        let base = HEADER_LEN + 16 * k;
        let re = f64::from_le_bytes(bytes[base..base + 8].try_into().unwrap());
        let im = f64::from_le_bytes(bytes[base + 8..base + 16].try_into().unwrap());
        coeffs.push(Complex64::new(re, im));
    }
    Ok(coeffs)
}
