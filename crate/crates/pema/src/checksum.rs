//! SHA-256 checksums over the f32 storage form of parameter blocks.
//!
//! Used by training reports and by the wire protocol's head-integrity
//! check. Hashing the f32 downcast (the storage truth) makes checksums
//! stable across save/load round trips.

use sha2::{Digest, Sha256};

/// Hex digest of the values downcast to little-endian f32.
pub fn checksum_f32(values: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for &v in values {
        hasher.update((v as f32).to_le_bytes());
    }
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_across_f32_round_trip() {
        let values = vec![0.1, -2.5, 3.333333333333];
        let rounded: Vec<f64> = values.iter().map(|&v| v as f32 as f64).collect();
        assert_eq!(checksum_f32(&values), checksum_f32(&rounded));
    }

    #[test]
    fn distinguishes_different_values() {
        assert_ne!(checksum_f32(&[1.0]), checksum_f32(&[2.0]));
    }
}
