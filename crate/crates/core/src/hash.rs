//! Hash functions that are part of on-disk and fixture contracts.

use sha2::{Digest, Sha256};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a, 64-bit.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// SHA-256 over the fields joined with the ASCII unit separator.
pub fn digest_bytes<S: AsRef<str>>(fields: &[S]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            hasher.update([0x1f]);
        }
        hasher.update(f.as_ref().as_bytes());
    }
    hasher.finalize().into()
}

/// Hex form of [`digest_bytes`]; used as cache keys.
pub fn digest_fields<S: AsRef<str>>(fields: &[S]) -> String {
    digest_bytes(fields).iter().map(|b| format!("{b:02x}")).collect()
}
