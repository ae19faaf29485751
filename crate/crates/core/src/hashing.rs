//! Stable, platform-independent hashing for bucketing and fixture keys.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Lowercase hex of the FNV-1a hash, used to key prompt fixtures.
pub fn stable_key(text: &str) -> String {
    format!("{:016x}", fnv1a64(text.as_bytes()))
}
