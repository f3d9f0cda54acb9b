use serde::Serialize;
use sha2::{Digest, Sha256};

/// Serialises through `serde_json::Value` so that every map comes out with
/// sorted keys; floats use the shortest round-trip representation.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    let v = serde_json::to_value(value)?;
    serde_json::to_string(&v)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
