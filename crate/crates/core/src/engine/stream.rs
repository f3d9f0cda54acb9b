use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Child seed for a labelled sub-stream. Labels are length-prefixed so
/// `["ab","c"]` and `["a","bc"]` differ.
pub fn derive_seed(seed: u64, labels: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for l in labels {
        h.update((l.len() as u64).to_le_bytes());
        h.update(l.as_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 output is 32 bytes"))
}

/// Independent random stream keyed by `(seed, labels)`.
///
/// The engine keys agent draws by `["agent", id, step]`, turn order by
/// `["order", step]` and environment draws by `["env", step]`, so adding an
/// agent never shifts another agent's draws.
pub fn stream(seed: u64, labels: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, labels))
}
