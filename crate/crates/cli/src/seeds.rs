//! Seed splitting: every random draw of a run is keyed by the root seed,
//! the example index and a purpose tag, so adding examples never changes
//! the draws of earlier ones.

use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    Search,
    Metrics,
}

impl Purpose {
    fn tag(self) -> &'static [u8] {
        match self {
            Purpose::Search => b"search",
            Purpose::Metrics => b"metrics",
        }
    }
}

pub fn derive(root: u64, example: usize, purpose: Purpose) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update((example as u64).to_le_bytes());
    h.update(purpose.tag());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// First 12 hex digits of the SHA-256 of `bytes`.
pub fn short_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .take(6)
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_independent() {
        let a = derive(7, 0, Purpose::Search);
        assert_eq!(a, derive(7, 0, Purpose::Search));
        assert_ne!(a, derive(7, 0, Purpose::Metrics));
        assert_ne!(a, derive(7, 1, Purpose::Search));
        assert_ne!(a, derive(8, 0, Purpose::Search));
    }

    #[test]
    fn short_hash_is_twelve_hex_digits() {
        let h = short_hash(b"abc");
        // sha256("abc") = ba7816bf8f01cfea...
        assert_eq!(h, "ba7816bf8f01");
    }
}
