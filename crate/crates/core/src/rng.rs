//! Keyed random substreams.
//!
//! Every random decision that must not depend on processing order draws from a
//! ChaCha stream whose seed is the SHA-256 of the run seed and a key path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// One component of a substream key.
pub enum Key<'a> {
    Str(&'a str),
    Int(u64),
}

impl<'a> From<&'a str> for Key<'a> {
    fn from(s: &'a str) -> Self {
        Key::Str(s)
    }
}

impl From<u64> for Key<'_> {
    fn from(v: u64) -> Self {
        Key::Int(v)
    }
}

impl From<usize> for Key<'_> {
    fn from(v: usize) -> Self {
        Key::Int(v as u64)
    }
}

pub fn substream<'a>(seed: u64, keys: impl IntoIterator<Item = Key<'a>>) -> StreamRng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for k in keys {
        match k {
            Key::Str(s) => {
                h.update([0u8]);
                h.update((s.len() as u64).to_le_bytes());
                h.update(s.as_bytes());
            }
            Key::Int(v) => {
                h.update([1u8]);
                h.update(v.to_le_bytes());
            }
        }
    }
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

#[macro_export]
#[doc(hidden)]
macro_rules! stream {
    ($seed:expr $(, $k:expr)* $(,)?) => {
        $crate::rng::substream($seed, [$($crate::rng::Key::from($k)),*])
    };
}
