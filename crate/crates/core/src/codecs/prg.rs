use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Result, StegoError};

/// 256-bit shared secret.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct SecretKey([u8; 32]);

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

impl SecretKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        SecretKey(bytes)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s.trim())
            .map_err(|e| StegoError::config(format!("key is not hex: {e}")))?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| StegoError::config("key must be 32 bytes (64 hex characters)"))?;
        Ok(SecretKey(arr))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// Independent subkey for one purpose: `SHA-256(label || 0x00 || key)`.
    pub fn derive(&self, label: &str) -> SecretKey {
        let mut h = Sha256::new();
        h.update(label.as_bytes());
        h.update([0u8]);
        h.update(self.0);
        SecretKey(h.finalize().into())
    }
}

/// ChaCha20 keystream read MSB-first in 32-bit words. `counter` is the number
/// of bits consumed so far.
#[derive(Clone, Debug)]
pub struct PrgState {
    key: SecretKey,
    nonce: u64,
    counter: u64,
    rng: ChaCha20Rng,
    word: u32,
    left: u32,
}

impl PrgState {
    pub fn new(key: SecretKey, nonce: u64) -> Self {
        Self::at(key, nonce, 0)
    }

    /// State positioned `counter` bits into the `(key, nonce)` stream.
    pub fn at(key: SecretKey, nonce: u64, counter: u64) -> Self {
        let mut rng = ChaCha20Rng::from_seed(*key.as_bytes());
        rng.set_stream(nonce);
        rng.set_word_pos((counter / 32) as u128);
        let mut s = PrgState {
            key,
            nonce,
            counter: counter - counter % 32,
            rng,
            word: 0,
            left: 0,
        };
        s.next_bits((counter % 32) as u32);
        s
    }

    pub fn key(&self) -> &SecretKey {
        &self.key
    }

    pub fn nonce(&self) -> u64 {
        self.nonce
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_bit(&mut self) -> bool {
        if self.left == 0 {
            self.word = self.rng.next_u32();
            self.left = 32;
        }
        self.left -= 1;
        self.counter += 1;
        (self.word >> self.left) & 1 == 1
    }

    /// Next `n <= 64` bits as an unsigned integer, first bit most significant.
    pub fn next_bits(&mut self, n: u32) -> u64 {
        assert!(n <= 64, "at most 64 bits per call");
        let mut out = 0u64;
        for _ in 0..n {
            out = (out << 1) | self.next_bit() as u64;
        }
        out
    }
}

/// `n` keystream bits; advances the state.
pub fn prg_bits(state: &mut PrgState, n: usize) -> Vec<bool> {
    (0..n).map(|_| state.next_bit()).collect()
}
