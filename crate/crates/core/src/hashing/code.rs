use std::fmt;

use super::HashError;

/// An m-bit binary code packed into 64-bit words, bit `s` at word `s / 64`,
/// position `s % 64`. Padding bits past `m` are always zero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryCode {
    words: Vec<u64>,
    bits: usize,
}

impl BinaryCode {
    pub fn zeros(bits: usize) -> Self {
        Self {
            words: vec![0; bits.div_ceil(64)],
            bits,
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut code = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            code.set(i, b);
        }
        code
    }

    pub fn len(&self) -> usize {
        self.bits
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn get(&self, bit: usize) -> bool {
        assert!(
            bit < self.bits,
            "bit {bit} out of range for {}-bit code",
            self.bits
        );
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn set(&mut self, bit: usize, value: bool) {
        assert!(
            bit < self.bits,
            "bit {bit} out of range for {}-bit code",
            self.bits
        );
        let mask = 1u64 << (bit % 64);
        if value {
            self.words[bit / 64] |= mask;
        } else {
            self.words[bit / 64] &= !mask;
        }
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Bitwise complement over the first `m` bits.
    pub fn complement(&self) -> Self {
        let mut out = self.clone();
        for w in &mut out.words {
            *w = !*w;
        }
        out.clear_padding();
        out
    }

    fn clear_padding(&mut self) {
        let rem = self.bits % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    /// Bytes needed to store the code: `⌈m/8⌉`.
    pub fn byte_len(&self) -> usize {
        self.bits.div_ceil(8)
    }

    /// Little-endian blob, words low to high, truncated to [`Self::byte_len`].
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        out.truncate(self.byte_len());
        out
    }

    pub fn from_le_bytes(bytes: &[u8], bits: usize) -> Result<Self, HashError> {
        if bytes.len() != bits.div_ceil(8) {
            return Err(HashError::LengthMismatch {
                left: bits.div_ceil(8),
                right: bytes.len(),
            });
        }
        let mut code = Self::zeros(bits);
        for (i, chunk) in bytes.chunks(8).enumerate() {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            code.words[i] = u64::from_le_bytes(word);
        }
        code.clear_padding();
        Ok(code)
    }
}

impl fmt::Debug for BinaryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryCode({self})")
    }
}

/// Renders bit 0 first.
impl fmt::Display for BinaryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.bits {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Hamming distance: population count of the XOR.
pub fn hamming(a: &BinaryCode, b: &BinaryCode) -> Result<u32, HashError> {
    if a.bits != b.bits {
        return Err(HashError::LengthMismatch {
            left: a.bits,
            right: b.bits,
        });
    }
    Ok(hamming_words(&a.words, &b.words))
}

#[inline]
pub(crate) fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}
