//! Random-hyperplane hashing of local descriptors.
//!
//! A [`HashFamily`] holds `m + L·b` Gaussian hyperplanes. The first `m`
//! produce the fine code used for Hamming ranking; the remaining rows are
//! split into `L` tables of `b` bits whose sign patterns form coarse bucket
//! keys. Descriptors are shifted by a frozen center before the sign tests.

mod code;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::frame_store::LocalDescriptor;

pub(crate) use code::hamming_words;
pub use code::{hamming, BinaryCode};

/// How many descriptors feed the center estimate before it freezes.
pub const CENTER_SAMPLE_LIMIT: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum HashError {
    #[error("descriptor dimension mismatch: family expects {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("code length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("table {table} out of range (family has {tables})")]
    TableOutOfRange { table: usize, tables: usize },
    #[error("invalid hash configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashConfig {
    /// Fine code length m.
    pub bits: usize,
    /// Number of coarse tables L.
    pub tables: usize,
    /// Bits per coarse key.
    pub bucket_bits: usize,
}

impl Default for HashConfig {
    fn default() -> Self {
        Self {
            bits: 256,
            tables: 6,
            bucket_bits: 8,
        }
    }
}

impl HashConfig {
    pub fn with_bits(bits: usize) -> Self {
        Self {
            bits,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), HashError> {
        if self.bits == 0 {
            return Err(HashError::InvalidConfig("m must be at least 1".into()));
        }
        if self.tables == 0 {
            return Err(HashError::InvalidConfig("need at least one table".into()));
        }
        if !(1..=32).contains(&self.bucket_bits) {
            return Err(HashError::InvalidConfig(
                "bucket bits must be within 1..=32".into(),
            ));
        }
        Ok(())
    }

    fn rows(&self) -> usize {
        self.bits + self.tables * self.bucket_bits
    }
}

/// Sum of `a[i]·b[i]` in `f32` over eight fixed lanes.
#[inline]
fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ta, tb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for lane in 0..8 {
            acc[lane] += x[lane] * y[lane];
        }
    }
    for (lane, (x, y)) in ta.iter().zip(tb).enumerate() {
        acc[lane] += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

/// Seeded hyperplane family. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HashFamily {
    dim: usize,
    config: HashConfig,
    seed: u64,
    projections: Vec<f32>,
    center: Vec<f32>,
}

impl HashFamily {
    pub fn new(dim: usize, config: HashConfig, seed: u64) -> Result<Self, HashError> {
        config.validate()?;
        if dim == 0 {
            return Err(HashError::InvalidConfig(
                "descriptor dimension is zero".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut projections = Vec::with_capacity(config.rows() * dim);
        let mut row = vec![0.0f32; dim];
        for _ in 0..config.rows() {
            loop {
                for v in row.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                if row.iter().any(|&v| v != 0.0) {
                    break;
                }
            }
            projections.extend_from_slice(&row);
        }
        Ok(Self {
            dim,
            config,
            seed,
            projections,
            center: vec![0.0; dim],
        })
    }

    /// Builds a family directly from explicit hyperplanes (`rows × dim`,
    /// row-major). Mostly useful for constructing test fixtures.
    pub fn from_projections(
        dim: usize,
        config: HashConfig,
        projections: Vec<f32>,
    ) -> Result<Self, HashError> {
        config.validate()?;
        if projections.len() != config.rows() * dim {
            return Err(HashError::InvalidConfig(format!(
                "expected {} projection values, got {}",
                config.rows() * dim,
                projections.len()
            )));
        }
        if projections.chunks(dim).any(|r| r.iter().all(|&v| v == 0.0)) {
            return Err(HashError::InvalidConfig("zero hyperplane".into()));
        }
        Ok(Self {
            dim,
            config,
            seed: 0,
            projections,
            center: vec![0.0; dim],
        })
    }

    /// Replaces the center subtracted before every sign test.
    pub fn with_center(mut self, center: Vec<f32>) -> Result<Self, HashError> {
        if center.len() != self.dim {
            return Err(HashError::DimensionMismatch {
                expected: self.dim,
                found: center.len(),
            });
        }
        self.center = center;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> HashConfig {
        self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn center(&self) -> &[f32] {
        &self.center
    }

    /// Hyperplane `row`; rows `0..m` are fine bits, then table 0's bucket
    /// bits, then table 1's, and so on.
    pub fn projection(&self, row: usize) -> &[f32] {
        &self.projections[row * self.dim..(row + 1) * self.dim]
    }

    /// Bytes of storage per encoded descriptor.
    pub fn code_bytes(&self) -> usize {
        self.config.bits.div_ceil(8)
    }

    fn check_dim(&self, values: &[f32]) -> Result<(), HashError> {
        if values.len() != self.dim {
            return Err(HashError::DimensionMismatch {
                expected: self.dim,
                found: values.len(),
            });
        }
        Ok(())
    }

    fn centered(&self, values: &[f32]) -> Vec<f32> {
        values
            .iter()
            .zip(&self.center)
            .map(|(v, c)| v - c)
            .collect()
    }

    fn sign(&self, row: usize, centered: &[f32]) -> bool {
        dot_f32(self.projection(row), centered) >= 0.0
    }

    /// Fine code: bit `s` is set iff `proj_s · (desc − center) ≥ 0`.
    pub fn encode(&self, values: &[f32]) -> Result<BinaryCode, HashError> {
        self.check_dim(values)?;
        let c = self.centered(values);
        let mut code = BinaryCode::zeros(self.config.bits);
        for s in 0..self.config.bits {
            if self.sign(s, &c) {
                code.set(s, true);
            }
        }
        Ok(code)
    }

    /// Coarse key of `table`: its sign tests, first test in the lowest bit.
    pub fn bucket_key(&self, values: &[f32], table: usize) -> Result<u32, HashError> {
        self.check_dim(values)?;
        if table >= self.config.tables {
            return Err(HashError::TableOutOfRange {
                table,
                tables: self.config.tables,
            });
        }
        let c = self.centered(values);
        Ok(self.key_of(&c, table))
    }

    fn key_of(&self, centered: &[f32], table: usize) -> u32 {
        let base = self.config.bits + table * self.config.bucket_bits;
        (0..self.config.bucket_bits)
            .filter(|&j| self.sign(base + j, centered))
            .fold(0u32, |key, j| key | (1 << j))
    }

    /// Fine codes and all coarse keys for every local descriptor of a frame.
    pub fn encode_frame(&self, locals: &[LocalDescriptor]) -> Result<FrameCodes, HashError> {
        let mut fine = Vec::with_capacity(locals.len());
        let mut coarse = Vec::with_capacity(locals.len() * self.config.tables);
        for local in locals {
            self.check_dim(&local.values)?;
            let c = self.centered(&local.values);
            let mut code = BinaryCode::zeros(self.config.bits);
            for s in 0..self.config.bits {
                if self.sign(s, &c) {
                    code.set(s, true);
                }
            }
            fine.push(code);
            for t in 0..self.config.tables {
                coarse.push(self.key_of(&c, t));
            }
        }
        Ok(FrameCodes {
            fine,
            coarse,
            tables: self.config.tables,
        })
    }
}

/// Hashed form of a frame's local descriptors: one fine code and `L` coarse
/// keys per descriptor, in descriptor order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameCodes {
    fine: Vec<BinaryCode>,
    coarse: Vec<u32>,
    tables: usize,
}

impl FrameCodes {
    pub fn new(fine: Vec<BinaryCode>, coarse: Vec<u32>, tables: usize) -> Result<Self, HashError> {
        if tables == 0 || coarse.len() != fine.len() * tables {
            return Err(HashError::LengthMismatch {
                left: fine.len() * tables,
                right: coarse.len(),
            });
        }
        if let Some(first) = fine.first() {
            if let Some(bad) = fine.iter().find(|c| c.len() != first.len()) {
                return Err(HashError::LengthMismatch {
                    left: first.len(),
                    right: bad.len(),
                });
            }
        }
        Ok(Self {
            fine,
            coarse,
            tables,
        })
    }

    pub fn len(&self) -> usize {
        self.fine.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fine.is_empty()
    }

    pub fn tables(&self) -> usize {
        self.tables
    }

    pub fn code(&self, i: usize) -> &BinaryCode {
        &self.fine[i]
    }

    pub fn codes(&self) -> &[BinaryCode] {
        &self.fine
    }

    pub fn keys(&self, i: usize) -> &[u32] {
        &self.coarse[i * self.tables..(i + 1) * self.tables]
    }

    /// Bit length of the fine codes, `None` when there are no descriptors.
    pub fn bits(&self) -> Option<usize> {
        self.fine.first().map(BinaryCode::len)
    }

    /// Stored fine-code bytes, the figure compared against raw float storage.
    pub fn code_bytes(&self) -> usize {
        self.fine.iter().map(BinaryCode::byte_len).sum()
    }
}

/// Running mean of the first [`CENTER_SAMPLE_LIMIT`] descriptors seen.
#[derive(Debug, Clone)]
pub struct CenterEstimator {
    sum: Vec<f64>,
    count: usize,
    limit: usize,
}

impl CenterEstimator {
    pub fn new(dim: usize) -> Self {
        Self::with_limit(dim, CENTER_SAMPLE_LIMIT)
    }

    pub fn with_limit(dim: usize, limit: usize) -> Self {
        Self {
            sum: vec![0.0; dim],
            count: 0,
            limit,
        }
    }

    /// Returns `false` once the estimate is frozen.
    pub fn observe(&mut self, values: &[f32]) -> bool {
        if self.is_frozen() {
            return false;
        }
        for (s, v) in self.sum.iter_mut().zip(values) {
            *s += *v as f64;
        }
        self.count += 1;
        true
    }

    pub fn is_frozen(&self) -> bool {
        self.count >= self.limit
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(&self) -> Vec<f32> {
        if self.count == 0 {
            return vec![0.0; self.sum.len()];
        }
        self.sum
            .iter()
            .map(|s| (s / self.count as f64) as f32)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> HashConfig {
        HashConfig {
            bits: 4,
            tables: 1,
            bucket_bits: 1,
        }
    }

    #[test]
    fn aligned_descriptor_sets_only_first_bit() {
        // rows: e0, -e0 ... so the descriptor e0 is aligned with row 0 and
        // anti-aligned with every other row.
        let dim = 3;
        let mut proj = vec![1.0, 0.0, 0.0];
        for _ in 1..5 {
            proj.extend_from_slice(&[-1.0, 0.2, 0.0]);
        }
        let fam = HashFamily::from_projections(dim, tiny_config(), proj).unwrap();
        let code = fam.encode(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(code.to_string(), "1000");
    }

    #[test]
    fn single_bit_bucket_on_positive_side() {
        let proj = vec![
            1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, // fine rows
            0.0, 1.0, // bucket row
        ];
        let fam = HashFamily::from_projections(2, tiny_config(), proj).unwrap();
        assert_eq!(fam.bucket_key(&[0.1, 2.0], 0).unwrap(), 1);
        assert_eq!(fam.bucket_key(&[0.1, -2.0], 0).unwrap(), 0);
    }

    #[test]
    fn encoding_is_deterministic_under_seed() {
        let a = HashFamily::new(16, HashConfig::default(), 42).unwrap();
        let b = HashFamily::new(16, HashConfig::default(), 42).unwrap();
        let c = HashFamily::new(16, HashConfig::default(), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.projection(0), c.projection(0));
        let d: Vec<f32> = (0..16).map(|i| (i as f32).sin()).collect();
        assert_eq!(a.encode(&d).unwrap(), a.encode(&d).unwrap());
        assert_eq!(a.encode(&d).unwrap(), b.encode(&d).unwrap());
    }

    #[test]
    fn errors() {
        let fam = HashFamily::new(8, HashConfig::default(), 1).unwrap();
        assert_eq!(
            fam.encode(&[0.0; 7]),
            Err(HashError::DimensionMismatch {
                expected: 8,
                found: 7
            })
        );
        assert_eq!(
            fam.bucket_key(&[0.0; 8], 6),
            Err(HashError::TableOutOfRange {
                table: 6,
                tables: 6
            })
        );
        assert!(HashFamily::new(
            8,
            HashConfig {
                bits: 0,
                ..HashConfig::default()
            },
            1
        )
        .is_err());
    }

    #[test]
    fn frame_codes_agree_with_single_calls() {
        let fam = HashFamily::new(32, HashConfig::default(), 5).unwrap();
        let locals: Vec<_> = (0..5)
            .map(|i| {
                LocalDescriptor::new(
                    (0..32)
                        .map(|j| ((i * 31 + j) as f32 * 0.37).cos())
                        .collect(),
                    crate::frame_store::Keypoint::new(0.0, 0.0),
                )
            })
            .collect();
        let codes = fam.encode_frame(&locals).unwrap();
        for (i, l) in locals.iter().enumerate() {
            assert_eq!(codes.code(i), &fam.encode(&l.values).unwrap());
            for t in 0..6 {
                assert_eq!(codes.keys(i)[t], fam.bucket_key(&l.values, t).unwrap());
            }
        }
    }

    #[test]
    fn center_freezes_after_limit() {
        let mut est = CenterEstimator::with_limit(2, 2);
        assert!(est.observe(&[1.0, 2.0]));
        assert!(est.observe(&[3.0, 4.0]));
        assert!(!est.observe(&[100.0, 100.0]));
        assert_eq!(est.finish(), vec![2.0, 3.0]);
    }

    #[test]
    fn centering_shifts_sign_tests() {
        let fam = HashFamily::new(4, HashConfig::default(), 3).unwrap();
        let d = [5.0f32, 5.0, 5.0, 5.0];
        let centered = fam.clone().with_center(d.to_vec()).unwrap();
        // zero vector after centering: every dot is 0, so every bit is 1
        let code = centered.encode(&d).unwrap();
        assert_eq!(hamming(&code, &code.complement().complement()).unwrap(), 0);
        assert!((0..256).all(|s| code.get(s)));
    }

    #[test]
    fn memory_ratio_for_128_bits() {
        let fam = HashFamily::new(128, HashConfig::with_bits(128), 0).unwrap();
        assert_eq!(fam.code_bytes(), 16);
        assert_eq!(128 * std::mem::size_of::<f32>(), 32 * fam.code_bytes());
    }
}
