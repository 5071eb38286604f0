mod common;

use common::{gaussian_vec, rng};
use loopclose::hashing::{hamming, BinaryCode, HashConfig, HashError, HashFamily};
use proptest::prelude::*;
use rand::Rng;

fn angle(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos()
}

fn bit_loop(a: &BinaryCode, b: &BinaryCode) -> u32 {
    (0..a.len()).filter(|&i| a.get(i) != b.get(i)).count() as u32
}

#[test]
fn hamming_fraction_tracks_angle() {
    let family = HashFamily::new(128, HashConfig::default(), 17).unwrap();
    let mut r = rng(3);
    let mut deviation = 0.0;
    for _ in 0..1000 {
        let a = gaussian_vec(&mut r, 128);
        // mix in a correlated partner so angles cover (0, π)
        let t: f32 = r.random_range(-1.0..1.0);
        let noise = gaussian_vec(&mut r, 128);
        let b: Vec<f32> = a
            .iter()
            .zip(&noise)
            .map(|(x, n)| t * x + (1.0 - t.abs()) * n)
            .collect();
        let d = hamming(&family.encode(&a).unwrap(), &family.encode(&b).unwrap()).unwrap();
        deviation += (d as f64 / 256.0 - angle(&a, &b) / std::f64::consts::PI).abs();
    }
    let mad = deviation / 1000.0;
    assert!(mad < 0.05, "mean absolute deviation {mad}");
}

#[test]
fn hamming_equals_bit_loop() {
    let mut r = rng(4);
    for _ in 0..500 {
        let a: Vec<bool> = (0..256).map(|_| r.random()).collect();
        let b: Vec<bool> = (0..256).map(|_| r.random()).collect();
        let (a, b) = (BinaryCode::from_bits(&a), BinaryCode::from_bits(&b));
        assert_eq!(hamming(&a, &b).unwrap(), bit_loop(&a, &b));
    }
    let a = BinaryCode::from_bits(&[true; 256]);
    assert_eq!(hamming(&a, &a).unwrap(), 0);
    assert_eq!(hamming(&a, &a.complement()).unwrap(), 256);
    assert!(matches!(
        hamming(&a, &BinaryCode::zeros(128)),
        Err(HashError::LengthMismatch {
            left: 256,
            right: 128
        })
    ));
}

#[test]
fn bucket_keys_match_recomputation_from_projections() {
    let config = HashConfig::default();
    let family = HashFamily::new(64, config, 5).unwrap();
    let mut r = rng(5);
    for _ in 0..1000 {
        let d = gaussian_vec(&mut r, 64);
        for table in 0..config.tables {
            let mut expected = 0u32;
            for j in 0..config.bucket_bits {
                let row = family.projection(config.bits + table * config.bucket_bits + j);
                let dot: f64 = row.iter().zip(&d).map(|(p, v)| *p as f64 * *v as f64).sum();
                if dot >= 0.0 {
                    expected |= 1 << j;
                }
            }
            assert_eq!(family.bucket_key(&d, table).unwrap(), expected);
        }
    }
    assert!(matches!(
        family.bucket_key(&gaussian_vec(&mut r, 64), 6),
        Err(HashError::TableOutOfRange {
            table: 6,
            tables: 6
        })
    ));
}

#[test]
fn fine_bits_match_recomputation() {
    let family = HashFamily::new(32, HashConfig::with_bits(96), 8).unwrap();
    let mut r = rng(6);
    for _ in 0..200 {
        let d = gaussian_vec(&mut r, 32);
        let code = family.encode(&d).unwrap();
        for s in 0..96 {
            let dot: f64 = family
                .projection(s)
                .iter()
                .zip(&d)
                .map(|(p, v)| *p as f64 * *v as f64)
                .sum();
            // skip sign tests too close to zero for f32 vs f64 to agree
            if dot.abs() > 1e-4 {
                assert_eq!(code.get(s), dot >= 0.0);
            }
        }
    }
}

#[test]
fn same_seed_same_family() {
    let a = HashFamily::new(16, HashConfig::default(), 99).unwrap();
    let b = HashFamily::new(16, HashConfig::default(), 99).unwrap();
    let c = HashFamily::new(16, HashConfig::default(), 100).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let d = gaussian_vec(&mut rng(7), 16);
    assert_eq!(a.encode(&d).unwrap(), a.encode(&d).unwrap());
    assert_eq!(a.encode(&d).unwrap(), b.encode(&d).unwrap());
}

#[test]
fn code_storage_is_one_thirty_second_of_floats() {
    let family = HashFamily::new(128, HashConfig::with_bits(128), 1).unwrap();
    assert_eq!(family.code_bytes(), 16);
    let raw = 128 * std::mem::size_of::<f32>();
    assert_eq!(raw, 32 * family.code_bytes());
    let code = family.encode(&gaussian_vec(&mut rng(8), 128)).unwrap();
    assert_eq!(code.to_le_bytes().len(), 16);
}

proptest! {
    #[test]
    fn hamming_triangle_inequality(
        a in prop::collection::vec(any::<bool>(), 200),
        b in prop::collection::vec(any::<bool>(), 200),
        c in prop::collection::vec(any::<bool>(), 200),
    ) {
        let (a, b, c) = (BinaryCode::from_bits(&a), BinaryCode::from_bits(&b), BinaryCode::from_bits(&c));
        let ab = hamming(&a, &b).unwrap();
        prop_assert_eq!(ab, hamming(&b, &a).unwrap());
        prop_assert!(hamming(&a, &c).unwrap() <= ab + hamming(&b, &c).unwrap());
    }

    #[test]
    fn code_bytes_round_trip(bits in prop::collection::vec(any::<bool>(), 1..300)) {
        let code = BinaryCode::from_bits(&bits);
        prop_assert_eq!(BinaryCode::from_le_bytes(&code.to_le_bytes(), bits.len()).unwrap(), code);
    }
}
