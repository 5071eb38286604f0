#![allow(dead_code)]

use loopclose::frame_store::GlobalDescriptor;
use loopclose::geometry::Correspondence;
use nalgebra::{Matrix3, Point2, Point3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn unit_descriptor(rng: &mut ChaCha8Rng, dim: usize) -> GlobalDescriptor {
    let v = gaussian_vec(rng, dim);
    let n = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt() as f32;
    GlobalDescriptor::new(v.into_iter().map(|x| x / n).collect()).unwrap()
}

/// Exact cosine ranking by brute force, most similar first, ties by id.
pub fn exact_top_k(query: &[f32], data: &[Vec<f32>], k: usize) -> Vec<(u64, f64)> {
    let norm = |v: &[f32]| v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let qn = norm(query);
    let mut all: Vec<(u64, f64)> = data
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let dot: f64 = query
                .iter()
                .zip(v)
                .map(|(a, b)| *a as f64 * *b as f64)
                .sum();
            (i as u64, dot / (qn * norm(v)))
        })
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Two pinhole cameras looking at a cloud of points. The left camera sits
/// at the origin; the right one is rotated by `rotation` and translated by
/// `translation` (world-to-camera).
pub struct TwoView {
    pub k: Matrix3<f64>,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl TwoView {
    pub fn standard() -> Self {
        Self {
            k: Matrix3::new(500.0, 0.0, 320.0, 0.0, 500.0, 240.0, 0.0, 0.0, 1.0),
            rotation: *Rotation3::from_euler_angles(0.02, -0.08, 0.01).matrix(),
            translation: Vector3::new(-0.8, 0.05, 0.1),
        }
    }

    /// `K⁻ᵀ [t]ₓ R K⁻¹`, the fundamental matrix with `rightᵀ F left = 0`.
    pub fn fundamental(&self) -> Matrix3<f64> {
        let t = self.translation;
        let tx = Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0);
        let k_inv = self.k.try_inverse().unwrap();
        k_inv.transpose() * tx * self.rotation * k_inv
    }

    pub fn project_left(&self, p: &Point3<f64>) -> Point2<f64> {
        let h = self.k * p.coords;
        Point2::new(h.x / h.z, h.y / h.z)
    }

    pub fn project_right(&self, p: &Point3<f64>) -> Point2<f64> {
        let h = self.k * (self.rotation * p.coords + self.translation);
        Point2::new(h.x / h.z, h.y / h.z)
    }

    pub fn random_point(rng: &mut ChaCha8Rng) -> Point3<f64> {
        Point3::new(
            rng.random_range(-2.5..2.5),
            rng.random_range(-2.0..2.0),
            rng.random_range(4.0..12.0),
        )
    }

    pub fn correspondence(&self, p: &Point3<f64>) -> Correspondence {
        Correspondence::new(self.project_left(p), self.project_right(p))
    }

    /// `n` exact correspondences of random points.
    pub fn exact(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<Correspondence> {
        (0..n)
            .map(|_| self.correspondence(&Self::random_point(rng)))
            .collect()
    }
}

/// Planted model for RANSAC: `inliers` noisy correspondences (σ pixels in
/// both images) followed by `outliers` uniform pairs over a 640×480 image.
pub fn planted(
    rng: &mut ChaCha8Rng,
    view: &TwoView,
    inliers: usize,
    outliers: usize,
    sigma: f64,
) -> Vec<Correspondence> {
    let noise = |p: Point2<f64>, rng: &mut ChaCha8Rng| {
        Point2::new(
            p.x + sigma * rng.sample::<f64, _>(StandardNormal),
            p.y + sigma * rng.sample::<f64, _>(StandardNormal),
        )
    };
    let mut out = Vec::with_capacity(inliers + outliers);
    for _ in 0..inliers {
        let c = view.correspondence(&TwoView::random_point(rng));
        out.push(Correspondence::new(noise(c.left, rng), noise(c.right, rng)));
    }
    for _ in 0..outliers {
        out.push(Correspondence::new(
            Point2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)),
            Point2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)),
        ));
    }
    out
}

/// `x'ᵀ F x` for a correspondence.
pub fn algebraic(f: &Matrix3<f64>, c: &Correspondence) -> f64 {
    Vector3::new(c.right.x, c.right.y, 1.0).dot(&(f * Vector3::new(c.left.x, c.left.y, 1.0)))
}

/// Query and candidate code sets where every query descriptor has a planted
/// noisy copy in the candidate (angle ≈ 0.05π, so about 5% of bits flip),
/// followed by `distractors` unrelated candidate descriptors.
pub struct PlantedPair {
    pub query: loopclose::hashing::FrameCodes,
    pub candidate: loopclose::hashing::FrameCodes,
    /// `planted[i]` is the candidate index of query descriptor `i`'s copy.
    pub planted: Vec<usize>,
}

pub fn planted_pair(
    rng: &mut ChaCha8Rng,
    family: &loopclose::hashing::HashFamily,
    n: usize,
    distractors: usize,
) -> PlantedPair {
    use loopclose::frame_store::{Keypoint, LocalDescriptor};
    use rand::seq::SliceRandom;

    let dim = family.dim();
    let angle = 0.05 * std::f64::consts::PI;
    let mut query = Vec::with_capacity(n);
    let mut copies = Vec::with_capacity(n);
    for _ in 0..n {
        let a = gaussian_vec(rng, dim);
        // orthogonal component of matching norm, rotated in by `angle`
        let mut o = gaussian_vec(rng, dim);
        let an: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        let proj: f64 = a
            .iter()
            .zip(&o)
            .map(|(x, y)| *x as f64 * *y as f64)
            .sum::<f64>()
            / (an * an);
        for (oi, ai) in o.iter_mut().zip(&a) {
            *oi -= (proj * *ai as f64) as f32;
        }
        let on: f64 = o.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        let b: Vec<f32> = a
            .iter()
            .zip(&o)
            .map(|(x, y)| (angle.cos() * *x as f64 + angle.sin() * an / on * *y as f64) as f32)
            .collect();
        query.push(a);
        copies.push(b);
    }
    let mut order: Vec<usize> = (0..n + distractors).collect();
    order.shuffle(rng);
    let mut candidate = vec![Vec::new(); n + distractors];
    let mut planted = vec![0; n];
    for (slot, &src) in order.iter().enumerate() {
        if src < n {
            candidate[slot] = copies[src].clone();
            planted[src] = slot;
        } else {
            candidate[slot] = gaussian_vec(rng, dim);
        }
    }
    let wrap = |v: Vec<Vec<f32>>| -> Vec<LocalDescriptor> {
        v.into_iter()
            .map(|d| LocalDescriptor::new(d, Keypoint::new(0.0, 0.0)))
            .collect()
    };
    PlantedPair {
        query: family.encode_frame(&wrap(query)).unwrap(),
        candidate: family.encode_frame(&wrap(candidate)).unwrap(),
        planted,
    }
}

fn naive_hamming(a: &loopclose::hashing::BinaryCode, b: &loopclose::hashing::BinaryCode) -> u32 {
    (0..a.len()).filter(|&i| a.get(i) != b.get(i)).count() as u32
}

/// Exhaustive ratio-test oracle. With `co_bucketed_only`, candidates that
/// share no coarse key with the query are ignored; otherwise every
/// candidate competes. Returns `(query_idx, cand_idx, d1, d2)`.
pub fn oracle_matches(
    query: &loopclose::hashing::FrameCodes,
    candidate: &loopclose::hashing::FrameCodes,
    ratio: f64,
    co_bucketed_only: bool,
) -> Vec<(u32, u32, u32, u32)> {
    let mut out = Vec::new();
    for qi in 0..query.len() {
        let mut ranked: Vec<(u32, usize)> = Vec::new();
        for ci in 0..candidate.len() {
            let shares = query
                .keys(qi)
                .iter()
                .zip(candidate.keys(ci))
                .any(|(a, b)| a == b);
            if co_bucketed_only && !shares {
                continue;
            }
            ranked.push((naive_hamming(query.code(qi), candidate.code(ci)), ci));
        }
        if ranked.len() < 2 {
            continue;
        }
        ranked.sort();
        let (d1, best) = ranked[0];
        let d2 = ranked[1].0;
        if d2 > 0 && d1 as f64 / d2 as f64 <= ratio * ratio + 1e-12 {
            out.push((qi as u32, best as u32, d1, d2));
        }
    }
    out
}
