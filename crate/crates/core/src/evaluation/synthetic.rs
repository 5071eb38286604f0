//! Planted-loop corridor world.
//!
//! The camera walks down a corridor, one place per frame. Every metre of
//! corridor holds a fixed set of 3D landmarks, each with its own base
//! descriptor. Revisit segments replay earlier places from a laterally
//! shifted, slightly yawed camera, so revisited frames share landmarks (and
//! hence a true fundamental matrix) with their source frames. Global
//! descriptors are smooth functions of the place coordinate.

use std::path::Path;

use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::frame_store::{
    ContainerHeader, ContainerWriter, FrameError, FrameRecord, Keypoint, LocalDescriptor,
};

use super::{write_ground_truth, GroundTruthEntry};

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A stretch of frames `[start, start + length)` that revisits the places
/// seen `offset` frames earlier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RevisitSegment {
    pub start: u64,
    pub length: u64,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_frames: u64,
    pub revisits: Vec<RevisitSegment>,
    pub global_dim: usize,
    pub local_dim: usize,
    /// σ_g: global noise relative to the latent's RMS value.
    pub global_noise: f64,
    /// Places between independent global anchors.
    pub anchor_spacing: u64,
    /// Landmarks per metre of corridor.
    pub points_per_metre: usize,
    /// Metres of corridor in front of the camera that can be seen.
    pub view_depth: usize,
    /// Corridor metres advanced per frame.
    pub step: f64,
    /// Per-observation relative descriptor noise is drawn uniformly from
    /// this range, so some landmarks are easy to match and others are not.
    pub feature_noise: (f64, f64),
    /// Keypoint noise standard deviation in pixels.
    pub pixel_noise: f64,
    /// Extra unmatched descriptors, as a fraction of visible landmarks.
    pub distractor_rate: f64,
    pub focal: f64,
    pub image_size: (f64, f64),
    /// Lateral displacement of the revisit camera in metres.
    pub revisit_baseline: f64,
    /// Yaw of the revisit camera in degrees.
    pub revisit_yaw_deg: f64,
    /// Frame rate used for timestamps and the exclusion check.
    pub fps: f64,
    /// ψ used to check that revisits can be detected at all.
    pub psi: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_frames: 2000,
            revisits: vec![RevisitSegment {
                start: 1000,
                length: 1000,
                offset: 1000,
            }],
            global_dim: 1280,
            local_dim: 128,
            global_noise: 0.02,
            anchor_spacing: 10,
            points_per_metre: 24,
            view_depth: 8,
            step: 0.1,
            feature_noise: (0.05, 0.5),
            pixel_noise: 0.5,
            distractor_rate: 0.1,
            focal: 500.0,
            image_size: (640.0, 480.0),
            revisit_baseline: 0.6,
            revisit_yaw_deg: 3.0,
            fps: 10.0,
            psi: 40.0,
            seed: 2024,
        }
    }
}

impl SyntheticConfig {
    pub fn exclusion_window(&self) -> u64 {
        (self.psi * self.fps).ceil() as u64
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: String| Err(SyntheticError::InvalidConfig(m));
        if self.global_dim == 0 || self.local_dim == 0 {
            return bad("descriptor dimensions must be positive".into());
        }
        if self.anchor_spacing == 0 || self.points_per_metre == 0 || self.view_depth == 0 {
            return bad("anchor spacing, landmark density and view depth must be positive".into());
        }
        if !(self.step > 0.0) || !(self.fps > 0.0) || !(self.focal > 0.0) {
            return bad("step, fps and focal length must be positive".into());
        }
        let (lo, hi) = self.feature_noise;
        if !(0.0 <= lo && lo <= hi) || self.global_noise < 0.0 || self.pixel_noise < 0.0 {
            return bad("noise levels must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.distractor_rate) {
            return bad("distractor rate must lie in [0, 1]".into());
        }
        let window = self.exclusion_window();
        for s in &self.revisits {
            if s.offset <= window {
                return bad(format!(
                    "revisit offset {} does not exceed the exclusion window {window}",
                    s.offset
                ));
            }
            if s.offset > s.start {
                return bad(format!(
                    "revisit at {} cannot look back {}",
                    s.start, s.offset
                ));
            }
        }
        let mut sorted = self.revisits.clone();
        sorted.sort_by_key(|s| s.start);
        if sorted
            .windows(2)
            .any(|w| w[0].start + w[0].length > w[1].start)
        {
            return bad("revisit segments overlap".into());
        }
        if self.revisit_baseline == 0.0 && self.revisits.iter().any(|s| s.length > 0) {
            return Err(SyntheticError::InvalidGeometry(
                "revisit camera coincides with the original camera".into(),
            ));
        }
        Ok(())
    }

    /// Place index shown at frame `t`, following revisit chains back to the
    /// first visit.
    pub fn place_of(&self, t: u64) -> u64 {
        match self.segment_of(t) {
            Some(s) => self.place_of(t - s.offset),
            None => t,
        }
    }

    fn segment_of(&self, t: u64) -> Option<&RevisitSegment> {
        self.revisits
            .iter()
            .find(|s| t >= s.start && t < s.start + s.length)
    }

    /// Frames within revisit segments and the frame they revisit.
    pub fn ground_truth(&self) -> Vec<GroundTruthEntry> {
        (0..self.n_frames)
            .filter_map(|t| {
                self.segment_of(t).map(|s| GroundTruthEntry {
                    query_id: t,
                    match_start: t - s.offset,
                    match_end: t - s.offset,
                })
            })
            .collect()
    }
}

/// Mixes a seed with a stream tag and an index into an independent seed.
fn mix(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z =
        seed ^ tag.wrapping_mul(0xd1b5_4a32_d192_ed03) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const TAG_ANCHOR: u64 = 1;
const TAG_LANDMARK: u64 = 2;
const TAG_FRAME: u64 = 3;

struct Landmark {
    position: Point3<f64>,
    descriptor: Vec<f32>,
}

struct Camera {
    rotation: Matrix3<f64>,
    center: Point3<f64>,
}

impl Camera {
    fn project(&self, p: &Point3<f64>, focal: f64, size: (f64, f64)) -> Option<(f64, f64)> {
        let c = self.rotation * (p - self.center);
        if c.z < 0.5 {
            return None;
        }
        let u = focal * c.x / c.z + size.0 / 2.0;
        let v = focal * c.y / c.z + size.1 / 2.0;
        Some((u, v))
    }
}

/// Lazy frame generator; every frame depends only on the config and its
/// index, so any frame can be regenerated on its own.
pub struct SyntheticStream<'a> {
    config: &'a SyntheticConfig,
    next: u64,
}

impl Iterator for SyntheticStream<'_> {
    type Item = Result<FrameRecord, FrameError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.config.n_frames {
            return None;
        }
        let t = self.next;
        self.next += 1;
        Some(Ok(generate_frame(self.config, t)))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.config.n_frames - self.next) as usize;
        (left, Some(left))
    }
}

/// Streams the dataset described by `config` after validating it.
pub fn generate(config: &SyntheticConfig) -> Result<SyntheticStream<'_>, SyntheticError> {
    config.validate()?;
    Ok(SyntheticStream { config, next: 0 })
}

/// Writes the dataset as a binary container plus a ground-truth file.
pub fn generate_to_files(
    config: &SyntheticConfig,
    dataset: impl AsRef<Path>,
    ground_truth: impl AsRef<Path>,
) -> Result<(), SyntheticError> {
    let header = ContainerHeader {
        global_dim: config.global_dim,
        local_dim: config.local_dim,
    };
    let mut writer = ContainerWriter::new(
        std::io::BufWriter::new(std::fs::File::create(dataset)?),
        header,
    )?;
    for rec in generate(config)? {
        writer.write_frame(&rec?)?;
    }
    writer.finish()?;
    let mut gt = std::io::BufWriter::new(std::fs::File::create(ground_truth)?);
    write_ground_truth(&mut gt, &config.ground_truth())?;
    Ok(())
}

fn anchor(config: &SyntheticConfig, k: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, TAG_ANCHOR, k));
    (0..config.global_dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal).abs())
        .collect()
}

/// Noise-free global descriptor of a place: linear blend of the two
/// surrounding anchors.
pub fn latent_global(config: &SyntheticConfig, place: u64) -> Vec<f64> {
    let k = place / config.anchor_spacing;
    let w = (place % config.anchor_spacing) as f64 / config.anchor_spacing as f64;
    let a = anchor(config, k);
    if w == 0.0 {
        return a;
    }
    let b = anchor(config, k + 1);
    a.iter()
        .zip(&b)
        .map(|(x, y)| (1.0 - w) * x + w * y)
        .collect()
}

fn landmarks(config: &SyntheticConfig, metre: u64) -> Vec<Landmark> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, TAG_LANDMARK, metre));
    (0..config.points_per_metre)
        .map(|_| {
            let position = Point3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-2.0..2.0),
                metre as f64 + rng.random::<f64>(),
            );
            let descriptor = (0..config.local_dim)
                .map(|_| rng.sample::<f32, _>(StandardNormal).abs())
                .collect();
            Landmark {
                position,
                descriptor,
            }
        })
        .collect()
}

fn camera_for(config: &SyntheticConfig, t: u64) -> Camera {
    let z = config.place_of(t) as f64 * config.step;
    if config.segment_of(t).is_some() {
        let yaw = config.revisit_yaw_deg.to_radians();
        Camera {
            rotation: *Rotation3::from_axis_angle(&Vector3::y_axis(), yaw).matrix(),
            center: Point3::new(config.revisit_baseline, 0.0, z),
        }
    } else {
        Camera {
            rotation: Matrix3::identity(),
            center: Point3::new(0.0, 0.0, z),
        }
    }
}

fn noisy_descriptor(base: &[f32], relative: f64, rng: &mut ChaCha8Rng) -> Vec<f32> {
    base.iter()
        .map(|&v| (v as f64 + relative * rng.sample::<f64, _>(StandardNormal)) as f32)
        .collect()
}

/// Generates frame `t` of the dataset.
pub fn generate_frame(config: &SyntheticConfig, t: u64) -> FrameRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, TAG_FRAME, t));
    let place = config.place_of(t);

    let latent = latent_global(config, place);
    let rms = (latent.iter().map(|v| v * v).sum::<f64>() / latent.len() as f64).sqrt();
    let mut global: Vec<f32> = latent
        .iter()
        .map(|&v| (v + config.global_noise * rms * rng.sample::<f64, _>(StandardNormal)) as f32)
        .collect();
    if global.iter().all(|&v| v == 0.0) {
        global[0] = 1.0;
    }

    let camera = camera_for(config, t);
    let (w, h) = config.image_size;
    let first = (camera.center.z.floor() as u64).saturating_sub(1);
    let mut locals = Vec::new();
    for metre in first..=first + config.view_depth as u64 + 1 {
        for lm in landmarks(config, metre) {
            let Some((u, v)) = camera.project(&lm.position, config.focal, config.image_size) else {
                continue;
            };
            let u = u + config.pixel_noise * rng.sample::<f64, _>(StandardNormal);
            let v = v + config.pixel_noise * rng.sample::<f64, _>(StandardNormal);
            if !(0.0..w).contains(&u) || !(0.0..h).contains(&v) {
                continue;
            }
            let depth = (camera.rotation * (lm.position - camera.center)).z;
            if depth > config.view_depth as f64 {
                continue;
            }
            let (lo, hi) = config.feature_noise;
            let relative = if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            };
            locals.push(LocalDescriptor::new(
                noisy_descriptor(&lm.descriptor, relative, &mut rng),
                Keypoint::new(u as f32, v as f32),
            ));
        }
    }
    let distractors = (locals.len() as f64 * config.distractor_rate).round() as usize;
    for _ in 0..distractors {
        let values = (0..config.local_dim)
            .map(|_| rng.sample::<f32, _>(StandardNormal).abs())
            .collect();
        let kp = Keypoint::new(
            rng.random_range(0.0..w) as f32,
            rng.random_range(0.0..h) as f32,
        );
        locals.push(LocalDescriptor::new(values, kp));
    }

    FrameRecord {
        timestamp: t as f64 / config.fps,
        global,
        locals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            n_frames: 60,
            revisits: vec![RevisitSegment {
                start: 40,
                length: 20,
                offset: 30,
            }],
            global_dim: 16,
            local_dim: 8,
            psi: 2.0,
            fps: 10.0,
            ..Default::default()
        }
    }

    #[test]
    fn places_follow_revisits() {
        let c = small();
        assert_eq!(c.place_of(39), 39);
        assert_eq!(c.place_of(40), 10);
        assert_eq!(c.place_of(59), 29);
        let gt = c.ground_truth();
        assert_eq!(gt.len(), 20);
        assert_eq!((gt[0].query_id, gt[0].match_start), (40, 10));
    }

    #[test]
    fn short_offset_is_rejected() {
        let mut c = small();
        c.revisits[0].offset = 20;
        assert!(matches!(
            c.validate(),
            Err(SyntheticError::InvalidConfig(_))
        ));
    }

    #[test]
    fn coincident_cameras_are_rejected() {
        let mut c = small();
        c.revisit_baseline = 0.0;
        assert!(matches!(
            c.validate(),
            Err(SyntheticError::InvalidGeometry(_))
        ));
    }

    #[test]
    fn frames_are_reproducible_and_in_bounds() {
        let c = small();
        let a = generate_frame(&c, 45);
        let b = generate_frame(&c, 45);
        assert_eq!(a, b);
        assert!(!a.locals.is_empty());
        for l in &a.locals {
            assert!(l.keypoint.is_valid() && l.keypoint.x < 640.0 && l.keypoint.y < 480.0);
        }
    }
}
