use super::FrameError;

/// Sequential frame identifier assigned by [`super::FrameStore`].
pub type FrameId = u64;

/// Dot product accumulated in `f64` over eight interleaved lanes.
///
/// The lane layout is fixed, so `dot(a, b) == dot(b, a)` bit for bit.
pub(crate) fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let chunks_a = a.chunks_exact(8);
    let chunks_b = b.chunks_exact(8);
    let tail_a = chunks_a.remainder();
    let tail_b = chunks_b.remainder();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for lane in 0..8 {
            acc[lane] += ca[lane] as f64 * cb[lane] as f64;
        }
    }
    for (lane, (x, y)) in tail_a.iter().zip(tail_b).enumerate() {
        acc[lane] += *x as f64 * *y as f64;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

/// Whole-image descriptor. Values are kept exactly as ingested; the
/// Euclidean norm is cached so similarity can divide at query time.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalDescriptor {
    values: Vec<f32>,
    norm: f64,
}

impl GlobalDescriptor {
    /// Rejects empty, non-finite and all-zero vectors.
    pub fn new(values: Vec<f32>) -> Result<Self, FrameError> {
        if values.is_empty() {
            return Err(FrameError::Malformed {
                frame: None,
                reason: "empty global descriptor".into(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FrameError::Malformed {
                frame: None,
                reason: "non-finite value in global descriptor".into(),
            });
        }
        let norm = dot_f64(&values, &values).sqrt();
        if norm <= 0.0 {
            return Err(FrameError::ZeroGlobal { frame: None });
        }
        Ok(Self { values, norm })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

/// Normalized scalar product `aᵀb / (‖a‖·‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &GlobalDescriptor, b: &GlobalDescriptor) -> Result<f64, FrameError> {
    if a.dim() != b.dim() {
        return Err(FrameError::DimensionMismatch {
            frame: None,
            what: "global",
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let s = dot_f64(&a.values, &b.values) / (a.norm * b.norm);
    Ok(s.clamp(-1.0, 1.0))
}

/// Pixel location of a local feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
}

impl Keypoint {
    pub fn new(x: f32, y: f32) -> Self {
        Self { x, y }
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.x >= 0.0 && self.y >= 0.0
    }
}

/// A local feature: its descriptor vector and where it was detected.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDescriptor {
    pub values: Vec<f32>,
    pub keypoint: Keypoint,
}

impl LocalDescriptor {
    pub fn new(values: Vec<f32>, keypoint: Keypoint) -> Self {
        Self { values, keypoint }
    }
}
