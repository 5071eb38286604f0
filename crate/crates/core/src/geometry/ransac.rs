use nalgebra::Point2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{
    eight_point, sampson_error, sampson_weighted_eight_point, Correspondence, FundamentalMatrix,
};
use crate::frame_store::Keypoint;
use crate::matcher::Match;

const SAMPLE_SIZE: usize = 8;
/// Consensus bands, as multiples of the inlier threshold, used when refining
/// a new best hypothesis.
const REFIT_BANDS: [f64; 5] = [3.0, 2.0, 1.5, 1.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub max_iterations: usize,
    /// Inlier threshold in pixels; compared against the Sampson error as
    /// `error ≤ threshold²`.
    pub epipolar_threshold: f64,
    /// Minimum inliers for acceptance (τ).
    pub min_inliers: usize,
    pub rng_seed: u64,
    /// Stop early once `1 - (1 - w⁸)^k` reaches this confidence, where `w`
    /// is the best inlier ratio so far. `None` always runs all iterations.
    pub adaptive_confidence: Option<f64>,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            epipolar_threshold: 1.0,
            min_inliers: 20,
            rng_seed: 0x00dd_ba11,
            adaptive_confidence: None,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_iterations == 0 {
            return Err("max_iterations must be at least 1".into());
        }
        if !(self.epipolar_threshold > 0.0 && self.epipolar_threshold.is_finite()) {
            return Err(format!(
                "epipolar threshold must be positive, got {}",
                self.epipolar_threshold
            ));
        }
        if self.min_inliers < SAMPLE_SIZE {
            return Err(format!(
                "min_inliers must be at least {SAMPLE_SIZE}, got {}",
                self.min_inliers
            ));
        }
        if let Some(c) = self.adaptive_confidence {
            if !(c > 0.0 && c < 1.0) {
                return Err(format!("adaptive confidence must lie in (0, 1), got {c}"));
            }
        }
        Ok(())
    }
}

/// Why a candidate failed verification.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Rejection {
    #[error("only {0} matches, need at least 8")]
    TooFewMatches(usize),
    #[error("no non-degenerate model could be fitted")]
    NoModel,
    #[error("{found} inliers, need {required}")]
    TooFewInliers { found: usize, required: usize },
    #[error("invalid RANSAC parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verified {
    pub model: FundamentalMatrix,
    /// Indices into the input correspondences, ascending.
    pub inliers: Vec<usize>,
}

struct Scored {
    f: FundamentalMatrix,
    inliers: Vec<usize>,
    error: f64,
}

fn score(points: &[Correspondence], f: FundamentalMatrix, thr2: f64) -> Scored {
    let mut inliers = Vec::new();
    let mut error = 0.0;
    for (i, c) in points.iter().enumerate() {
        let e = sampson_error(&f.matrix, c);
        if e <= thr2 {
            inliers.push(i);
            error += e;
        }
    }
    Scored { f, inliers, error }
}

fn better(a: &Scored, b: Option<&Scored>) -> bool {
    match b {
        None => true,
        Some(b) => {
            a.inliers.len() > b.inliers.len()
                || (a.inliers.len() == b.inliers.len() && a.error < b.error)
        }
    }
}

/// Refits `start` on its consensus set widened to each multiple of the
/// threshold in turn, finishing at the threshold itself. The best model seen
/// along the way is kept, so the result is never worse than `start`.
fn local_optimize(points: &[Correspondence], start: Scored, thr2: f64) -> Scored {
    let mut current = start.f;
    let mut best = start;
    let mut first = true;
    for k in REFIT_BANDS {
        let band = k * k * thr2;
        let subset: Vec<Correspondence> = points
            .iter()
            .copied()
            .filter(|c| sampson_error(&current.matrix, c) <= band)
            .collect();
        if subset.len() < SAMPLE_SIZE {
            break;
        }
        // the first band starts from a minimal-sample model, too rough to weight by
        let fit = if first {
            eight_point(&subset)
        } else {
            sampson_weighted_eight_point(&subset, &current.matrix)
        };
        first = false;
        let Ok(f) = fit else { break };
        let s = score(points, f, thr2);
        current = s.f;
        if better(&s, Some(&best)) {
            best = s;
        }
    }
    best
}

/// Robust fundamental-matrix fit: random 8-point hypotheses scored by
/// Sampson error. Each hypothesis that reaches a new inlier record is refined
/// by Sampson-weighted refits on its consensus set before competing.
pub fn ransac_verify(
    points: &[Correspondence],
    params: &RansacParams,
) -> Result<Verified, Rejection> {
    params.validate().map_err(Rejection::InvalidParams)?;
    let n = points.len();
    if n < SAMPLE_SIZE {
        return Err(Rejection::TooFewMatches(n));
    }
    let thr2 = params.epipolar_threshold * params.epipolar_threshold;
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut best: Option<Scored> = None;
    // best raw hypothesis count; every new record is refined
    let mut record = 0;
    let mut sample = [Correspondence::new(Point2::origin(), Point2::origin()); SAMPLE_SIZE];

    for iter in 1..=params.max_iterations {
        let idx = rand::seq::index::sample(&mut rng, n, SAMPLE_SIZE);
        for (slot, i) in sample.iter_mut().zip(idx.iter()) {
            *slot = points[i];
        }
        if let Ok(f) = eight_point(&sample) {
            let s = score(points, f, thr2);
            if s.inliers.len() >= SAMPLE_SIZE.max(record) {
                record = s.inliers.len();
                let refined = local_optimize(points, s, thr2);
                if better(&refined, best.as_ref()) {
                    best = Some(refined);
                }
            } else if better(&s, best.as_ref()) {
                best = Some(s);
            }
        }
        if let (Some(conf), Some(b)) = (params.adaptive_confidence, &best) {
            let w = b.inliers.len() as f64 / n as f64;
            let miss = 1.0 - w.powi(SAMPLE_SIZE as i32);
            if miss <= 0.0 || 1.0 - miss.powi(iter as i32) >= conf {
                break;
            }
        }
    }

    let best = best.ok_or(Rejection::NoModel)?;

    let found = best.inliers.len();
    if found < params.min_inliers {
        return Err(Rejection::TooFewInliers {
            found,
            required: params.min_inliers,
        });
    }
    Ok(Verified {
        model: FundamentalMatrix {
            matrix: best.f.matrix,
            inlier_count: found,
        },
        inliers: best.inliers,
    })
}

/// Verifies hashed matches between a query frame and a candidate frame.
/// The candidate keypoint is the left point and the query keypoint the right.
pub fn verify_matches(
    matches: &[Match],
    query_keypoints: &[Keypoint],
    candidate_keypoints: &[Keypoint],
    params: &RansacParams,
) -> Result<Verified, Rejection> {
    let points: Vec<Correspondence> = matches
        .iter()
        .map(|m| {
            let q = query_keypoints[m.query_idx as usize];
            let c = candidate_keypoints[m.cand_idx as usize];
            Correspondence::new(
                Point2::new(c.x as f64, c.y as f64),
                Point2::new(q.x as f64, q.y as f64),
            )
        })
        .collect();
    ransac_verify(&points, params)
}
