//! The per-frame loop-closure state machine.
//!
//! Each frame is hashed, pushed through a FIFO that keeps the most recent
//! `⌈ψ·φ⌉` frames out of the graph, searched against the graph, verified by
//! hashed matching plus RANSAC, and finally filtered for temporal
//! consistency.

mod gate;
mod run;

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::Matrix3;
use thiserror::Error;

use crate::frame_store::{FrameError, FrameId, GlobalDescriptor, Keypoint};
use crate::geometry::{verify_matches, RansacParams, Rejection};
use crate::hashing::{FrameCodes, HashConfig, HashError, HashFamily};
use crate::hnsw::{HnswError, HnswIndex, HnswParams};
use crate::matcher::{match_codes_indexed, BucketIndex};

pub use gate::TemporalGate;
pub use run::{fit_center, run_stream, RunOutput};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("frames must arrive in id order: expected {expected}, got {found}")]
    OutOfOrder { expected: FrameId, found: FrameId },
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Hash(#[from] HashError),
    #[error(transparent)]
    Index(#[from] HnswError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    /// ψ: exclusion time constant in seconds.
    pub psi: f64,
    /// φ: stream frame rate.
    pub fps: f64,
    /// n: graph neighbors verified per query.
    pub neighbors: usize,
    /// β: consecutive consistent frames required before emitting.
    pub beta: usize,
    /// W: maximum id distance between consecutive verified candidates.
    pub consistency_window: u64,
    /// ε in the binary ratio test.
    pub ratio: f64,
    pub ransac: RansacParams,
    pub hnsw: HnswParams,
    pub hash: HashConfig,
    pub hash_seed: u64,
    /// Optional floor on graph similarity; off by default.
    pub min_similarity: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            psi: 40.0,
            fps: 10.0,
            neighbors: 1,
            beta: 2,
            consistency_window: 10,
            ratio: 0.7,
            ransac: RansacParams::default(),
            hnsw: HnswParams::default(),
            hash: HashConfig::default(),
            hash_seed: 0x6a5e_5eed,
            min_similarity: None,
        }
    }
}

impl PipelineConfig {
    /// Number of most recent frames kept out of the graph, `⌈ψ·φ⌉`.
    pub fn exclusion_window(&self) -> usize {
        (self.psi * self.fps).ceil() as usize
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if !(self.psi * self.fps >= 1.0) || !(self.psi * self.fps).is_finite() {
            return bad(format!(
                "ψ·φ must be at least 1, got {}",
                self.psi * self.fps
            ));
        }
        if self.neighbors == 0 {
            return bad("n must be at least 1".into());
        }
        if self.beta == 0 {
            return bad("β must be at least 1".into());
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return bad(format!("ε must lie in (0, 1), got {}", self.ratio));
        }
        self.ransac
            .validate()
            .map_err(PipelineError::InvalidConfig)?;
        self.hnsw.validate()?;
        self.hash.validate()?;
        Ok(())
    }
}

/// A verified and temporally consistent loop closure.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopDetection {
    pub query_id: FrameId,
    pub match_id: FrameId,
    pub similarity: f64,
    pub inlier_count: usize,
    pub fundamental: Matrix3<f64>,
}

/// What happened to one retrieved candidate.
#[derive(Debug, Clone, PartialEq)]
pub enum AttemptOutcome {
    Accepted {
        inliers: usize,
    },
    Rejected(Rejection),
    /// Candidate frame has fewer than two local descriptors.
    TooFewLocals,
    /// Filtered by the optional similarity floor.
    BelowSimilarity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attempt {
    pub candidate: FrameId,
    pub similarity: f64,
    pub matches: usize,
    pub outcome: AttemptOutcome,
}

/// Accumulated wall time per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub frames: u64,
    pub ingest: Duration,
    pub hash_codes: Duration,
    pub feature_add: Duration,
    pub graph_search: Duration,
    pub hash_matching: Duration,
    pub ransac: Duration,
    pub whole: Duration,
}

impl StageTimings {
    /// `(stage name, mean milliseconds per frame)` in reporting order.
    pub fn mean_ms(&self) -> [(&'static str, f64); 7] {
        let per = |d: Duration| {
            if self.frames == 0 {
                0.0
            } else {
                d.as_secs_f64() * 1e3 / self.frames as f64
            }
        };
        [
            ("ingest", per(self.ingest)),
            ("hash_codes", per(self.hash_codes)),
            ("feature_add", per(self.feature_add)),
            ("graph_search", per(self.graph_search)),
            ("hash_matching", per(self.hash_matching)),
            ("ransac", per(self.ransac)),
            ("whole_system", per(self.whole)),
        ]
    }
}

struct Archived {
    keypoints: Vec<Keypoint>,
    codes: FrameCodes,
}

/// Streaming loop-closure detector. Frames must be fed in id order starting
/// at zero.
pub struct LoopDetector {
    config: PipelineConfig,
    family: Arc<HashFamily>,
    index: HnswIndex,
    pending: VecDeque<(FrameId, GlobalDescriptor)>,
    archive: Vec<Archived>,
    gate: TemporalGate,
    timings: StageTimings,
    trace: Vec<Attempt>,
}

impl LoopDetector {
    /// `family` must hash descriptors of the stream's local dimension; its
    /// center should already be fitted.
    pub fn new(
        config: PipelineConfig,
        global_dim: usize,
        family: Arc<HashFamily>,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        if family.config() != config.hash {
            return Err(PipelineError::InvalidConfig(
                "hash family does not match the configured hash parameters".into(),
            ));
        }
        Ok(Self {
            index: HnswIndex::new(global_dim, config.hnsw)?,
            gate: TemporalGate::new(config.beta, config.consistency_window),
            config,
            family,
            pending: VecDeque::new(),
            archive: Vec::new(),
            timings: StageTimings::default(),
            trace: Vec::new(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn family(&self) -> &HashFamily {
        &self.family
    }

    pub fn index(&self) -> &HnswIndex {
        &self.index
    }

    /// Frames processed so far.
    pub fn processed(&self) -> u64 {
        self.archive.len() as u64
    }

    /// Ids waiting in the FIFO, oldest first.
    pub fn pending_ids(&self) -> Vec<FrameId> {
        self.pending.iter().map(|(id, _)| *id).collect()
    }

    pub fn timings(&self) -> &StageTimings {
        &self.timings
    }

    /// Adds externally measured ingest time (file parsing, validation).
    pub fn record_ingest(&mut self, elapsed: Duration) {
        self.timings.ingest += elapsed;
        self.timings.whole += elapsed;
    }

    /// Verification attempts made for the most recent frame, in order.
    pub fn last_trace(&self) -> &[Attempt] {
        &self.trace
    }

    /// Runs one frame through the loop. The frame's codes are computed here
    /// when absent.
    pub fn process_frame(
        &mut self,
        frame: &crate::frame_store::Frame,
    ) -> Result<Option<LoopDetection>, PipelineError> {
        let started = Instant::now();
        let expected = self.processed();
        if frame.id != expected {
            return Err(PipelineError::OutOfOrder {
                expected,
                found: frame.id,
            });
        }

        let t = Instant::now();
        let codes = match &frame.codes {
            Some(c) => c.clone(),
            None => self.family.encode_frame(&frame.locals)?,
        };
        self.timings.hash_codes += t.elapsed();

        let t = Instant::now();
        self.pending.push_back((frame.id, frame.global.clone()));
        if self.pending.len() > self.config.exclusion_window() {
            let (id, descriptor) = self.pending.pop_front().expect("queue is non-empty");
            self.index.insert(id, &descriptor)?;
        }
        self.timings.feature_add += t.elapsed();

        let candidates = if self.index.is_empty() {
            Vec::new()
        } else {
            let t = Instant::now();
            let k = self.config.neighbors;
            let found =
                self.index
                    .knn_search(&frame.global, k, self.config.hnsw.ef_search.max(k))?;
            self.timings.graph_search += t.elapsed();
            found
        };

        let keypoints = frame.keypoints();
        self.trace.clear();
        let mut verified = None;
        for cand in candidates {
            let mut attempt = Attempt {
                candidate: cand.frame_id,
                similarity: cand.similarity,
                matches: 0,
                outcome: AttemptOutcome::BelowSimilarity,
            };
            if self
                .config
                .min_similarity
                .is_some_and(|s| cand.similarity < s)
            {
                self.trace.push(attempt);
                continue;
            }
            let stored = &self.archive[cand.frame_id as usize];
            if stored.codes.len() < 2 {
                attempt.outcome = AttemptOutcome::TooFewLocals;
                self.trace.push(attempt);
                continue;
            }

            let t = Instant::now();
            let buckets = BucketIndex::build(&stored.codes);
            let matches = match_codes_indexed(&codes, &stored.codes, &buckets, self.config.ratio);
            self.timings.hash_matching += t.elapsed();
            attempt.matches = matches.len();

            let t = Instant::now();
            let params = RansacParams {
                rng_seed: pair_seed(self.config.ransac.rng_seed, frame.id, cand.frame_id),
                ..self.config.ransac
            };
            let result = verify_matches(&matches, &keypoints, &stored.keypoints, &params);
            self.timings.ransac += t.elapsed();

            match result {
                Ok(v) => {
                    attempt.outcome = AttemptOutcome::Accepted {
                        inliers: v.model.inlier_count,
                    };
                    self.trace.push(attempt);
                    verified = Some(LoopDetection {
                        query_id: frame.id,
                        match_id: cand.frame_id,
                        similarity: cand.similarity,
                        inlier_count: v.model.inlier_count,
                        fundamental: v.model.matrix,
                    });
                    break;
                }
                Err(r) => {
                    attempt.outcome = AttemptOutcome::Rejected(r);
                    self.trace.push(attempt);
                }
            }
        }

        self.archive.push(Archived { keypoints, codes });
        let fire = self.gate.observe(verified.as_ref().map(|d| d.match_id));
        self.timings.frames += 1;
        self.timings.whole += started.elapsed();
        Ok(if fire { verified } else { None })
    }
}

/// Per-pair RANSAC seed so that every verification is reproducible on its own.
fn pair_seed(base: u64, query: FrameId, candidate: FrameId) -> u64 {
    let mut z = base ^ query.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ candidate.rotate_left(32);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub const CSV_HEADER: &str = "query_id,match_id,similarity,inliers";

/// Writes detections as CSV with a header line.
pub fn write_detections_csv<W: Write>(
    mut out: W,
    detections: &[LoopDetection],
) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for d in detections {
        writeln!(
            out,
            "{},{},{:.6},{}",
            d.query_id, d.match_id, d.similarity, d.inlier_count
        )?;
    }
    Ok(())
}

/// Parses CSV produced by [`write_detections_csv`]. The fundamental matrix
/// is not part of the CSV and comes back as zeros.
pub fn read_detections_csv(text: &str) -> Result<Vec<LoopDetection>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == CSV_HEADER {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let err = || format!("line {}: expected `{CSV_HEADER}`, got `{line}`", n + 1);
        if fields.len() != 4 {
            return Err(err());
        }
        out.push(LoopDetection {
            query_id: fields[0].trim().parse().map_err(|_| err())?,
            match_id: fields[1].trim().parse().map_err(|_| err())?,
            similarity: fields[2].trim().parse().map_err(|_| err())?,
            inlier_count: fields[3].trim().parse().map_err(|_| err())?,
            fundamental: Matrix3::zeros(),
        });
    }
    Ok(out)
}
