use std::sync::Arc;
use std::time::Instant;

use super::{LoopDetection, LoopDetector, PipelineConfig, PipelineError};
use crate::frame_store::{FrameError, FrameRecord, Ingestor};
use crate::hashing::{CenterEstimator, HashFamily, CENTER_SAMPLE_LIMIT};

/// Mean of the first [`CENTER_SAMPLE_LIMIT`] local descriptors of a stream.
///
/// Reads only as many records as needed; callers re-open the stream for the
/// detection pass so the frozen center applies to every frame.
pub fn fit_center<I>(records: I, local_dim: usize) -> Result<Vec<f32>, FrameError>
where
    I: IntoIterator<Item = Result<FrameRecord, FrameError>>,
{
    let mut est = CenterEstimator::new(local_dim);
    'frames: for (i, rec) in records.into_iter().enumerate() {
        let rec = rec.map_err(|e| e.with_frame(i as u64))?;
        for local in &rec.locals {
            if local.values.len() != local_dim {
                return Err(FrameError::DimensionMismatch {
                    frame: Some(i as u64),
                    what: "local",
                    expected: local_dim,
                    found: local.values.len(),
                });
            }
            if !est.observe(&local.values) {
                break 'frames;
            }
        }
        if est.count() >= CENTER_SAMPLE_LIMIT {
            break;
        }
    }
    Ok(est.finish())
}

pub struct RunOutput {
    pub detections: Vec<LoopDetection>,
    pub detector: LoopDetector,
}

/// Ingests and processes a whole stream with a hash family centered on
/// `center`.
pub fn run_stream<I>(
    records: I,
    global_dim: usize,
    local_dim: usize,
    config: &PipelineConfig,
    center: Vec<f32>,
) -> Result<RunOutput, PipelineError>
where
    I: IntoIterator<Item = Result<FrameRecord, FrameError>>,
{
    let family = HashFamily::new(local_dim, config.hash, config.hash_seed)?.with_center(center)?;
    let mut detector = LoopDetector::new(*config, global_dim, Arc::new(family))?;
    let mut ingestor = Ingestor::new(global_dim, local_dim);
    let mut detections = Vec::new();
    let mut records = records.into_iter();
    loop {
        let t = Instant::now();
        let Some(rec) = records.next() else { break };
        let frame = ingestor.ingest(rec.map_err(|e| e.with_frame(ingestor.next_id()))?)?;
        detector.record_ingest(t.elapsed());
        if let Some(d) = detector.process_frame(&frame)? {
            detections.push(d);
        }
    }
    Ok(RunOutput {
        detections,
        detector,
    })
}
