//! Ground truth, precision/recall scoring, parameter sweeps and the planted
//! synthetic benchmark.

mod synthetic;

use std::io::{BufRead, Write};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::frame_store::{FrameError, FrameId, FrameRecord};
use crate::hnsw::HnswParams;
use crate::pipeline::{
    fit_center, run_stream, LoopDetection, PipelineConfig, PipelineError, RunOutput, StageTimings,
};

pub use synthetic::{
    generate, generate_frame, generate_to_files, latent_global, RevisitSegment, SyntheticConfig,
    SyntheticError, SyntheticStream,
};

/// Default ± frame tolerance when matching detections to annotated ranges.
pub const DEFAULT_TOLERANCE: u64 = 10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{what} must be sorted by query id (entry {index} goes backwards)")]
    Unsorted { what: &'static str, index: usize },
    #[error("ground truth line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Query `query_id` is a revisit of any frame in `[match_start, match_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundTruthEntry {
    pub query_id: FrameId,
    pub match_start: FrameId,
    pub match_end: FrameId,
}

pub fn read_ground_truth<R: BufRead>(input: R) -> Result<Vec<GroundTruthEntry>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let parse_err = |reason: String| EvalError::Parse {
            line: i + 1,
            reason,
        };
        let nums = body
            .split_whitespace()
            .map(|f| {
                f.parse::<u64>()
                    .map_err(|e| parse_err(format!("`{f}`: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let [q, s, e] = nums[..] else {
            return Err(parse_err(format!("expected 3 fields, got {}", nums.len())));
        };
        if s > e {
            return Err(parse_err(format!("range start {s} exceeds end {e}")));
        }
        out.push(GroundTruthEntry {
            query_id: q,
            match_start: s,
            match_end: e,
        });
    }
    Ok(out)
}

pub fn write_ground_truth<W: Write>(
    mut out: W,
    entries: &[GroundTruthEntry],
) -> std::io::Result<()> {
    for e in entries {
        writeln!(out, "{} {} {}", e.query_id, e.match_start, e.match_end)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PRReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// `TP / (TP + FP)`, 1 when nothing was detected.
    pub precision: f64,
    /// `TP / (TP + FN)`, 1 when there is nothing to find.
    pub recall: f64,
}

fn ratio_or_one(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores detections against interval ground truth.
///
/// A detection is a true positive when its query has a ground-truth entry
/// and its match lies within `tolerance` frames of that entry's range. Each
/// ground-truth query is credited at most once; repeated correct detections
/// of an already credited query are ignored, and every incorrect detection is
/// a false positive.
pub fn score(
    detections: &[LoopDetection],
    ground_truth: &[GroundTruthEntry],
    tolerance: u64,
) -> Result<PRReport, EvalError> {
    if let Some(i) =
        (1..detections.len()).find(|&i| detections[i].query_id < detections[i - 1].query_id)
    {
        return Err(EvalError::Unsorted {
            what: "detections",
            index: i,
        });
    }
    if let Some(i) =
        (1..ground_truth.len()).find(|&i| ground_truth[i].query_id < ground_truth[i - 1].query_id)
    {
        return Err(EvalError::Unsorted {
            what: "ground truth",
            index: i,
        });
    }

    let mut queries: Vec<FrameId> = ground_truth.iter().map(|g| g.query_id).collect();
    queries.dedup();
    let mut credited = vec![false; queries.len()];
    let mut tp = 0;
    let mut fp = 0;
    let mut g = 0;
    for d in detections {
        while g < ground_truth.len() && ground_truth[g].query_id < d.query_id {
            g += 1;
        }
        let correct = ground_truth[g..]
            .iter()
            .take_while(|e| e.query_id == d.query_id)
            .any(|e| {
                d.match_id + tolerance >= e.match_start && d.match_id <= e.match_end + tolerance
            });
        if correct {
            let slot = queries
                .binary_search(&d.query_id)
                .expect("query has ground truth");
            if !credited[slot] {
                credited[slot] = true;
                tp += 1;
            }
        } else {
            fp += 1;
        }
    }
    let fn_ = queries.len() - tp;
    Ok(PRReport {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        precision: ratio_or_one(tp, tp + fp),
        recall: ratio_or_one(tp, tp + fn_),
    })
}

/// Everything a synthetic run produces.
pub struct SyntheticRun {
    pub output: RunOutput,
    pub report: PRReport,
    pub elapsed: Duration,
}

/// Generates the planted dataset in memory, runs the pipeline on it and
/// scores the detections. The hashing center is fitted on the stream prefix.
pub fn run_synthetic(
    synthetic: &SyntheticConfig,
    config: &PipelineConfig,
) -> Result<SyntheticRun, EvalError> {
    let started = Instant::now();
    let center = fit_center(generate(synthetic)?, synthetic.local_dim)?;
    let output = run_stream(
        generate(synthetic)?,
        synthetic.global_dim,
        synthetic.local_dim,
        config,
        center,
    )?;
    let report = score(
        &output.detections,
        &synthetic.ground_truth(),
        DEFAULT_TOLERANCE,
    )?;
    Ok(SyntheticRun {
        output,
        report,
        elapsed: started.elapsed(),
    })
}

/// Parameter axes the sweep harness can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// HNSW link budget M.
    MaxConnections,
    EfSearch,
    /// Fine hash code length m.
    HashBits,
    /// Ratio-test threshold ε.
    Ratio,
    /// Candidates verified per query, n.
    Neighbors,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::MaxConnections => "M",
            Self::EfSearch => "ef_search",
            Self::HashBits => "m",
            Self::Ratio => "ratio",
            Self::Neighbors => "n",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "M" | "max_connections" => Self::MaxConnections,
            "ef" | "ef_search" => Self::EfSearch,
            "m" | "bits" | "hash_bits" => Self::HashBits,
            "ratio" | "epsilon" | "eps" => Self::Ratio,
            "n" | "neighbors" => Self::Neighbors,
            _ => return None,
        })
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &PipelineConfig, value: f64) -> Result<PipelineConfig, EvalError> {
        let whole = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(EvalError::InvalidSweep(format!(
                    "{} needs a positive integer, got {value}",
                    self.name()
                )))
            }
        };
        let mut c = *base;
        match self {
            Self::MaxConnections => {
                let m = whole()?;
                c.hnsw = HnswParams {
                    ef_construction: base.hnsw.ef_construction.max(m),
                    ef_search: base.hnsw.ef_search,
                    rng_seed: base.hnsw.rng_seed,
                    ..HnswParams::with_max_connections(m)
                };
            }
            Self::EfSearch => c.hnsw.ef_search = whole()?,
            Self::HashBits => c.hash.bits = whole()?,
            Self::Ratio => c.ratio = value,
            Self::Neighbors => c.neighbors = whole()?,
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub report: PRReport,
    pub detections: usize,
    pub timings: StageTimings,
}

/// One full pipeline run per value of `axis`, everything else fixed.
///
/// `open` must yield the same record stream on every call. The hashing
/// center is fitted once from the first stream and reused for every point.
pub fn sweep<F, I>(
    axis: SweepAxis,
    values: &[f64],
    base: &PipelineConfig,
    dims: (usize, usize),
    ground_truth: &[GroundTruthEntry],
    tolerance: u64,
    mut open: F,
) -> Result<Vec<SweepRow>, EvalError>
where
    F: FnMut() -> Result<I, EvalError>,
    I: IntoIterator<Item = Result<FrameRecord, FrameError>>,
{
    let (global_dim, local_dim) = dims;
    let center = fit_center(open()?, local_dim)?;
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let config = axis.apply(base, value)?;
        let out = run_stream(open()?, global_dim, local_dim, &config, center.clone())?;
        rows.push(SweepRow {
            axis,
            value,
            report: score(&out.detections, ground_truth, tolerance)?,
            detections: out.detections.len(),
            timings: *out.detector.timings(),
        });
    }
    Ok(rows)
}

/// `axis,value,detections,tp,fp,fn,precision,recall`
pub fn write_pr_table<W: Write>(mut out: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(out, "axis,value,detections,tp,fp,fn,precision,recall")?;
    for r in rows {
        let p = &r.report;
        writeln!(
            out,
            "{},{},{},{},{},{},{:.4},{:.4}",
            r.axis.name(),
            r.value,
            r.detections,
            p.true_positives,
            p.false_positives,
            p.false_negatives,
            p.precision,
            p.recall
        )?;
    }
    Ok(())
}

/// `axis,value,stage,mean_ms`, every stage for every row.
pub fn write_timing_table<W: Write>(mut out: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(out, "axis,value,stage,mean_ms")?;
    for r in rows {
        for (stage, ms) in r.timings.mean_ms() {
            writeln!(out, "{},{},{stage},{ms:.4}", r.axis.name(), r.value)?;
        }
    }
    Ok(())
}
