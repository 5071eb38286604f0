//! Putative correspondences between two hashed frames.
//!
//! Coarse to fine: a query descriptor's shortlist is every candidate
//! descriptor sharing at least one coarse bucket with it. The shortlist is
//! ranked by fine Hamming distance and the best entry is kept when it passes
//! the binary ratio test `d1 / d2 ≤ ε²`.

use std::collections::HashMap;

use thiserror::Error;

use crate::frame_store::{Frame, FrameId};
use crate::hashing::{hamming_words, FrameCodes, HashFamily};

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("frame {0} has no binary codes")]
    MissingCodes(FrameId),
    #[error("candidate frame {frame} has {count} local descriptors, need at least 2")]
    TooFewCandidateLocals { frame: FrameId, count: usize },
    #[error("ratio threshold must lie in (0, 1), got {0}")]
    InvalidRatio(f64),
    #[error("codes are incompatible: {0}")]
    Incompatible(String),
}

/// One accepted correspondence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub query_idx: u32,
    pub cand_idx: u32,
    /// Hamming distance to the best shortlist entry.
    pub d1: u32,
    /// Hamming distance to the second best.
    pub d2: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    pub query_id: FrameId,
    pub candidate_id: FrameId,
    pub matches: Vec<Match>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }
}

/// Slack on the ratio comparison so that `ε = 0.7` admits `d1/d2 = 0.49`
/// even though `0.7 * 0.7` rounds below 0.49 in binary.
pub const RATIO_SLACK: f64 = 1e-12;

/// Binary ratio test. A zero second-best distance is degenerate and rejected.
#[inline]
pub fn passes_ratio(d1: u32, d2: u32, ratio: f64) -> bool {
    d2 > 0 && (d1 as f64 / d2 as f64) <= ratio * ratio + RATIO_SLACK
}

fn check_ratio(ratio: f64) -> Result<(), MatchError> {
    if ratio > 0.0 && ratio < 1.0 {
        Ok(())
    } else {
        Err(MatchError::InvalidRatio(ratio))
    }
}

/// Coarse bucket tables over one frame's descriptors.
#[derive(Debug, Clone)]
pub struct BucketIndex {
    tables: Vec<HashMap<u32, Vec<u32>>>,
    len: usize,
}

impl BucketIndex {
    pub fn build(codes: &FrameCodes) -> Self {
        let mut tables = vec![HashMap::<u32, Vec<u32>>::new(); codes.tables()];
        for i in 0..codes.len() {
            for (t, &key) in codes.keys(i).iter().enumerate() {
                tables[t].entry(key).or_default().push(i as u32);
            }
        }
        Self {
            tables,
            len: codes.len(),
        }
    }

    /// Indices sharing at least one bucket with `keys`, ascending.
    pub fn shortlist(&self, keys: &[u32]) -> Vec<u32> {
        let mut seen = vec![false; self.len];
        let mut out = Vec::new();
        for (table, key) in self.tables.iter().zip(keys) {
            if let Some(bucket) = table.get(key) {
                for &i in bucket {
                    if !seen[i as usize] {
                        seen[i as usize] = true;
                        out.push(i);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

fn check_compatible(query: &FrameCodes, candidate: &FrameCodes) -> Result<(), MatchError> {
    if query.tables() != candidate.tables() {
        return Err(MatchError::Incompatible(format!(
            "{} vs {} coarse tables",
            query.tables(),
            candidate.tables()
        )));
    }
    if let (Some(a), Some(b)) = (query.bits(), candidate.bits()) {
        if a != b {
            return Err(MatchError::Incompatible(format!(
                "{a}-bit vs {b}-bit codes"
            )));
        }
    }
    Ok(())
}

/// Matches using a prebuilt bucket index over `candidate`.
pub fn match_codes_indexed(
    query: &FrameCodes,
    candidate: &FrameCodes,
    buckets: &BucketIndex,
    ratio: f64,
) -> Vec<Match> {
    let mut out = Vec::new();
    for qi in 0..query.len() {
        let shortlist = buckets.shortlist(query.keys(qi));
        if shortlist.len() < 2 {
            continue;
        }
        let qwords = query.code(qi).words();
        // (distance, index); ties on distance go to the smaller index
        let mut best = (u32::MAX, u32::MAX);
        let mut second = u32::MAX;
        for ci in shortlist {
            let d = hamming_words(qwords, candidate.code(ci as usize).words());
            if (d, ci) < best {
                second = best.0;
                best = (d, ci);
            } else if d < second {
                second = d;
            }
        }
        if passes_ratio(best.0, second, ratio) {
            out.push(Match {
                query_idx: qi as u32,
                cand_idx: best.1,
                d1: best.0,
                d2: second,
            });
        }
    }
    out
}

/// Matches two sets of codes; `candidate` needs at least two descriptors.
pub fn match_codes(
    query: &FrameCodes,
    candidate: &FrameCodes,
    ratio: f64,
) -> Result<Vec<Match>, MatchError> {
    check_ratio(ratio)?;
    check_compatible(query, candidate)?;
    if candidate.len() < 2 {
        return Err(MatchError::TooFewCandidateLocals {
            frame: 0,
            count: candidate.len(),
        });
    }
    let buckets = BucketIndex::build(candidate);
    Ok(match_codes_indexed(query, candidate, &buckets, ratio))
}

/// Putative matches from `query` into `candidate` under ratio threshold ε.
pub fn match_frames(
    query: &Frame,
    candidate: &Frame,
    ratio: f64,
    family: &HashFamily,
) -> Result<MatchSet, MatchError> {
    check_ratio(ratio)?;
    let qcodes = query
        .codes
        .as_ref()
        .ok_or(MatchError::MissingCodes(query.id))?;
    let ccodes = candidate
        .codes
        .as_ref()
        .ok_or(MatchError::MissingCodes(candidate.id))?;
    let cfg = family.config();
    for codes in [qcodes, ccodes] {
        if codes.tables() != cfg.tables || codes.bits().is_some_and(|b| b != cfg.bits) {
            return Err(MatchError::Incompatible(
                "codes were not produced by this hash family".into(),
            ));
        }
    }
    if ccodes.len() < 2 {
        return Err(MatchError::TooFewCandidateLocals {
            frame: candidate.id,
            count: ccodes.len(),
        });
    }
    let buckets = BucketIndex::build(ccodes);
    Ok(MatchSet {
        query_id: query.id,
        candidate_id: candidate.id,
        matches: match_codes_indexed(qcodes, ccodes, &buckets, ratio),
    })
}
