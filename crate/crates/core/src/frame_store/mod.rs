//! Frame ingestion and the append-only frame archive.

mod container;
mod descriptor;
mod fold;

use std::sync::Arc;

use thiserror::Error;

use crate::hashing::{FrameCodes, HashFamily};

pub use container::{
    read_text, write_binary_file, write_text, ContainerHeader, ContainerReader, ContainerWriter,
    DescriptorSource, MAGIC, VERSION,
};
pub use descriptor::{cosine_similarity, FrameId, GlobalDescriptor, Keypoint, LocalDescriptor};
pub use fold::{batchnorm_affine, fold_batchnorm, ConvFoldInput, FoldedConv};

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("{}{what} dimension mismatch: expected {expected}, found {found}", at(.frame))]
    DimensionMismatch {
        frame: Option<u64>,
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{}global descriptor is all zeros", at(.frame))]
    ZeroGlobal { frame: Option<u64> },
    #[error("{}malformed record: {reason}", at(.frame))]
    Malformed { frame: Option<u64>, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn at(frame: &Option<u64>) -> String {
    frame.map(|f| format!("frame {f}: ")).unwrap_or_default()
}

impl FrameError {
    /// Attaches a frame index unless one is already present.
    pub(crate) fn with_frame(self, index: u64) -> Self {
        match self {
            Self::DimensionMismatch {
                frame,
                what,
                expected,
                found,
            } => Self::DimensionMismatch {
                frame: frame.or(Some(index)),
                what,
                expected,
                found,
            },
            Self::ZeroGlobal { frame } => Self::ZeroGlobal {
                frame: frame.or(Some(index)),
            },
            Self::Malformed { frame, reason } => Self::Malformed {
                frame: frame.or(Some(index)),
                reason,
            },
            other => other,
        }
    }
}

/// One time step as it arrives from a file or generator, before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub timestamp: f64,
    pub global: Vec<f32>,
    pub locals: Vec<LocalDescriptor>,
}

/// A validated frame. Immutable once published.
#[derive(Debug, Clone)]
pub struct Frame {
    pub id: FrameId,
    pub timestamp: f64,
    pub global: GlobalDescriptor,
    pub locals: Vec<LocalDescriptor>,
    /// One binary code per local descriptor, once hashed.
    pub codes: Option<FrameCodes>,
}

impl Frame {
    pub fn keypoints(&self) -> Vec<Keypoint> {
        self.locals.iter().map(|l| l.keypoint).collect()
    }
}

/// Validates records and hands out gap-free sequential ids.
#[derive(Debug, Clone)]
pub struct Ingestor {
    global_dim: usize,
    local_dim: usize,
    next_id: FrameId,
}

impl Ingestor {
    pub fn new(global_dim: usize, local_dim: usize) -> Self {
        Self {
            global_dim,
            local_dim,
            next_id: 0,
        }
    }

    pub fn global_dim(&self) -> usize {
        self.global_dim
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn next_id(&self) -> FrameId {
        self.next_id
    }

    /// Validates `record`; on success it consumes the next id.
    pub fn ingest(&mut self, record: FrameRecord) -> Result<Frame, FrameError> {
        let id = self.next_id;
        let frame = self.validate(id, record).map_err(|e| e.with_frame(id))?;
        self.next_id += 1;
        Ok(frame)
    }

    fn validate(&self, id: FrameId, record: FrameRecord) -> Result<Frame, FrameError> {
        if record.global.len() != self.global_dim {
            return Err(FrameError::DimensionMismatch {
                frame: None,
                what: "global",
                expected: self.global_dim,
                found: record.global.len(),
            });
        }
        if !record.timestamp.is_finite() {
            return Err(FrameError::Malformed {
                frame: None,
                reason: "non-finite timestamp".into(),
            });
        }
        for (i, local) in record.locals.iter().enumerate() {
            if local.values.len() != self.local_dim {
                return Err(FrameError::DimensionMismatch {
                    frame: None,
                    what: "local",
                    expected: self.local_dim,
                    found: local.values.len(),
                });
            }
            if !local.keypoint.is_valid() {
                return Err(FrameError::Malformed {
                    frame: None,
                    reason: format!("local {i}: keypoint must be finite and non-negative"),
                });
            }
            if local.values.iter().any(|v| !v.is_finite()) {
                return Err(FrameError::Malformed {
                    frame: None,
                    reason: format!("local {i}: non-finite descriptor value"),
                });
            }
        }
        Ok(Frame {
            id,
            timestamp: record.timestamp,
            global: GlobalDescriptor::new(record.global)?,
            locals: record.locals,
            codes: None,
        })
    }
}

/// Append-only archive of frames. A single owner appends; published frames
/// are shared as `Arc<Frame>` and never change.
#[derive(Debug)]
pub struct FrameStore {
    ingestor: Ingestor,
    family: Option<Arc<HashFamily>>,
    frames: Vec<Arc<Frame>>,
}

impl FrameStore {
    pub fn new(global_dim: usize, local_dim: usize) -> Self {
        Self {
            ingestor: Ingestor::new(global_dim, local_dim),
            family: None,
            frames: Vec::new(),
        }
    }

    /// Frames ingested into this store get their binary codes filled in
    /// before they are published.
    pub fn with_hashing(
        global_dim: usize,
        local_dim: usize,
        family: Arc<HashFamily>,
    ) -> Result<Self, FrameError> {
        if family.dim() != local_dim {
            return Err(FrameError::DimensionMismatch {
                frame: None,
                what: "hash family",
                expected: local_dim,
                found: family.dim(),
            });
        }
        Ok(Self {
            family: Some(family),
            ..Self::new(global_dim, local_dim)
        })
    }

    pub fn ingest(&mut self, record: FrameRecord) -> Result<Arc<Frame>, FrameError> {
        let mut frame = self.ingestor.ingest(record)?;
        if let Some(family) = &self.family {
            let codes = family
                .encode_frame(&frame.locals)
                .expect("family dimension checked at construction");
            frame.codes = Some(codes);
        }
        let frame = Arc::new(frame);
        self.frames.push(Arc::clone(&frame));
        Ok(frame)
    }

    pub fn get(&self, id: FrameId) -> Option<&Arc<Frame>> {
        self.frames.get(usize::try_from(id).ok()?)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[Arc<Frame>] {
        &self.frames
    }

    pub fn global_dim(&self) -> usize {
        self.ingestor.global_dim()
    }

    pub fn local_dim(&self) -> usize {
        self.ingestor.local_dim()
    }
}
