use crate::frame_store::FrameId;

/// β-consecutive consistency filter over per-frame verification results.
///
/// A verified candidate extends the current run when it lies within
/// `window` frames of the previous frame's verified candidate; otherwise it
/// starts a new run of length one. A frame without a verified candidate
/// resets the run. The gate fires while the run length is at least β.
#[derive(Debug, Clone)]
pub struct TemporalGate {
    beta: usize,
    window: u64,
    run: usize,
    last: Option<FrameId>,
}

impl TemporalGate {
    pub fn new(beta: usize, window: u64) -> Self {
        Self {
            beta: beta.max(1),
            window,
            run: 0,
            last: None,
        }
    }

    /// Feeds one frame's outcome; returns whether a detection is emitted.
    pub fn observe(&mut self, verified: Option<FrameId>) -> bool {
        let Some(candidate) = verified else {
            self.run = 0;
            self.last = None;
            return false;
        };
        self.run = match self.last {
            Some(prev) if prev.abs_diff(candidate) <= self.window => self.run + 1,
            _ => 1,
        };
        self.last = Some(candidate);
        self.run >= self.beta
    }

    /// Current run length.
    pub fn run(&self) -> usize {
        self.run
    }
}
