//! RTU frame delimiting.
//!
//! In gap mode a silent interval of at least 3.5 character times closes the
//! frame being accumulated. In boundary mode the transport already delivers
//! whole frames and every push is one frame.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::serial::SerialParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FramingMode {
    Gap,
    Boundary,
}

#[derive(Debug, Clone)]
pub struct Framer {
    mode: FramingMode,
    gap: Duration,
    pending: Vec<u8>,
    last_byte_at: Option<Duration>,
}

impl Framer {
    pub fn new(mode: FramingMode, serial: &SerialParams) -> Self {
        Framer {
            mode,
            gap: serial.frame_gap(),
            pending: Vec::new(),
            last_byte_at: None,
        }
    }

    pub fn mode(&self) -> FramingMode {
        self.mode
    }

    pub fn gap(&self) -> Duration {
        self.gap
    }

    /// Feeds bytes that all arrived at `at`. Returns every frame completed by this push.
    pub fn push(&mut self, bytes: &[u8], at: Duration) -> Vec<Vec<u8>> {
        match self.mode {
            FramingMode::Boundary if bytes.is_empty() => Vec::new(),
            FramingMode::Boundary => vec![bytes.to_vec()],
            FramingMode::Gap => self.push_timed(bytes.iter().map(|&b| (b, at))),
        }
    }

    /// Feeds bytes with individual arrival timestamps (non-decreasing).
    pub fn push_timed(&mut self, bytes: impl IntoIterator<Item = (u8, Duration)>) -> Vec<Vec<u8>> {
        let mut frames = Vec::new();
        for (byte, at) in bytes {
            if self.mode == FramingMode::Gap {
                if let Some(frame) = self.close_if_silent(at) {
                    frames.push(frame);
                }
            }
            self.pending.push(byte);
            self.last_byte_at = Some(at);
        }
        if self.mode == FramingMode::Boundary {
            if let Some(frame) = self.flush() {
                frames.push(frame);
            }
        }
        frames
    }

    /// Closes the pending frame if the line has been silent long enough by `now`.
    pub fn poll(&mut self, now: Duration) -> Option<Vec<u8>> {
        self.close_if_silent(now)
    }

    /// Instant at which the pending frame will be closed by silence.
    pub fn deadline(&self) -> Option<Duration> {
        self.last_byte_at
            .filter(|_| !self.pending.is_empty())
            .map(|t| t + self.gap)
    }

    /// Unconditionally emits whatever has accumulated.
    pub fn flush(&mut self) -> Option<Vec<u8>> {
        self.last_byte_at = None;
        if self.pending.is_empty() {
            None
        } else {
            Some(std::mem::take(&mut self.pending))
        }
    }

    fn close_if_silent(&mut self, now: Duration) -> Option<Vec<u8>> {
        match self.last_byte_at {
            Some(last) if !self.pending.is_empty() && now.saturating_sub(last) >= self.gap => {
                self.flush()
            }
            _ => None,
        }
    }
}
