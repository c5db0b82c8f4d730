//! Frame-level trace of serial traffic: one line per frame.
//!
//! Line format: `<seconds> <link> <M->S|S->M> <hex bytes>`.

use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    MasterToSlave,
    SlaveToMaster,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::MasterToSlave => "M->S",
            Direction::SlaveToMaster => "S->M",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub at: Duration,
    pub link: String,
    pub direction: Direction,
    pub bytes: Vec<u8>,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.6} {} {} ",
            self.at.as_secs_f64(),
            self.link,
            self.direction.as_str()
        )?;
        for b in &self.bytes {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl TraceEntry {
    /// Parses a line written by the `Display` impl.
    pub fn parse(line: &str) -> Option<TraceEntry> {
        let mut parts = line.split_whitespace();
        let at = parts.next()?.parse::<f64>().ok()?;
        let link = parts.next()?.to_string();
        let direction = match parts.next()? {
            "M->S" => Direction::MasterToSlave,
            "S->M" => Direction::SlaveToMaster,
            _ => return None,
        };
        let hex = parts.next().unwrap_or("");
        if !hex.len().is_multiple_of(2) || parts.next().is_some() {
            return None;
        }
        let bytes = (0..hex.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&hex[i..i + 2], 16).ok())
            .collect::<Option<Vec<u8>>>()?;
        Some(TraceEntry {
            at: Duration::from_secs_f64(at.max(0.0)),
            link,
            direction,
            bytes,
        })
    }
}

/// Shared, append-only trace.
#[derive(Debug, Clone, Default)]
pub struct ModbusTrace {
    entries: Arc<Mutex<Vec<TraceEntry>>>,
}

impl ModbusTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, at: Duration, link: &str, direction: Direction, bytes: &[u8]) {
        self.entries.lock().unwrap().push(TraceEntry {
            at,
            link: link.to_string(),
            direction,
            bytes: bytes.to_vec(),
        });
    }

    pub fn entries(&self) -> Vec<TraceEntry> {
        self.entries.lock().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_format_parses_back() {
        let entry = TraceEntry {
            at: Duration::from_micros(4_010),
            link: "gw1".into(),
            direction: Direction::MasterToSlave,
            bytes: vec![0x01, 0x03, 0x00, 0x00, 0x00, 0x01, 0x84, 0x0a],
        };
        let line = entry.to_string();
        assert_eq!(line, "0.004010 gw1 M->S 010300000001840a");
        assert_eq!(TraceEntry::parse(&line), Some(entry));
        assert_eq!(TraceEntry::parse("0.1 gw1 sideways 00"), None);
        assert_eq!(TraceEntry::parse("0.1 gw1 M->S 0"), None);
    }
}
