//! Serial line parameters and the character timing derived from them.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    None,
    Even,
    Odd,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SerialParamsError {
    #[error("baud rate must be positive")]
    ZeroBaud,
    #[error("data bits must be 7 or 8, got {0}")]
    DataBits(u8),
    #[error("stop bits must be 1 or 2, got {0}")]
    StopBits(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SerialParams {
    pub baud: u32,
    pub parity: Parity,
    pub data_bits: u8,
    pub stop_bits: u8,
}

impl Default for SerialParams {
    /// 9600 bps, even parity, 8 data bits, 1 stop bit.
    fn default() -> Self {
        SerialParams {
            baud: 9600,
            parity: Parity::Even,
            data_bits: 8,
            stop_bits: 1,
        }
    }
}

impl SerialParams {
    pub fn validate(&self) -> Result<(), SerialParamsError> {
        if self.baud == 0 {
            return Err(SerialParamsError::ZeroBaud);
        }
        if !matches!(self.data_bits, 7 | 8) {
            return Err(SerialParamsError::DataBits(self.data_bits));
        }
        if !matches!(self.stop_bits, 1 | 2) {
            return Err(SerialParamsError::StopBits(self.stop_bits));
        }
        Ok(())
    }

    /// Bits on the wire per character: start + data + parity + stop.
    pub fn bits_per_char(&self) -> u32 {
        let parity = if self.parity == Parity::None { 0 } else { 1 };
        1 + u32::from(self.data_bits) + parity + u32::from(self.stop_bits)
    }

    pub fn char_time(&self) -> Duration {
        Duration::from_nanos(u64::from(self.bits_per_char()) * 1_000_000_000 / u64::from(self.baud))
    }

    /// Silent interval that delimits RTU frames: 3.5 character times.
    pub fn frame_gap(&self) -> Duration {
        self.char_time() * 7 / 2
    }

    pub fn transmit_time(&self, bytes: usize) -> Duration {
        self.char_time() * bytes as u32
    }
}
