//! Packet-level trace of MQTT traffic as seen at the broker.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::codec::{decode_packet, MqttPacket};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MqttDirection {
    ToBroker,
    ToClient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MqttTraceEntry {
    pub at: Duration,
    /// Label of the client end of the connection.
    pub client: String,
    pub direction: MqttDirection,
    pub bytes: Vec<u8>,
}

impl MqttTraceEntry {
    pub fn packet(&self) -> Option<MqttPacket> {
        decode_packet(&self.bytes).ok().map(|(p, _)| p)
    }

    pub fn is_publish(&self) -> bool {
        self.bytes.first().is_some_and(|b| b >> 4 == 3)
    }

    /// Retain flag of a PUBLISH, read straight from the first byte.
    pub fn retain_bit(&self) -> bool {
        self.is_publish() && self.bytes[0] & 0x01 != 0
    }
}

#[derive(Debug, Clone, Default)]
pub struct MqttTrace {
    entries: Arc<Mutex<Vec<MqttTraceEntry>>>,
}

impl MqttTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, at: Duration, client: &str, direction: MqttDirection, bytes: &[u8]) {
        self.entries.lock().unwrap().push(MqttTraceEntry {
            at,
            client: client.to_string(),
            direction,
            bytes: bytes.to_vec(),
        });
    }

    pub fn entries(&self) -> Vec<MqttTraceEntry> {
        self.entries.lock().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Splits complete packets off the front of a byte stream using only the
/// fixed header, leaving a trailing partial packet in `buf`.
pub fn split_packets(buf: &mut Vec<u8>) -> Vec<Vec<u8>> {
    let mut packets = Vec::new();
    loop {
        if buf.is_empty() {
            break;
        }
        let Ok((len, used)) = super::codec::decode_remaining_length(&buf[1..]) else {
            break;
        };
        let total = 1 + used + len as usize;
        if buf.len() < total {
            break;
        }
        packets.push(buf.drain(..total).collect());
    }
    packets
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_keeps_partial_tail() {
        let mut buf = vec![0xC0, 0x00, 0x30, 0x05, 0x00, 0x01, b't', 0x01];
        let packets = split_packets(&mut buf);
        assert_eq!(packets, vec![vec![0xC0, 0x00]]);
        assert_eq!(buf.len(), 6);
        buf.push(0x02);
        assert_eq!(split_packets(&mut buf).len(), 1);
        assert!(buf.is_empty());
    }
}
