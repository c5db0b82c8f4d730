//! Slave side: request handling against a [`DataStore`] and the byte-level endpoint.

use std::time::Duration;

use super::frame::{decode_adu, DecodeError, ExceptionCode, Pdu, Role, RtuFrame, SlaveAddress};
use super::framer::{Framer, FramingMode};
use super::serial::SerialParams;
use super::store::{DataStore, StoreLayout};

/// Executes a decoded request. `None` means the slave stays silent.
pub fn slave_handle(
    request: &RtuFrame,
    store: &mut DataStore,
    my_address: SlaveAddress,
) -> Option<RtuFrame> {
    let broadcast = request.slave().is_broadcast();
    if !broadcast && request.slave() != my_address {
        return None;
    }
    let function = request.pdu().function();
    let outcome: Result<Pdu, ExceptionCode> =
        match request.pdu() {
            Pdu::ReadHoldingRegistersReq { start, quantity } => {
                if broadcast {
                    return None;
                }
                store
                    .read_registers(*start, *quantity)
                    .map(|registers| Pdu::ReadHoldingRegistersResp { registers })
            }
            Pdu::WriteSingleCoilReq { address, state } => store
                .write_coils(*address, &[*state])
                .map(|()| Pdu::WriteSingleCoilResp {
                    address: *address,
                    state: *state,
                }),
            Pdu::WriteMultipleCoilsReq { start, states } => {
                store
                    .write_coils(*start, states)
                    .map(|()| Pdu::WriteMultipleCoilsResp {
                        start: *start,
                        quantity: states.len() as u16,
                    })
            }
            // responses addressed to a slave are not requests
            _ => return None,
        };
    if broadcast {
        return None;
    }
    let pdu = outcome.unwrap_or_else(|code| Pdu::Exception { function, code });
    Some(RtuFrame::new(my_address, pdu).expect("response derived from a valid request"))
}

/// Counters kept by a slave endpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SlaveStats {
    pub frames: u64,
    pub discarded: u64,
    pub responses: u64,
    pub exceptions: u64,
}

/// Byte-level device: receives timestamped bytes, emits response ADUs.
pub trait SerialDevice {
    fn receive(&mut self, bytes: &[(u8, Duration)]) -> Vec<Vec<u8>>;

    /// The receive line has been idle until `now`.
    fn idle(&mut self, now: Duration) -> Vec<Vec<u8>>;
}

#[derive(Debug, Clone)]
pub struct Slave {
    address: SlaveAddress,
    store: DataStore,
    framer: Framer,
    stats: SlaveStats,
}

impl Slave {
    pub fn new(
        address: SlaveAddress,
        layout: StoreLayout,
        mode: FramingMode,
        serial: &SerialParams,
    ) -> Self {
        Slave {
            address,
            store: DataStore::new(layout),
            framer: Framer::new(mode, serial),
            stats: SlaveStats::default(),
        }
    }

    pub fn address(&self) -> SlaveAddress {
        self.address
    }

    pub fn store(&self) -> &DataStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut DataStore {
        &mut self.store
    }

    pub fn stats(&self) -> SlaveStats {
        self.stats
    }

    /// Handles one delimited ADU. A frame failing its CRC is dropped without reply.
    pub fn on_frame(&mut self, adu: &[u8]) -> Option<Vec<u8>> {
        self.stats.frames += 1;
        let response = match decode_adu(adu, Role::Slave) {
            Ok(request) => slave_handle(&request, &mut self.store, self.address),
            Err(DecodeError::InvalidValue { function, .. }) if adu[0] == self.address.get() => {
                let pdu = Pdu::Exception {
                    function,
                    code: ExceptionCode::IllegalDataValue,
                };
                Some(RtuFrame::new(self.address, pdu).expect("exception pdu is always valid"))
            }
            Err(err) => {
                tracing::debug!(slave = %self.address, %err, "discarding frame");
                None
            }
        };
        match response {
            Some(frame) => {
                self.stats.responses += 1;
                if matches!(frame.pdu(), Pdu::Exception { .. }) {
                    self.stats.exceptions += 1;
                }
                Some(frame.encode())
            }
            None => {
                self.stats.discarded += 1;
                None
            }
        }
    }
}

impl SerialDevice for Slave {
    fn receive(&mut self, bytes: &[(u8, Duration)]) -> Vec<Vec<u8>> {
        let frames = match self.framer.mode() {
            FramingMode::Gap => self.framer.push_timed(bytes.iter().copied()),
            FramingMode::Boundary => {
                let raw: Vec<u8> = bytes.iter().map(|(b, _)| *b).collect();
                let at = bytes.last().map(|(_, t)| *t).unwrap_or_default();
                self.framer.push(&raw, at)
            }
        };
        frames.iter().filter_map(|f| self.on_frame(f)).collect()
    }

    fn idle(&mut self, now: Duration) -> Vec<Vec<u8>> {
        self.framer
            .poll(now)
            .and_then(|f| self.on_frame(&f))
            .into_iter()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(a: u8) -> SlaveAddress {
        SlaveAddress::new(a).unwrap()
    }

    fn store() -> DataStore {
        DataStore::new(StoreLayout::default())
    }

    #[test]
    fn read_returns_stored_value() {
        let mut s = store();
        s.set_register(0, 1);
        let req = RtuFrame::read_holding_registers(addr(1), 0, 1).unwrap();
        let resp = slave_handle(&req, &mut s, addr(1)).unwrap();
        assert_eq!(
            resp.pdu(),
            &Pdu::ReadHoldingRegistersResp { registers: vec![1] }
        );
    }

    #[test]
    fn single_coil_write_echoes() {
        let mut s = store();
        let req = RtuFrame::write_single_coil(addr(1), 0, true);
        let resp = slave_handle(&req, &mut s, addr(1)).unwrap();
        assert_eq!(resp.encode(), req.encode());
        assert!(s.coil(0));
    }

    #[test]
    fn out_of_window_read_is_exception_two() {
        let mut s = store();
        let req = RtuFrame::read_holding_registers(addr(1), 500, 1).unwrap();
        let resp = slave_handle(&req, &mut s, addr(1)).unwrap();
        assert_eq!(
            resp.pdu(),
            &Pdu::Exception {
                function: super::super::frame::FunctionCode::ReadHoldingRegisters,
                code: ExceptionCode::IllegalDataAddress
            }
        );
        assert_eq!(resp.encode()[1], 0x83);
    }

    #[test]
    fn other_address_is_silent() {
        let mut s = store();
        let req = RtuFrame::write_single_coil(addr(2), 0, true);
        assert!(slave_handle(&req, &mut s, addr(1)).is_none());
        assert!(!s.coil(0));
    }

    #[test]
    fn broadcast_write_applies_silently() {
        let mut s = store();
        let req =
            RtuFrame::write_multiple_coils(SlaveAddress::BROADCAST, 0, vec![true, true]).unwrap();
        assert!(slave_handle(&req, &mut s, addr(1)).is_none());
        assert_eq!(s.read_coils(0, 2).unwrap(), vec![true, true]);
        let read = RtuFrame::read_holding_registers(SlaveAddress::BROADCAST, 0, 1).unwrap();
        assert!(slave_handle(&read, &mut s, addr(1)).is_none());
    }

    #[test]
    fn endpoint_drops_bad_crc_and_answers_good_frames() {
        let mut slave = Slave::new(
            addr(1),
            StoreLayout::default(),
            FramingMode::Boundary,
            &SerialParams::default(),
        );
        let mut bytes = RtuFrame::read_holding_registers(addr(1), 0, 1)
            .unwrap()
            .encode();
        assert!(slave.on_frame(&bytes).is_some());
        bytes[3] ^= 0x10;
        assert!(slave.on_frame(&bytes).is_none());
        assert_eq!(slave.stats().discarded, 1);
    }

    #[test]
    fn bad_coil_value_gets_illegal_data_value() {
        let mut slave = Slave::new(
            addr(1),
            StoreLayout::default(),
            FramingMode::Boundary,
            &SerialParams::default(),
        );
        let mut body = vec![0x01, 0x05, 0x00, 0x00, 0x12, 0x34];
        body.extend_from_slice(&super::super::crc::crc16_wire(&body));
        let resp = slave.on_frame(&body).unwrap();
        assert_eq!(&resp[..3], &[0x01, 0x85, 0x03]);
    }

    #[test]
    fn gap_mode_endpoint_answers_after_silence() {
        let serial = SerialParams::default();
        let mut slave = Slave::new(addr(1), StoreLayout::default(), FramingMode::Gap, &serial);
        let req = RtuFrame::read_holding_registers(addr(1), 0, 1)
            .unwrap()
            .encode();
        let ct = serial.char_time();
        let timed: Vec<_> = req
            .iter()
            .enumerate()
            .map(|(i, b)| (*b, ct * i as u32))
            .collect();
        assert!(slave.receive(&timed).is_empty());
        let end = ct * 7;
        assert!(slave.idle(end + ct).is_empty());
        assert_eq!(slave.idle(end + serial.frame_gap()).len(), 1);
    }
}
