//! Modbus RTU application data units.
//!
//! Layout on the wire: `[address][function][data...][crc-lo][crc-hi]`.
//! Only the three function codes the bridge needs are understood:
//! 0x03 Read Holding Registers, 0x05 Write Single Coil and
//! 0x0F Write Multiple Coils, plus their exception responses.

use std::fmt;

use thiserror::Error;

use super::crc::{crc16, crc16_wire};

pub const MAX_READ_REGISTERS: u16 = 125;
pub const MAX_WRITE_COILS: u16 = 1968;
/// Smallest possible ADU: address, function, two CRC bytes.
pub const MIN_ADU_LEN: usize = 4;
pub const MAX_ADU_LEN: usize = 256;

const COIL_ON: u16 = 0xFF00;
const COIL_OFF: u16 = 0x0000;
const EXCEPTION_FLAG: u8 = 0x80;

/// Errors raised when constructing a frame that would violate protocol bounds.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("slave address {0} is outside 0..=247")]
    AddressOutOfRange(u8),
    #[error("quantity {quantity} is outside 1..={max}")]
    QuantityOutOfRange { quantity: usize, max: u16 },
    #[error("range starting at {start} with {quantity} items exceeds the 16-bit address space")]
    AddressOverflow { start: u16, quantity: usize },
    #[error("{0:?} is not a request")]
    NotARequest(FunctionCode),
}

/// Errors raised while decoding received bytes.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("frame too short: {0} bytes")]
    FrameTooShort(usize),
    #[error("CRC mismatch: computed {computed:#06x}, received {received:#06x}")]
    CrcMismatch { computed: u16, received: u16 },
    #[error("unknown function code {0:#04x}")]
    UnknownFunction(u8),
    #[error("length mismatch: expected {expected} bytes, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid slave address {0}")]
    InvalidAddress(u8),
    #[error("invalid data for {function:?}: {reason}")]
    InvalidValue {
        function: FunctionCode,
        reason: &'static str,
    },
}

/// A Modbus slave address. 0 is broadcast, 1..=247 are unicast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SlaveAddress(u8);

impl SlaveAddress {
    pub const BROADCAST: SlaveAddress = SlaveAddress(0);
    pub const MAX: u8 = 247;

    pub fn new(value: u8) -> Result<Self, FrameError> {
        if value > Self::MAX {
            return Err(FrameError::AddressOutOfRange(value));
        }
        Ok(SlaveAddress(value))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn is_broadcast(self) -> bool {
        self.0 == 0
    }
}

impl TryFrom<u8> for SlaveAddress {
    type Error = FrameError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        SlaveAddress::new(value)
    }
}

impl fmt::Display for SlaveAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FunctionCode {
    ReadHoldingRegisters = 0x03,
    WriteSingleCoil = 0x05,
    WriteMultipleCoils = 0x0F,
}

impl FunctionCode {
    pub fn from_u8(code: u8) -> Option<Self> {
        match code {
            0x03 => Some(Self::ReadHoldingRegisters),
            0x05 => Some(Self::WriteSingleCoil),
            0x0F => Some(Self::WriteMultipleCoils),
            _ => None,
        }
    }

    pub fn value(self) -> u8 {
        self as u8
    }

    /// Function byte carried by an exception response.
    pub fn exception_value(self) -> u8 {
        self as u8 + EXCEPTION_FLAG
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::ReadHoldingRegisters => "Read Holding Registers",
            Self::WriteSingleCoil => "Write Single Coil",
            Self::WriteMultipleCoils => "Write Multiple Coils",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ExceptionCode {
    IllegalFunction = 0x01,
    IllegalDataAddress = 0x02,
    IllegalDataValue = 0x03,
    SlaveDeviceFailure = 0x04,
}

impl ExceptionCode {
    pub fn from_u8(code: u8) -> Option<Self> {
        match code {
            0x01 => Some(Self::IllegalFunction),
            0x02 => Some(Self::IllegalDataAddress),
            0x03 => Some(Self::IllegalDataValue),
            0x04 => Some(Self::SlaveDeviceFailure),
            _ => None,
        }
    }

    pub fn value(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for ExceptionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::IllegalFunction => "Illegal Function",
            Self::IllegalDataAddress => "Illegal Data Address",
            Self::IllegalDataValue => "Illegal Data Value",
            Self::SlaveDeviceFailure => "Slave Device Failure",
        };
        write!(f, "{name} ({:02})", self.value())
    }
}

/// Function code plus function-specific data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pdu {
    ReadHoldingRegistersReq {
        start: u16,
        quantity: u16,
    },
    ReadHoldingRegistersResp {
        registers: Vec<u16>,
    },
    WriteSingleCoilReq {
        address: u16,
        state: bool,
    },
    WriteSingleCoilResp {
        address: u16,
        state: bool,
    },
    WriteMultipleCoilsReq {
        start: u16,
        states: Vec<bool>,
    },
    WriteMultipleCoilsResp {
        start: u16,
        quantity: u16,
    },
    Exception {
        function: FunctionCode,
        code: ExceptionCode,
    },
}

impl Pdu {
    pub fn function(&self) -> FunctionCode {
        match self {
            Pdu::ReadHoldingRegistersReq { .. } | Pdu::ReadHoldingRegistersResp { .. } => {
                FunctionCode::ReadHoldingRegisters
            }
            Pdu::WriteSingleCoilReq { .. } | Pdu::WriteSingleCoilResp { .. } => {
                FunctionCode::WriteSingleCoil
            }
            Pdu::WriteMultipleCoilsReq { .. } | Pdu::WriteMultipleCoilsResp { .. } => {
                FunctionCode::WriteMultipleCoils
            }
            Pdu::Exception { function, .. } => *function,
        }
    }

    /// The byte placed in the function field on the wire.
    pub fn wire_function(&self) -> u8 {
        match self {
            Pdu::Exception { function, .. } => function.exception_value(),
            other => other.function().value(),
        }
    }

    pub fn is_request(&self) -> bool {
        matches!(
            self,
            Pdu::ReadHoldingRegistersReq { .. }
                | Pdu::WriteSingleCoilReq { .. }
                | Pdu::WriteMultipleCoilsReq { .. }
        )
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        match self {
            Pdu::ReadHoldingRegistersReq { start, quantity } => {
                check_range(*start, usize::from(*quantity), MAX_READ_REGISTERS)
            }
            Pdu::ReadHoldingRegistersResp { registers } => {
                check_quantity(registers.len(), MAX_READ_REGISTERS)
            }
            Pdu::WriteMultipleCoilsReq { start, states } => {
                check_range(*start, states.len(), MAX_WRITE_COILS)
            }
            Pdu::WriteMultipleCoilsResp { start, quantity } => {
                check_range(*start, usize::from(*quantity), MAX_WRITE_COILS)
            }
            Pdu::WriteSingleCoilReq { .. }
            | Pdu::WriteSingleCoilResp { .. }
            | Pdu::Exception { .. } => Ok(()),
        }
    }

    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(self.wire_function());
        match self {
            Pdu::ReadHoldingRegistersReq { start, quantity } => {
                out.extend_from_slice(&start.to_be_bytes());
                out.extend_from_slice(&quantity.to_be_bytes());
            }
            Pdu::ReadHoldingRegistersResp { registers } => {
                out.push((registers.len() * 2) as u8);
                for word in registers {
                    out.extend_from_slice(&word.to_be_bytes());
                }
            }
            Pdu::WriteSingleCoilReq { address, state }
            | Pdu::WriteSingleCoilResp { address, state } => {
                out.extend_from_slice(&address.to_be_bytes());
                let value = if *state { COIL_ON } else { COIL_OFF };
                out.extend_from_slice(&value.to_be_bytes());
            }
            Pdu::WriteMultipleCoilsReq { start, states } => {
                out.extend_from_slice(&start.to_be_bytes());
                out.extend_from_slice(&(states.len() as u16).to_be_bytes());
                let (count, packed) =
                    pack_coils(states).expect("coil quantity validated at construction");
                out.push(count);
                out.extend_from_slice(&packed);
            }
            Pdu::WriteMultipleCoilsResp { start, quantity } => {
                out.extend_from_slice(&start.to_be_bytes());
                out.extend_from_slice(&quantity.to_be_bytes());
            }
            Pdu::Exception { code, .. } => out.push(code.value()),
        }
    }
}

fn check_quantity(quantity: usize, max: u16) -> Result<(), FrameError> {
    if quantity == 0 || quantity > usize::from(max) {
        return Err(FrameError::QuantityOutOfRange { quantity, max });
    }
    Ok(())
}

fn check_range(start: u16, quantity: usize, max: u16) -> Result<(), FrameError> {
    check_quantity(quantity, max)?;
    if usize::from(start) + quantity > 0x1_0000 {
        return Err(FrameError::AddressOverflow { start, quantity });
    }
    Ok(())
}

/// A complete RTU frame. The CRC is computed on encode and checked on decode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtuFrame {
    slave: SlaveAddress,
    pdu: Pdu,
}

impl RtuFrame {
    pub fn new(slave: SlaveAddress, pdu: Pdu) -> Result<Self, FrameError> {
        pdu.validate()?;
        Ok(RtuFrame { slave, pdu })
    }

    pub fn read_holding_registers(
        slave: SlaveAddress,
        start: u16,
        quantity: u16,
    ) -> Result<Self, FrameError> {
        Self::new(slave, Pdu::ReadHoldingRegistersReq { start, quantity })
    }

    pub fn write_single_coil(slave: SlaveAddress, address: u16, state: bool) -> Self {
        RtuFrame {
            slave,
            pdu: Pdu::WriteSingleCoilReq { address, state },
        }
    }

    pub fn write_multiple_coils(
        slave: SlaveAddress,
        start: u16,
        states: Vec<bool>,
    ) -> Result<Self, FrameError> {
        Self::new(slave, Pdu::WriteMultipleCoilsReq { start, states })
    }

    pub fn slave(&self) -> SlaveAddress {
        self.slave
    }

    pub fn pdu(&self) -> &Pdu {
        &self.pdu
    }

    pub fn into_pdu(self) -> Pdu {
        self.pdu
    }

    pub fn encode(&self) -> Vec<u8> {
        encode_adu(self)
    }
}

/// Which side of the link is decoding: a slave parses requests, a master parses responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Master,
    Slave,
}

pub fn encode_adu(frame: &RtuFrame) -> Vec<u8> {
    let mut out = Vec::with_capacity(MAX_ADU_LEN);
    out.push(frame.slave.get());
    frame.pdu.encode_into(&mut out);
    let crc = crc16_wire(&out);
    out.extend_from_slice(&crc);
    out
}

/// Checks the trailing CRC of `bytes` and returns the covered body.
pub fn verify_crc(bytes: &[u8]) -> Result<&[u8], DecodeError> {
    if bytes.len() < MIN_ADU_LEN {
        return Err(DecodeError::FrameTooShort(bytes.len()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 2);
    let received = u16::from_le_bytes([tail[0], tail[1]]);
    let computed = crc16(body);
    if computed != received {
        return Err(DecodeError::CrcMismatch { computed, received });
    }
    Ok(body)
}

pub fn decode_adu(bytes: &[u8], role: Role) -> Result<RtuFrame, DecodeError> {
    let body = verify_crc(bytes)?;
    let address = body[0];
    let slave = SlaveAddress::new(address).map_err(|_| DecodeError::InvalidAddress(address))?;
    let function_byte = body[1];
    let data = &body[2..];
    let pdu = match role {
        Role::Slave => decode_request(function_byte, data, bytes.len())?,
        Role::Master => decode_response(function_byte, data, bytes.len())?,
    };
    Ok(RtuFrame { slave, pdu })
}

fn expect_len(data: &[u8], data_len: usize, frame_len: usize) -> Result<(), DecodeError> {
    if data.len() != data_len {
        return Err(DecodeError::LengthMismatch {
            expected: frame_len - data.len() + data_len,
            actual: frame_len,
        });
    }
    Ok(())
}

fn be_u16(data: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([data[at], data[at + 1]])
}

fn decode_coil_value(function: FunctionCode, value: u16) -> Result<bool, DecodeError> {
    match value {
        COIL_ON => Ok(true),
        COIL_OFF => Ok(false),
        _ => Err(DecodeError::InvalidValue {
            function,
            reason: "coil value must be 0xFF00 or 0x0000",
        }),
    }
}

fn invalid(function: FunctionCode, reason: &'static str) -> DecodeError {
    DecodeError::InvalidValue { function, reason }
}

fn decode_request(function_byte: u8, data: &[u8], frame_len: usize) -> Result<Pdu, DecodeError> {
    let function =
        FunctionCode::from_u8(function_byte).ok_or(DecodeError::UnknownFunction(function_byte))?;
    let pdu = match function {
        FunctionCode::ReadHoldingRegisters => {
            expect_len(data, 4, frame_len)?;
            Pdu::ReadHoldingRegistersReq {
                start: be_u16(data, 0),
                quantity: be_u16(data, 2),
            }
        }
        FunctionCode::WriteSingleCoil => {
            expect_len(data, 4, frame_len)?;
            Pdu::WriteSingleCoilReq {
                address: be_u16(data, 0),
                state: decode_coil_value(function, be_u16(data, 2))?,
            }
        }
        FunctionCode::WriteMultipleCoils => {
            if data.len() < 5 {
                return Err(DecodeError::LengthMismatch {
                    expected: frame_len - data.len() + 5,
                    actual: frame_len,
                });
            }
            let start = be_u16(data, 0);
            let quantity = be_u16(data, 2);
            let byte_count = usize::from(data[4]);
            expect_len(data, 5 + byte_count, frame_len)?;
            if quantity == 0 || quantity > MAX_WRITE_COILS {
                return Err(invalid(function, "coil quantity out of range"));
            }
            let states = unpack_coils(&data[5..], quantity)
                .ok_or_else(|| invalid(function, "byte count inconsistent with quantity"))?;
            Pdu::WriteMultipleCoilsReq { start, states }
        }
    };
    pdu.validate()
        .map_err(|_| invalid(function, "quantity or address range out of bounds"))?;
    Ok(pdu)
}

fn decode_response(function_byte: u8, data: &[u8], frame_len: usize) -> Result<Pdu, DecodeError> {
    if function_byte & EXCEPTION_FLAG != 0 {
        let function = FunctionCode::from_u8(function_byte & !EXCEPTION_FLAG)
            .ok_or(DecodeError::UnknownFunction(function_byte))?;
        expect_len(data, 1, frame_len)?;
        let code = ExceptionCode::from_u8(data[0])
            .ok_or_else(|| invalid(function, "unknown exception code"))?;
        return Ok(Pdu::Exception { function, code });
    }
    let function =
        FunctionCode::from_u8(function_byte).ok_or(DecodeError::UnknownFunction(function_byte))?;
    let pdu = match function {
        FunctionCode::ReadHoldingRegisters => {
            if data.is_empty() {
                return Err(DecodeError::LengthMismatch {
                    expected: frame_len + 1,
                    actual: frame_len,
                });
            }
            let byte_count = usize::from(data[0]);
            expect_len(data, 1 + byte_count, frame_len)?;
            if byte_count % 2 != 0 {
                return Err(invalid(function, "odd register byte count"));
            }
            let registers = data[1..].chunks_exact(2).map(|w| be_u16(w, 0)).collect();
            Pdu::ReadHoldingRegistersResp { registers }
        }
        FunctionCode::WriteSingleCoil => {
            expect_len(data, 4, frame_len)?;
            Pdu::WriteSingleCoilResp {
                address: be_u16(data, 0),
                state: decode_coil_value(function, be_u16(data, 2))?,
            }
        }
        FunctionCode::WriteMultipleCoils => {
            expect_len(data, 4, frame_len)?;
            Pdu::WriteMultipleCoilsResp {
                start: be_u16(data, 0),
                quantity: be_u16(data, 2),
            }
        }
    };
    pdu.validate()
        .map_err(|_| invalid(function, "quantity or address range out of bounds"))?;
    Ok(pdu)
}

/// Packs coil states LSB-first into bytes, zero-padding the last byte.
pub fn pack_coils(states: &[bool]) -> Result<(u8, Vec<u8>), FrameError> {
    check_quantity(states.len(), MAX_WRITE_COILS)?;
    let mut packed = vec![0u8; states.len().div_ceil(8)];
    for (i, _) in states.iter().enumerate().filter(|(_, on)| **on) {
        packed[i / 8] |= 1 << (i % 8);
    }
    Ok((packed.len() as u8, packed))
}

/// Inverse of [`pack_coils`]. Returns `None` when the byte count does not
/// match `quantity` or padding bits are set.
pub fn unpack_coils(packed: &[u8], quantity: u16) -> Option<Vec<bool>> {
    let quantity = usize::from(quantity);
    if packed.len() != quantity.div_ceil(8) {
        return None;
    }
    let states: Vec<bool> = (0..quantity)
        .map(|i| packed[i / 8] & (1 << (i % 8)) != 0)
        .collect();
    let used_bits = quantity % 8;
    if used_bits != 0 && packed[packed.len() - 1] >> used_bits != 0 {
        return None;
    }
    Some(states)
}

impl fmt::Display for RtuFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "slave {}, ", self.slave)?;
        match &self.pdu {
            Pdu::ReadHoldingRegistersReq { start, quantity } => {
                write!(f, "Read Holding Registers, start {start}, qty {quantity}")
            }
            Pdu::ReadHoldingRegistersResp { registers } => {
                write!(
                    f,
                    "Read Holding Registers response, registers {registers:?}"
                )
            }
            Pdu::WriteSingleCoilReq { address, state } => write!(
                f,
                "Write Single Coil, address {address}, {}",
                if *state { "ON" } else { "OFF" }
            ),
            Pdu::WriteSingleCoilResp { address, state } => write!(
                f,
                "Write Single Coil response, address {address}, {}",
                if *state { "ON" } else { "OFF" }
            ),
            Pdu::WriteMultipleCoilsReq { start, states } => {
                let bits: String = states.iter().map(|s| if *s { '1' } else { '0' }).collect();
                write!(
                    f,
                    "Write Multiple Coils, start {start}, qty {}, states {bits}",
                    states.len()
                )
            }
            Pdu::WriteMultipleCoilsResp { start, quantity } => write!(
                f,
                "Write Multiple Coils response, start {start}, qty {quantity}"
            ),
            Pdu::Exception { function, code } => {
                write!(f, "Exception for {}, {code}", function.name())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(a: u8) -> SlaveAddress {
        SlaveAddress::new(a).unwrap()
    }

    #[test]
    fn slave_address_bounds() {
        assert!(SlaveAddress::new(0).unwrap().is_broadcast());
        assert_eq!(SlaveAddress::new(247).unwrap().get(), 247);
        for bad in 248..=255u8 {
            assert_eq!(
                SlaveAddress::new(bad),
                Err(FrameError::AddressOutOfRange(bad))
            );
        }
    }

    #[test]
    fn encode_read_holding_request() {
        let frame = RtuFrame::read_holding_registers(addr(1), 0, 1).unwrap();
        assert_eq!(
            frame.encode(),
            [0x01, 0x03, 0x00, 0x00, 0x00, 0x01, 0x84, 0x0A]
        );
    }

    #[test]
    fn encode_write_single_coil_on() {
        let frame = RtuFrame::write_single_coil(addr(2), 0, true);
        assert_eq!(
            frame.encode(),
            [0x02, 0x05, 0x00, 0x00, 0xFF, 0x00, 0x8C, 0x09]
        );
    }

    #[test]
    fn encode_write_multiple_coils() {
        let frame = RtuFrame::write_multiple_coils(addr(1), 0, vec![true, false]).unwrap();
        assert_eq!(
            frame.encode(),
            [0x01, 0x0F, 0x00, 0x00, 0x00, 0x02, 0x01, 0x01, 0x1F, 0x57]
        );
    }

    #[test]
    fn decode_exception_response() {
        let bytes = [0x01, 0x83, 0x02, 0xC0, 0xF1];
        let frame = decode_adu(&bytes, Role::Master).unwrap();
        assert_eq!(
            frame.pdu(),
            &Pdu::Exception {
                function: FunctionCode::ReadHoldingRegisters,
                code: ExceptionCode::IllegalDataAddress
            }
        );
        assert_eq!(FunctionCode::ReadHoldingRegisters.exception_value(), 0x83);
        assert_eq!(frame.encode(), bytes);
    }

    #[test]
    fn flipped_crc_byte_is_rejected() {
        let mut bytes = [0x01, 0x03, 0x00, 0x00, 0x00, 0x01, 0x84, 0x0A];
        bytes[7] ^= 0x01;
        assert!(matches!(
            decode_adu(&bytes, Role::Slave),
            Err(DecodeError::CrcMismatch { .. })
        ));
    }

    #[test]
    fn short_frames_are_rejected() {
        assert_eq!(
            decode_adu(&[0x01, 0x03, 0x00], Role::Slave),
            Err(DecodeError::FrameTooShort(3))
        );
        assert_eq!(
            decode_adu(&[], Role::Master),
            Err(DecodeError::FrameTooShort(0))
        );
    }

    fn with_crc(body: &[u8]) -> Vec<u8> {
        let mut v = body.to_vec();
        v.extend_from_slice(&crc16_wire(body));
        v
    }

    #[test]
    fn unknown_function_codes() {
        let read_coils = with_crc(&[0x01, 0x01, 0x00, 0x00, 0x00, 0x01]);
        assert_eq!(
            decode_adu(&read_coils, Role::Slave),
            Err(DecodeError::UnknownFunction(0x01))
        );
        let exc = with_crc(&[0x01, 0x84, 0x02]);
        assert_eq!(
            decode_adu(&exc, Role::Master),
            Err(DecodeError::UnknownFunction(0x84))
        );
        // exceptions are responses, a slave never parses one
        let exc = with_crc(&[0x01, 0x83, 0x02]);
        assert_eq!(
            decode_adu(&exc, Role::Slave),
            Err(DecodeError::UnknownFunction(0x83))
        );
    }

    #[test]
    fn byte_count_mismatch() {
        // claims 4 data bytes, carries 2
        let resp = with_crc(&[0x01, 0x03, 0x04, 0x00, 0x07]);
        assert!(matches!(
            decode_adu(&resp, Role::Master),
            Err(DecodeError::LengthMismatch { .. })
        ));
        // FC15 with a byte count that disagrees with the coil quantity
        let req = with_crc(&[0x01, 0x0F, 0x00, 0x00, 0x00, 0x09, 0x01, 0xFF]);
        assert!(matches!(
            decode_adu(&req, Role::Slave),
            Err(DecodeError::InvalidValue { .. })
        ));
    }

    #[test]
    fn coil_padding_bits_must_be_zero() {
        let req = with_crc(&[0x01, 0x0F, 0x00, 0x00, 0x00, 0x02, 0x01, 0x05]);
        assert!(decode_adu(&req, Role::Slave).is_err());
    }

    #[test]
    fn read_quantity_bounds() {
        assert!(RtuFrame::read_holding_registers(addr(1), 0, 0).is_err());
        assert!(RtuFrame::read_holding_registers(addr(1), 0, 126).is_err());
        assert!(RtuFrame::read_holding_registers(addr(1), 0, 125).is_ok());
        assert!(RtuFrame::read_holding_registers(addr(1), 0xFFFF, 2).is_err());
        assert!(RtuFrame::write_multiple_coils(addr(1), 0, vec![false; 1969]).is_err());
        assert!(RtuFrame::write_multiple_coils(addr(1), 0, vec![]).is_err());
    }

    #[test]
    fn pack_coils_examples() {
        assert_eq!(pack_coils(&[true]).unwrap(), (1, vec![0x01]));
        assert_eq!(pack_coils(&[true, false]).unwrap(), (1, vec![0x01]));
        assert_eq!(pack_coils(&[true; 9]).unwrap(), (2, vec![0xFF, 0x01]));
        assert!(matches!(
            pack_coils(&[]),
            Err(FrameError::QuantityOutOfRange { quantity: 0, .. })
        ));
        assert!(pack_coils(&vec![true; 1969]).is_err());
    }

    #[test]
    fn display_matches_operator_format() {
        let frame = RtuFrame::read_holding_registers(addr(1), 0, 1).unwrap();
        assert_eq!(
            frame.to_string(),
            "slave 1, Read Holding Registers, start 0, qty 1"
        );
    }
}
