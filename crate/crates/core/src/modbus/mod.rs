//! Modbus RTU: frame codec, serial timing, framing, and master/slave endpoints.

pub mod crc;
pub mod frame;
pub mod framer;
pub mod link;
pub mod master;
pub mod serial;
pub mod slave;
pub mod store;
pub mod trace;

pub use crc::crc16;
pub use frame::{
    decode_adu, encode_adu, pack_coils, unpack_coils, DecodeError, ExceptionCode, FrameError,
    FunctionCode, Pdu, Role, RtuFrame, SlaveAddress,
};
pub use framer::{Framer, FramingMode};
pub use link::{
    serve_serial_device, FaultPlan, FaultStats, FaultyTransport, SimSerialLink, TcpSerialLink,
};
pub use master::{master_execute, Exchange, Master, MasterError, MasterTiming, SerialTransport};
pub use serial::{Parity, SerialParams};
pub use slave::{slave_handle, SerialDevice, Slave};
pub use store::{DataStore, StoreLayout};
pub use trace::{Direction, ModbusTrace, TraceEntry};
