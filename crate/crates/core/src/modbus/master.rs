//! Master side: one request in flight at a time, with timeout and retries.

use std::io;
use std::time::Duration;

use thiserror::Error;

use super::frame::{decode_adu, DecodeError, ExceptionCode, Pdu, Role, RtuFrame, SlaveAddress};
use super::serial::SerialParams;

/// The master's view of a serial line.
pub trait SerialTransport {
    fn now(&self) -> Duration;

    /// Transmits one ADU; returns once the last byte is on the line.
    fn send(&mut self, adu: &[u8]) -> io::Result<()>;

    /// Next complete frame received before `deadline`, if any.
    fn recv(&mut self, deadline: Duration) -> io::Result<Option<Vec<u8>>>;

    /// Keeps the line idle until `at`.
    fn wait_until(&mut self, at: Duration);
}

impl<T: SerialTransport + ?Sized> SerialTransport for &mut T {
    fn now(&self) -> Duration {
        (**self).now()
    }
    fn send(&mut self, adu: &[u8]) -> io::Result<()> {
        (**self).send(adu)
    }
    fn recv(&mut self, deadline: Duration) -> io::Result<Option<Vec<u8>>> {
        (**self).recv(deadline)
    }
    fn wait_until(&mut self, at: Duration) {
        (**self).wait_until(at)
    }
}

impl<T: SerialTransport + ?Sized> SerialTransport for Box<T> {
    fn now(&self) -> Duration {
        (**self).now()
    }
    fn send(&mut self, adu: &[u8]) -> io::Result<()> {
        (**self).send(adu)
    }
    fn recv(&mut self, deadline: Duration) -> io::Result<Option<Vec<u8>>> {
        (**self).recv(deadline)
    }
    fn wait_until(&mut self, at: Duration) {
        (**self).wait_until(at)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MasterTiming {
    pub response_timeout: Duration,
    pub inter_frame_delay: Duration,
    pub retries: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimingError {
    #[error("response timeout must be positive")]
    ZeroTimeout,
    #[error("inter-frame delay {delay:?} is shorter than 3.5 character times ({min:?})")]
    InterFrameTooShort { delay: Duration, min: Duration },
}

impl MasterTiming {
    /// 500 ms response timeout, one retry, inter-frame delay of exactly 3.5 characters.
    pub fn for_line(serial: &SerialParams) -> Self {
        MasterTiming {
            response_timeout: Duration::from_millis(500),
            inter_frame_delay: serial.frame_gap(),
            retries: 1,
        }
    }

    pub fn validate(&self, serial: &SerialParams) -> Result<(), TimingError> {
        if self.response_timeout.is_zero() {
            return Err(TimingError::ZeroTimeout);
        }
        let min = serial.frame_gap();
        if self.inter_frame_delay < min {
            return Err(TimingError::InterFrameTooShort {
                delay: self.inter_frame_delay,
                min,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum MasterError {
    #[error("no valid response after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("slave answered with exception {0}")]
    ExceptionReturned(ExceptionCode),
    #[error("response from slave {got}, expected {expected} ({attempts} attempts)")]
    AddressMismatch {
        expected: SlaveAddress,
        got: SlaveAddress,
        attempts: u32,
    },
    #[error("invalid response after {attempts} attempts: {reason}")]
    InvalidResponse { attempts: u32, reason: String },
    #[error("frame is not a request")]
    NotARequest,
    #[error("transport failure: {0}")]
    Transport(#[from] io::Error),
}

impl MasterError {
    /// Failures after which the request may have to be repeated later.
    pub fn is_timeout_like(&self) -> bool {
        matches!(
            self,
            MasterError::Timeout { .. }
                | MasterError::AddressMismatch { .. }
                | MasterError::InvalidResponse { .. }
        )
    }
}

/// Result of a completed transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exchange {
    /// `None` for broadcast requests.
    pub response: Option<RtuFrame>,
    pub attempts: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MasterStats {
    pub transactions: u64,
    pub attempts: u64,
    pub timeouts: u64,
    pub crc_errors: u64,
    pub failures: u64,
}

enum AttemptFailure {
    Timeout,
    Address(SlaveAddress),
    Invalid(String),
}

/// A Modbus master bound to one serial transport.
#[derive(Debug)]
pub struct Master<T> {
    transport: T,
    timing: MasterTiming,
    line_idle_since: Option<Duration>,
    stats: MasterStats,
}

impl<T: SerialTransport> Master<T> {
    pub fn new(transport: T, timing: MasterTiming) -> Self {
        Master {
            transport,
            timing,
            line_idle_since: None,
            stats: MasterStats::default(),
        }
    }

    pub fn timing(&self) -> &MasterTiming {
        &self.timing
    }

    pub fn stats(&self) -> MasterStats {
        self.stats
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    pub fn execute(&mut self, request: &RtuFrame) -> Result<Exchange, MasterError> {
        if !request.pdu().is_request() {
            return Err(MasterError::NotARequest);
        }
        self.stats.transactions += 1;
        let adu = request.encode();
        let max_attempts = self.timing.retries + 1;
        let mut failure = AttemptFailure::Timeout;
        for attempt in 1..=max_attempts {
            self.stats.attempts += 1;
            if let Some(idle) = self.line_idle_since {
                self.transport
                    .wait_until(idle + self.timing.inter_frame_delay);
            }
            self.transport.send(&adu)?;
            self.line_idle_since = Some(self.transport.now());
            if request.slave().is_broadcast() {
                return Ok(Exchange {
                    response: None,
                    attempts: attempt,
                });
            }
            let deadline = self.transport.now() + self.timing.response_timeout;
            let received = self.transport.recv(deadline)?;
            self.line_idle_since = Some(self.transport.now());
            let Some(bytes) = received else {
                self.stats.timeouts += 1;
                failure = AttemptFailure::Timeout;
                continue;
            };
            match decode_adu(&bytes, Role::Master) {
                Err(err) => {
                    if matches!(err, DecodeError::CrcMismatch { .. }) {
                        self.stats.crc_errors += 1;
                    }
                    failure = AttemptFailure::Invalid(err.to_string());
                }
                Ok(frame) if frame.slave() != request.slave() => {
                    failure = AttemptFailure::Address(frame.slave());
                }
                Ok(frame) => {
                    if let Pdu::Exception { function, code } = frame.pdu() {
                        if *function == request.pdu().function() {
                            return Err(MasterError::ExceptionReturned(*code));
                        }
                    }
                    match check_response(request.pdu(), frame.pdu()) {
                        Ok(()) => {
                            return Ok(Exchange {
                                response: Some(frame),
                                attempts: attempt,
                            })
                        }
                        Err(reason) => failure = AttemptFailure::Invalid(reason.into()),
                    }
                }
            }
        }
        self.stats.failures += 1;
        Err(match failure {
            AttemptFailure::Timeout => MasterError::Timeout {
                attempts: max_attempts,
            },
            AttemptFailure::Address(got) => MasterError::AddressMismatch {
                expected: request.slave(),
                got,
                attempts: max_attempts,
            },
            AttemptFailure::Invalid(reason) => MasterError::InvalidResponse {
                attempts: max_attempts,
                reason,
            },
        })
    }
}

fn check_response(request: &Pdu, response: &Pdu) -> Result<(), &'static str> {
    match (request, response) {
        (
            Pdu::ReadHoldingRegistersReq { quantity, .. },
            Pdu::ReadHoldingRegistersResp { registers },
        ) if registers.len() == usize::from(*quantity) => Ok(()),
        (
            Pdu::WriteSingleCoilReq { address, state },
            Pdu::WriteSingleCoilResp {
                address: echoed_address,
                state: echoed_state,
            },
        ) if address == echoed_address && state == echoed_state => Ok(()),
        (
            Pdu::WriteMultipleCoilsReq { start, states },
            Pdu::WriteMultipleCoilsResp {
                start: echoed_start,
                quantity,
            },
        ) if start == echoed_start && states.len() == usize::from(*quantity) => Ok(()),
        _ => Err("response does not match request"),
    }
}

/// One-shot transaction over `transport` with `timing`.
pub fn master_execute<T: SerialTransport>(
    request: &RtuFrame,
    timing: &MasterTiming,
    transport: &mut T,
) -> Result<Exchange, MasterError> {
    Master::new(transport, *timing).execute(request)
}
