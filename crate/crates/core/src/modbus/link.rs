//! Serial transports for the master: an in-process simulated line, a
//! fault-injecting wrapper and a serial line tunnelled over TCP.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::framer::{Framer, FramingMode};
use super::master::SerialTransport;
use super::serial::SerialParams;
use super::slave::SerialDevice;
use super::trace::{Direction, ModbusTrace};
use crate::clock::Clock;

/// Slave processing time between the end of a request and the start of its reply.
pub const DEFAULT_TURNAROUND: Duration = Duration::from_millis(2);

#[derive(Debug, Clone)]
struct Tracing {
    trace: ModbusTrace,
    label: String,
}

impl Tracing {
    fn record(&self, at: Duration, direction: Direction, bytes: &[u8]) {
        self.trace.record(at, &self.label, direction, bytes);
    }
}

/// An in-memory serial line between a master and one device.
///
/// Time on the line is tracked in a local cursor that never falls behind the
/// shared clock, so a transaction that spans several milliseconds does not
/// move the clock seen by other processes.
pub struct SimSerialLink<D> {
    device: Option<Arc<Mutex<D>>>,
    serial: SerialParams,
    clock: Clock,
    cursor: Duration,
    turnaround: Duration,
    master_framer: Framer,
    inbound: VecDeque<(Vec<u8>, Duration)>,
    tracing: Option<Tracing>,
}

impl<D: SerialDevice> SimSerialLink<D> {
    pub fn new(
        device: Arc<Mutex<D>>,
        serial: SerialParams,
        mode: FramingMode,
        clock: Clock,
    ) -> Self {
        SimSerialLink {
            device: Some(device),
            serial,
            clock,
            cursor: Duration::ZERO,
            turnaround: DEFAULT_TURNAROUND,
            master_framer: Framer::new(mode, &serial),
            inbound: VecDeque::new(),
            tracing: None,
        }
    }

    /// A line with nothing attached: every request times out.
    pub fn disconnected(serial: SerialParams, mode: FramingMode, clock: Clock) -> Self {
        SimSerialLink {
            device: None,
            serial,
            clock,
            cursor: Duration::ZERO,
            turnaround: DEFAULT_TURNAROUND,
            master_framer: Framer::new(mode, &serial),
            inbound: VecDeque::new(),
            tracing: None,
        }
    }

    pub fn with_trace(mut self, trace: ModbusTrace, label: impl Into<String>) -> Self {
        self.tracing = Some(Tracing {
            trace,
            label: label.into(),
        });
        self
    }

    pub fn with_turnaround(mut self, turnaround: Duration) -> Self {
        self.turnaround = turnaround;
        self
    }

    pub fn device(&self) -> Option<&Arc<Mutex<D>>> {
        self.device.as_ref()
    }

    fn timed(&self, bytes: &[u8], start: Duration) -> Vec<(u8, Duration)> {
        let ct = self.serial.char_time();
        bytes
            .iter()
            .enumerate()
            .map(|(i, b)| (*b, start + ct * i as u32))
            .collect()
    }

    fn deliver_response(&mut self, response: Vec<u8>, start: Duration) {
        let timed = self.timed(&response, start);
        let last = timed.last().map(|(_, t)| *t).unwrap_or(start);
        let mut frames = self.master_framer.push_timed(timed);
        let complete_at = match self.master_framer.mode() {
            FramingMode::Gap => {
                frames.extend(self.master_framer.poll(last + self.serial.frame_gap()));
                last + self.serial.frame_gap()
            }
            FramingMode::Boundary => last + self.serial.char_time(),
        };
        for frame in frames {
            if let Some(t) = &self.tracing {
                t.record(start, Direction::SlaveToMaster, &frame);
            }
            self.inbound.push_back((frame, complete_at));
        }
    }
}

impl<D: SerialDevice> SerialTransport for SimSerialLink<D> {
    fn now(&self) -> Duration {
        self.cursor.max(self.clock.now())
    }

    fn send(&mut self, adu: &[u8]) -> io::Result<()> {
        let start = self.now();
        if let Some(t) = &self.tracing {
            t.record(start, Direction::MasterToSlave, adu);
        }
        let timed = self.timed(adu, start);
        let last = timed.last().map(|(_, t)| *t).unwrap_or(start);
        self.cursor = start + self.serial.transmit_time(adu.len());
        let Some(device) = self.device.clone() else {
            return Ok(());
        };
        let mut responses = {
            let mut device = device.lock().unwrap();
            let mut out = device.receive(&timed);
            out.extend(device.idle(last + self.serial.frame_gap()));
            out
        };
        let mut reply_start = last + self.serial.frame_gap() + self.turnaround;
        for response in responses.drain(..) {
            let len = response.len();
            self.deliver_response(response, reply_start);
            reply_start += self.serial.transmit_time(len) + self.serial.frame_gap();
        }
        Ok(())
    }

    fn recv(&mut self, deadline: Duration) -> io::Result<Option<Vec<u8>>> {
        match self.inbound.front() {
            Some((_, at)) if *at <= deadline => {
                let (frame, at) = self.inbound.pop_front().expect("front checked");
                self.cursor = self.cursor.max(at);
                Ok(Some(frame))
            }
            _ => {
                self.cursor = self.cursor.max(deadline);
                Ok(None)
            }
        }
    }

    fn wait_until(&mut self, at: Duration) {
        self.cursor = self.cursor.max(at);
    }
}

/// Fault plan for [`FaultyTransport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultPlan {
    /// Probability that a received frame gets one bit flipped.
    pub corrupt_probability: f64,
    /// Probability that a received frame is lost entirely.
    pub drop_probability: f64,
    /// Corrupt this many frames unconditionally before applying probabilities.
    pub corrupt_first: u32,
    pub seed: u64,
}

impl Default for FaultPlan {
    fn default() -> Self {
        FaultPlan {
            corrupt_probability: 0.0,
            drop_probability: 0.0,
            corrupt_first: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FaultStats {
    pub frames: u64,
    pub corrupted: u64,
    pub dropped: u64,
}

/// Wraps a transport and damages the frames the master receives.
pub struct FaultyTransport<T> {
    inner: T,
    plan: FaultPlan,
    rng: ChaCha8Rng,
    stats: FaultStats,
}

impl<T: SerialTransport> FaultyTransport<T> {
    pub fn new(inner: T, plan: FaultPlan) -> Self {
        FaultyTransport {
            inner,
            rng: ChaCha8Rng::seed_from_u64(plan.seed),
            plan,
            stats: FaultStats::default(),
        }
    }

    pub fn stats(&self) -> FaultStats {
        self.stats
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }
}

impl<T: SerialTransport> SerialTransport for FaultyTransport<T> {
    fn now(&self) -> Duration {
        self.inner.now()
    }

    fn send(&mut self, adu: &[u8]) -> io::Result<()> {
        self.inner.send(adu)
    }

    fn recv(&mut self, deadline: Duration) -> io::Result<Option<Vec<u8>>> {
        loop {
            let Some(mut frame) = self.inner.recv(deadline)? else {
                return Ok(None);
            };
            self.stats.frames += 1;
            if self.plan.drop_probability > 0.0 && self.rng.gen_bool(self.plan.drop_probability) {
                self.stats.dropped += 1;
                continue;
            }
            let forced = self.stats.corrupted < u64::from(self.plan.corrupt_first);
            if !frame.is_empty()
                && (forced
                    || (self.plan.corrupt_probability > 0.0
                        && self.rng.gen_bool(self.plan.corrupt_probability)))
            {
                let bit = self.rng.gen_range(0..frame.len() * 8);
                frame[bit / 8] ^= 1 << (bit % 8);
                self.stats.corrupted += 1;
            }
            return Ok(Some(frame));
        }
    }

    fn wait_until(&mut self, at: Duration) {
        self.inner.wait_until(at)
    }
}

/// A serial line tunnelled over TCP. Frames are delimited by silence on the
/// receiving side, the same as on a real line.
pub struct TcpSerialLink {
    stream: TcpStream,
    clock: Clock,
    framer: Framer,
    tracing: Option<Tracing>,
}

impl TcpSerialLink {
    pub fn connect(
        addr: impl ToSocketAddrs,
        serial: &SerialParams,
        clock: Clock,
    ) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(TcpSerialLink {
            stream,
            clock,
            framer: Framer::new(FramingMode::Gap, serial),
            tracing: None,
        })
    }

    pub fn with_trace(mut self, trace: ModbusTrace, label: impl Into<String>) -> Self {
        self.tracing = Some(Tracing {
            trace,
            label: label.into(),
        });
        self
    }
}

impl SerialTransport for TcpSerialLink {
    fn now(&self) -> Duration {
        self.clock.now()
    }

    fn send(&mut self, adu: &[u8]) -> io::Result<()> {
        if let Some(t) = &self.tracing {
            t.record(self.now(), Direction::MasterToSlave, adu);
        }
        self.stream.write_all(adu)
    }

    fn recv(&mut self, deadline: Duration) -> io::Result<Option<Vec<u8>>> {
        let mut buf = [0u8; 512];
        loop {
            let now = self.now();
            if let Some(frame) = self.framer.poll(now) {
                if let Some(t) = &self.tracing {
                    t.record(now, Direction::SlaveToMaster, &frame);
                }
                return Ok(Some(frame));
            }
            if now >= deadline {
                return Ok(None);
            }
            let mut wait = deadline - now;
            if let Some(close_at) = self.framer.deadline() {
                wait = wait.min(close_at.saturating_sub(now));
            }
            self.stream
                .set_read_timeout(Some(wait.max(Duration::from_micros(200))))?;
            match self.stream.read(&mut buf) {
                Ok(0) => return Err(io::ErrorKind::ConnectionAborted.into()),
                Ok(n) => {
                    let at = self.now();
                    // bytes of one read arrived back to back
                    let frames = self.framer.push(&buf[..n], at);
                    debug_assert!(frames.is_empty() || frames.len() == 1);
                    if let Some(frame) = frames.into_iter().next() {
                        if let Some(t) = &self.tracing {
                            t.record(at, Direction::SlaveToMaster, &frame);
                        }
                        return Ok(Some(frame));
                    }
                }
                Err(e)
                    if matches!(
                        e.kind(),
                        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                    ) => {}
                Err(e) => return Err(e),
            }
        }
    }

    fn wait_until(&mut self, at: Duration) {
        self.clock.sleep_until(at);
    }
}

/// Serves a device on a TCP listener, one master connection at a time, until
/// `shutdown` is set.
pub fn serve_serial_device<D: SerialDevice>(
    listener: TcpListener,
    device: Arc<Mutex<D>>,
    serial: SerialParams,
    clock: Clock,
    shutdown: Arc<AtomicBool>,
) -> io::Result<()> {
    listener.set_nonblocking(true)?;
    let poll = (serial.frame_gap() / 2).max(Duration::from_micros(500));
    while !shutdown.load(Ordering::SeqCst) {
        let mut stream = match listener.accept() {
            Ok((stream, _)) => stream,
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(5));
                continue;
            }
            Err(e) => return Err(e),
        };
        stream.set_nonblocking(false)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(poll))?;
        let mut buf = [0u8; 512];
        while !shutdown.load(Ordering::SeqCst) {
            let responses = match stream.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => {
                    let at = clock.now();
                    let timed: Vec<(u8, Duration)> = buf[..n].iter().map(|b| (*b, at)).collect();
                    device.lock().unwrap().receive(&timed)
                }
                Err(e)
                    if matches!(
                        e.kind(),
                        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                    ) =>
                {
                    device.lock().unwrap().idle(clock.now())
                }
                Err(e) => {
                    tracing::warn!(%e, "serial tunnel read failed");
                    break;
                }
            };
            for response in responses {
                if stream.write_all(&response).is_err() {
                    break;
                }
            }
        }
    }
    Ok(())
}
