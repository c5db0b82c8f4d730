//! MQTT over TCP: client streams and a threaded broker server.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::broker::{BrokerAction, BrokerState, BrokerStats, ConnId};
use super::client::{Connector, MqttStream, ReadOutcome};
use super::trace::{split_packets, MqttDirection, MqttTrace};
use crate::clock::Clock;

pub const DEFAULT_PORT: u16 = 1883;

#[derive(Debug, Clone)]
pub struct TcpConnector {
    addr: String,
    timeout: Duration,
}

impl TcpConnector {
    pub fn new(addr: impl Into<String>) -> Self {
        TcpConnector {
            addr: addr.into(),
            timeout: Duration::from_secs(2),
        }
    }
}

impl Connector for TcpConnector {
    type Stream = TcpMqttStream;

    fn connect(&mut self) -> io::Result<TcpMqttStream> {
        let mut last = io::Error::new(io::ErrorKind::NotFound, "address resolved to nothing");
        for addr in self.addr.to_socket_addrs()? {
            match TcpStream::connect_timeout(&addr, self.timeout) {
                Ok(stream) => {
                    stream.set_nodelay(true)?;
                    return Ok(TcpMqttStream { stream });
                }
                Err(e) => last = e,
            }
        }
        Err(last)
    }

    fn describe(&self) -> String {
        self.addr.clone()
    }
}

#[derive(Debug)]
pub struct TcpMqttStream {
    stream: TcpStream,
}

impl MqttStream for TcpMqttStream {
    fn write_all(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.stream.write_all(bytes)
    }

    fn read_some(&mut self, buf: &mut Vec<u8>, wait: Duration) -> io::Result<ReadOutcome> {
        let mut chunk = [0u8; 4096];
        let started = Instant::now();
        let result = if wait.is_zero() {
            self.stream.set_nonblocking(true)?;
            let r = self.stream.read(&mut chunk);
            self.stream.set_nonblocking(false)?;
            r
        } else {
            self.stream.set_read_timeout(Some(wait))?;
            self.stream.read(&mut chunk)
        };
        match result {
            Ok(0) => Ok(ReadOutcome::Closed),
            Ok(n) => {
                buf.extend_from_slice(&chunk[..n]);
                Ok(ReadOutcome::Data(n))
            }
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) =>
            {
                Ok(ReadOutcome::Idle(
                    started.elapsed().max(wait.min(Duration::from_micros(1))),
                ))
            }
            Err(e) if e.kind() == io::ErrorKind::ConnectionReset => Ok(ReadOutcome::Closed),
            Err(e) => Err(e),
        }
    }

    fn close(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

struct Shared {
    broker: BrokerState,
    writers: BTreeMap<ConnId, TcpStream>,
    labels: BTreeMap<ConnId, String>,
}

impl Shared {
    fn apply(&mut self, actions: Vec<BrokerAction>, trace: &MqttTrace, clock: &Clock) {
        for action in actions {
            match action {
                BrokerAction::Send { conn, bytes } => {
                    let label = self.labels.get(&conn).cloned().unwrap_or_default();
                    let failed = match self.writers.get_mut(&conn) {
                        Some(w) => {
                            trace.record(clock.now(), &label, MqttDirection::ToClient, &bytes);
                            w.write_all(&bytes).is_err()
                        }
                        None => false,
                    };
                    if failed {
                        self.close(conn);
                    }
                }
                BrokerAction::Close { conn } => self.close(conn),
            }
        }
    }

    fn close(&mut self, conn: ConnId) {
        if let Some(w) = self.writers.remove(&conn) {
            let _ = w.shutdown(Shutdown::Both);
        }
        self.broker.on_closed(conn);
    }
}

/// A broker listening on TCP. Every connection has a reader thread; all
/// routing goes through one lock so per-subscriber order is arrival order.
pub struct BrokerServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    shared: Arc<Mutex<Shared>>,
    accept_thread: Option<JoinHandle<()>>,
    trace: MqttTrace,
}

impl BrokerServer {
    pub fn bind(addr: impl ToSocketAddrs, clock: Clock) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        Self::spawn(listener, clock, MqttTrace::new())
    }

    pub fn spawn(listener: TcpListener, clock: Clock, trace: MqttTrace) -> io::Result<Self> {
        let addr = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let shared = Arc::new(Mutex::new(Shared {
            broker: BrokerState::new(),
            writers: BTreeMap::new(),
            labels: BTreeMap::new(),
        }));
        let accept_thread = {
            let shutdown = shutdown.clone();
            let shared = shared.clone();
            let trace = trace.clone();
            std::thread::Builder::new()
                .name("broker-accept".into())
                .spawn(move || accept_loop(listener, shared, shutdown, trace, clock))?
        };
        tracing::info!(target: "broker", event = "listening", %addr);
        Ok(BrokerServer {
            addr,
            shutdown,
            shared,
            accept_thread: Some(accept_thread),
            trace,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn trace(&self) -> &MqttTrace {
        &self.trace
    }

    pub fn stats(&self) -> BrokerStats {
        self.shared.lock().unwrap().broker.stats()
    }

    pub fn shutdown_flag(&self) -> Arc<AtomicBool> {
        self.shutdown.clone()
    }

    /// Stops accepting, closes every connection and joins the accept thread.
    pub fn stop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        {
            let mut shared = self.shared.lock().unwrap();
            let conns: Vec<ConnId> = shared.writers.keys().copied().collect();
            for conn in conns {
                shared.close(conn);
            }
        }
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }

    /// Blocks until the shutdown flag is raised.
    pub fn wait(&mut self) {
        while !self.shutdown.load(Ordering::SeqCst) {
            std::thread::sleep(Duration::from_millis(50));
        }
        self.stop();
    }
}

impl Drop for BrokerServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(
    listener: TcpListener,
    shared: Arc<Mutex<Shared>>,
    shutdown: Arc<AtomicBool>,
    trace: MqttTrace,
    clock: Clock,
) {
    let next_conn = AtomicU64::new(1);
    let mut readers = Vec::new();
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let conn = next_conn.fetch_add(1, Ordering::SeqCst);
                let Ok(writer) = stream.try_clone() else {
                    continue;
                };
                let _ = stream.set_nodelay(true);
                {
                    let mut s = shared.lock().unwrap();
                    s.broker.open(conn);
                    s.writers.insert(conn, writer);
                    s.labels.insert(conn, peer.to_string());
                }
                let shared = shared.clone();
                let shutdown = shutdown.clone();
                let trace = trace.clone();
                let clock = clock.clone();
                readers.push(std::thread::spawn(move || {
                    read_loop(conn, stream, shared, shutdown, trace, clock)
                }));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(e) => {
                tracing::error!(target: "broker", %e, "accept failed");
                break;
            }
        }
    }
    for r in readers {
        let _ = r.join();
    }
}

fn read_loop(
    conn: ConnId,
    mut stream: TcpStream,
    shared: Arc<Mutex<Shared>>,
    shutdown: Arc<AtomicBool>,
    trace: MqttTrace,
    clock: Clock,
) {
    let _ = stream.set_read_timeout(Some(Duration::from_millis(50)));
    let mut chunk = [0u8; 4096];
    let mut pending = Vec::new();
    while !shutdown.load(Ordering::SeqCst) {
        match stream.read(&mut chunk) {
            Ok(0) => break,
            Ok(n) => {
                let mut s = shared.lock().unwrap();
                if !s.writers.contains_key(&conn) {
                    break;
                }
                pending.extend_from_slice(&chunk[..n]);
                for packet in split_packets(&mut pending) {
                    if let Ok((super::codec::MqttPacket::Connect { client_id, .. }, _)) =
                        super::codec::decode_packet(&packet)
                    {
                        s.labels.insert(conn, client_id);
                    }
                    let label = s.labels.get(&conn).cloned().unwrap_or_default();
                    trace.record(clock.now(), &label, MqttDirection::ToBroker, &packet);
                }
                let actions = s.broker.on_bytes(conn, &chunk[..n]);
                s.apply(actions, &trace, &clock);
            }
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) => {}
            Err(_) => break,
        }
    }
    shared.lock().unwrap().close(conn);
}
