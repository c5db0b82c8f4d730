//! In-process network hosting one broker.
//!
//! A client's write is handed to the broker state machine immediately and
//! the broker's output lands in the receivers' buffers before the write
//! returns, so a single-threaded scheduler can drive every session.

use std::collections::{BTreeMap, VecDeque};
use std::io;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::broker::{BrokerAction, BrokerState, BrokerStats, ConnId};
use super::client::{Connector, MqttStream, ReadOutcome};
use super::trace::{MqttDirection, MqttTrace};
use crate::clock::Clock;

#[derive(Debug)]
struct SimConn {
    label: String,
    inbound: VecDeque<u8>,
    open: bool,
}

#[derive(Debug)]
struct Net {
    broker: Option<BrokerState>,
    mute: bool,
    conns: BTreeMap<ConnId, SimConn>,
    next_conn: ConnId,
    last_stats: BrokerStats,
}

impl Net {
    fn apply(&mut self, actions: Vec<BrokerAction>, clock: &Clock, trace: &MqttTrace) {
        for action in actions {
            match action {
                BrokerAction::Send { conn, bytes } => {
                    if let Some(c) = self.conns.get_mut(&conn).filter(|c| c.open) {
                        trace.record(clock.now(), &c.label, MqttDirection::ToClient, &bytes);
                        c.inbound.extend(bytes);
                    }
                }
                BrokerAction::Close { conn } => {
                    if let Some(c) = self.conns.get_mut(&conn) {
                        c.open = false;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimNetwork {
    net: Arc<Mutex<Net>>,
    clock: Clock,
    trace: MqttTrace,
}

impl SimNetwork {
    /// A network with a running broker.
    pub fn new(clock: Clock) -> Self {
        SimNetwork {
            net: Arc::new(Mutex::new(Net {
                broker: Some(BrokerState::new()),
                mute: false,
                conns: BTreeMap::new(),
                next_conn: 1,
                last_stats: BrokerStats::default(),
            })),
            clock,
            trace: MqttTrace::new(),
        }
    }

    /// A network where nothing listens.
    pub fn without_broker(clock: Clock) -> Self {
        let net = Self::new(clock);
        net.net.lock().unwrap().broker = None;
        net
    }

    pub fn trace(&self) -> &MqttTrace {
        &self.trace
    }

    pub fn broker_running(&self) -> bool {
        self.net.lock().unwrap().broker.is_some()
    }

    /// Stops the broker, closing every connection. Session state is lost.
    pub fn kill_broker(&self) {
        let mut net = self.net.lock().unwrap();
        if let Some(broker) = net.broker.take() {
            net.last_stats = broker.stats();
        }
        for c in net.conns.values_mut() {
            c.open = false;
        }
        tracing::info!(target: "broker", event = "killed");
    }

    pub fn start_broker(&self) {
        let mut net = self.net.lock().unwrap();
        if net.broker.is_none() {
            net.broker = Some(BrokerState::new());
            tracing::info!(target: "broker", event = "started");
        }
    }

    /// A mute broker accepts connections and never answers.
    pub fn set_mute(&self, mute: bool) {
        self.net.lock().unwrap().mute = mute;
    }

    pub fn broker_stats(&self) -> BrokerStats {
        let net = self.net.lock().unwrap();
        net.broker
            .as_ref()
            .map(BrokerState::stats)
            .unwrap_or(net.last_stats)
    }

    pub fn sessions(&self) -> Vec<String> {
        let net = self.net.lock().unwrap();
        net.broker
            .as_ref()
            .map(BrokerState::sessions)
            .unwrap_or_default()
    }

    pub fn connector(&self, label: impl Into<String>) -> SimConnector {
        SimConnector {
            network: self.clone(),
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConnector {
    network: SimNetwork,
    label: String,
}

impl Connector for SimConnector {
    type Stream = SimStream;

    fn connect(&mut self) -> io::Result<SimStream> {
        let mut net = self.network.net.lock().unwrap();
        let conn = net.next_conn;
        let Some(broker) = net.broker.as_mut() else {
            return Err(io::ErrorKind::ConnectionRefused.into());
        };
        broker.open(conn);
        net.next_conn += 1;
        net.conns.insert(
            conn,
            SimConn {
                label: self.label.clone(),
                inbound: VecDeque::new(),
                open: true,
            },
        );
        Ok(SimStream {
            network: self.network.clone(),
            conn,
        })
    }

    fn describe(&self) -> String {
        format!("sim:{}", self.label)
    }
}

#[derive(Debug)]
pub struct SimStream {
    network: SimNetwork,
    conn: ConnId,
}

impl MqttStream for SimStream {
    fn write_all(&mut self, bytes: &[u8]) -> io::Result<()> {
        let SimNetwork { net, clock, trace } = &self.network;
        let mut net = net.lock().unwrap();
        let label = match net.conns.get(&self.conn) {
            Some(c) if c.open => c.label.clone(),
            _ => return Err(io::ErrorKind::BrokenPipe.into()),
        };
        trace.record(clock.now(), &label, MqttDirection::ToBroker, bytes);
        if net.mute {
            return Ok(());
        }
        let actions = match net.broker.as_mut() {
            Some(broker) => broker.on_bytes(self.conn, bytes),
            None => return Err(io::ErrorKind::BrokenPipe.into()),
        };
        net.apply(actions, clock, trace);
        Ok(())
    }

    fn read_some(&mut self, buf: &mut Vec<u8>, wait: Duration) -> io::Result<ReadOutcome> {
        let mut net = self.network.net.lock().unwrap();
        let Some(c) = net.conns.get_mut(&self.conn) else {
            return Ok(ReadOutcome::Closed);
        };
        if !c.inbound.is_empty() {
            let n = c.inbound.len();
            buf.extend(c.inbound.drain(..));
            return Ok(ReadOutcome::Data(n));
        }
        if !c.open {
            return Ok(ReadOutcome::Closed);
        }
        Ok(ReadOutcome::Idle(wait))
    }

    fn close(&mut self) {
        let mut net = self.network.net.lock().unwrap();
        if net.conns.remove(&self.conn).is_some() {
            if let Some(broker) = net.broker.as_mut() {
                broker.on_closed(self.conn);
            }
        }
    }
}

impl Drop for SimStream {
    fn drop(&mut self) {
        self.close();
    }
}
