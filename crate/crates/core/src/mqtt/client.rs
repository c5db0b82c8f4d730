//! Poll-driven MQTT client session.
//!
//! Nothing runs in the background: received messages and keepalive pings
//! are handled when the owner calls [`ClientSession::poll`].

use std::collections::VecDeque;
use std::io;
use std::time::Duration;

use thiserror::Error;

use super::codec::{
    decode_packet, encode_packet, ConnectReturnCode, MqttDecodeError, MqttPacket, Publish,
    SubackCode, TopicFilter, TopicName,
};
use crate::clock::Clock;

/// Outcome of waiting for inbound bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadOutcome {
    Data(usize),
    /// Nothing arrived; the wait consumed this much time.
    Idle(Duration),
    Closed,
}

/// A connected byte stream to the broker.
pub trait MqttStream {
    fn write_all(&mut self, bytes: &[u8]) -> io::Result<()>;

    /// Appends whatever arrives within `wait` to `buf`.
    fn read_some(&mut self, buf: &mut Vec<u8>, wait: Duration) -> io::Result<ReadOutcome>;

    /// Closes the stream; further reads report `Closed`.
    fn close(&mut self);
}

/// Opens streams to the broker.
pub trait Connector {
    type Stream: MqttStream;

    fn connect(&mut self) -> io::Result<Self::Stream>;

    fn describe(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Disconnected,
    Connecting,
    Connected,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("broker {addr} unreachable: {source}")]
    BrokerUnreachable { addr: String, source: io::Error },
    #[error("connection refused by broker: {0:?}")]
    ConnackRefused(ConnectReturnCode),
    #[error("no answer from broker within {0:?}")]
    Timeout(Duration),
    #[error("session is not connected")]
    NotConnected,
    #[error("subscription refused for {0}")]
    SubackFailure(String),
    #[error("connection to broker lost: {0}")]
    ConnectionLost(String),
    #[error("protocol error: {0}")]
    Protocol(#[from] MqttDecodeError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientOptions {
    pub client_id: String,
    pub keepalive: Duration,
    pub clean_session: bool,
    /// How long to wait for CONNACK and SUBACK.
    pub response_window: Duration,
}

impl ClientOptions {
    pub fn new(client_id: impl Into<String>) -> Self {
        ClientOptions {
            client_id: client_id.into(),
            keepalive: Duration::from_secs(60),
            clean_session: true,
            response_window: Duration::from_secs(2),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClientStats {
    pub published: u64,
    pub received: u64,
    pub pings: u64,
}

pub struct ClientSession<S> {
    options: ClientOptions,
    clock: Clock,
    state: SessionState,
    stream: Option<S>,
    rx: Vec<u8>,
    inbox: VecDeque<(String, Vec<u8>)>,
    last_tx: Duration,
    last_rx: Duration,
    ping_outstanding: bool,
    next_packet_id: u16,
    stats: ClientStats,
}

impl<S: MqttStream> ClientSession<S> {
    pub fn new(options: ClientOptions, clock: Clock) -> Self {
        ClientSession {
            options,
            clock,
            state: SessionState::Disconnected,
            stream: None,
            rx: Vec::new(),
            inbox: VecDeque::new(),
            last_tx: Duration::ZERO,
            last_rx: Duration::ZERO,
            ping_outstanding: false,
            next_packet_id: 1,
            stats: ClientStats::default(),
        }
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn is_connected(&self) -> bool {
        self.state == SessionState::Connected
    }

    pub fn options(&self) -> &ClientOptions {
        &self.options
    }

    pub fn stats(&self) -> ClientStats {
        self.stats
    }

    /// Opens a stream, sends CONNECT and waits for an accepting CONNACK.
    pub fn connect<C>(&mut self, connector: &mut C) -> Result<ConnectReturnCode, ClientError>
    where
        C: Connector<Stream = S>,
    {
        self.drop_stream();
        let stream = connector
            .connect()
            .map_err(|source| ClientError::BrokerUnreachable {
                addr: connector.describe(),
                source,
            })?;
        self.stream = Some(stream);
        self.state = SessionState::Connecting;
        self.rx.clear();
        self.ping_outstanding = false;
        let keepalive = self.options.keepalive.as_secs().min(u64::from(u16::MAX)) as u16;
        let connect = MqttPacket::Connect {
            client_id: self.options.client_id.clone(),
            keepalive,
            clean_session: self.options.clean_session,
        };
        if let Err(e) = self.send(&connect) {
            self.drop_stream();
            return Err(e);
        }
        let window = self.options.response_window;
        let result = self.await_packet(window, |p| matches!(p, MqttPacket::Connack { .. }));
        match result {
            Ok(MqttPacket::Connack {
                return_code: ConnectReturnCode::Accepted,
            }) => {
                self.state = SessionState::Connected;
                self.last_rx = self.clock.now();
                Ok(ConnectReturnCode::Accepted)
            }
            Ok(MqttPacket::Connack { return_code }) => {
                self.drop_stream();
                Err(ClientError::ConnackRefused(return_code))
            }
            Ok(_) => unreachable!("await_packet only returns matching packets"),
            Err(e) => {
                self.drop_stream();
                Err(e)
            }
        }
    }

    /// Fire-and-forget QoS 0 publish.
    pub fn publish(
        &mut self,
        topic: &TopicName,
        payload: &[u8],
        retain: bool,
    ) -> Result<(), ClientError> {
        self.require_connected()?;
        let mut publish = Publish::new(topic.clone(), payload.to_vec());
        publish.retain = retain;
        self.send(&MqttPacket::Publish(publish))?;
        self.stats.published += 1;
        Ok(())
    }

    /// Subscribes to one exact topic and waits for the SUBACK.
    pub fn subscribe(&mut self, filter: &TopicFilter) -> Result<u8, ClientError> {
        self.require_connected()?;
        let packet_id = self.next_packet_id;
        self.next_packet_id = self.next_packet_id.checked_add(1).unwrap_or(1);
        self.send(&MqttPacket::Subscribe {
            packet_id,
            filters: vec![(filter.clone(), 0)],
        })?;
        let window = self.options.response_window;
        let ack = self.await_packet(
            window,
            |p| matches!(p, MqttPacket::Suback { packet_id: id, .. } if *id == packet_id),
        );
        match ack {
            Ok(MqttPacket::Suback { granted, .. }) => match granted.first() {
                Some(SubackCode::Granted(qos)) => Ok(*qos),
                _ => Err(ClientError::SubackFailure(filter.to_string())),
            },
            Ok(_) => unreachable!("await_packet only returns matching packets"),
            Err(ClientError::Timeout(w)) => {
                self.drop_stream();
                Err(ClientError::Timeout(w))
            }
            Err(e) => Err(e),
        }
    }

    /// Drains received messages in arrival order and services keepalive.
    pub fn poll(&mut self) -> Result<Vec<(String, Vec<u8>)>, ClientError> {
        self.require_connected()?;
        self.read_available(Duration::ZERO)?;
        self.process_rx()?;
        let now = self.clock.now();
        let keepalive = self.options.keepalive;
        if !keepalive.is_zero() {
            if now.saturating_sub(self.last_rx) >= keepalive * 3 / 2 {
                self.drop_stream();
                return Err(ClientError::ConnectionLost(format!(
                    "no traffic from broker for {:?}",
                    now.saturating_sub(self.last_rx)
                )));
            }
            let idle_tx = now.saturating_sub(self.last_tx) >= keepalive;
            let idle_rx = now.saturating_sub(self.last_rx) >= keepalive;
            if !self.ping_outstanding && (idle_tx || idle_rx) {
                self.send(&MqttPacket::Pingreq)?;
                self.ping_outstanding = true;
                self.stats.pings += 1;
                self.read_available(Duration::ZERO)?;
                self.process_rx()?;
            }
        }
        Ok(self.inbox.drain(..).collect())
    }

    /// Sends DISCONNECT and closes the stream.
    pub fn disconnect(&mut self) {
        if self.is_connected() {
            let _ = self.send(&MqttPacket::Disconnect);
        }
        self.drop_stream();
    }

    fn require_connected(&self) -> Result<(), ClientError> {
        if self.state != SessionState::Connected {
            return Err(ClientError::NotConnected);
        }
        Ok(())
    }

    fn drop_stream(&mut self) {
        if let Some(mut stream) = self.stream.take() {
            stream.close();
        }
        self.state = SessionState::Disconnected;
    }

    fn send(&mut self, packet: &MqttPacket) -> Result<(), ClientError> {
        let Some(stream) = self.stream.as_mut() else {
            return Err(ClientError::NotConnected);
        };
        if let Err(e) = stream.write_all(&encode_packet(packet)) {
            self.drop_stream();
            return Err(ClientError::ConnectionLost(e.to_string()));
        }
        self.last_tx = self.clock.now();
        Ok(())
    }

    fn read_available(&mut self, wait: Duration) -> Result<ReadOutcome, ClientError> {
        let Some(stream) = self.stream.as_mut() else {
            return Err(ClientError::NotConnected);
        };
        match stream.read_some(&mut self.rx, wait) {
            Ok(ReadOutcome::Closed) => {
                self.drop_stream();
                Err(ClientError::ConnectionLost(
                    "broker closed the connection".into(),
                ))
            }
            Ok(outcome) => {
                if matches!(outcome, ReadOutcome::Data(_)) {
                    self.last_rx = self.clock.now();
                }
                Ok(outcome)
            }
            Err(e) => {
                self.drop_stream();
                Err(ClientError::ConnectionLost(e.to_string()))
            }
        }
    }

    /// Decodes buffered packets. Returns the first packet accepted by
    /// `want`, queueing publishes and absorbing pings along the way.
    fn next_packet(
        &mut self,
        want: &dyn Fn(&MqttPacket) -> bool,
    ) -> Result<Option<MqttPacket>, ClientError> {
        loop {
            let (packet, used) = match decode_packet(&self.rx) {
                Ok(ok) => ok,
                Err(MqttDecodeError::NeedMoreBytes) => return Ok(None),
                Err(e) => {
                    self.drop_stream();
                    return Err(e.into());
                }
            };
            self.rx.drain(..used);
            if want(&packet) {
                return Ok(Some(packet));
            }
            match packet {
                MqttPacket::Publish(p) => {
                    self.stats.received += 1;
                    self.inbox
                        .push_back((p.topic.as_str().to_string(), p.payload));
                }
                MqttPacket::Pingresp => self.ping_outstanding = false,
                other => tracing::debug!(packet = other.name(), "ignoring unexpected packet"),
            }
        }
    }

    fn process_rx(&mut self) -> Result<(), ClientError> {
        self.next_packet(&|_| false).map(|_| ())
    }

    fn await_packet(
        &mut self,
        window: Duration,
        want: impl Fn(&MqttPacket) -> bool,
    ) -> Result<MqttPacket, ClientError> {
        let mut waited = Duration::ZERO;
        loop {
            if let Some(packet) = self.next_packet(&want)? {
                return Ok(packet);
            }
            if waited >= window {
                return Err(ClientError::Timeout(window));
            }
            match self.read_available(window - waited)? {
                ReadOutcome::Idle(spent) => waited += spent.max(Duration::from_micros(1)),
                ReadOutcome::Data(_) | ReadOutcome::Closed => {}
            }
        }
    }
}
