//! The gateway loop: Modbus polling on one side, MQTT on the other.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use thiserror::Error;

use super::config::{GatewayConfig, WriteMode};
use crate::clock::Clock;
use crate::events::{EventKind, EventLog};
use crate::modbus::{Master, MasterError, Pdu, RtuFrame, SerialTransport, SlaveAddress};
use crate::mqtt::{ClientError, ClientOptions, ClientSession, Connector, TopicFilter, TopicName};

pub const BACKOFF_START: Duration = Duration::from_millis(500);
pub const BACKOFF_CAP: Duration = Duration::from_secs(8);

/// Registers read in one poll.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlagSnapshot {
    pub registers: Vec<u16>,
    pub taken_at: Duration,
}

impl FlagSnapshot {
    /// Big-endian words, concatenated.
    pub fn payload(&self) -> Vec<u8> {
        encode_words(&self.registers)
    }
}

pub fn encode_words(words: &[u16]) -> Vec<u8> {
    words.iter().flat_map(|w| w.to_be_bytes()).collect()
}

pub fn decode_words(payload: &[u8]) -> Option<Vec<u16>> {
    if !payload.len().is_multiple_of(2) {
        return None;
    }
    Some(
        payload
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PollOutcome {
    Published { initial: bool },
    Unchanged,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("payload of {actual} bytes, expected {expected}")]
    PayloadLengthMismatch { expected: usize, actual: usize },
    #[error("message on unexpected topic {0}")]
    UnexpectedTopic(String),
    #[error("modbus: {0}")]
    Modbus(#[from] MasterError),
    #[error("mqtt: {0}")]
    Mqtt(#[from] ClientError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GatewayStats {
    pub polls: u64,
    pub publishes: u64,
    pub modbus_errors: u64,
    pub mqtt_errors: u64,
    pub received: u64,
    pub writes: u64,
    pub writes_lost: u64,
    pub dropped_messages: u64,
    pub connects: u64,
}

pub struct Gateway<T, C: Connector> {
    config: GatewayConfig,
    slave: SlaveAddress,
    publish_topic: TopicName,
    subscribe_filter: TopicFilter,
    master: Master<T>,
    connector: C,
    session: ClientSession<C::Stream>,
    clock: Clock,
    log: EventLog,
    actor: String,
    last: Option<FlagSnapshot>,
    subscribed: bool,
    next_poll: Duration,
    next_connect: Duration,
    backoff: Duration,
    stats: GatewayStats,
}

impl<T: SerialTransport, C: Connector> Gateway<T, C> {
    /// `config` must already be validated.
    pub fn new(
        config: GatewayConfig,
        transport: T,
        connector: C,
        clock: Clock,
        log: EventLog,
    ) -> Self {
        let publish_topic = config.publish_topic().expect("validated publish topic");
        let subscribe_filter = config
            .subscribe_filter()
            .expect("validated subscribe topic");
        let mut options = ClientOptions::new(config.mqtt.client_id.clone());
        options.keepalive = Duration::from_secs(config.mqtt.keepalive.into());
        let session = ClientSession::new(options, clock.clone());
        let master = Master::new(transport, config.modbus.master_timing());
        let now = clock.now();
        Gateway {
            slave: config.modbus.slave(),
            actor: config.mqtt.client_id.clone(),
            publish_topic,
            subscribe_filter,
            master,
            connector,
            session,
            clock,
            log,
            last: None,
            subscribed: false,
            next_poll: now,
            next_connect: now,
            backoff: BACKOFF_START,
            stats: GatewayStats::default(),
            config,
        }
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn actor(&self) -> &str {
        &self.actor
    }

    pub fn stats(&self) -> GatewayStats {
        self.stats
    }

    pub fn last_snapshot(&self) -> Option<&FlagSnapshot> {
        self.last.as_ref()
    }

    pub fn master(&self) -> &Master<T> {
        &self.master
    }

    pub fn is_connected(&self) -> bool {
        self.session.is_connected() && self.subscribed
    }

    /// Later of the shared clock and the serial line's own time.
    pub fn now(&self) -> Duration {
        self.clock.now().max(self.master.transport().now())
    }

    /// Events carry the time the step began, so the log stays ordered
    /// even though a serial transaction runs ahead on the line's own time.
    fn record(&self, kind: EventKind) {
        self.log.record(self.clock.now(), &self.actor, kind);
    }

    fn error(&self, kind: &str, detail: impl ToString) {
        self.record(EventKind::Error {
            kind: kind.into(),
            detail: detail.to_string(),
        });
    }

    /// Connects and subscribes. On failure the next attempt is pushed back
    /// by the current backoff, which then doubles.
    pub fn ensure_connected(&mut self) -> Result<(), GatewayError> {
        if self.is_connected() {
            return Ok(());
        }
        let result = self.connect_and_subscribe();
        match &result {
            Ok(()) => {
                self.backoff = BACKOFF_START;
                self.stats.connects += 1;
            }
            Err(e) => {
                self.stats.mqtt_errors += 1;
                self.error("mqtt", e);
                self.next_connect = self.now() + self.backoff;
                self.backoff = (self.backoff * 2).min(BACKOFF_CAP);
            }
        }
        result
    }

    fn connect_and_subscribe(&mut self) -> Result<(), GatewayError> {
        self.subscribed = false;
        self.session.connect(&mut self.connector)?;
        self.record(EventKind::Connected);
        self.session.subscribe(&self.subscribe_filter)?;
        self.subscribed = true;
        self.record(EventKind::Subscribed {
            topic: self.subscribe_filter.to_string(),
        });
        Ok(())
    }

    /// Reads the mapped registers and publishes them if they changed.
    pub fn poll_cycle(&mut self) -> Result<PollOutcome, GatewayError> {
        self.stats.polls += 1;
        let map = &self.config.read_map;
        let request = RtuFrame::read_holding_registers(self.slave, map.start_register, map.count)
            .expect("validated read map");
        let exchange = match self.master.execute(&request) {
            Ok(exchange) => exchange,
            Err(e) => {
                self.stats.modbus_errors += 1;
                self.error("modbus", &e);
                return Err(e.into());
            }
        };
        let Some(Pdu::ReadHoldingRegistersResp { registers }) =
            exchange.response.map(RtuFrame::into_pdu)
        else {
            unreachable!("master validates the response against the request");
        };
        let snapshot = FlagSnapshot {
            registers,
            taken_at: self.now(),
        };
        if self.last.as_ref().map(|l| &l.registers) == Some(&snapshot.registers) {
            return Ok(PollOutcome::Unchanged);
        }
        let initial = self.last.is_none();
        let payload = snapshot.payload();
        if let Err(e) = self
            .session
            .publish(&self.publish_topic, &payload, self.config.mqtt.retain)
        {
            self.stats.mqtt_errors += 1;
            self.subscribed = false;
            self.record(EventKind::ConnectionLost {
                reason: e.to_string(),
            });
            return Err(e.into());
        }
        self.stats.publishes += 1;
        self.record(EventKind::Publish { payload, initial });
        self.last = Some(snapshot);
        Ok(PollOutcome::Published { initial })
    }

    /// Turns a peer's flags into a coil write on the local PLC.
    pub fn on_message(&mut self, topic: &str, payload: &[u8]) -> Result<RtuFrame, GatewayError> {
        self.stats.received += 1;
        self.record(EventKind::Receive {
            payload: payload.to_vec(),
        });
        if topic != self.subscribe_filter.as_str() {
            self.stats.dropped_messages += 1;
            self.error("topic", topic);
            return Err(GatewayError::UnexpectedTopic(topic.to_string()));
        }
        let map = &self.config.write_map;
        let expected = 2 * usize::from(map.count);
        let words = match decode_words(payload) {
            Some(words) if payload.len() == expected => words,
            _ => {
                self.stats.dropped_messages += 1;
                let err = GatewayError::PayloadLengthMismatch {
                    expected,
                    actual: payload.len(),
                };
                self.error("payload", &err);
                return Err(err);
            }
        };
        let states: Vec<bool> = words.iter().map(|w| *w != 0).collect();
        let request = match map.mode {
            WriteMode::SingleCoil => {
                RtuFrame::write_single_coil(self.slave, map.start_coil, states[0])
            }
            WriteMode::MultiCoil => {
                RtuFrame::write_multiple_coils(self.slave, map.start_coil, states.clone())
                    .expect("validated write map")
            }
        };
        match self.master.execute(&request) {
            Ok(_) => {
                self.stats.writes += 1;
                self.record(EventKind::CoilWrite {
                    function: request.pdu().function().value(),
                    start: map.start_coil,
                    states,
                });
                Ok(request)
            }
            Err(e) => {
                self.stats.writes_lost += 1;
                self.record(EventKind::WriteLost {
                    reason: e.to_string(),
                });
                Err(e.into())
            }
        }
    }

    /// Drains received messages and handles each one.
    pub fn service_mqtt(&mut self) -> Result<usize, GatewayError> {
        let messages = match self.session.poll() {
            Ok(messages) => messages,
            Err(e) => {
                self.stats.mqtt_errors += 1;
                self.subscribed = false;
                self.record(EventKind::ConnectionLost {
                    reason: e.to_string(),
                });
                self.next_connect = self.now() + self.backoff;
                return Err(e.into());
            }
        };
        let n = messages.len();
        for (topic, payload) in messages {
            // Failures are logged and counted inside on_message.
            let _ = self.on_message(&topic, &payload);
        }
        Ok(n)
    }

    /// One pass of the loop. Returns when it wants to run next.
    pub fn step(&mut self) -> Duration {
        if !self.is_connected() {
            if self.now() < self.next_connect || self.ensure_connected().is_err() {
                return self.next_connect;
            }
            self.next_poll = self.next_poll.max(self.now());
        }
        if self.service_mqtt().is_err() {
            return self.next_connect;
        }
        let now = self.now();
        if now >= self.next_poll {
            let _ = self.poll_cycle();
            self.next_poll = (now + self.config.modbus.poll_period).max(self.now());
        }
        if self.is_connected() {
            self.next_poll
        } else {
            self.next_connect = self.next_connect.max(self.now());
            self.next_connect
        }
    }

    /// Steps until `shutdown` is set, then sends DISCONNECT. The first step
    /// always runs, so a gateway stopped at once still connects and leaves
    /// cleanly.
    pub fn run(&mut self, shutdown: &AtomicBool) {
        let slice = self.config.modbus.poll_period;
        loop {
            let wake = self.step();
            if shutdown.load(Ordering::Relaxed) {
                break;
            }
            let target = wake.min(self.clock.now() + slice);
            self.clock.sleep_until(target);
        }
        self.shutdown();
    }

    pub fn shutdown(&mut self) {
        self.session.disconnect();
        self.subscribed = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_round_trip_big_endian() {
        assert_eq!(encode_words(&[1, 0]), vec![0x00, 0x01, 0x00, 0x00]);
        assert_eq!(encode_words(&[0x1234]), vec![0x12, 0x34]);
        assert_eq!(decode_words(&[0x00, 0x01, 0x00, 0x00]), Some(vec![1, 0]));
        assert_eq!(decode_words(&[0x00, 0x01, 0x00]), None);
    }
}
