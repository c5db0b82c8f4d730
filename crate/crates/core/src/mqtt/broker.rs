//! Broker state machine, independent of any socket type.
//!
//! Connections feed raw bytes in through [`BrokerState::on_bytes`] and get
//! back the bytes to send and the connections to close. Routing is exact
//! topic match; wildcard filters are refused at SUBSCRIBE time.

use std::collections::{BTreeMap, BTreeSet};

use super::codec::{
    decode_packet, encode_packet, ConnectReturnCode, MqttDecodeError, MqttPacket, Publish,
    SubackCode,
};

pub type ConnId = u64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BrokerAction {
    Send { conn: ConnId, bytes: Vec<u8> },
    Close { conn: ConnId },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BrokerStats {
    pub connects: u64,
    pub takeovers: u64,
    pub publishes: u64,
    pub deliveries: u64,
    pub dropped: u64,
    pub retain_ignored: u64,
    pub protocol_errors: u64,
}

#[derive(Debug, Default)]
struct Connection {
    client_id: Option<String>,
    rx: Vec<u8>,
}

#[derive(Debug, Default)]
pub struct BrokerState {
    sessions: BTreeMap<String, ConnId>,
    subscriptions: BTreeMap<String, BTreeSet<String>>,
    conns: BTreeMap<ConnId, Connection>,
    stats: BrokerStats,
}

impl BrokerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stats(&self) -> BrokerStats {
        self.stats
    }

    /// Registers a freshly accepted transport connection.
    pub fn open(&mut self, conn: ConnId) {
        self.conns.insert(conn, Connection::default());
    }

    pub fn is_open(&self, conn: ConnId) -> bool {
        self.conns.contains_key(&conn)
    }

    /// Client ids with a live session.
    pub fn sessions(&self) -> Vec<String> {
        self.sessions.keys().cloned().collect()
    }

    pub fn subscribers(&self, topic: &str) -> Vec<String> {
        self.subscriptions
            .get(topic)
            .map(|s| s.iter().cloned().collect())
            .unwrap_or_default()
    }

    /// Client ids that receive `publish`: every current subscriber of the exact topic.
    pub fn route(&self, publish: &Publish) -> Vec<String> {
        self.subscribers(publish.topic.as_str())
            .into_iter()
            .filter(|client| self.sessions.contains_key(client))
            .collect()
    }

    pub fn on_bytes(&mut self, conn: ConnId, bytes: &[u8]) -> Vec<BrokerAction> {
        let mut actions = Vec::new();
        let Some(c) = self.conns.get_mut(&conn) else {
            return actions;
        };
        c.rx.extend_from_slice(bytes);
        while let Some(c) = self.conns.get_mut(&conn) {
            match decode_packet(&c.rx) {
                Ok((packet, used)) => {
                    c.rx.drain(..used);
                    if !self.handle(conn, packet, &mut actions) {
                        break;
                    }
                }
                Err(MqttDecodeError::NeedMoreBytes) => break,
                Err(err) => {
                    self.stats.protocol_errors += 1;
                    tracing::warn!(target: "broker", event = "protocol_error", conn, %err);
                    self.drop_connection(conn, &mut actions);
                    break;
                }
            }
        }
        actions
    }

    /// The transport under `conn` went away.
    pub fn on_closed(&mut self, conn: ConnId) {
        if let Some(c) = self.conns.remove(&conn) {
            if let Some(client) = c.client_id {
                tracing::info!(target: "broker", event = "disconnect", client_id = %client);
                self.end_session(&client, conn);
            }
        }
    }

    fn end_session(&mut self, client: &str, conn: ConnId) {
        if self.sessions.get(client) == Some(&conn) {
            self.sessions.remove(client);
            self.remove_subscriptions(client);
        }
    }

    fn remove_subscriptions(&mut self, client: &str) {
        self.subscriptions.retain(|_, subs| {
            subs.remove(client);
            !subs.is_empty()
        });
    }

    fn drop_connection(&mut self, conn: ConnId, actions: &mut Vec<BrokerAction>) {
        self.on_closed(conn);
        actions.push(BrokerAction::Close { conn });
    }

    fn send(conn: ConnId, packet: &MqttPacket, actions: &mut Vec<BrokerAction>) {
        actions.push(BrokerAction::Send {
            conn,
            bytes: encode_packet(packet),
        });
    }

    /// Returns false once the connection is gone.
    fn handle(
        &mut self,
        conn: ConnId,
        packet: MqttPacket,
        actions: &mut Vec<BrokerAction>,
    ) -> bool {
        let client = self.conns.get(&conn).and_then(|c| c.client_id.clone());
        match (packet, client) {
            (
                MqttPacket::Connect {
                    client_id,
                    keepalive,
                    clean_session,
                },
                None,
            ) => {
                let client_id = if client_id.is_empty() {
                    if !clean_session {
                        Self::send(
                            conn,
                            &MqttPacket::Connack {
                                return_code: ConnectReturnCode::IdentifierRejected,
                            },
                            actions,
                        );
                        self.drop_connection(conn, actions);
                        return false;
                    }
                    format!("auto-{conn}")
                } else {
                    client_id
                };
                if let Some(old) = self.sessions.insert(client_id.clone(), conn) {
                    if old != conn {
                        self.stats.takeovers += 1;
                        tracing::info!(target: "broker", event = "takeover", client_id = %client_id, old_conn = old);
                        self.remove_subscriptions(&client_id);
                        if let Some(c) = self.conns.get_mut(&old) {
                            c.client_id = None;
                        }
                        self.conns.remove(&old);
                        actions.push(BrokerAction::Close { conn: old });
                    }
                }
                self.conns
                    .get_mut(&conn)
                    .expect("connection exists")
                    .client_id = Some(client_id.clone());
                self.stats.connects += 1;
                tracing::info!(target: "broker", event = "connect", client_id = %client_id, keepalive, conn);
                Self::send(
                    conn,
                    &MqttPacket::Connack {
                        return_code: ConnectReturnCode::Accepted,
                    },
                    actions,
                );
                true
            }
            (_, None) | (MqttPacket::Connect { .. }, Some(_)) => {
                self.stats.protocol_errors += 1;
                tracing::warn!(target: "broker", event = "protocol_error", conn, reason = "unexpected packet order");
                self.drop_connection(conn, actions);
                false
            }
            (MqttPacket::Publish(publish), Some(client)) => {
                self.stats.publishes += 1;
                if publish.retain {
                    self.stats.retain_ignored += 1;
                    tracing::warn!(target: "broker", event = "retain_ignored", client_id = %client, topic = %publish.topic);
                }
                let targets = self.route(&publish);
                tracing::info!(
                    target: "broker",
                    event = "publish",
                    client_id = %client,
                    topic = %publish.topic,
                    bytes = publish.payload.len(),
                    subscribers = targets.len()
                );
                if targets.is_empty() {
                    self.stats.dropped += 1;
                }
                let delivered = MqttPacket::Publish(Publish {
                    topic: publish.topic,
                    payload: publish.payload,
                    retain: false,
                    dup: publish.dup,
                });
                let bytes = encode_packet(&delivered);
                for target in targets {
                    let target_conn = self.sessions[&target];
                    self.stats.deliveries += 1;
                    tracing::debug!(target: "broker", event = "route", to = %target);
                    actions.push(BrokerAction::Send {
                        conn: target_conn,
                        bytes: bytes.clone(),
                    });
                }
                true
            }
            (MqttPacket::Subscribe { packet_id, filters }, Some(client)) => {
                let granted = filters
                    .into_iter()
                    .map(|(filter, _requested)| {
                        if filter.has_wildcard() {
                            tracing::info!(target: "broker", event = "subscribe", client_id = %client, filter = %filter, granted = "failure");
                            return SubackCode::Failure;
                        }
                        tracing::info!(target: "broker", event = "subscribe", client_id = %client, filter = %filter, granted = 0);
                        self.subscriptions
                            .entry(filter.as_str().to_string())
                            .or_default()
                            .insert(client.clone());
                        SubackCode::Granted(0)
                    })
                    .collect();
                Self::send(conn, &MqttPacket::Suback { packet_id, granted }, actions);
                true
            }
            (MqttPacket::Pingreq, Some(_)) => {
                Self::send(conn, &MqttPacket::Pingresp, actions);
                true
            }
            (MqttPacket::Disconnect, Some(_)) => {
                self.drop_connection(conn, actions);
                false
            }
            (other, Some(client)) => {
                self.stats.protocol_errors += 1;
                tracing::warn!(target: "broker", event = "protocol_error", client_id = %client, packet = other.name());
                self.drop_connection(conn, actions);
                false
            }
        }
    }
}

/// Delivery set of `publish` under `state`.
pub fn broker_route(publish: &Publish, state: &BrokerState) -> Vec<String> {
    state.route(publish)
}
