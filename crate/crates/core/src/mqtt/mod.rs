//! MQTT 3.1.1 subset: codec, broker, client session and transports.

pub mod broker;
pub mod client;
pub mod codec;
pub mod sim;
pub mod tcp;
pub mod trace;

pub use broker::{broker_route, BrokerAction, BrokerState, ConnId};
pub use client::{
    ClientError, ClientOptions, ClientSession, Connector, MqttStream, ReadOutcome, SessionState,
};
pub use codec::{
    decode_packet, encode_packet, encode_remaining_length, ConnectReturnCode, MqttDecodeError,
    MqttPacket, Publish, SubackCode, TopicFilter, TopicName,
};
pub use sim::{SimConnector, SimNetwork, SimStream};
pub use tcp::{BrokerServer, TcpConnector, TcpMqttStream, DEFAULT_PORT};
pub use trace::{MqttDirection, MqttTrace, MqttTraceEntry};
