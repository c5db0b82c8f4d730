//! Modbus-to-MQTT bridge, one per PLC.

pub mod bridge;
pub mod config;

pub use bridge::{
    decode_words, encode_words, FlagSnapshot, Gateway, GatewayError, GatewayStats, PollOutcome,
};
pub use config::{ConfigError, GatewayConfig, ReadMap, WriteMap, WriteMode};
