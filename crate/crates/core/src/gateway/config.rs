//! Gateway wiring: which registers to poll, which coils to write, which topics to use.
//!
//! The file format is TOML; see `configs/gateway1.toml` for an annotated example.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modbus::master::TimingError;
use crate::modbus::serial::SerialParamsError;
use crate::modbus::{MasterTiming, SerialParams, SlaveAddress};
use crate::mqtt::{TopicFilter, TopicName, DEFAULT_PORT};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("slave address {0} is outside 1..=247")]
    SlaveAddress(u8),
    #[error(transparent)]
    Serial(#[from] SerialParamsError),
    #[error(transparent)]
    Timing(#[from] TimingError),
    #[error("read_map.count must be 1 or 2, got {0}")]
    ReadCount(u16),
    #[error("write_map.count must be 1 or 2, got {0}")]
    WriteCount(u16),
    #[error("write_map.mode {mode:?} does not fit count {count} (single-coil needs 1, multi-coil needs 2)")]
    WriteMode { mode: WriteMode, count: u16 },
    #[error("publish and subscribe topics must differ")]
    SameTopics,
    #[error("invalid topic {topic:?}: {reason}")]
    Topic { topic: String, reason: String },
    #[error("retain must stay false")]
    RetainEnabled,
    #[error("poll period must be positive")]
    PollPeriod,
    #[error("{0}")]
    Invalid(String),
}

pub(crate) mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1e3)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let ms = f64::deserialize(d)?;
        if !ms.is_finite() || ms < 0.0 {
            return Err(serde::de::Error::custom(
                "duration must be a non-negative number of ms",
            ));
        }
        Ok(Duration::from_secs_f64(ms / 1e3))
    }

    pub mod option {
        use std::time::Duration;

        use serde::{Deserializer, Serializer};

        pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
            match d {
                Some(d) => super::serialize(d, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
            super::deserialize(d).map(Some)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    #[serde(rename = "response_timeout_ms", with = "millis")]
    pub response_timeout: Duration,
    /// Defaults to exactly 3.5 character times of the serial line.
    #[serde(
        rename = "inter_frame_delay_ms",
        with = "millis::option",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub inter_frame_delay: Option<Duration>,
    pub retries: u32,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            response_timeout: Duration::from_millis(500),
            inter_frame_delay: None,
            retries: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModbusConfig {
    pub slave_address: u8,
    #[serde(default)]
    pub serial: SerialParams,
    #[serde(default)]
    pub timing: TimingConfig,
    #[serde(rename = "poll_period_ms", with = "millis")]
    pub poll_period: Duration,
    /// Address of the PLC's serial tunnel; only used by live runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

impl ModbusConfig {
    pub fn master_timing(&self) -> MasterTiming {
        MasterTiming {
            response_timeout: self.timing.response_timeout,
            inter_frame_delay: self
                .timing
                .inter_frame_delay
                .unwrap_or_else(|| self.serial.frame_gap()),
            retries: self.timing.retries,
        }
    }

    pub fn slave(&self) -> SlaveAddress {
        SlaveAddress::new(self.slave_address).expect("validated slave address")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadMap {
    pub start_register: u16,
    pub count: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WriteMode {
    /// Function code 05.
    SingleCoil,
    /// Function code 15.
    MultiCoil,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WriteMap {
    pub mode: WriteMode,
    pub start_coil: u16,
    pub count: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MqttConfig {
    pub broker_address: String,
    #[serde(default = "default_port")]
    pub port: u16,
    pub client_id: String,
    pub publish_topic: String,
    pub subscribe_topic: String,
    #[serde(default)]
    pub retain: bool,
    #[serde(rename = "keepalive_s", default = "default_keepalive")]
    pub keepalive: u16,
}

fn default_port() -> u16 {
    DEFAULT_PORT
}

fn default_keepalive() -> u16 {
    60
}

fn default_enabled() -> bool {
    true
}

impl MqttConfig {
    pub fn broker_endpoint(&self) -> String {
        format!("{}:{}", self.broker_address, self.port)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default = "default_enabled")]
    pub enabled: bool,
    pub modbus: ModbusConfig,
    pub read_map: ReadMap,
    pub write_map: WriteMap,
    pub mqtt: MqttConfig,
}

fn topic_error(topic: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Topic {
        topic: topic.to_string(),
        reason: reason.to_string(),
    }
}

impl GatewayConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: GatewayConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("gateway config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.modbus.slave_address == 0 || self.modbus.slave_address > SlaveAddress::MAX {
            return Err(ConfigError::SlaveAddress(self.modbus.slave_address));
        }
        self.modbus.serial.validate()?;
        self.modbus.master_timing().validate(&self.modbus.serial)?;
        if self.modbus.poll_period.is_zero() {
            return Err(ConfigError::PollPeriod);
        }
        if !(1..=2).contains(&self.read_map.count) {
            return Err(ConfigError::ReadCount(self.read_map.count));
        }
        if !(1..=2).contains(&self.write_map.count) {
            return Err(ConfigError::WriteCount(self.write_map.count));
        }
        let mode_fits = match self.write_map.mode {
            WriteMode::SingleCoil => self.write_map.count == 1,
            WriteMode::MultiCoil => self.write_map.count >= 2,
        };
        if !mode_fits {
            return Err(ConfigError::WriteMode {
                mode: self.write_map.mode,
                count: self.write_map.count,
            });
        }
        if self.mqtt.retain {
            return Err(ConfigError::RetainEnabled);
        }
        self.publish_topic()?;
        let filter = self.subscribe_filter()?;
        if filter.has_wildcard() {
            return Err(topic_error(
                &self.mqtt.subscribe_topic,
                "wildcards are not routed",
            ));
        }
        if self.mqtt.publish_topic == self.mqtt.subscribe_topic {
            return Err(ConfigError::SameTopics);
        }
        if self.mqtt.client_id.is_empty() {
            return Err(ConfigError::Invalid(
                "mqtt.client_id must not be empty".into(),
            ));
        }
        Ok(())
    }

    pub fn publish_topic(&self) -> Result<TopicName, ConfigError> {
        TopicName::new(self.mqtt.publish_topic.clone())
            .map_err(|e| topic_error(&self.mqtt.publish_topic, e))
    }

    pub fn subscribe_filter(&self) -> Result<TopicFilter, ConfigError> {
        TopicFilter::new(self.mqtt.subscribe_topic.clone())
            .map_err(|e| topic_error(&self.mqtt.subscribe_topic, e))
    }

    /// Gateway for the first PLC: reads register 40001, writes two coils with FC15.
    pub fn first_plc() -> Self {
        GatewayConfig {
            enabled: true,
            modbus: ModbusConfig {
                slave_address: 1,
                serial: SerialParams::default(),
                timing: TimingConfig::default(),
                poll_period: Duration::from_millis(50),
                endpoint: None,
            },
            read_map: ReadMap {
                start_register: 0,
                count: 1,
            },
            write_map: WriteMap {
                mode: WriteMode::MultiCoil,
                start_coil: 0,
                count: 2,
            },
            mqtt: MqttConfig {
                broker_address: "127.0.0.1".into(),
                port: DEFAULT_PORT,
                client_id: "gw1".into(),
                publish_topic: "plc1/flags".into(),
                subscribe_topic: "plc2/flags".into(),
                retain: false,
                keepalive: 60,
            },
        }
    }

    /// Gateway for the second PLC: reads registers 40001 and 40002, writes one coil with FC05.
    pub fn second_plc() -> Self {
        GatewayConfig {
            enabled: true,
            modbus: ModbusConfig {
                slave_address: 2,
                ..Self::first_plc().modbus
            },
            read_map: ReadMap {
                start_register: 0,
                count: 2,
            },
            write_map: WriteMap {
                mode: WriteMode::SingleCoil,
                start_coil: 0,
                count: 1,
            },
            mqtt: MqttConfig {
                client_id: "gw2".into(),
                publish_topic: "plc2/flags".into(),
                subscribe_topic: "plc1/flags".into(),
                ..Self::first_plc().mqtt
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
enabled = true

[modbus]
slave_address = 1
poll_period_ms = 50
endpoint = "127.0.0.1:5021"

[modbus.serial]
baud = 9600
parity = "even"
data_bits = 8
stop_bits = 1

[modbus.timing]
response_timeout_ms = 500
retries = 1

[read_map]
start_register = 0
count = 1

[write_map]
mode = "multi-coil"
start_coil = 0
count = 2

[mqtt]
broker_address = "127.0.0.1"
port = 1883
client_id = "gw1"
publish_topic = "plc1/flags"
subscribe_topic = "plc2/flags"
retain = false
keepalive_s = 60
"#;

    #[test]
    fn parses_sample() {
        let cfg = GatewayConfig::from_toml(SAMPLE).unwrap();
        let mut expected = GatewayConfig::first_plc();
        expected.modbus.endpoint = Some("127.0.0.1:5021".into());
        assert_eq!(cfg, expected);
        let timing = cfg.modbus.master_timing();
        assert_eq!(
            timing.inter_frame_delay,
            SerialParams::default().frame_gap()
        );
        assert_eq!(cfg.mqtt.broker_endpoint(), "127.0.0.1:1883");
    }

    #[test]
    fn presets_validate_and_round_trip() {
        for cfg in [GatewayConfig::first_plc(), GatewayConfig::second_plc()] {
            cfg.validate().unwrap();
            assert_eq!(GatewayConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        }
    }

    #[test]
    fn retain_cannot_be_enabled() {
        let text = SAMPLE.replace("retain = false", "retain = true");
        assert!(matches!(
            GatewayConfig::from_toml(&text),
            Err(ConfigError::RetainEnabled)
        ));
    }

    #[test]
    fn write_mode_must_match_count() {
        let mut cfg = GatewayConfig::first_plc();
        cfg.write_map.count = 1;
        assert!(matches!(cfg.validate(), Err(ConfigError::WriteMode { .. })));
        let mut cfg = GatewayConfig::second_plc();
        cfg.write_map.count = 2;
        assert!(matches!(cfg.validate(), Err(ConfigError::WriteMode { .. })));
    }

    #[test]
    fn topics_must_differ_and_be_exact() {
        let mut cfg = GatewayConfig::first_plc();
        cfg.mqtt.subscribe_topic = cfg.mqtt.publish_topic.clone();
        assert!(matches!(cfg.validate(), Err(ConfigError::SameTopics)));
        cfg.mqtt.subscribe_topic = "plc2/#".into();
        assert!(matches!(cfg.validate(), Err(ConfigError::Topic { .. })));
        cfg.mqtt.subscribe_topic = "plc2/flags".into();
        cfg.mqtt.publish_topic = "plc1/+".into();
        assert!(matches!(cfg.validate(), Err(ConfigError::Topic { .. })));
    }

    #[test]
    fn timing_and_address_checks() {
        let mut cfg = GatewayConfig::first_plc();
        cfg.modbus.timing.inter_frame_delay = Some(Duration::from_millis(1));
        assert!(matches!(cfg.validate(), Err(ConfigError::Timing(_))));
        let mut cfg = GatewayConfig::first_plc();
        cfg.modbus.slave_address = 0;
        assert!(matches!(cfg.validate(), Err(ConfigError::SlaveAddress(0))));
        let mut cfg = GatewayConfig::first_plc();
        cfg.read_map.count = 3;
        assert!(matches!(cfg.validate(), Err(ConfigError::ReadCount(3))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = SAMPLE.replace("retain = false", "retain = false\nqos = 1");
        assert!(matches!(
            GatewayConfig::from_toml(&text),
            Err(ConfigError::Parse(_))
        ));
    }
}
