//! Scenario configuration (TOML). See `configs/scenario.toml`.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::program::{MotorTicks, PlcId};
use crate::gateway::config::millis;
use crate::gateway::{ConfigError, GatewayConfig};
use crate::modbus::{FaultPlan, FramingMode, SerialParams, StoreLayout};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrokerConfig {
    #[serde(default = "default_broker_listen")]
    pub listen: String,
    #[serde(default = "yes")]
    pub enabled: bool,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        BrokerConfig {
            listen: default_broker_listen(),
            enabled: true,
        }
    }
}

fn default_broker_listen() -> String {
    "127.0.0.1:1883".into()
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlcConfig {
    /// Serial tunnel address for live runs.
    pub listen: String,
    #[serde(default)]
    pub serial: SerialParams,
    #[serde(default)]
    pub store: StoreLayout,
}

impl PlcConfig {
    fn new(listen: &str) -> Self {
        PlcConfig {
            listen: listen.into(),
            serial: SerialParams::default(),
            store: StoreLayout::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub cycles: u32,
    #[serde(rename = "tick_ms", with = "millis")]
    pub tick: Duration,
    #[serde(default)]
    pub motor_ticks: MotorTicks,
    /// No handshake progress for this long ends the run as a deadlock.
    #[serde(rename = "quiescence_ms", with = "millis")]
    pub quiescence: Duration,
    /// Frame delimiting on simulated lines.
    pub framing: FramingMode,
    #[serde(default)]
    pub broker: BrokerConfig,
    pub plc1: PlcConfig,
    pub plc2: PlcConfig,
    pub gateway1: GatewayConfig,
    pub gateway2: GatewayConfig,
    /// Damage applied to frames the gateways receive from their PLCs.
    #[serde(default)]
    pub faults: FaultPlan,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let mut gateway1 = GatewayConfig::first_plc();
        let mut gateway2 = GatewayConfig::second_plc();
        gateway1.modbus.endpoint = Some("127.0.0.1:5021".into());
        gateway2.modbus.endpoint = Some("127.0.0.1:5022".into());
        gateway1.mqtt.keepalive = 5;
        gateway2.mqtt.keepalive = 5;
        ScenarioConfig {
            cycles: 1,
            tick: Duration::from_millis(10),
            motor_ticks: MotorTicks::default(),
            quiescence: Duration::from_secs(30),
            framing: FramingMode::Boundary,
            broker: BrokerConfig::default(),
            plc1: PlcConfig::new("127.0.0.1:5021"),
            plc2: PlcConfig::new("127.0.0.1:5022"),
            gateway1,
            gateway2,
            faults: FaultPlan::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: ScenarioConfig = toml::from_str(text)?;
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
        toml::to_string_pretty(self).expect("scenario config serializes")
    }

    pub fn plc(&self, id: PlcId) -> &PlcConfig {
        match id {
            PlcId::First => &self.plc1,
            PlcId::Second => &self.plc2,
        }
    }

    pub fn gateway(&self, id: PlcId) -> &GatewayConfig {
        match id {
            PlcId::First => &self.gateway1,
            PlcId::Second => &self.gateway2,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.cycles == 0 {
            return invalid("cycles must be at least 1".into());
        }
        if self.tick.is_zero() {
            return invalid("tick_ms must be positive".into());
        }
        if self.quiescence.is_zero() {
            return invalid("quiescence_ms must be positive".into());
        }
        self.motor_ticks.validate().map_err(ConfigError::Invalid)?;
        for p in [
            self.faults.corrupt_probability,
            self.faults.drop_probability,
        ] {
            if !(0.0..=1.0).contains(&p) {
                return invalid(format!("fault probability {p} is outside 0..=1"));
            }
        }
        for id in [PlcId::First, PlcId::Second] {
            let gw = self.gateway(id);
            gw.validate()?;
            if gw.modbus.slave_address != id.number() {
                return invalid(format!(
                    "gateway{} must address slave {}, not {}",
                    id.number(),
                    id.number(),
                    gw.modbus.slave_address
                ));
            }
            if gw.modbus.serial != self.plc(id).serial {
                return invalid(format!(
                    "gateway{0} and plc{0} disagree on serial parameters",
                    id.number()
                ));
            }
            self.plc(id).serial.validate()?;
        }
        if self.gateway1.mqtt.publish_topic != self.gateway2.mqtt.subscribe_topic
            || self.gateway2.mqtt.publish_topic != self.gateway1.mqtt.subscribe_topic
        {
            return invalid("each gateway must subscribe to the other's publish topic".into());
        }
        if self.gateway1.mqtt.client_id == self.gateway2.mqtt.client_id {
            return invalid("gateways need distinct client ids".into());
        }
        Ok(())
    }
}
