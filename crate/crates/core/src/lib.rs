//! PLC-to-PLC communication over Modbus RTU and MQTT.
//!
//! Each PLC is a Modbus RTU slave. A gateway per PLC acts as Modbus master,
//! polls the PLC's flag registers and publishes changes to an MQTT broker,
//! and writes flags received from its peer gateway into the PLC as coils.
//! The [`plant`] module runs two PLC programs, two gateways and a broker
//! against a shared simulated clock.

pub mod clock;
pub mod events;
pub mod gateway;
pub mod modbus;
pub mod mqtt;
pub mod plant;

pub use clock::Clock;
