//! The two-PLC, twelve-motor plant used as the end-to-end test bed.

pub mod config;
pub mod live;
pub mod motor;
pub mod program;
pub mod report;
pub mod scenario;

pub use config::{BrokerConfig, PlcConfig, ScenarioConfig};
pub use live::{run_gateway, run_live, PlcProcess};
pub use motor::{Motor, MotorState};
pub use program::{rearm_on_falling_edge, MotorTicks, Phase, PlcId, PlcNode, PlcProgram};
pub use report::{check_trace, ScenarioReport, Violation, WireCounts};
pub use scenario::{run_scenario, run_scenario_with, ScenarioError};
