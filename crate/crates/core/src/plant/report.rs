//! Scenario results and the ordering oracle run over them.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use crate::events::{Event, EventKind};
use crate::modbus::{decode_adu, Direction, FaultStats, Role, TraceEntry};
use crate::mqtt::{MqttDirection, MqttTraceEntry};

use super::program::{FLAG_REGISTER, SECOND_FLAG_REGISTER};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// The second PLC started without a fresh flag from the first.
    StartBeforeFlag { seq: u64, cycle: u32 },
    /// The first PLC restarted before both of the second PLC's flags.
    RestartBeforeFlags {
        seq: u64,
        cycle: u32,
        missing: Vec<u16>,
    },
    /// A gateway published a payload equal to its previous one.
    PublishWithoutChange { seq: u64, actor: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::StartBeforeFlag { seq, cycle } => {
                write!(
                    f,
                    "cycle {cycle} seq {seq}: plc2 started before plc1 set its flag"
                )
            }
            Violation::RestartBeforeFlags {
                seq,
                cycle,
                missing,
            } => write!(
                f,
                "cycle {cycle} seq {seq}: plc1 restarted without plc2 flags {missing:?}"
            ),
            Violation::PublishWithoutChange { seq, actor } => {
                write!(f, "seq {seq}: {actor} published an unchanged snapshot")
            }
        }
    }
}

/// Checks handshake ordering over events in the order given.
pub fn check_trace(events: &[Event]) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut plc1_flag_pending = false;
    let mut plc2_flags = [false; 2];
    let mut last_payload: BTreeMap<&str, &[u8]> = BTreeMap::new();
    for event in events {
        match (event.actor.as_str(), &event.kind) {
            ("plc1", EventKind::FlagSet { register }) if *register == FLAG_REGISTER => {
                plc1_flag_pending = true;
            }
            ("plc2", EventKind::SequenceStart) => {
                if !plc1_flag_pending {
                    violations.push(Violation::StartBeforeFlag {
                        seq: event.seq,
                        cycle: event.cycle,
                    });
                }
                plc1_flag_pending = false;
            }
            ("plc2", EventKind::FlagSet { register }) => {
                if let Some(slot) = plc2_flags.get_mut(usize::from(*register)) {
                    *slot = true;
                }
            }
            ("plc1", EventKind::Restart) => {
                let missing: Vec<u16> = [FLAG_REGISTER, SECOND_FLAG_REGISTER]
                    .into_iter()
                    .filter(|r| !plc2_flags[usize::from(*r)])
                    .collect();
                if !missing.is_empty() {
                    violations.push(Violation::RestartBeforeFlags {
                        seq: event.seq,
                        cycle: event.cycle,
                        missing,
                    });
                }
                plc2_flags = [false; 2];
            }
            (actor, EventKind::Publish { payload, .. }) => {
                if last_payload.get(actor) == Some(&payload.as_slice()) {
                    violations.push(Violation::PublishWithoutChange {
                        seq: event.seq,
                        actor: actor.to_string(),
                    });
                }
                last_payload.insert(actor, payload);
            }
            _ => {}
        }
    }
    violations
}

/// Requests on one serial link, counted per function code.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkCounts {
    pub requests: BTreeMap<u8, u64>,
    pub responses: u64,
    pub corrupt_responses: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WireCounts {
    pub modbus: BTreeMap<String, LinkCounts>,
    pub mqtt_publishes: u64,
    pub mqtt_packets: u64,
    pub mqtt_retained: u64,
}

impl WireCounts {
    pub fn from_traces(modbus: &[TraceEntry], mqtt: &[MqttTraceEntry]) -> Self {
        let mut counts = WireCounts::default();
        for entry in modbus {
            let link = counts.modbus.entry(entry.link.clone()).or_default();
            match entry.direction {
                Direction::MasterToSlave => {
                    let function = entry.bytes.get(1).copied().unwrap_or(0);
                    *link.requests.entry(function).or_default() += 1;
                }
                Direction::SlaveToMaster => {
                    link.responses += 1;
                    if decode_adu(&entry.bytes, Role::Master).is_err() {
                        link.corrupt_responses += 1;
                    }
                }
            }
        }
        for entry in mqtt {
            counts.mqtt_packets += 1;
            if entry.direction == MqttDirection::ToBroker && entry.is_publish() {
                counts.mqtt_publishes += 1;
                if entry.retain_bit() {
                    counts.mqtt_retained += 1;
                }
            }
        }
        counts
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ErrorCounts {
    pub modbus: u64,
    pub mqtt: u64,
    pub writes_lost: u64,
    pub dropped_messages: u64,
}

impl ErrorCounts {
    pub fn total(&self) -> u64 {
        self.modbus + self.mqtt + self.writes_lost + self.dropped_messages
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub cycles_target: u32,
    pub cycles_completed: u32,
    pub sim_time: Duration,
    pub events: Vec<Event>,
    pub modbus_trace: Vec<TraceEntry>,
    pub mqtt_trace: Vec<MqttTraceEntry>,
    pub wire: WireCounts,
    pub errors: ErrorCounts,
    /// Damage done by fault injection between the lines and the gateways.
    pub injected: FaultStats,
    pub violations: Vec<Violation>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.cycles_completed >= self.cycles_target
    }

    pub fn count(&self, actor: &str, name: &str) -> usize {
        self.events
            .iter()
            .filter(|e| e.actor == actor && e.kind.name() == name)
            .count()
    }

    pub fn cycle_events(&self, cycle: u32) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.cycle == cycle)
    }
}

impl fmt::Display for ScenarioReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for event in &self.events {
            writeln!(f, "{event}")?;
        }
        writeln!(f, "# summary")?;
        writeln!(
            f,
            "cycles_completed {} of {}",
            self.cycles_completed, self.cycles_target
        )?;
        writeln!(f, "sim_time {:.6}", self.sim_time.as_secs_f64())?;
        writeln!(f, "events {}", self.events.len())?;
        for (link, counts) in &self.wire.modbus {
            let functions: Vec<String> = counts
                .requests
                .iter()
                .map(|(fc, n)| format!("fc{fc:02}={n}"))
                .collect();
            writeln!(
                f,
                "modbus {link} {} responses={} corrupt={}",
                functions.join(" "),
                counts.responses,
                counts.corrupt_responses
            )?;
        }
        writeln!(
            f,
            "mqtt packets={} publishes={} retained={}",
            self.wire.mqtt_packets, self.wire.mqtt_publishes, self.wire.mqtt_retained
        )?;
        writeln!(
            f,
            "errors modbus={} mqtt={} writes_lost={} dropped={}",
            self.errors.modbus,
            self.errors.mqtt,
            self.errors.writes_lost,
            self.errors.dropped_messages
        )?;
        writeln!(
            f,
            "injected corrupted={} dropped={}",
            self.injected.corrupted, self.injected.dropped
        )?;
        writeln!(f, "violations {}", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "violation {v}")?;
        }
        write!(f, "result {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}
