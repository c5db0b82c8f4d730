//! Deterministic end-to-end run: two PLCs, two gateways and one broker on a
//! single simulated clock.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use thiserror::Error;

use super::config::ScenarioConfig;
use super::program::{PlcId, PlcNode};
use super::report::{check_trace, ErrorCounts, ScenarioReport, WireCounts};
use crate::clock::Clock;
use crate::events::EventLog;
use crate::gateway::{ConfigError, Gateway, GatewayStats};
use crate::modbus::{FaultPlan, FaultStats, FaultyTransport, ModbusTrace, SimSerialLink};
use crate::mqtt::{SimConnector, SimNetwork};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Config(#[from] ConfigError),
    #[error("deadlock: no progress for {quiescence:?} at t={at:?} after {} of {} cycles", report.cycles_completed, report.cycles_target)]
    DeadlockDetected {
        at: Duration,
        quiescence: Duration,
        report: Box<ScenarioReport>,
    },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl ScenarioError {
    pub fn report(&self) -> Option<&ScenarioReport> {
        match self {
            ScenarioError::DeadlockDetected { report, .. } => Some(report),
            _ => None,
        }
    }
}

type SimGateway = Gateway<FaultyTransport<SimSerialLink<PlcNode>>, SimConnector>;

/// Hook run by the scheduler before each process step, with the step time.
pub type Intervention<'a> = dyn FnMut(Duration, &SimNetwork) + 'a;

#[allow(clippy::too_many_arguments)]
pub(crate) fn build_report(
    config: &ScenarioConfig,
    cycles_completed: u32,
    sim_time: Duration,
    log: &EventLog,
    modbus: &ModbusTrace,
    mqtt: Vec<crate::mqtt::MqttTraceEntry>,
    gateways: &[GatewayStats],
    injected: FaultStats,
) -> ScenarioReport {
    let events = log.events();
    let modbus_trace = modbus.entries();
    let wire = WireCounts::from_traces(&modbus_trace, &mqtt);
    let mut errors = ErrorCounts::default();
    for g in gateways {
        errors.modbus += g.modbus_errors;
        errors.mqtt += g.mqtt_errors;
        errors.writes_lost += g.writes_lost;
        errors.dropped_messages += g.dropped_messages;
    }
    let violations = check_trace(&events);
    ScenarioReport {
        cycles_target: config.cycles,
        cycles_completed,
        sim_time,
        events,
        modbus_trace,
        mqtt_trace: mqtt,
        wire,
        errors,
        injected,
        violations,
    }
}

fn plan_for(config: &ScenarioConfig, id: PlcId) -> FaultPlan {
    FaultPlan {
        seed: config.faults.seed.wrapping_add(u64::from(id.number())),
        ..config.faults
    }
}

/// Runs the scenario to its cycle target on a simulated clock.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioReport, ScenarioError> {
    run_scenario_with(config, &mut |_, _| {})
}

/// Like [`run_scenario`], calling `intervene` before every scheduled step so
/// tests can stop or restart the broker at chosen times.
pub fn run_scenario_with(
    config: &ScenarioConfig,
    intervene: &mut Intervention<'_>,
) -> Result<ScenarioReport, ScenarioError> {
    config.validate()?;
    let clock = Clock::sim();
    let log = EventLog::new();
    let network = if config.broker.enabled {
        SimNetwork::new(clock.clone())
    } else {
        SimNetwork::without_broker(clock.clone())
    };
    let modbus = ModbusTrace::new();

    let node = |id: PlcId| {
        let plc = config.plc(id);
        Arc::new(Mutex::new(PlcNode::new(
            id,
            &config.motor_ticks,
            plc.store.clone(),
            config.framing,
            &plc.serial,
        )))
    };
    let plcs = [node(PlcId::First), node(PlcId::Second)];
    let gateway = |id: PlcId, plc: &Arc<Mutex<PlcNode>>| -> SimGateway {
        let gw = config.gateway(id).clone();
        let link = SimSerialLink::new(plc.clone(), gw.modbus.serial, config.framing, clock.clone())
            .with_trace(modbus.clone(), id.actor());
        let connector = network.connector(gw.mqtt.client_id.clone());
        Gateway::new(
            gw,
            FaultyTransport::new(link, plan_for(config, id)),
            connector,
            clock.clone(),
            log.clone(),
        )
    };
    let mut gateways = [
        gateway(PlcId::First, &plcs[0]),
        gateway(PlcId::Second, &plcs[1]),
    ];

    // processes: plc1, plc2, gw1, gw2
    let mut wake = [Duration::ZERO; 4];
    let min_step = Duration::from_micros(100);
    let outcome = loop {
        let (index, at) = wake
            .iter()
            .copied()
            .enumerate()
            .min_by_key(|(i, t)| (*t, *i))
            .expect("four processes");
        clock.set(at);
        intervene(at, &network);
        match index {
            0 | 1 => {
                plcs[index].lock().unwrap().scan(at, &log);
                wake[index] = at + config.tick;
            }
            _ => {
                let next = gateways[index - 2].step();
                wake[index] = next.max(at + min_step);
            }
        }
        let completed = plcs[0].lock().unwrap().program().restarts();
        if completed >= config.cycles {
            break Ok(completed);
        }
        if at.saturating_sub(log.last_progress()) > config.quiescence {
            break Err((completed, at));
        }
    };
    for gw in &mut gateways {
        gw.shutdown();
    }
    let stats: Vec<GatewayStats> = gateways.iter().map(Gateway::stats).collect();
    let mut injected = FaultStats::default();
    for gw in &gateways {
        let s = gw.master().transport().stats();
        injected.frames += s.frames;
        injected.corrupted += s.corrupted;
        injected.dropped += s.dropped;
    }
    let sim_time = clock.now();
    let (completed, deadlock_at) = match outcome {
        Ok(c) => (c, None),
        Err((c, at)) => (c, Some(at)),
    };
    let report = build_report(
        config,
        completed,
        sim_time,
        &log,
        &modbus,
        network.trace().entries(),
        &stats,
        injected,
    );
    match deadlock_at {
        None => Ok(report),
        Some(at) => Err(ScenarioError::DeadlockDetected {
            at,
            quiescence: config.quiescence,
            report: Box::new(report),
        }),
    }
}
