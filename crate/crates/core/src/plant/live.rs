//! Wall-clock run: each process on its own thread, talking over local sockets.

use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::config::ScenarioConfig;
use super::program::{MotorTicks, PlcId, PlcNode};
use super::report::ScenarioReport;
use super::scenario::{build_report, ScenarioError};
use crate::clock::Clock;
use crate::events::EventLog;
use crate::gateway::{Gateway, GatewayConfig, GatewayStats};
use crate::modbus::{serve_serial_device, FaultStats, FramingMode, ModbusTrace, TcpSerialLink};
use crate::mqtt::{BrokerServer, MqttTrace, TcpConnector};

/// A PLC serving its serial tunnel and scanning its program.
pub struct PlcProcess {
    pub node: Arc<Mutex<PlcNode>>,
    pub local_addr: std::net::SocketAddr,
    handles: Vec<JoinHandle<()>>,
}

impl PlcProcess {
    #[allow(clippy::too_many_arguments)]
    pub fn spawn(
        id: PlcId,
        listener: TcpListener,
        plc: &super::config::PlcConfig,
        motor_ticks: &MotorTicks,
        tick: Duration,
        clock: Clock,
        log: EventLog,
        shutdown: Arc<AtomicBool>,
    ) -> std::io::Result<Self> {
        let local_addr = listener.local_addr()?;
        let node = Arc::new(Mutex::new(PlcNode::new(
            id,
            motor_ticks,
            plc.store.clone(),
            FramingMode::Gap,
            &plc.serial,
        )));
        let serve = {
            let (node, serial, clock, shutdown) =
                (node.clone(), plc.serial, clock.clone(), shutdown.clone());
            thread::spawn(move || {
                if let Err(e) = serve_serial_device(listener, node, serial, clock, shutdown) {
                    tracing::error!(%e, plc = id.actor(), "serial tunnel failed");
                }
            })
        };
        let scan = {
            let node = node.clone();
            thread::spawn(move || {
                let mut next = clock.now();
                while !shutdown.load(Ordering::SeqCst) {
                    node.lock().unwrap().scan(clock.now(), &log);
                    next += tick;
                    clock.sleep_until(next);
                }
            })
        };
        Ok(PlcProcess {
            node,
            local_addr,
            handles: vec![serve, scan],
        })
    }

    pub fn join(self) {
        for h in self.handles {
            let _ = h.join();
        }
    }
}

/// Runs one gateway on the current thread until `shutdown` is set.
pub fn run_gateway(
    config: GatewayConfig,
    clock: Clock,
    log: EventLog,
    trace: Option<(ModbusTrace, String)>,
    shutdown: &AtomicBool,
) -> Result<GatewayStats, ScenarioError> {
    let endpoint = config.modbus.endpoint.clone().ok_or_else(|| {
        crate::gateway::ConfigError::Invalid(
            "modbus.endpoint is required for a live gateway".into(),
        )
    })?;
    let mut link = TcpSerialLink::connect(endpoint.as_str(), &config.modbus.serial, clock.clone())?;
    if let Some((trace, label)) = trace {
        link = link.with_trace(trace, label);
    }
    let connector = TcpConnector::new(config.mqtt.broker_endpoint());
    let mut gateway = Gateway::new(config, link, connector, clock, log);
    gateway.run(shutdown);
    Ok(gateway.stats())
}

/// Runs the scenario with real sockets and the wall clock.
pub fn run_live(config: &ScenarioConfig) -> Result<ScenarioReport, ScenarioError> {
    config.validate()?;
    let clock = Clock::system();
    let log = EventLog::new();
    let modbus = ModbusTrace::new();
    let shutdown = Arc::new(AtomicBool::new(false));

    let mut broker = if config.broker.enabled {
        Some(BrokerServer::spawn(
            TcpListener::bind(&config.broker.listen)?,
            clock.clone(),
            MqttTrace::new(),
        )?)
    } else {
        None
    };
    let mut plcs = Vec::new();
    let mut gateway_configs = Vec::new();
    for id in [PlcId::First, PlcId::Second] {
        let plc = config.plc(id);
        let process = PlcProcess::spawn(
            id,
            TcpListener::bind(&plc.listen)?,
            plc,
            &config.motor_ticks,
            config.tick,
            clock.clone(),
            log.clone(),
            shutdown.clone(),
        )?;
        let mut gw = config.gateway(id).clone();
        gw.modbus.endpoint = Some(process.local_addr.to_string());
        if let Some(b) = &broker {
            gw.mqtt.broker_address = b.local_addr().ip().to_string();
            gw.mqtt.port = b.local_addr().port();
        }
        gateway_configs.push((id, gw));
        plcs.push(process);
    }
    let gateway_threads: Vec<_> = gateway_configs
        .into_iter()
        .map(|(id, gw)| {
            let (clock, log, shutdown) = (clock.clone(), log.clone(), shutdown.clone());
            let trace = Some((modbus.clone(), id.actor().to_string()));
            thread::spawn(move || run_gateway(gw, clock, log, trace, &shutdown))
        })
        .collect();

    let started = Instant::now();
    let outcome = loop {
        thread::sleep(Duration::from_millis(5));
        let completed = plcs[0].node.lock().unwrap().program().restarts();
        if completed >= config.cycles {
            break Ok(completed);
        }
        if clock.now().saturating_sub(log.last_progress()) > config.quiescence {
            break Err(completed);
        }
    };
    shutdown.store(true, Ordering::SeqCst);
    let mut stats = Vec::new();
    for handle in gateway_threads {
        match handle.join() {
            Ok(Ok(s)) => stats.push(s),
            Ok(Err(e)) => tracing::warn!(%e, "gateway ended with an error"),
            Err(_) => tracing::error!("gateway thread panicked"),
        }
    }
    for plc in plcs {
        plc.join();
    }
    let mqtt = match broker.as_mut() {
        Some(b) => {
            b.stop();
            b.trace().entries()
        }
        None => Vec::new(),
    };
    let elapsed = started.elapsed();
    let (completed, deadlock) = match outcome {
        Ok(c) => (c, false),
        Err(c) => (c, true),
    };
    let report = build_report(
        config,
        completed,
        elapsed,
        &log,
        &modbus,
        mqtt,
        &stats,
        FaultStats::default(),
    );
    if deadlock {
        return Err(ScenarioError::DeadlockDetected {
            at: clock.now(),
            quiescence: config.quiescence,
            report: Box::new(report),
        });
    }
    Ok(report)
}
