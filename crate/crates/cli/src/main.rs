//! `plclink`: run the broker, a simulated PLC, a gateway or the whole plant,
//! or decode captured frames.

mod decode;

use std::io::IsTerminal;
use std::net::{TcpListener, ToSocketAddrs};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use plclink::events::EventLog;
use plclink::gateway::GatewayConfig;
use plclink::modbus::Role;
use plclink::mqtt::{BrokerServer, MqttTrace};
use plclink::plant::{
    run_gateway, run_live, run_scenario, PlcId, PlcProcess, ScenarioConfig, ScenarioError,
};
use plclink::Clock;

#[derive(Parser)]
#[command(
    name = "plclink",
    version,
    about = "PLC-to-PLC flag exchange over Modbus RTU and MQTT"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the MQTT broker.
    Broker {
        #[arg(long, default_value = "127.0.0.1:1883")]
        listen: String,
    },
    /// Run a simulated PLC serving its serial line over TCP.
    Plc {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        id: u8,
        #[arg(long)]
        listen: String,
        /// Scenario file supplying motor durations, tick and store layout.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run one gateway.
    Gateway {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the full plant and print the report.
    Scenario {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        cycles: Option<u32>,
        /// Single-threaded run on a simulated clock.
        #[arg(long)]
        deterministic: bool,
    },
    /// Decode a Modbus RTU frame given as hex, or every frame in a trace file.
    DecodeModbus {
        #[arg(required_unless_present = "trace")]
        hex: Option<String>,
        #[arg(long, value_enum)]
        role: Option<RoleArg>,
        #[arg(long, conflicts_with = "hex")]
        trace: Option<PathBuf>,
    },
    /// Decode MQTT control packets given as hex.
    DecodeMqtt { hex: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    /// Decode as a request (what a slave receives).
    Request,
    /// Decode as a response (what a master receives).
    Response,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    match run(cli.command) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn print_verdicts(verdicts: &[decode::Verdict]) -> ExitCode {
    for v in verdicts {
        println!("{}", v.text);
    }
    if verdicts.iter().all(|v| v.ok) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn load_scenario(path: Option<&PathBuf>) -> Result<ScenarioConfig, String> {
    match path {
        Some(p) => ScenarioConfig::load(p).map_err(|e| e.to_string()),
        None => Ok(ScenarioConfig::default()),
    }
}

fn wait_forever() -> ! {
    loop {
        std::thread::park();
    }
}

fn run(command: Command) -> Result<ExitCode, String> {
    match command {
        Command::DecodeModbus { hex, role, trace } => {
            let verdicts = match (hex, trace) {
                (_, Some(path)) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
                    decode::modbus_trace(&text)
                }
                (Some(hex), None) => {
                    let role = role.map(|r| match r {
                        RoleArg::Request => Role::Slave,
                        RoleArg::Response => Role::Master,
                    });
                    vec![decode::modbus(&decode::parse_hex(&hex)?, role)]
                }
                (None, None) => unreachable!("clap requires hex or --trace"),
            };
            Ok(print_verdicts(&verdicts))
        }
        Command::DecodeMqtt { hex } => Ok(print_verdicts(&decode::mqtt(&decode::parse_hex(&hex)?))),
        Command::Broker { listen } => {
            let listener = TcpListener::bind(&listen)
                .map_err(|e| format!("cannot listen on {listen}: {e}"))?;
            let server = BrokerServer::spawn(listener, Clock::system(), MqttTrace::new())
                .map_err(|e| e.to_string())?;
            eprintln!("broker listening on {}", server.local_addr());
            wait_forever()
        }
        Command::Plc { id, listen, config } => {
            let scenario = load_scenario(config.as_ref())?;
            let id = PlcId::from_number(id).expect("clap restricts the id");
            let listener = TcpListener::bind(&listen)
                .map_err(|e| format!("cannot listen on {listen}: {e}"))?;
            let process = PlcProcess::spawn(
                id,
                listener,
                scenario.plc(id),
                &scenario.motor_ticks,
                scenario.tick,
                Clock::system(),
                EventLog::echoing(),
                Arc::new(AtomicBool::new(false)),
            )
            .map_err(|e| e.to_string())?;
            eprintln!("{id} serving serial line on {}", process.local_addr);
            process.join();
            Ok(ExitCode::SUCCESS)
        }
        Command::Gateway { config } => {
            let config = GatewayConfig::load(&config).map_err(|e| e.to_string())?;
            let broker = config.mqtt.broker_endpoint();
            if broker
                .to_socket_addrs()
                .map(|mut a| a.next().is_none())
                .unwrap_or(true)
            {
                return Err(format!("cannot resolve broker address {broker}"));
            }
            if !config.enabled {
                eprintln!("gateway {} is disabled", config.mqtt.client_id);
                return Ok(ExitCode::SUCCESS);
            }
            let shutdown = AtomicBool::new(false);
            run_gateway(
                config,
                Clock::system(),
                EventLog::echoing(),
                None,
                &shutdown,
            )
            .map_err(|e| e.to_string())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Scenario {
            config,
            cycles,
            deterministic,
        } => {
            let mut scenario = load_scenario(config.as_ref())?;
            if let Some(n) = cycles {
                scenario.cycles = n;
            }
            let result = if deterministic {
                run_scenario(&scenario)
            } else {
                run_live(&scenario)
            };
            match result {
                Ok(report) => {
                    println!("{report}");
                    Ok(if report.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::FAILURE
                    })
                }
                Err(ScenarioError::DeadlockDetected { report, at, .. }) => {
                    println!("{report}");
                    eprintln!("deadlock detected at t={:.3}s", at.as_secs_f64());
                    Ok(ExitCode::FAILURE)
                }
                Err(e) => Err(e.to_string()),
            }
        }
    }
}
