//! Structured event log shared by PLC programs and gateways.

use std::fmt;
use std::io::Write;
use std::sync::{Arc, Mutex};
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    SequenceStart,
    MotorStart {
        motor: u8,
    },
    MotorDone {
        motor: u8,
    },
    FlagSet {
        register: u16,
    },
    FlagCleared {
        register: u16,
    },
    Restart,
    Publish {
        payload: Vec<u8>,
        initial: bool,
    },
    Receive {
        payload: Vec<u8>,
    },
    CoilWrite {
        function: u8,
        start: u16,
        states: Vec<bool>,
    },
    Connected,
    Subscribed {
        topic: String,
    },
    ConnectionLost {
        reason: String,
    },
    WriteLost {
        reason: String,
    },
    Error {
        kind: String,
        detail: String,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::SequenceStart => "sequence_start",
            EventKind::MotorStart { .. } => "motor_start",
            EventKind::MotorDone { .. } => "motor_done",
            EventKind::FlagSet { .. } => "flag_set",
            EventKind::FlagCleared { .. } => "flag_cleared",
            EventKind::Restart => "restart",
            EventKind::Publish { .. } => "publish",
            EventKind::Receive { .. } => "receive",
            EventKind::CoilWrite { .. } => "coil_write",
            EventKind::Connected => "connected",
            EventKind::Subscribed { .. } => "subscribed",
            EventKind::ConnectionLost { .. } => "connection_lost",
            EventKind::WriteLost { .. } => "write_lost",
            EventKind::Error { .. } => "error",
        }
    }

    /// Events that move the handshake forward. Errors and reconnect noise do not.
    pub fn is_progress(&self) -> bool {
        !matches!(
            self,
            EventKind::Error { .. }
                | EventKind::ConnectionLost { .. }
                | EventKind::WriteLost { .. }
                | EventKind::Connected
                | EventKind::Subscribed { .. }
        )
    }

    pub fn is_error(&self) -> bool {
        matches!(
            self,
            EventKind::Error { .. }
                | EventKind::ConnectionLost { .. }
                | EventKind::WriteLost { .. }
        )
    }

    pub fn detail(&self) -> String {
        fn hex(bytes: &[u8]) -> String {
            bytes.iter().map(|b| format!("{b:02x}")).collect()
        }
        match self {
            EventKind::SequenceStart | EventKind::Restart | EventKind::Connected => String::new(),
            EventKind::MotorStart { motor } | EventKind::MotorDone { motor } => {
                format!("motor={motor}")
            }
            EventKind::FlagSet { register } | EventKind::FlagCleared { register } => {
                format!("reg={register}")
            }
            EventKind::Publish { payload, initial } => {
                format!("payload={} initial={initial}", hex(payload))
            }
            EventKind::Receive { payload } => format!("payload={}", hex(payload)),
            EventKind::CoilWrite {
                function,
                start,
                states,
            } => {
                let bits: String = states.iter().map(|s| if *s { '1' } else { '0' }).collect();
                format!("fc={function:02} start={start} states={bits}")
            }
            EventKind::Subscribed { topic } => format!("topic={topic}"),
            EventKind::ConnectionLost { reason } | EventKind::WriteLost { reason } => {
                format!("reason={reason:?}")
            }
            EventKind::Error { kind, detail } => format!("kind={kind} detail={detail:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub seq: u64,
    pub cycle: u32,
    pub at: Duration,
    pub actor: String,
    pub kind: EventKind,
}

impl fmt::Display for Event {
    /// `cycle seq ts actor event detail`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {:.6} {} {}",
            self.cycle,
            self.seq,
            self.at.as_secs_f64(),
            self.actor,
            self.kind.name()
        )?;
        let detail = self.kind.detail();
        if !detail.is_empty() {
            write!(f, " {detail}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
struct Inner {
    events: Vec<Event>,
    cycle: u32,
    last_progress: Duration,
    echo: bool,
}

/// Append-only, cloneable handle to one run's events.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    inner: Arc<Mutex<Inner>>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Also print each event to stderr as `ts level event key=value...`.
    pub fn echoing() -> Self {
        let log = Self::new();
        log.inner.lock().unwrap().echo = true;
        log
    }

    pub fn record(&self, at: Duration, actor: &str, kind: EventKind) {
        let mut inner = self.inner.lock().unwrap();
        if kind.is_progress() {
            inner.last_progress = inner.last_progress.max(at);
        }
        if inner.echo {
            let level = if kind.is_error() { "WARN" } else { "INFO" };
            let detail = kind.detail();
            let mut line = format!(
                "{:.6} {level} {} actor={actor}",
                at.as_secs_f64(),
                kind.name()
            );
            if !detail.is_empty() {
                line.push(' ');
                line.push_str(&detail);
            }
            let _ = writeln!(std::io::stderr(), "{line}");
        }
        let event = Event {
            seq: inner.events.len() as u64,
            cycle: inner.cycle,
            at,
            actor: actor.to_string(),
            kind,
        };
        inner.events.push(event);
    }

    /// Opens the next handshake cycle; later events carry its number.
    pub fn begin_cycle(&self) -> u32 {
        let mut inner = self.inner.lock().unwrap();
        inner.cycle += 1;
        inner.cycle
    }

    pub fn cycle(&self) -> u32 {
        self.inner.lock().unwrap().cycle
    }

    pub fn last_progress(&self) -> Duration {
        self.inner.lock().unwrap().last_progress
    }

    pub fn events(&self) -> Vec<Event> {
        self.inner.lock().unwrap().events.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
