//! The two PLC programs and the node that couples each one to its Modbus slave.

use std::collections::VecDeque;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::motor::{Motor, MotorState};
use crate::events::{EventKind, EventLog};
use crate::modbus::{
    DataStore, FramingMode, SerialDevice, SerialParams, Slave, SlaveAddress, StoreLayout,
};

/// Handshake flag of both PLCs (HREG 40001).
pub const FLAG_REGISTER: u16 = 0;
/// Second PLC's flag for motor 11 (HREG 40002).
pub const SECOND_FLAG_REGISTER: u16 = 1;
pub const MOTOR_COUNT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PlcId {
    First,
    Second,
}

impl PlcId {
    pub fn number(self) -> u8 {
        match self {
            PlcId::First => 1,
            PlcId::Second => 2,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(PlcId::First),
            2 => Some(PlcId::Second),
            _ => None,
        }
    }

    pub fn actor(self) -> &'static str {
        match self {
            PlcId::First => "plc1",
            PlcId::Second => "plc2",
        }
    }

    /// Unit id on the serial line; equal to the PLC number.
    pub fn slave_address(self) -> SlaveAddress {
        SlaveAddress::new(self.number()).expect("1 and 2 are unicast addresses")
    }

    pub fn motors(self) -> std::ops::RangeInclusive<u8> {
        match self {
            PlcId::First => 1..=5,
            PlcId::Second => 6..=12,
        }
    }
}

impl fmt::Display for PlcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.actor())
    }
}

/// Move length of each motor in scan ticks, indexed by motor id - 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MotorTicks(pub Vec<u32>);

impl Default for MotorTicks {
    fn default() -> Self {
        MotorTicks(vec![5, 8, 11, 14, 17, 20, 6, 9, 12, 15, 18, 7])
    }
}

impl MotorTicks {
    pub fn uniform(ticks: u32) -> Self {
        MotorTicks(vec![ticks; MOTOR_COUNT])
    }

    pub fn get(&self, motor: u8) -> u32 {
        self.0[usize::from(motor) - 1]
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.0.len() != MOTOR_COUNT {
            return Err(format!(
                "expected {MOTOR_COUNT} motor durations, got {}",
                self.0.len()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Next scan starts a new sequence (first PLC only).
    Start,
    Running {
        index: usize,
    },
    /// First PLC waits for both peer flags.
    AwaitPeer,
    /// Second PLC waits for the first PLC's flag.
    AwaitStart,
    /// Second PLC waits for the first PLC to restart.
    AwaitRearm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoilEdge {
    pub coil: u16,
    pub rising: bool,
}

/// Scan-driven program of one PLC.
#[derive(Debug, Clone)]
pub struct PlcProgram {
    id: PlcId,
    motors: Vec<Motor>,
    ticks: Vec<u32>,
    phase: Phase,
    coil_memory: [bool; 2],
    pending: VecDeque<CoilEdge>,
    rose: [bool; 2],
    fell: bool,
    restarts: u32,
    sequences: u32,
}

impl PlcProgram {
    pub fn new(id: PlcId, durations: &MotorTicks) -> Self {
        PlcProgram {
            id,
            motors: id.motors().map(Motor::new).collect(),
            ticks: id.motors().map(|m| durations.get(m)).collect(),
            phase: match id {
                PlcId::First => Phase::Start,
                PlcId::Second => Phase::AwaitStart,
            },
            coil_memory: [false; 2],
            pending: VecDeque::new(),
            rose: [false; 2],
            fell: false,
            restarts: 0,
            sequences: 0,
        }
    }

    pub fn id(&self) -> PlcId {
        self.id
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn motors(&self) -> &[Motor] {
        &self.motors
    }

    /// Completed handshakes, counted at the first PLC's restart.
    pub fn restarts(&self) -> u32 {
        self.restarts
    }

    pub fn sequences(&self) -> u32 {
        self.sequences
    }

    /// Queues coil edges since the last observation. Called after every
    /// Modbus write so that two writes between scans are both seen.
    pub fn observe_coils(&mut self, store: &DataStore) {
        for coil in 0..2u16 {
            let now = store.coil(coil);
            let before = &mut self.coil_memory[usize::from(coil)];
            if now != *before {
                *before = now;
                self.pending.push_back(CoilEdge { coil, rising: now });
            }
        }
    }

    /// One scan: consume coil edges, advance motors, update flags.
    pub fn step(&mut self, store: &mut DataStore, now: Duration, log: &EventLog) {
        self.observe_coils(store);
        let actor = self.id.actor();
        let emit = |kind: EventKind| log.record(now, actor, kind);
        let before = self.phase;
        while let Some(edge) = self.pending.pop_front() {
            self.on_edge(edge, store, &emit);
        }
        match self.phase {
            Phase::Start if before == Phase::Start => {
                log.begin_cycle();
                self.begin_sequence(&emit);
            }
            Phase::Running { index } if matches!(before, Phase::Running { .. }) => {
                self.advance_motor(index, store, &emit)
            }
            _ => {}
        }
        self.settle(store, &emit);
    }

    fn on_edge(&mut self, edge: CoilEdge, store: &mut DataStore, emit: &dyn Fn(EventKind)) {
        match self.id {
            PlcId::First => {
                if edge.rising {
                    self.rose[usize::from(edge.coil)] = true;
                }
            }
            PlcId::Second => {
                if edge.coil != 0 {
                    return;
                }
                match (self.phase, edge.rising) {
                    (Phase::AwaitStart, true) => self.begin_sequence(emit),
                    (Phase::Running { .. } | Phase::AwaitRearm, false) => self.fell = true,
                    _ => {}
                }
            }
        }
        self.settle(store, emit);
    }

    /// Applies any transition whose condition is already latched.
    fn settle(&mut self, store: &mut DataStore, emit: &dyn Fn(EventKind)) {
        match (self.id, self.phase) {
            (PlcId::First, Phase::AwaitPeer) if self.rose == [true, true] => {
                store.set_register(FLAG_REGISTER, 0);
                emit(EventKind::FlagCleared {
                    register: FLAG_REGISTER,
                });
                self.restarts += 1;
                emit(EventKind::Restart);
                self.phase = Phase::Start;
            }
            (PlcId::Second, Phase::AwaitRearm) if rearm_on_falling_edge(self.fell) => {
                for register in [FLAG_REGISTER, SECOND_FLAG_REGISTER] {
                    store.set_register(register, 0);
                    emit(EventKind::FlagCleared { register });
                }
                self.fell = false;
                self.phase = Phase::AwaitStart;
            }
            _ => {}
        }
    }

    fn begin_sequence(&mut self, emit: &dyn Fn(EventKind)) {
        self.sequences += 1;
        self.rose = [false; 2];
        self.fell = false;
        for motor in &mut self.motors {
            motor.reset();
        }
        emit(EventKind::SequenceStart);
        self.start_motor(0, emit);
    }

    fn start_motor(&mut self, index: usize, emit: &dyn Fn(EventKind)) {
        let motor = &mut self.motors[index];
        emit(EventKind::MotorStart { motor: motor.id() });
        motor.start(self.ticks[index]);
        self.phase = Phase::Running { index };
    }

    fn advance_motor(&mut self, index: usize, store: &mut DataStore, emit: &dyn Fn(EventKind)) {
        let motor = &mut self.motors[index];
        motor.tick();
        if motor.state() != MotorState::Done {
            return;
        }
        let id = motor.id();
        emit(EventKind::MotorDone { motor: id });
        let flag = match (self.id, id) {
            (PlcId::Second, 9) => Some(FLAG_REGISTER),
            (PlcId::Second, 11) => Some(SECOND_FLAG_REGISTER),
            _ => None,
        };
        if let Some(register) = flag {
            store.set_register(register, 1);
            emit(EventKind::FlagSet { register });
        }
        if index + 1 < self.motors.len() {
            self.start_motor(index + 1, emit);
            return;
        }
        match self.id {
            PlcId::First => {
                store.set_register(FLAG_REGISTER, 1);
                emit(EventKind::FlagSet {
                    register: FLAG_REGISTER,
                });
                self.phase = Phase::AwaitPeer;
            }
            PlcId::Second => self.phase = Phase::AwaitRearm,
        }
    }
}

/// When the second PLC may clear its flags and wait for the next start:
/// after coil 0 (the first PLC's flag) has fallen, meaning the first PLC
/// has restarted.
pub fn rearm_on_falling_edge(coil0_fell: bool) -> bool {
    coil0_fell
}

/// A PLC: Modbus slave plus program, sharing one process image.
#[derive(Debug, Clone)]
pub struct PlcNode {
    slave: Slave,
    program: PlcProgram,
}

impl PlcNode {
    pub fn new(
        id: PlcId,
        durations: &MotorTicks,
        layout: StoreLayout,
        mode: FramingMode,
        serial: &SerialParams,
    ) -> Self {
        PlcNode {
            slave: Slave::new(id.slave_address(), layout, mode, serial),
            program: PlcProgram::new(id, durations),
        }
    }

    pub fn scan(&mut self, now: Duration, log: &EventLog) {
        self.program.step(self.slave.store_mut(), now, log);
    }

    pub fn program(&self) -> &PlcProgram {
        &self.program
    }

    pub fn slave(&self) -> &Slave {
        &self.slave
    }

    pub fn store(&self) -> &DataStore {
        self.slave.store()
    }

    pub fn store_mut(&mut self) -> &mut DataStore {
        self.slave.store_mut()
    }
}

impl SerialDevice for PlcNode {
    fn receive(&mut self, bytes: &[(u8, Duration)]) -> Vec<Vec<u8>> {
        let responses = self.slave.receive(bytes);
        self.program.observe_coils(self.slave.store());
        responses
    }

    fn idle(&mut self, now: Duration) -> Vec<Vec<u8>> {
        let responses = self.slave.idle(now);
        self.program.observe_coils(self.slave.store());
        responses
    }
}
