//! A PLC process image: holding registers and coils inside fixed address windows.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::frame::ExceptionCode;

/// Valid address windows of a [`DataStore`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreLayout {
    pub registers: RangeInclusive<u16>,
    pub coils: RangeInclusive<u16>,
}

impl Default for StoreLayout {
    fn default() -> Self {
        StoreLayout {
            registers: 0..=15,
            coils: 0..=15,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DataStore {
    layout: StoreLayout,
    holding_registers: BTreeMap<u16, u16>,
    coils: BTreeMap<u16, bool>,
}

fn window_contains(window: &RangeInclusive<u16>, start: u16, count: usize) -> bool {
    if count == 0 {
        return false;
    }
    let end = usize::from(start) + count - 1;
    window.contains(&start) && end <= usize::from(*window.end())
}

impl DataStore {
    pub fn new(layout: StoreLayout) -> Self {
        DataStore {
            layout,
            ..Default::default()
        }
    }

    pub fn layout(&self) -> &StoreLayout {
        &self.layout
    }

    pub fn read_registers(&self, start: u16, quantity: u16) -> Result<Vec<u16>, ExceptionCode> {
        if !window_contains(&self.layout.registers, start, usize::from(quantity)) {
            return Err(ExceptionCode::IllegalDataAddress);
        }
        Ok((start..=start + (quantity - 1))
            .map(|a| self.holding_registers.get(&a).copied().unwrap_or(0))
            .collect())
    }

    pub fn write_register(&mut self, address: u16, value: u16) -> Result<(), ExceptionCode> {
        if !window_contains(&self.layout.registers, address, 1) {
            return Err(ExceptionCode::IllegalDataAddress);
        }
        self.holding_registers.insert(address, value);
        Ok(())
    }

    /// Current register value. Panics on an address outside the window; used
    /// by PLC programs whose addresses are fixed.
    pub fn register(&self, address: u16) -> u16 {
        self.read_registers(address, 1)
            .unwrap_or_else(|_| panic!("register {address} outside the store window"))[0]
    }

    pub fn set_register(&mut self, address: u16, value: u16) {
        self.write_register(address, value)
            .unwrap_or_else(|_| panic!("register {address} outside the store window"));
    }

    pub fn read_coils(&self, start: u16, quantity: u16) -> Result<Vec<bool>, ExceptionCode> {
        if !window_contains(&self.layout.coils, start, usize::from(quantity)) {
            return Err(ExceptionCode::IllegalDataAddress);
        }
        Ok((start..=start + (quantity - 1))
            .map(|a| self.coils.get(&a).copied().unwrap_or(false))
            .collect())
    }

    /// Writes `states` to consecutive coils; all-or-nothing.
    pub fn write_coils(&mut self, start: u16, states: &[bool]) -> Result<(), ExceptionCode> {
        if !window_contains(&self.layout.coils, start, states.len()) {
            return Err(ExceptionCode::IllegalDataAddress);
        }
        for (offset, state) in states.iter().enumerate() {
            self.coils.insert(start + offset as u16, *state);
        }
        Ok(())
    }

    pub fn coil(&self, address: u16) -> bool {
        self.read_coils(address, 1)
            .unwrap_or_else(|_| panic!("coil {address} outside the store window"))[0]
    }
}
