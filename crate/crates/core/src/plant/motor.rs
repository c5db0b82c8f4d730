//! Stepper motors modelled as countdown timers.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotorState {
    Idle,
    Running,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Motor {
    id: u8,
    state: MotorState,
    remaining_ticks: u32,
}

impl Motor {
    pub fn new(id: u8) -> Self {
        Motor {
            id,
            state: MotorState::Idle,
            remaining_ticks: 0,
        }
    }

    pub fn id(&self) -> u8 {
        self.id
    }

    pub fn state(&self) -> MotorState {
        self.state
    }

    pub fn remaining_ticks(&self) -> u32 {
        self.remaining_ticks
    }

    /// A zero-tick move completes immediately.
    pub fn start(&mut self, ticks: u32) {
        if ticks == 0 {
            self.state = MotorState::Done;
        } else {
            self.state = MotorState::Running;
            self.remaining_ticks = ticks;
        }
    }

    /// Advances one tick. Returns true on the tick the move completes.
    pub fn tick(&mut self) -> bool {
        if self.state != MotorState::Running {
            return false;
        }
        self.remaining_ticks -= 1;
        if self.remaining_ticks == 0 {
            self.state = MotorState::Done;
            return true;
        }
        false
    }

    pub fn reset(&mut self) {
        self.state = MotorState::Idle;
        self.remaining_ticks = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn remaining_is_zero_iff_not_running(ticks in 0u32..40, steps in 0usize..60) {
            let mut m = Motor::new(3);
            m.start(ticks);
            for _ in 0..steps {
                m.tick();
                prop_assert_eq!(m.remaining_ticks() == 0, m.state() != MotorState::Running);
            }
            prop_assert_eq!(m.state() == MotorState::Done, steps as u32 >= ticks);
        }
    }
}
