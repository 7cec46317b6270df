/// Simulator clock. One tick is one DRAM command-clock cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    pub cycle: u64,
    pub controller_freq_hz: f64,
}

impl SimClock {
    pub fn new(controller_freq_hz: f64) -> Self {
        SimClock { cycle: 0, controller_freq_hz }
    }

    pub fn tick(&mut self) {
        self.cycle += 1;
    }

    pub fn cycles_to_secs(&self, cycles: u64) -> f64 {
        cycles as f64 / self.controller_freq_hz
    }

    pub fn secs_to_cycles(&self, secs: f64) -> f64 {
        secs * self.controller_freq_hz
    }

    pub fn ns_to_cycles(&self, ns: f64) -> u64 {
        (ns * 1e-9 * self.controller_freq_hz).round() as u64
    }
}
