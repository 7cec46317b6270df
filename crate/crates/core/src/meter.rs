//! Per-DMA performance meters and NPI-to-priority translation.
//!
//! Every meter reduces its measurement to a Normalized Performance Indicator
//! (NPI): 1.0 means the DMA exactly meets its target, larger is healthier.
//! A [`PriorityLut`] then maps the NPI to a priority level.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::SimClock;
use crate::txn::Transaction;
use crate::types::{AccessKind, DmaId, PriorityLevel, PRIORITY_LEVELS};

/// Upper clamp for every NPI.
pub const NPI_MAX: f64 = 16.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeterError {
    #[error("measurement window must be non-zero")]
    InvalidWindow,
    #[error("completion from DMA {got} delivered to meter of DMA {expected}")]
    WrongDma { expected: DmaId, got: DmaId },
    #[error("malformed priority table: {0}")]
    MalformedLut(String),
}

/// Normalized Performance Indicator, clamped to `[0, NPI_MAX]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct NpiValue(f64);

impl NpiValue {
    pub const MAX: NpiValue = NpiValue(NPI_MAX);

    /// Clamps a raw ratio. Non-finite ratios come from empty denominators
    /// and saturate.
    pub fn clamped(raw: f64) -> Self {
        if raw.is_nan() || raw == f64::INFINITY {
            NpiValue(NPI_MAX)
        } else {
            NpiValue(raw.clamp(0.0, NPI_MAX))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Average-latency meter.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyMeter {
    pub max_latency_limit: f64,
    capacity: usize,
    window: VecDeque<u64>,
    sum: u64,
}

impl LatencyMeter {
    pub fn new(max_latency_limit_cycles: f64, window: usize) -> Self {
        LatencyMeter {
            max_latency_limit: max_latency_limit_cycles,
            capacity: window.max(1),
            window: VecDeque::with_capacity(window.max(1)),
            sum: 0,
        }
    }

    pub fn push(&mut self, latency: u64) {
        if self.window.len() == self.capacity {
            self.sum -= self.window.pop_front().unwrap_or(0);
        }
        self.window.push_back(latency);
        self.sum += latency;
    }

    pub fn samples(&self) -> usize {
        self.window.len()
    }

    pub fn average_latency(&self) -> f64 {
        if self.window.is_empty() {
            0.0
        } else {
            self.sum as f64 / self.window.len() as f64
        }
    }
}

pub fn npi_latency(m: &LatencyMeter) -> NpiValue {
    let avg = m.average_latency();
    if avg == 0.0 {
        return NpiValue::MAX;
    }
    NpiValue::clamped(m.max_latency_limit / avg)
}

/// Frame-progress meter: completed share of the frame against a reference
/// line that grows linearly over the frame period.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameProgressMeter {
    pub frame_bytes: u64,
    pub bytes_done: u64,
    pub frame_period_cycles: u64,
    pub frame_elapsed_cycles: u64,
    pub reference_slope: f64,
    /// Cycles at the start of each frame before the reference line starts
    /// rising, covering the request round trip.
    pub reference_lag_cycles: u64,
}

impl FrameProgressMeter {
    pub fn new(frame_bytes: u64, frame_period_cycles: u64) -> Self {
        FrameProgressMeter {
            frame_bytes,
            bytes_done: 0,
            frame_period_cycles,
            frame_elapsed_cycles: 0,
            reference_slope: 1.0,
            reference_lag_cycles: 0,
        }
    }

    pub fn start_frame(&mut self) {
        self.bytes_done = 0;
        self.frame_elapsed_cycles = 0;
    }

    pub fn progress(&self) -> f64 {
        if self.frame_bytes == 0 {
            1.0
        } else {
            self.bytes_done as f64 / self.frame_bytes as f64
        }
    }

    pub fn reference(&self) -> f64 {
        if self.frame_period_cycles == 0 {
            return 0.0;
        }
        let t = self.frame_elapsed_cycles.saturating_sub(self.reference_lag_cycles);
        self.reference_slope * t as f64 / self.frame_period_cycles as f64
    }
}

pub fn npi_frame_progress(m: &FrameProgressMeter) -> NpiValue {
    let reference = m.reference();
    // a finished frame has met its target whatever the reference says
    if reference <= 0.0 || m.bytes_done >= m.frame_bytes {
        return NpiValue::MAX;
    }
    NpiValue::clamped(m.progress() / reference)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferDirection {
    /// A consumer drains the buffer at a constant rate and the DMA refills it
    /// from DRAM (display).
    Drain,
    /// A producer fills the buffer at a constant rate and the DMA empties it
    /// into DRAM (camera).
    Fill,
}

/// Buffer-occupancy meter.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeter {
    pub buffer_bytes: f64,
    pub occupancy: f64,
    pub initial_occupancy: f64,
    /// Constant consumer (drain) or producer (fill) rate.
    pub rate_bytes_per_s: f64,
    pub window_cycles: u64,
    pub direction: BufferDirection,
    /// Cycles before the constant-rate side starts moving.
    pub start_delay_cycles: u64,
}

impl OccupancyMeter {
    pub fn new(buffer_bytes: f64, initial_fraction: f64, rate_bytes_per_s: f64, direction: BufferDirection) -> Self {
        let initial = buffer_bytes * initial_fraction;
        OccupancyMeter {
            buffer_bytes,
            occupancy: initial,
            initial_occupancy: initial,
            rate_bytes_per_s,
            window_cycles: 0,
            direction,
            start_delay_cycles: 0,
        }
    }

    /// Applies the constant-rate side of the buffer for `cycles`.
    pub fn advance(&mut self, cycles: u64, clock: &SimClock) {
        let bytes = self.rate_bytes_per_s * clock.cycles_to_secs(cycles);
        self.occupancy = match self.direction {
            BufferDirection::Drain => (self.occupancy - bytes).max(0.0),
            BufferDirection::Fill => (self.occupancy + bytes).min(self.buffer_bytes),
        };
    }

    /// Signed change from the initial level, oriented so that a negative value
    /// is always a deficit.
    pub fn delta(&self) -> f64 {
        match self.direction {
            BufferDirection::Drain => self.occupancy - self.initial_occupancy,
            BufferDirection::Fill => self.initial_occupancy - self.occupancy,
        }
    }
}

pub fn npi_occupancy(m: &OccupancyMeter, elapsed_cycles: u64, clock: &SimClock) -> Result<NpiValue, MeterError> {
    if elapsed_cycles == 0 {
        return Err(MeterError::InvalidWindow);
    }
    let moved = m.rate_bytes_per_s * clock.cycles_to_secs(elapsed_cycles);
    Ok(NpiValue::clamped(1.0 + m.delta() / moved))
}

/// Achieved-bandwidth meter over a sliding window of completions.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthMeter {
    pub target_bytes_per_s: f64,
    pub window_cycles: u64,
    pub bytes_in_window: u64,
    completions: VecDeque<(u64, u32)>,
}

impl BandwidthMeter {
    pub fn new(target_bytes_per_s: f64, window_cycles: u64) -> Self {
        BandwidthMeter {
            target_bytes_per_s,
            window_cycles,
            bytes_in_window: 0,
            completions: VecDeque::new(),
        }
    }

    pub fn add(&mut self, cycle: u64, bytes: u32) {
        self.completions.push_back((cycle, bytes));
        self.bytes_in_window += bytes as u64;
    }

    /// Forgets completions older than the window ending at `now`.
    pub fn expire(&mut self, now: u64) {
        let cutoff = now.saturating_sub(self.window_cycles);
        while let Some(&(c, b)) = self.completions.front() {
            if c >= cutoff {
                break;
            }
            self.completions.pop_front();
            self.bytes_in_window -= b as u64;
        }
    }
}

pub fn npi_bandwidth(m: &BandwidthMeter, elapsed_cycles: u64, clock: &SimClock) -> Result<NpiValue, MeterError> {
    if elapsed_cycles == 0 {
        return Err(MeterError::InvalidWindow);
    }
    if m.target_bytes_per_s <= 0.0 {
        return Ok(NpiValue::MAX);
    }
    let measured = m.bytes_in_window as f64 / clock.cycles_to_secs(elapsed_cycles);
    Ok(NpiValue::clamped(measured / m.target_bytes_per_s))
}

/// Lookup table from NPI lower bounds to priority levels.
///
/// `entries[p]` is the lowest NPI admitted at level `p`; the table must be
/// non-increasing and end in 0 so every NPI maps somewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PriorityLut {
    entries: Vec<f64>,
}

impl PriorityLut {
    pub fn new(entries: Vec<f64>) -> Result<Self, MeterError> {
        if entries.len() != PRIORITY_LEVELS {
            return Err(MeterError::MalformedLut(format!(
                "expected {PRIORITY_LEVELS} entries, got {}",
                entries.len()
            )));
        }
        if entries.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(MeterError::MalformedLut("entries must be finite and non-negative".into()));
        }
        if let Some(i) = entries.windows(2).position(|w| w[0] < w[1]) {
            return Err(MeterError::MalformedLut(format!(
                "entry {} ({}) is below entry {} ({})",
                i,
                entries[i],
                i + 1,
                entries[i + 1]
            )));
        }
        if entries[PRIORITY_LEVELS - 1] != 0.0 {
            return Err(MeterError::MalformedLut("last entry must be 0".into()));
        }
        Ok(PriorityLut { entries })
    }

    /// Table used by latency, occupancy and bandwidth meters unless overridden.
    pub fn default_linear() -> Self {
        PriorityLut { entries: vec![1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.0] }
    }

    /// Frame-progress table: on or above the reference line is level 0,
    /// the 0.75 and 0.5 reference lines bound levels 3 and 5.
    pub fn default_frame() -> Self {
        PriorityLut { entries: vec![1.0, 1.0, 1.0, 0.75, 0.75, 0.5, 0.5, 0.0] }
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

impl TryFrom<Vec<f64>> for PriorityLut {
    type Error = MeterError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        PriorityLut::new(v)
    }
}

impl From<PriorityLut> for Vec<f64> {
    fn from(l: PriorityLut) -> Self {
        l.entries
    }
}

/// Lowest level whose lower bound the NPI reaches.
pub fn translate(lut: &PriorityLut, npi: NpiValue) -> PriorityLevel {
    let level = lut
        .entries
        .iter()
        .position(|&bound| npi.get() >= bound)
        .unwrap_or(PRIORITY_LEVELS - 1);
    PriorityLevel::new(level as u8).unwrap_or(PriorityLevel::HIGHEST)
}

/// The meter attached to one DMA.
#[derive(Debug, Clone, PartialEq)]
pub enum MeterKind {
    Latency(LatencyMeter),
    FrameProgress(FrameProgressMeter),
    Occupancy(OccupancyMeter),
    Bandwidth(BandwidthMeter),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QosMeter {
    pub dma: DmaId,
    pub kind: MeterKind,
}

impl QosMeter {
    pub fn new(dma: DmaId, kind: MeterKind) -> Self {
        QosMeter { dma, kind }
    }

    /// Feeds one completed transaction back into the meter.
    pub fn on_completion(&mut self, txn: &Transaction, clock: &SimClock) -> Result<(), MeterError> {
        if txn.source != self.dma {
            return Err(MeterError::WrongDma { expected: self.dma, got: txn.source });
        }
        let bytes = txn.size_bytes as u64;
        match &mut self.kind {
            MeterKind::Latency(m) => {
                if txn.kind == AccessKind::Read {
                    let done = txn.t_completed.unwrap_or(clock.cycle);
                    m.push(done.saturating_sub(txn.t_created));
                }
            }
            MeterKind::FrameProgress(m) => {
                m.bytes_done = (m.bytes_done + bytes).min(m.frame_bytes);
            }
            MeterKind::Occupancy(m) => {
                m.occupancy = match m.direction {
                    BufferDirection::Drain => (m.occupancy + bytes as f64).min(m.buffer_bytes),
                    BufferDirection::Fill => (m.occupancy - bytes as f64).max(0.0),
                };
            }
            MeterKind::Bandwidth(m) => m.add(clock.cycle, txn.size_bytes),
        }
        Ok(())
    }

    /// Current NPI. Bandwidth meters saturate until their first window has
    /// elapsed since `start_cycle`.
    pub fn npi(&self, clock: &SimClock) -> NpiValue {
        match &self.kind {
            MeterKind::Latency(m) => npi_latency(m),
            MeterKind::FrameProgress(m) => npi_frame_progress(m),
            MeterKind::Occupancy(m) => npi_occupancy(m, m.window_cycles.max(1), clock).unwrap_or(NpiValue::MAX),
            MeterKind::Bandwidth(m) => {
                if clock.cycle < m.window_cycles {
                    NpiValue::MAX
                } else {
                    npi_bandwidth(m, m.window_cycles, clock).unwrap_or(NpiValue::MAX)
                }
            }
        }
    }
}
