//! Bank-level DRAM timing model.
//!
//! All timings are expressed in command-clock cycles. The command clock is the
//! simulator clock: `io_freq_mhz / clock_divider`.

mod address;
mod channel;
pub mod checker;

pub use address::{AddressMap, DramCoord};
pub use channel::{BankState, ChannelStats, Command, CommandKind, DramChannel, IssuePlan};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DramError {
    #[error("illegal issue at cycle {cycle}: {reason}")]
    IllegalIssue { cycle: u64, reason: &'static str },
    #[error("bandwidth window must be non-zero")]
    InvalidWindow,
    #[error("invalid DRAM configuration: {0}")]
    InvalidConfig(String),
}

/// Timing and organization parameters of the DRAM subsystem. Missing keys
/// take the default part's values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DramTimingConfig {
    /// Data-rate (I/O bus) frequency.
    pub io_freq_mhz: f64,
    /// Command clock = `io_freq_mhz / clock_divider`.
    pub clock_divider: f64,
    #[serde(rename = "CL")]
    pub cl: u32,
    #[serde(rename = "tRCD")]
    pub t_rcd: u32,
    #[serde(rename = "tRP")]
    pub t_rp: u32,
    #[serde(rename = "tWTR")]
    pub t_wtr: u32,
    #[serde(rename = "tRTP")]
    pub t_rtp: u32,
    #[serde(rename = "tWR")]
    pub t_wr: u32,
    #[serde(rename = "tRRD")]
    pub t_rrd: u32,
    #[serde(rename = "tFAW")]
    pub t_faw: u32,
    /// Data-bus occupancy of one 64-byte transaction.
    #[serde(rename = "tBURST")]
    pub t_burst: u32,
    pub channels: u32,
    pub ranks: u32,
    pub banks: u32,
    /// Bytes in one row of one bank of one channel.
    pub row_bytes: u32,
    pub capacity_bytes: u64,
}

/// Transaction granularity: one burst.
pub const BURST_BYTES: u64 = 64;

impl Default for DramTimingConfig {
    fn default() -> Self {
        DramTimingConfig {
            io_freq_mhz: 1866.0,
            clock_divider: 2.0,
            cl: 36,
            t_rcd: 34,
            t_rp: 34,
            t_wtr: 19,
            t_rtp: 14,
            t_wr: 34,
            t_rrd: 19,
            t_faw: 75,
            t_burst: 8,
            channels: 2,
            ranks: 2,
            banks: 8,
            row_bytes: 2048,
            capacity_bytes: 2 << 30,
        }
    }
}

impl DramTimingConfig {
    pub fn command_clock_hz(&self) -> f64 {
        self.io_freq_mhz * 1e6 / self.clock_divider
    }

    pub fn validate(&self) -> Result<(), DramError> {
        let timings = [
            ("CL", self.cl),
            ("tRCD", self.t_rcd),
            ("tRP", self.t_rp),
            ("tWTR", self.t_wtr),
            ("tRTP", self.t_rtp),
            ("tWR", self.t_wr),
            ("tRRD", self.t_rrd),
            ("tFAW", self.t_faw),
            ("tBURST", self.t_burst),
        ];
        for (name, v) in timings {
            if v == 0 {
                return Err(DramError::InvalidConfig(format!("{name} must be > 0")));
            }
        }
        if !(self.io_freq_mhz.is_finite() && self.io_freq_mhz > 0.0) {
            return Err(DramError::InvalidConfig("io_freq_mhz must be > 0".into()));
        }
        if !(self.clock_divider.is_finite() && self.clock_divider > 0.0) {
            return Err(DramError::InvalidConfig("clock_divider must be > 0".into()));
        }
        AddressMap::new(self).map(|_| ())
    }
}

/// Row-buffer state of the bank an address targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowClass {
    Hit,
    Miss,
    Closed,
}

/// Classifies an access against the open row of its bank.
pub fn classify(open_row: Option<u32>, row: u32) -> RowClass {
    match open_row {
        None => RowClass::Closed,
        Some(r) if r == row => RowClass::Hit,
        Some(_) => RowClass::Miss,
    }
}

/// Cycles from first command to the end of the data burst.
pub fn service_latency(class: RowClass, t: &DramTimingConfig) -> u32 {
    let cas = t.cl + t.t_burst;
    match class {
        RowClass::Hit => cas,
        RowClass::Closed => t.t_rcd + cas,
        RowClass::Miss => t.t_rp + t.t_rcd + cas,
    }
}

/// Bytes per second given bytes completed in a window of cycles.
pub fn bandwidth(bytes: u64, window_cycles: u64, clock_hz: f64) -> Result<f64, DramError> {
    if window_cycles == 0 {
        return Err(DramError::InvalidWindow);
    }
    Ok(bytes as f64 * clock_hz / window_cycles as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_definitions() {
        assert_eq!(classify(Some(5), 5), RowClass::Hit);
        assert_eq!(classify(None, 5), RowClass::Closed);
        assert_eq!(classify(Some(5), 9), RowClass::Miss);
    }

    #[test]
    fn latency_defaults() {
        let t = DramTimingConfig::default();
        assert_eq!(service_latency(RowClass::Hit, &t), 44);
        assert_eq!(service_latency(RowClass::Miss, &t), 112);
        assert_eq!(service_latency(RowClass::Closed, &t), 78);
    }

    #[test]
    fn bandwidth_ceiling() {
        assert_eq!(bandwidth(0, 100, 933e6).unwrap(), 0.0);
        let one = bandwidth(64, 8, 933e6).unwrap();
        assert!((one - 7.464e9).abs() < 1e6);
        let two = bandwidth(128, 8, 933e6).unwrap();
        assert_eq!(two, 2.0 * one);
        assert_eq!(bandwidth(64, 0, 933e6), Err(DramError::InvalidWindow));
    }

    #[test]
    fn default_clock() {
        assert_eq!(DramTimingConfig::default().command_clock_hz(), 933e6);
    }

    #[test]
    fn zero_timing_rejected() {
        let t = DramTimingConfig { t_faw: 0, ..Default::default() };
        assert!(t.validate().is_err());
    }
}
