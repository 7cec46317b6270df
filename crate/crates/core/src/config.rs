//! Scenario files: a TOML description of one experiment.
//!
//! Unknown keys are rejected. Validation errors name the offending key path,
//! for example `dma[3].locality`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::SimClock;
use crate::controller::ControllerConfig;
use crate::dram::{AddressMap, DramTimingConfig};
use crate::meter::{BufferDirection, PriorityLut};
use crate::noc::{ArbiterSpec, Network, Topology};
use crate::traffic::{DmaSpec, SourceKind};
use crate::types::{Core, DmaId, QueueClass};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid `{key}`: {message}")]
    Validation { key: String, message: String },
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation { key: key.into(), message: message.into() }
}

fn default_epoch() -> u64 {
    100
}
fn default_frame_rate() -> f64 {
    30.0
}
fn default_port_depth() -> usize {
    8
}
fn default_stride() -> u64 {
    1
}
fn default_bucket() -> u64 {
    1_000_000
}
fn default_region() -> u64 {
    16 << 20
}
fn default_read_fraction() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub duration_cycles: u64,
    /// Cycles between NPI evaluations.
    #[serde(default = "default_epoch")]
    pub epoch_cycles: u64,
    #[serde(default = "default_frame_rate")]
    pub frame_rate_hz: f64,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub dram: DramTimingConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub noc: NocConfig,
    #[serde(default, rename = "dma")]
    pub dmas: Vec<DmaConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Keep every n-th NPI sample in CSV output.
    #[serde(default = "default_stride")]
    pub series_stride: u64,
    /// Width of the per-DMA bandwidth series buckets.
    #[serde(default = "default_bucket")]
    pub bandwidth_bucket_cycles: u64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { series_stride: default_stride(), bandwidth_bucket_cycles: default_bucket() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NocConfig {
    #[serde(default = "default_port_depth")]
    pub port_depth: usize,
    #[serde(rename = "arbiter")]
    pub arbiters: Vec<ArbiterSpec>,
}

impl Default for NocConfig {
    fn default() -> Self {
        let a = |name: &str, parent: Option<&str>| ArbiterSpec { name: name.into(), parent: parent.map(Into::into) };
        NocConfig {
            port_depth: default_port_depth(),
            arbiters: vec![a("root", None), a("media", Some("root")), a("system", Some("root"))],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeterKindName {
    Latency,
    FrameProgress,
    Occupancy,
    Bandwidth,
}

/// Meter parameters. Which keys are required depends on `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeterConfig {
    pub kind: MeterKindName,
    /// Latency: maximum average read latency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_ns: Option<f64>,
    /// Latency: moving-average window in completions (default 64).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_samples: Option<usize>,
    /// Frame progress: slope of the reference line (default 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_slope: Option<f64>,
    /// Frame progress: delay before the reference line starts rising.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_lag_ns: Option<f64>,
    /// Occupancy: buffer size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer_bytes: Option<f64>,
    /// Occupancy: starting fill level as a fraction of the buffer (default 0.5).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<BufferDirection>,
    /// Occupancy: the `time` term of the NPI (default: initial fill / rate).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_ns: Option<f64>,
    /// Occupancy: idle time before the constant-rate side starts, such as a
    /// panel's blanking interval (default 0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_delay_ns: Option<f64>,
    /// Bandwidth: target rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_bytes_per_s: Option<f64>,
    /// Bandwidth: measurement window (default 20 us).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lut: Option<PriorityLut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmaConfig {
    pub name: String,
    pub core: Core,
    pub source: SourceKind,
    #[serde(default)]
    pub rate_bytes_per_s: f64,
    #[serde(default)]
    pub frame_bytes: u64,
    #[serde(default)]
    pub locality: f64,
    #[serde(default = "default_read_fraction")]
    pub read_fraction: f64,
    /// Assigned automatically when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_base: Option<u64>,
    #[serde(default = "default_region")]
    pub region_bytes: u64,
    /// NoC arbiter the DMA attaches to (default by core class).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arbiter: Option<String>,
    pub meter: MeterConfig,
}

impl DmaConfig {
    pub fn default_arbiter(&self) -> &'static str {
        match self.core.queue_class() {
            QueueClass::Media => "media",
            QueueClass::System => "system",
            _ => "root",
        }
    }
}

/// The two shipped camcorder cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataflowCase {
    /// All cores active, DRAM at 1866 MHz.
    A,
    /// GPS, camera, rotator and JPEG idle, DRAM at 1700 MHz.
    B,
}

pub const CASE_A_TOML: &str = include_str!("../scenarios/case_a.toml");
pub const CASE_B_TOML: &str = include_str!("../scenarios/case_b.toml");

/// Cores idle in case B.
pub const CASE_B_INACTIVE: [Core; 4] = [Core::Gps, Core::Camera, Core::Rotator, Core::Jpeg];

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.resolve();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn emit(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn shipped(case: DataflowCase) -> Self {
        let text = match case {
            DataflowCase::A => CASE_A_TOML,
            DataflowCase::B => CASE_B_TOML,
        };
        ScenarioConfig::parse(text).expect("shipped scenario is valid")
    }

    /// Case B built from case A: idle cores dropped, DRAM clock lowered.
    pub fn derive_case_b(a: &ScenarioConfig) -> Self {
        let mut b = a.clone();
        b.name = "case_b".into();
        b.dmas.retain(|d| !CASE_B_INACTIVE.contains(&d.core));
        for d in &mut b.dmas {
            d.region_base = None;
        }
        b.resolve();
        b.with_io_freq(1700.0)
    }

    /// Same scenario at another DRAM I/O frequency, with the duration scaled
    /// to cover the same simulated time.
    pub fn with_io_freq(&self, mhz: f64) -> Self {
        let mut s = self.clone();
        s.dram.io_freq_mhz = mhz;
        let period = self.frame_period_cycles();
        s.duration_cycles = if period > 0 && self.duration_cycles.is_multiple_of(period) {
            // whole frames stay whole frames
            self.duration_cycles / period * s.frame_period_cycles()
        } else {
            (self.duration_cycles as f64 * mhz / self.dram.io_freq_mhz).round() as u64
        };
        s
    }

    pub fn clock(&self) -> SimClock {
        SimClock::new(self.dram.command_clock_hz())
    }

    /// Whole cycles per frame, rounded down.
    pub fn frame_period_cycles(&self) -> u64 {
        (self.dram.command_clock_hz() / self.frame_rate_hz).floor() as u64
    }

    pub fn topology(&self) -> Topology {
        Topology {
            port_depth: self.noc.port_depth,
            arbiters: self.noc.arbiters.clone(),
            attachments: self
                .dmas
                .iter()
                .map(|d| d.arbiter.clone().unwrap_or_else(|| d.default_arbiter().into()))
                .collect(),
        }
    }

    pub fn dma_specs(&self) -> Vec<DmaSpec> {
        let period = self.frame_period_cycles();
        self.dmas
            .iter()
            .enumerate()
            .map(|(i, d)| DmaSpec {
                dma_id: DmaId(i as u16),
                name: d.name.clone(),
                core: d.core,
                source_kind: d.source,
                rate_bytes_per_s: d.rate_bytes_per_s,
                frame_period_cycles: period,
                frame_bytes: d.frame_bytes,
                address_region: (d.region_base.unwrap_or(0), d.region_bytes),
                locality: d.locality,
                read_fraction: d.read_fraction,
            })
            .collect()
    }

    /// Fills in automatic regions and attachments.
    fn resolve(&mut self) {
        let span = AddressMap::new(&self.dram).map(|m| m.row_span_bytes()).unwrap_or(4096);
        let mut cursor = self
            .dmas
            .iter()
            .filter_map(|d| d.region_base.map(|b| b + d.region_bytes))
            .max()
            .unwrap_or(0);
        for d in &mut self.dmas {
            if d.region_base.is_none() {
                cursor = cursor.div_ceil(span) * span;
                d.region_base = Some(cursor);
                cursor += d.region_bytes;
            }
            if d.arbiter.is_none() {
                d.arbiter = Some(d.default_arbiter().into());
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.duration_cycles == 0 {
            return Err(invalid("duration_cycles", "must be > 0"));
        }
        if self.epoch_cycles == 0 {
            return Err(invalid("epoch_cycles", "must be > 0"));
        }
        if !(self.frame_rate_hz.is_finite() && self.frame_rate_hz > 0.0) {
            return Err(invalid("frame_rate_hz", "must be > 0"));
        }
        if self.output.series_stride == 0 || self.output.bandwidth_bucket_cycles == 0 {
            return Err(invalid("output", "stride and bucket must be > 0"));
        }
        self.dram.validate().map_err(|e| invalid("dram", e.to_string()))?;
        let c = &self.controller;
        if c.capacity == 0 {
            return Err(invalid("controller.capacity", "must be > 0"));
        }
        if c.aging_period == 0 {
            return Err(invalid("controller.aging_period", "must be > 0"));
        }
        if c.delta > 8 {
            return Err(invalid("controller.delta", "must be at most 8"));
        }
        if self.noc.port_depth == 0 {
            return Err(invalid("noc.port_depth", "must be > 0"));
        }
        if self.dmas.len() > u16::MAX as usize {
            return Err(invalid("dma", "too many DMAs"));
        }
        let map = AddressMap::new(&self.dram).map_err(|e| invalid("dram", e.to_string()))?;
        let span = map.row_span_bytes();
        for (i, d) in self.dmas.iter().enumerate() {
            let key = |k: &str| format!("dma[{i}].{k}");
            if self.dmas[..i].iter().any(|o| o.name == d.name) {
                return Err(invalid(key("name"), format!("duplicate DMA name `{}`", d.name)));
            }
            if !(d.rate_bytes_per_s.is_finite() && d.rate_bytes_per_s >= 0.0) {
                return Err(invalid(key("rate_bytes_per_s"), "must be finite and >= 0"));
            }
            if !(0.0..=1.0).contains(&d.locality) {
                return Err(invalid(key("locality"), "must lie in [0, 1]"));
            }
            if !(0.0..=1.0).contains(&d.read_fraction) {
                return Err(invalid(key("read_fraction"), "must lie in [0, 1]"));
            }
            let base = d.region_base.unwrap_or(0);
            if base % span != 0 || d.region_bytes == 0 || d.region_bytes % span != 0 {
                return Err(invalid(key("region_base"), format!("region must be non-empty and {span}-byte aligned")));
            }
            if base + d.region_bytes > map.capacity() {
                return Err(invalid(key("region_bytes"), "region exceeds DRAM capacity"));
            }
            for (j, o) in self.dmas[..i].iter().enumerate() {
                let ob = o.region_base.unwrap_or(0);
                if base < ob + o.region_bytes && ob < base + d.region_bytes {
                    return Err(invalid(key("region_base"), format!("region overlaps dma[{j}]")));
                }
            }
            self.validate_meter(&d.meter, d, &|k| key(&format!("meter.{k}")))?;
        }
        Network::build(&self.topology()).map_err(|e| invalid("noc", e.to_string()))?;
        Ok(())
    }

    fn validate_meter(&self, m: &MeterConfig, d: &DmaConfig, key: &dyn Fn(&str) -> String) -> Result<(), ConfigError> {
        let positive = |v: Option<f64>, k: &str, required: bool| match v {
            None if required => Err(invalid(key(k), format!("required for {:?} meters", m.kind))),
            Some(x) if !(x.is_finite() && x > 0.0) => Err(invalid(key(k), "must be > 0")),
            _ => Ok(()),
        };
        let unused = |present: bool, k: &str| {
            if present {
                Err(invalid(key(k), format!("not used by {:?} meters", m.kind)))
            } else {
                Ok(())
            }
        };
        let latency = m.limit_ns.is_some() || m.window_samples.is_some();
        let frame = m.reference_slope.is_some() || m.reference_lag_ns.is_some();
        let occupancy = m.buffer_bytes.is_some()
            || m.initial_fraction.is_some()
            || m.direction.is_some()
            || m.horizon_ns.is_some()
            || m.start_delay_ns.is_some();
        let bandwidth = m.target_bytes_per_s.is_some() || m.window_ns.is_some();
        match m.kind {
            MeterKindName::Latency => {
                positive(m.limit_ns, "limit_ns", true)?;
                if m.window_samples == Some(0) {
                    return Err(invalid(key("window_samples"), "must be > 0"));
                }
                unused(frame, "reference_slope")?;
                unused(occupancy, "buffer_bytes")?;
                unused(bandwidth, "target_bytes_per_s")?;
            }
            MeterKindName::FrameProgress => {
                positive(m.reference_slope, "reference_slope", false)?;
                if m.reference_lag_ns.is_some_and(|l| !(l.is_finite() && l >= 0.0)) {
                    return Err(invalid(key("reference_lag_ns"), "must be >= 0"));
                }
                if d.frame_bytes == 0 {
                    return Err(invalid(key("kind"), "frame meters need frame_bytes > 0"));
                }
                unused(latency, "limit_ns")?;
                unused(occupancy, "buffer_bytes")?;
                unused(bandwidth, "target_bytes_per_s")?;
            }
            MeterKindName::Occupancy => {
                positive(m.buffer_bytes, "buffer_bytes", true)?;
                positive(m.horizon_ns, "horizon_ns", false)?;
                if m.direction.is_none() {
                    return Err(invalid(key("direction"), "required for occupancy meters"));
                }
                if m.start_delay_ns.is_some_and(|l| !(l.is_finite() && l >= 0.0)) {
                    return Err(invalid(key("start_delay_ns"), "must be >= 0"));
                }
                if m.initial_fraction.is_some_and(|f| !(f > 0.0 && f <= 1.0)) {
                    return Err(invalid(key("initial_fraction"), "must lie in (0, 1]"));
                }
                if d.rate_bytes_per_s <= 0.0 {
                    return Err(invalid(key("kind"), "occupancy meters need rate_bytes_per_s > 0"));
                }
                unused(latency, "limit_ns")?;
                unused(frame, "reference_slope")?;
                unused(bandwidth, "target_bytes_per_s")?;
            }
            MeterKindName::Bandwidth => {
                positive(m.target_bytes_per_s, "target_bytes_per_s", true)?;
                positive(m.window_ns, "window_ns", false)?;
                unused(latency, "limit_ns")?;
                unused(frame, "reference_slope")?;
                unused(occupancy, "buffer_bytes")?;
            }
        }
        Ok(())
    }
}
