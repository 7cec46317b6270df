//! Identifiers and small value types shared by every stage of the model.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Number of bits used to encode a priority level.
pub const PRIORITY_BITS: u32 = 3;
/// Number of distinct priority levels (`2^PRIORITY_BITS`).
pub const PRIORITY_LEVELS: usize = 1 << PRIORITY_BITS;

/// Index of a DMA engine. Assigned in scenario declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct DmaId(pub u16);

impl DmaId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for DmaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Dynamic priority attached to a transaction. Higher is more urgent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PriorityLevel(u8);

impl PriorityLevel {
    pub const LOWEST: PriorityLevel = PriorityLevel(0);
    pub const HIGHEST: PriorityLevel = PriorityLevel((PRIORITY_LEVELS - 1) as u8);

    /// Returns `None` when `level` does not fit in [`PRIORITY_BITS`].
    pub fn new(level: u8) -> Option<Self> {
        ((level as usize) < PRIORITY_LEVELS).then_some(PriorityLevel(level))
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl fmt::Display for PriorityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessKind {
    Read,
    Write,
}

/// The five controller transaction queues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QueueClass {
    Cpu = 0,
    Gpu = 1,
    Dsp = 2,
    Media = 3,
    System = 4,
}

impl QueueClass {
    pub const ALL: [QueueClass; 5] = [
        QueueClass::Cpu,
        QueueClass::Gpu,
        QueueClass::Dsp,
        QueueClass::Media,
        QueueClass::System,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            QueueClass::Cpu => "cpu",
            QueueClass::Gpu => "gpu",
            QueueClass::Dsp => "dsp",
            QueueClass::Media => "media",
            QueueClass::System => "system",
        }
    }
}

/// Heterogeneous cores known to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Core {
    Cpu,
    Gpu,
    Dsp,
    ImageProcessor,
    VideoCodec,
    Rotator,
    Jpeg,
    Camera,
    Display,
    Gps,
    Wifi,
    Usb,
    Modem,
    Audio,
}

impl Core {
    /// The thirteen cores of the camcorder platform, in catalogue order.
    pub const CAMCORDER: [Core; 13] = [
        Core::Gpu,
        Core::Dsp,
        Core::ImageProcessor,
        Core::VideoCodec,
        Core::Rotator,
        Core::Jpeg,
        Core::Camera,
        Core::Display,
        Core::Gps,
        Core::Wifi,
        Core::Usb,
        Core::Modem,
        Core::Audio,
    ];

    pub fn queue_class(self) -> QueueClass {
        match self {
            Core::Cpu => QueueClass::Cpu,
            Core::Gpu => QueueClass::Gpu,
            Core::Dsp => QueueClass::Dsp,
            Core::ImageProcessor
            | Core::VideoCodec
            | Core::Rotator
            | Core::Jpeg
            | Core::Camera
            | Core::Display => QueueClass::Media,
            Core::Gps | Core::Wifi | Core::Usb | Core::Modem | Core::Audio => QueueClass::System,
        }
    }

    pub fn is_media(self) -> bool {
        self.queue_class() == QueueClass::Media
    }

    /// The performance objective the core is judged by.
    pub fn performance_type(self) -> &'static str {
        match self {
            Core::Cpu => "best effort",
            Core::Gpu
            | Core::ImageProcessor
            | Core::VideoCodec
            | Core::Rotator
            | Core::Jpeg => "frame rate",
            Core::Camera | Core::Display => "buffer occupancy",
            Core::Dsp | Core::Audio => "latency",
            Core::Gps | Core::Modem => "processing time",
            Core::Wifi | Core::Usb => "bandwidth",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Core::Cpu => "cpu",
            Core::Gpu => "gpu",
            Core::Dsp => "dsp",
            Core::ImageProcessor => "image_processor",
            Core::VideoCodec => "video_codec",
            Core::Rotator => "rotator",
            Core::Jpeg => "jpeg",
            Core::Camera => "camera",
            Core::Display => "display",
            Core::Gps => "gps",
            Core::Wifi => "wifi",
            Core::Usb => "usb",
            Core::Modem => "modem",
            Core::Audio => "audio",
        }
    }
}
