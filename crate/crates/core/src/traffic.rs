//! Synthetic per-DMA request streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::clock::SimClock;
use crate::dram::AddressMap;
use crate::types::{AccessKind, Core, DmaId};

/// Bytes per request.
pub const TXN_BYTES: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// A whole frame of requests becomes eligible at each frame boundary.
    BurstyFrame,
    /// Paced at a fixed byte rate.
    ConstantRate,
    /// Single reads with exponential inter-arrival times.
    LatencyProbe,
    /// Issues whenever its port has room.
    BandwidthStream,
}

/// Resolved description of one DMA's traffic.
#[derive(Debug, Clone, PartialEq)]
pub struct DmaSpec {
    pub dma_id: DmaId,
    pub name: String,
    pub core: Core,
    pub source_kind: SourceKind,
    pub rate_bytes_per_s: f64,
    pub frame_period_cycles: u64,
    pub frame_bytes: u64,
    /// `(base, length)` in bytes.
    pub address_region: (u64, u64),
    pub locality: f64,
    pub read_fraction: f64,
}

/// A request the generator wants to emit this cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NewRequest {
    pub address: u64,
    pub kind: AccessKind,
    pub size_bytes: u32,
}

/// Deterministic stream for one consumer of a master seed.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone)]
pub struct GeneratorState {
    pub byte_credit: f64,
    pub bytes_left_in_frame: u64,
    pub next_address: u64,
    pub emitted_bytes: u64,
    credit_per_cycle: f64,
    next_arrival: f64,
    inter_arrival: Option<Exp<f64>>,
    rng: ChaCha8Rng,
}

impl GeneratorState {
    pub fn new(spec: &DmaSpec, clock: &SimClock, seed: u64) -> Self {
        let mut rng = seeded_rng(seed, spec.dma_id.0 as u64);
        let credit_per_cycle = spec.rate_bytes_per_s / clock.controller_freq_hz;
        let inter_arrival = if spec.source_kind == SourceKind::LatencyProbe && credit_per_cycle > 0.0 {
            Exp::new(credit_per_cycle / TXN_BYTES as f64).ok()
        } else {
            None
        };
        let next_arrival = match &inter_arrival {
            Some(d) => d.sample(&mut rng),
            None => f64::INFINITY,
        };
        GeneratorState {
            byte_credit: 0.0,
            bytes_left_in_frame: 0,
            next_address: spec.address_region.0,
            emitted_bytes: 0,
            credit_per_cycle,
            next_arrival,
            inter_arrival,
            rng,
        }
    }

    /// Advances the generator by one cycle and returns at most one request.
    ///
    /// `port_open` reports whether the DMA's port towards a channel has room;
    /// `buffer_room` gates sources backed by a display or camera buffer.
    pub fn next_request(
        &mut self,
        spec: &DmaSpec,
        map: &AddressMap,
        clock: &SimClock,
        port_open: impl Fn(u8) -> bool,
        buffer_room: Option<u64>,
    ) -> Option<NewRequest> {
        let now = clock.cycle;
        let size = TXN_BYTES;
        let wants = match spec.source_kind {
            SourceKind::ConstantRate => match buffer_room {
                Some(room) => spec.rate_bytes_per_s > 0.0 && room >= size as u64,
                None => {
                    self.byte_credit += self.credit_per_cycle;
                    self.byte_credit >= size as f64
                }
            },
            SourceKind::BurstyFrame => {
                if spec.frame_period_cycles > 0 && now.is_multiple_of(spec.frame_period_cycles) {
                    self.bytes_left_in_frame = spec.frame_bytes;
                }
                self.bytes_left_in_frame >= size as u64
            }
            SourceKind::LatencyProbe => (now as f64) >= self.next_arrival,
            SourceKind::BandwidthStream => spec.rate_bytes_per_s > 0.0,
        };
        if !wants {
            return None;
        }
        if !port_open(map.channel_of(self.next_address)) {
            // a stalled source does not bank an unbounded burst
            self.byte_credit = self.byte_credit.min(size as f64);
            return None;
        }

        let kind = if spec.source_kind == SourceKind::LatencyProbe
            || self.rng.random::<f64>() < spec.read_fraction
        {
            AccessKind::Read
        } else {
            AccessKind::Write
        };
        match spec.source_kind {
            SourceKind::ConstantRate if buffer_room.is_none() => self.byte_credit -= size as f64,
            SourceKind::BurstyFrame => self.bytes_left_in_frame -= size as u64,
            SourceKind::LatencyProbe => {
                if let Some(d) = &self.inter_arrival {
                    self.next_arrival += d.sample(&mut self.rng);
                }
            }
            _ => {}
        }
        let address = self.next_address;
        self.next_address = self.advance(spec, map, address);
        self.emitted_bytes += size as u64;
        Some(NewRequest { address, kind, size_bytes: size })
    }

    fn advance(&mut self, spec: &DmaSpec, map: &AddressMap, addr: u64) -> u64 {
        let (base, len) = spec.address_region;
        let step = TXN_BYTES as u64;
        if self.rng.random::<f64>() < spec.locality {
            // next column of the same row; wraps inside the row
            let c = map.decode(addr);
            let mut next = c;
            next.column = (c.column + 1) % map.columns();
            return map.encode(&next);
        }
        let slots = (len / step).max(1);
        let mut cand = addr;
        for _ in 0..16 {
            cand = base + self.rng.random_range(0..slots) * step;
            if !map.same_row(cand, addr) {
                break;
            }
        }
        cand
    }
}
