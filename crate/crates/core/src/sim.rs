//! The cycle loop.
//!
//! Each [`World::step`] runs five phases in a fixed order: traffic
//! generation, meter update and priority re-evaluation, NoC arbitration,
//! controller scheduling with DRAM issue, and completion delivery.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::clock::SimClock;
use crate::config::{MeterConfig, MeterKindName, ScenarioConfig};
use crate::controller::{Controller, Policy};
use crate::dram::{checker, AddressMap, ChannelStats, Command, DramChannel};
use crate::meter::{
    translate, BandwidthMeter, BufferDirection, FrameProgressMeter, LatencyMeter, MeterKind, NpiValue,
    OccupancyMeter, PriorityLut, QosMeter,
};
use crate::metrics::{
    min_npi, priority_histogram, DmaSummary, MetricsSink, NpiSample, NpiSeries, PriorityHistogram, RunSummary,
};
use crate::noc::{Network, NocMode};
use crate::traffic::{DmaSpec, GeneratorState, SourceKind};
use crate::txn::Transaction;
use crate::types::{DmaId, PriorityLevel};
use crate::Error;

/// Debug recording switches. Both cost memory proportional to the run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimOptions {
    pub record_completions: bool,
    pub record_commands: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompletionRecord {
    pub id: u64,
    pub source: DmaId,
    pub t_created: u64,
    pub t_enqueued: u64,
    pub t_issued: u64,
    pub t_completed: u64,
}

struct InFlight(Transaction);

impl InFlight {
    fn key(&self) -> (u64, u64) {
        (self.0.t_completed.unwrap_or(0), self.0.id)
    }
}

impl PartialEq for InFlight {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for InFlight {}
impl PartialOrd for InFlight {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for InFlight {
    // min-heap on completion cycle
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

struct DmaRuntime {
    spec: DmaSpec,
    gen: GeneratorState,
    meter: QosMeter,
    lut: PriorityLut,
    target_bytes_s: f64,
    priority: PriorityLevel,
    /// Display and camera DMAs move data only as their buffer allows.
    buffer_gate: Option<BufferDirection>,
    inflight_bytes: u64,
    bytes: u64,
    max_wait: u64,
    bw_buckets: Vec<u64>,
}

impl DmaRuntime {
    fn buffer_room(&self) -> Option<u64> {
        let MeterKind::Occupancy(m) = &self.meter.kind else { return None };
        let dir = self.buffer_gate?;
        let inflight = self.inflight_bytes as f64;
        let room = match dir {
            BufferDirection::Drain => m.buffer_bytes - m.occupancy - inflight,
            BufferDirection::Fill => m.occupancy - inflight,
        };
        Some(room.max(0.0) as u64)
    }
}

fn build_meter(spec: &DmaSpec, m: &MeterConfig, s: &ScenarioConfig, clock: &SimClock) -> (MeterKind, f64) {
    let cycles = |ns: f64| clock.ns_to_cycles(ns);
    match m.kind {
        MeterKindName::Latency => {
            let limit = m.limit_ns.unwrap_or(1.0) * 1e-9 * clock.controller_freq_hz;
            (MeterKind::Latency(LatencyMeter::new(limit, m.window_samples.unwrap_or(64))), spec.rate_bytes_per_s)
        }
        MeterKindName::FrameProgress => {
            let mut f = FrameProgressMeter::new(spec.frame_bytes, s.frame_period_cycles());
            f.reference_slope = m.reference_slope.unwrap_or(1.0);
            f.reference_lag_cycles = cycles(m.reference_lag_ns.unwrap_or(0.0));
            (MeterKind::FrameProgress(f), spec.frame_bytes as f64 * s.frame_rate_hz)
        }
        MeterKindName::Occupancy => {
            let dir = m.direction.unwrap_or(BufferDirection::Drain);
            let mut o = OccupancyMeter::new(
                m.buffer_bytes.unwrap_or(0.0),
                m.initial_fraction.unwrap_or(0.5),
                spec.rate_bytes_per_s,
                dir,
            );
            o.window_cycles = match m.horizon_ns {
                Some(ns) => cycles(ns),
                None => clock.secs_to_cycles(o.initial_occupancy / spec.rate_bytes_per_s).round() as u64,
            };
            o.start_delay_cycles = cycles(m.start_delay_ns.unwrap_or(0.0));
            (MeterKind::Occupancy(o), spec.rate_bytes_per_s)
        }
        MeterKindName::Bandwidth => {
            let target = m.target_bytes_per_s.unwrap_or(0.0);
            let window = cycles(m.window_ns.unwrap_or(20_000.0)).max(1);
            (MeterKind::Bandwidth(BandwidthMeter::new(target, window)), target)
        }
    }
}

/// Complete simulator state for one scenario.
pub struct World {
    scenario: ScenarioConfig,
    clock: SimClock,
    map: AddressMap,
    policy: Policy,
    noc_mode: NocMode,
    dmas: Vec<DmaRuntime>,
    networks: Vec<Network>,
    controllers: Vec<Controller>,
    channels: Vec<DramChannel>,
    inflight: BinaryHeap<InFlight>,
    sink: MetricsSink,
    next_id: u64,
    generated: u64,
    completed: u64,
    max_wait: u64,
    completions: Option<Vec<CompletionRecord>>,
}

impl World {
    pub fn new(scenario: &ScenarioConfig, options: SimOptions) -> Result<Self, Error> {
        scenario.validate()?;
        let clock = scenario.clock();
        let map = AddressMap::new(&scenario.dram)?;
        let topo = scenario.topology();
        let net = Network::build(&topo)?;
        let nch = scenario.dram.channels as usize;
        let dmas = scenario
            .dma_specs()
            .into_iter()
            .zip(&scenario.dmas)
            .map(|(spec, cfg)| {
                let (kind, target) = build_meter(&spec, &cfg.meter, scenario, &clock);
                let lut = cfg.meter.lut.clone().unwrap_or_else(|| match cfg.meter.kind {
                    MeterKindName::FrameProgress => PriorityLut::default_frame(),
                    _ => PriorityLut::default_linear(),
                });
                let buffer_gate = match (&kind, spec.source_kind) {
                    (MeterKind::Occupancy(o), SourceKind::ConstantRate) => Some(o.direction),
                    _ => None,
                };
                DmaRuntime {
                    gen: GeneratorState::new(&spec, &clock, scenario.seed),
                    meter: QosMeter::new(spec.dma_id, kind),
                    lut,
                    target_bytes_s: target,
                    priority: PriorityLevel::LOWEST,
                    buffer_gate,
                    inflight_bytes: 0,
                    bytes: 0,
                    max_wait: 0,
                    bw_buckets: Vec::new(),
                    spec,
                }
            })
            .collect::<Vec<_>>();
        let channels = (0..nch)
            .map(|_| {
                let c = DramChannel::new(&scenario.dram);
                if options.record_commands {
                    c.with_command_log()
                } else {
                    c
                }
            })
            .collect();
        Ok(World {
            clock,
            map,
            policy: scenario.controller.policy,
            noc_mode: scenario.controller.noc_mode(),
            sink: MetricsSink::new(dmas.len()),
            dmas,
            networks: vec![net; nch],
            controllers: vec![Controller::new(scenario.controller.clone()); nch],
            channels,
            inflight: BinaryHeap::new(),
            next_id: 0,
            generated: 0,
            completed: 0,
            max_wait: 0,
            completions: options.record_completions.then(Vec::new),
            scenario: scenario.clone(),
        })
    }

    pub fn clock(&self) -> &SimClock {
        &self.clock
    }

    pub fn channel(&self, ch: usize) -> &DramChannel {
        &self.channels[ch]
    }

    pub fn controller_mut(&mut self, ch: usize) -> &mut Controller {
        &mut self.controllers[ch]
    }

    pub fn address_map(&self) -> &AddressMap {
        &self.map
    }

    pub fn priority(&self, dma: DmaId) -> PriorityLevel {
        self.dmas[dma.index()].priority
    }

    /// Transactions created but not yet completed.
    pub fn resident(&self) -> u64 {
        let queued: usize = self.networks.iter().map(Network::resident).sum::<usize>()
            + self.controllers.iter().map(Controller::occupancy).sum::<usize>();
        (queued + self.inflight.len()) as u64
    }

    pub fn generated(&self) -> u64 {
        self.generated
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }

    /// Advances the world by exactly one cycle.
    pub fn step(&mut self) -> Result<(), Error> {
        let now = self.clock.cycle;
        self.generate(now);
        self.update_meters(now)?;
        for (net, ctrl) in self.networks.iter_mut().zip(&mut self.controllers) {
            net.step(self.noc_mode, now, ctrl);
        }
        self.schedule(now)?;
        self.deliver(now)?;
        self.clock.tick();
        Ok(())
    }

    fn generate(&mut self, now: u64) {
        for d in &mut self.dmas {
            let room = d.buffer_room();
            let nets = &self.networks;
            let id = d.spec.dma_id;
            let Some(req) = d.gen.next_request(&d.spec, &self.map, &self.clock, |ch| nets[ch as usize].has_space(id), room)
            else {
                continue;
            };
            let coord = self.map.decode(req.address);
            let txn = Transaction {
                id: self.next_id,
                source: id,
                class: d.spec.core.queue_class(),
                kind: req.kind,
                address: req.address,
                coord,
                size_bytes: req.size_bytes,
                priority: d.priority,
                aged: false,
                t_created: now,
                t_enqueued: None,
                t_issued: None,
                t_completed: None,
                ready_at: now + 1,
                hops: 0,
            };
            self.next_id += 1;
            self.generated += 1;
            d.inflight_bytes += req.size_bytes as u64;
            // port room was checked by the generator
            let _ = self.networks[coord.channel as usize].inject(txn);
        }
    }

    fn update_meters(&mut self, now: u64) -> Result<(), Error> {
        let period = self.scenario.frame_period_cycles();
        let boundary = period > 0 && now.is_multiple_of(period);
        for d in &mut self.dmas {
            match &mut d.meter.kind {
                // the drain or fill of the cycle that just ended
                MeterKind::Occupancy(m) if now > m.start_delay_cycles => m.advance(1, &self.clock),
                MeterKind::FrameProgress(m) => {
                    if boundary {
                        m.start_frame();
                    }
                    m.frame_elapsed_cycles = if period > 0 { now % period } else { 0 };
                }
                _ => {}
            }
        }
        if !now.is_multiple_of(self.scenario.epoch_cycles) {
            return Ok(());
        }
        let mut changed = false;
        for d in &mut self.dmas {
            if let MeterKind::Bandwidth(m) = &mut d.meter.kind {
                m.expire(now);
            }
            let npi = d.meter.npi(&self.clock);
            let level = translate(&d.lut, npi);
            changed |= level != d.priority;
            d.priority = level;
            self.sink.record(d.spec.dma_id, NpiSample { cycle: now, npi, priority: level })?;
        }
        if changed {
            let levels: Vec<PriorityLevel> = self.dmas.iter().map(|d| d.priority).collect();
            let set = |t: &mut Transaction| t.priority = levels[t.source.index()];
            for n in &mut self.networks {
                n.for_each_resident_mut(set);
            }
            for c in &mut self.controllers {
                c.for_each_resident_mut(set);
            }
        }
        Ok(())
    }

    fn schedule(&mut self, now: u64) -> Result<(), Error> {
        let aging = self.scenario.controller.aging_period;
        let age_now = self.policy.uses_aging() && now > 0 && now.is_multiple_of(aging);
        for ch in 0..self.channels.len() {
            if age_now {
                self.controllers[ch].apply_aging(now);
                self.networks[ch].for_each_resident_mut(|t| {
                    if now - t.t_created >= aging {
                        t.aged = true;
                    }
                });
            }
            let dram = &mut self.channels[ch];
            dram.retire(now);
            let Some(mut txn) = self.controllers[ch].select(dram, now) else { continue };
            let plan = dram.issue(&txn.coord, txn.kind, now)?;
            txn.t_issued = Some(now);
            txn.t_completed = Some(plan.data_end);
            let wait = now - txn.t_created;
            let d = &mut self.dmas[txn.source.index()];
            d.max_wait = d.max_wait.max(wait);
            self.max_wait = self.max_wait.max(wait);
            self.inflight.push(InFlight(txn));
        }
        Ok(())
    }

    fn deliver(&mut self, now: u64) -> Result<(), Error> {
        let bucket = (now / self.scenario.output.bandwidth_bucket_cycles) as usize;
        while self.inflight.peek().is_some_and(|f| f.key().0 <= now) {
            let Some(InFlight(txn)) = self.inflight.pop() else { break };
            let d = &mut self.dmas[txn.source.index()];
            d.meter.on_completion(&txn, &self.clock)?;
            let size = txn.size_bytes as u64;
            d.inflight_bytes -= size;
            d.bytes += size;
            if d.bw_buckets.len() <= bucket {
                d.bw_buckets.resize(bucket + 1, 0);
            }
            d.bw_buckets[bucket] += size;
            self.completed += 1;
            if let Some(log) = self.completions.as_mut() {
                log.push(CompletionRecord {
                    id: txn.id,
                    source: txn.source,
                    t_created: txn.t_created,
                    t_enqueued: txn.t_enqueued.unwrap_or(now),
                    t_issued: txn.t_issued.unwrap_or(now),
                    t_completed: now,
                });
            }
        }
        Ok(())
    }

    /// Finishes the run and packages its measurements.
    pub fn into_report(self) -> SimulationReport {
        let duration = self.clock.cycle;
        let clock_hz = self.clock.controller_freq_hz;
        let window = 0..duration;
        let histograms = self
            .sink
            .series
            .iter()
            .map(|s| {
                priority_histogram(s, window.clone()).unwrap_or_else(|_| {
                    let mut f = [0.0; 8];
                    f[0] = 1.0;
                    PriorityHistogram { dma: s.dma, fraction_of_time: f }
                })
            })
            .collect();
        let mut max_resident_age = vec![0u64; self.dmas.len()];
        let mut note = |t: &Transaction| {
            let a = &mut max_resident_age[t.source.index()];
            *a = (*a).max(duration.saturating_sub(t.t_created));
        };
        self.networks.iter().for_each(|n| n.for_each_resident(&mut note));
        self.controllers.iter().for_each(|c| c.for_each_resident(&mut note));
        let stats: Vec<ChannelStats> = self.channels.iter().map(|c| c.stats().clone()).collect();
        let commands: Option<Vec<Vec<Command>>> = self
            .channels
            .iter()
            .any(|c| !c.commands().is_empty())
            .then(|| self.channels.iter().map(|c| c.commands().to_vec()).collect());
        let total_bytes: u64 = self.dmas.iter().map(|d| d.bytes).sum();
        SimulationReport {
            dmas: self
                .dmas
                .iter()
                .map(|d| DmaReport {
                    spec: d.spec.clone(),
                    target_bytes_s: d.target_bytes_s,
                    bytes: d.bytes,
                    max_wait: d.max_wait,
                    bandwidth_series: d.bw_buckets.clone(),
                })
                .collect(),
            npi_series: self.sink.series,
            histograms,
            channel_stats: stats,
            total_bytes,
            total_bw_bytes_s: if duration > 0 { total_bytes as f64 * clock_hz / duration as f64 } else { 0.0 },
            max_wait: self.max_wait,
            max_resident_age,
            generated: self.generated,
            completed: self.completed,
            resident: {
                let queued: usize = self.networks.iter().map(Network::resident).sum::<usize>()
                    + self.controllers.iter().map(Controller::occupancy).sum::<usize>();
                (queued + self.inflight.len()) as u64
            },
            completions: self.completions,
            commands,
            duration_cycles: duration,
            clock_hz,
            scenario: self.scenario,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmaReport {
    pub spec: DmaSpec,
    pub target_bytes_s: f64,
    pub bytes: u64,
    /// Longest creation-to-issue wait among issued transactions.
    pub max_wait: u64,
    /// Completed bytes per output bucket.
    pub bandwidth_series: Vec<u64>,
}

/// Everything measured during one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub scenario: ScenarioConfig,
    pub duration_cycles: u64,
    pub clock_hz: f64,
    pub dmas: Vec<DmaReport>,
    pub npi_series: Vec<NpiSeries>,
    pub histograms: Vec<PriorityHistogram>,
    pub channel_stats: Vec<ChannelStats>,
    /// Bytes delivered to DMAs. Channel stats also count bursts still in flight.
    pub total_bytes: u64,
    pub total_bw_bytes_s: f64,
    pub max_wait: u64,
    /// Age at the end of the run of the oldest transaction still queued, per DMA.
    pub max_resident_age: Vec<u64>,
    pub generated: u64,
    pub completed: u64,
    pub resident: u64,
    pub completions: Option<Vec<CompletionRecord>>,
    pub commands: Option<Vec<Vec<Command>>>,
}

impl SimulationReport {
    pub fn row_hits(&self) -> u64 {
        self.channel_stats.iter().map(|s| s.row_hits).sum()
    }

    pub fn row_hit_rate(&self) -> f64 {
        let accesses: u64 = self.channel_stats.iter().map(ChannelStats::accesses).sum();
        if accesses == 0 {
            0.0
        } else {
            self.row_hits() as f64 / accesses as f64
        }
    }

    /// Protocol violations found by the independent checker over every
    /// recorded command log.
    pub fn protocol_violations(&self) -> Vec<checker::Violation> {
        self.commands
            .iter()
            .flatten()
            .flat_map(|log| checker::check(log, &self.scenario.dram))
            .collect()
    }

    pub fn summarize(&self) -> RunSummary {
        let window = 0..self.duration_cycles;
        let secs = self.duration_cycles as f64 / self.clock_hz;
        let dmas = self
            .dmas
            .iter()
            .zip(&self.npi_series)
            .zip(&self.histograms)
            .map(|((d, s), h)| DmaSummary {
                dma: d.spec.dma_id,
                name: d.spec.name.clone(),
                core: d.spec.core,
                min_npi: min_npi(s, window.clone()).ok().map(NpiValue::get),
                bytes: d.bytes,
                mean_bw_bytes_s: if secs > 0.0 { d.bytes as f64 / secs } else { 0.0 },
                target_bytes_s: d.target_bytes_s,
                histogram: h.clone(),
                max_wait: d.max_wait,
            })
            .collect();
        RunSummary {
            scenario: self.scenario.clone(),
            duration_cycles: self.duration_cycles,
            dmas,
            total_bytes: self.total_bytes,
            total_bw_bytes_s: self.total_bw_bytes_s,
            row_hit_rate: self.row_hit_rate(),
            max_wait: self.max_wait,
        }
    }
}

/// Runs `scenario` for `duration_cycles` cycles.
pub fn run(scenario: &ScenarioConfig, duration_cycles: u64) -> Result<SimulationReport, Error> {
    run_with(scenario, duration_cycles, SimOptions::default())
}

pub fn run_with(scenario: &ScenarioConfig, duration_cycles: u64, options: SimOptions) -> Result<SimulationReport, Error> {
    let mut world = World::new(scenario, options)?;
    for _ in 0..duration_cycles {
        world.step()?;
    }
    Ok(world.into_report())
}

