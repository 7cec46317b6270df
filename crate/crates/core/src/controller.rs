//! Memory controller: five class queues over one shared entry pool and the
//! scheduling policies that pick the next transaction for DRAM.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dram::{DramChannel, RowClass};
use crate::noc::NocMode;
use crate::txn::Transaction;
use crate::types::{DmaId, QueueClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Policy {
    Fcfs,
    Rr,
    FrameQos,
    Qos,
    QosRb,
    FrFcfs,
}

impl Policy {
    pub const ALL: [Policy; 6] = [
        Policy::Fcfs,
        Policy::Rr,
        Policy::FrameQos,
        Policy::Qos,
        Policy::QosRb,
        Policy::FrFcfs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Fcfs => "FCFS",
            Policy::Rr => "RR",
            Policy::FrameQos => "FRAME_QOS",
            Policy::Qos => "QOS",
            Policy::QosRb => "QOS_RB",
            Policy::FrFcfs => "FR_FCFS",
        }
    }

    pub fn parse(s: &str) -> Option<Policy> {
        Policy::ALL.into_iter().find(|p| p.name().eq_ignore_ascii_case(s))
    }

    /// NoC arbitration used alongside this controller policy unless the
    /// scenario overrides it.
    pub fn default_noc_mode(self) -> NocMode {
        match self {
            Policy::Qos | Policy::QosRb => NocMode::Priority,
            Policy::FrameQos => NocMode::FrameQos,
            Policy::Rr => NocMode::RoundRobin,
            Policy::Fcfs | Policy::FrFcfs => NocMode::Fcfs,
        }
    }

    pub fn uses_aging(self) -> bool {
        matches!(self, Policy::Qos | Policy::QosRb)
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    /// All queues draw from one pool.
    #[default]
    Shared,
    /// The pool is split evenly, earlier queues taking the remainder.
    Static,
}

fn default_aging() -> u64 {
    10_000
}
fn default_delta() -> u8 {
    6
}
fn default_capacity() -> usize {
    42
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub policy: Policy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noc_policy: Option<NocMode>,
    #[serde(default = "default_aging")]
    pub aging_period: u64,
    #[serde(default = "default_delta")]
    pub delta: u8,
    #[serde(default = "default_capacity")]
    pub capacity: usize,
    #[serde(default)]
    pub partition: Partition,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            policy: Policy::Qos,
            noc_policy: None,
            aging_period: default_aging(),
            delta: default_delta(),
            capacity: default_capacity(),
            partition: Partition::Shared,
        }
    }
}

impl ControllerConfig {
    pub fn noc_mode(&self) -> NocMode {
        self.noc_policy.unwrap_or(self.policy.default_noc_mode())
    }
}

/// What the scheduler sees of one DRAM-ready transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub queue: QueueClass,
    pub source: DmaId,
    /// Effective priority: 0..=7, or 8 when aged.
    pub priority: u8,
    pub row_hit: bool,
    /// Oldest first: (t_created, id).
    pub age: (u64, u64),
    /// Media transaction whose DMA reports being behind its target.
    pub urgent_media: bool,
}

impl Candidate {
    pub fn of(txn: &Transaction, row_hit: bool) -> Self {
        Candidate {
            queue: txn.class,
            source: txn.source,
            priority: txn.effective_priority(),
            row_hit,
            age: txn.age_key(),
            urgent_media: txn.class == QueueClass::Media && txn.priority.get() > 0,
        }
    }
}

/// Round-robin pointers: the last served queue and the last served source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RrState {
    pub queue: usize,
    pub source: u16,
}

impl Default for RrState {
    fn default() -> Self {
        RrState { queue: QueueClass::ALL.len() - 1, source: u16::MAX }
    }
}

impl RrState {
    fn queue_rank(&self, q: QueueClass) -> usize {
        let n = QueueClass::ALL.len();
        (q.index() + n - self.queue - 1) % n
    }

    fn source_rank(&self, s: DmaId) -> u16 {
        s.0.wrapping_sub(self.source).wrapping_sub(1)
    }

    pub fn served(&mut self, c: &Candidate) {
        self.queue = c.queue.index();
        self.source = c.source.0;
    }
}

fn oldest(c: &[Candidate], keep: impl Fn(&Candidate) -> bool) -> Option<usize> {
    c.iter()
        .enumerate()
        .filter(|(_, c)| keep(c))
        .min_by_key(|(_, c)| c.age)
        .map(|(i, _)| i)
}

fn priority_rr(rr: &RrState, c: &[Candidate], keep: impl Fn(&Candidate) -> bool) -> Option<usize> {
    c.iter()
        .enumerate()
        .filter(|(_, c)| keep(c))
        .min_by_key(|(_, c)| (std::cmp::Reverse(c.priority), rr.source_rank(c.source), c.age))
        .map(|(i, _)| i)
}

/// Priority round-robin: highest priority wins, equal priorities take turns
/// by source.
pub fn policy1(rr: &RrState, c: &[Candidate]) -> Option<usize> {
    priority_rr(rr, c, |_| true)
}

/// Row-buffer aware variant of [`policy1`]: while no priority reaches
/// `delta`, or all priorities are equal, the oldest row hit goes first.
pub fn policy2(rr: &RrState, delta: u8, c: &[Candidate]) -> Option<usize> {
    let first = c.first()?;
    let any_high = c.iter().any(|c| c.priority >= delta);
    let all_equal = c.iter().all(|x| x.priority == first.priority);
    if !any_high || all_equal {
        if let Some(i) = oldest(c, |c| c.row_hit) {
            return Some(i);
        }
    }
    policy1(rr, c)
}

/// Picks one of `c` under `policy`. Pure: round-robin state is only read.
pub fn choose(policy: Policy, delta: u8, rr: &RrState, c: &[Candidate]) -> Option<usize> {
    match policy {
        Policy::Fcfs => oldest(c, |_| true),
        Policy::Rr => c
            .iter()
            .enumerate()
            .min_by_key(|(_, c)| (rr.queue_rank(c.queue), c.age))
            .map(|(i, _)| i),
        Policy::FrameQos => oldest(c, |c| c.urgent_media).or_else(|| oldest(c, |_| true)),
        Policy::Qos => policy1(rr, c),
        Policy::QosRb => policy2(rr, delta, c),
        Policy::FrFcfs => oldest(c, |c| c.row_hit).or_else(|| oldest(c, |_| true)),
    }
}

/// Per-bank view of the resident transactions, used to keep the ready set
/// from undoing the policy: a transaction is held back while a more urgent
/// one needs its bank opened to a different row, and row-buffer aware
/// policies do not close a row that resident transactions still hit.
#[derive(Debug, Clone, Default)]
struct BankGuard {
    banks: Vec<BankEntry>,
    min_priority: u8,
    max_priority: u8,
}

#[derive(Debug, Clone, Copy, Default)]
struct BankEntry {
    used: bool,
    best: u8,
    best_row: u32,
    /// Best priority on any row other than `best_row`.
    other: Option<u8>,
    resident_hit: bool,
}

impl BankGuard {
    fn scan<'a>(&mut self, txns: impl Iterator<Item = &'a Transaction>, dram: &DramChannel) {
        let t = dram.timing();
        self.banks.clear();
        self.banks.resize((t.ranks * t.banks) as usize, BankEntry::default());
        let banks_per_rank = t.banks;
        let (mut lo, mut hi) = (u8::MAX, 0);
        for txn in txns {
            let p = txn.effective_priority();
            lo = lo.min(p);
            hi = hi.max(p);
            let row = txn.coord.row;
            let hit = dram.classify(&txn.coord) == RowClass::Hit;
            let b = &mut self.banks[txn.coord.bank_index(banks_per_rank)];
            if !b.used {
                *b = BankEntry { used: true, best: p, best_row: row, other: None, resident_hit: hit };
                continue;
            }
            b.resident_hit |= hit;
            if p > b.best {
                if b.best_row != row {
                    b.other = Some(b.best);
                }
                b.best = p;
                b.best_row = row;
            } else if b.best_row != row {
                b.other = Some(b.other.map_or(p, |q| q.max(p)));
            }
        }
        self.min_priority = lo;
        self.max_priority = hi;
    }

    fn entry(&self, t: &Transaction, banks_per_rank: u32) -> &BankEntry {
        &self.banks[t.coord.bank_index(banks_per_rank)]
    }

    /// Highest priority among transactions to the same bank but another row.
    fn conflicting_priority(&self, b: &BankEntry, t: &Transaction) -> u8 {
        if b.best_row != t.coord.row {
            b.best
        } else {
            b.other.unwrap_or(0)
        }
    }

    /// Policy 2 prefers row hits when no resident priority reaches `delta`
    /// or all priorities are equal.
    fn hit_regime(&self, delta: u8) -> bool {
        self.max_priority < delta || self.min_priority == self.max_priority
    }
}

/// One channel's transaction buffer and scheduler.
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    queues: [VecDeque<Transaction>; 5],
    caps: [usize; 5],
    occupancy: usize,
    rr: RrState,
    scratch: Vec<(Candidate, usize, usize)>,
    cands: Vec<Candidate>,
    guard: BankGuard,
}

impl Controller {
    pub fn new(cfg: ControllerConfig) -> Self {
        let n = QueueClass::ALL.len();
        let caps = match cfg.partition {
            Partition::Shared => [cfg.capacity; 5],
            Partition::Static => {
                std::array::from_fn(|i| cfg.capacity / n + usize::from(i < cfg.capacity % n))
            }
        };
        Controller {
            cfg,
            queues: Default::default(),
            caps,
            occupancy: 0,
            rr: RrState::default(),
            scratch: Vec::new(),
            cands: Vec::new(),
            guard: BankGuard::default(),
        }
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn occupancy(&self) -> usize {
        self.occupancy
    }

    pub fn queue(&self, class: QueueClass) -> &VecDeque<Transaction> {
        &self.queues[class.index()]
    }

    pub fn rr_state(&self) -> RrState {
        self.rr
    }

    pub fn can_accept(&self, class: QueueClass) -> bool {
        self.occupancy < self.cfg.capacity && self.queues[class.index()].len() < self.caps[class.index()]
    }

    /// Appends an arrival to its class queue, or hands it back when full.
    pub fn enqueue(&mut self, mut txn: Transaction, now: u64) -> Result<(), Transaction> {
        if !self.can_accept(txn.class) {
            return Err(txn);
        }
        txn.t_enqueued = Some(now);
        self.queues[txn.class.index()].push_back(txn);
        self.occupancy += 1;
        Ok(())
    }

    /// Marks every resident transaction that has waited at least T cycles.
    /// Only acts on T boundaries.
    pub fn apply_aging(&mut self, now: u64) {
        let t = self.cfg.aging_period;
        if t == 0 || !now.is_multiple_of(t) {
            return;
        }
        for txn in self.queues.iter_mut().flatten() {
            if now - txn.t_created >= t {
                txn.aged = true;
            }
        }
    }

    /// Removes and returns the policy's choice among the transactions that
    /// `dram` could start this cycle.
    pub fn select(&mut self, dram: &DramChannel, now: u64) -> Option<Transaction> {
        if self.occupancy == 0 {
            return None;
        }
        let bus = [RowClass::Hit, RowClass::Closed, RowClass::Miss].map(|c| dram.bus_free_for(c, now));
        if !bus.iter().any(|&b| b) {
            return None;
        }
        self.scratch.clear();
        let policy = self.cfg.policy;
        let guarded = matches!(policy, Policy::Qos | Policy::QosRb | Policy::FrFcfs);
        if guarded {
            self.guard.scan(self.queues.iter().flatten(), dram);
        }
        let keep_open = match policy {
            Policy::FrFcfs => true,
            Policy::QosRb => self.guard.hit_regime(self.cfg.delta),
            _ => false,
        };
        let banks_per_rank = dram.timing().banks;
        for (qi, q) in self.queues.iter().enumerate() {
            for (pos, txn) in q.iter().enumerate() {
                let class = dram.classify(&txn.coord);
                let hit = class == RowClass::Hit;
                if guarded {
                    let b = self.guard.entry(txn, banks_per_rank);
                    // a row-buffer aware policy leaves a row open while it still has hits
                    if keep_open && !hit && b.resident_hit {
                        continue;
                    }
                    let blocker = self.guard.conflicting_priority(b, txn);
                    let outranked = match policy {
                        Policy::Qos => blocker > txn.effective_priority(),
                        Policy::QosRb => !keep_open && blocker > txn.effective_priority() && blocker >= self.cfg.delta,
                        _ => false,
                    };
                    if outranked {
                        continue;
                    }
                }
                let bus_ok = match class {
                    RowClass::Hit => bus[0],
                    RowClass::Closed => bus[1],
                    RowClass::Miss => bus[2],
                };
                if bus_ok && dram.plan(&txn.coord, txn.kind, now).is_some() {
                    self.scratch.push((Candidate::of(txn, hit), qi, pos));
                }
            }
        }
        self.cands.clear();
        self.cands.extend(self.scratch.iter().map(|s| s.0));
        let pick = choose(policy, self.cfg.delta, &self.rr, &self.cands)?;
        let (c, qi, pos) = self.scratch[pick];
        self.rr.served(&c);
        self.occupancy -= 1;
        self.queues[qi].remove(pos)
    }

    pub fn for_each_resident_mut(&mut self, f: impl FnMut(&mut Transaction)) {
        self.queues.iter_mut().flatten().for_each(f);
    }

    pub fn for_each_resident(&self, f: impl FnMut(&Transaction)) {
        self.queues.iter().flatten().for_each(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dram::{AddressMap, DramTimingConfig};
    use crate::types::{AccessKind, PriorityLevel};

    fn cand(source: u16, priority: u8, row_hit: bool, age: u64) -> Candidate {
        Candidate {
            queue: QueueClass::Media,
            source: DmaId(source),
            priority,
            row_hit,
            age: (age, age),
            urgent_media: false,
        }
    }

    #[test]
    fn qos_higher_priority_wins() {
        let c = [cand(0, 3, false, 5), cand(1, 1, false, 0)];
        assert_eq!(choose(Policy::Qos, 6, &RrState::default(), &c), Some(0));
    }

    #[test]
    fn qos_equal_priorities_alternate() {
        let c = [cand(0, 4, false, 0), cand(1, 4, false, 0)];
        let mut rr = RrState::default();
        let mut picks = Vec::new();
        for _ in 0..4 {
            let i = choose(Policy::Qos, 6, &rr, &c).unwrap();
            rr.served(&c[i]);
            picks.push(i);
        }
        assert_eq!(picks, [0, 1, 0, 1]);
    }

    #[test]
    fn qos_rb_examples() {
        let rr = RrState::default();
        // row hit at 2 vs miss at 5: nothing reaches delta
        let c = [cand(0, 2, true, 9), cand(1, 5, false, 0)];
        assert_eq!(choose(Policy::QosRb, 6, &rr, &c), Some(0));
        // miss at 7 crosses delta
        let c = [cand(0, 2, true, 9), cand(1, 7, false, 0)];
        assert_eq!(choose(Policy::QosRb, 6, &rr, &c), Some(1));
        // equal high priorities: row hit
        let c = [cand(1, 7, false, 0), cand(0, 7, true, 9)];
        assert_eq!(choose(Policy::QosRb, 6, &rr, &c), Some(1));
        // below delta the oldest hit goes first, whatever its priority
        let c = [cand(0, 1, true, 0), cand(1, 4, true, 9), cand(2, 5, false, 0)];
        assert_eq!(choose(Policy::QosRb, 6, &rr, &c), Some(0));
        // unequal priorities reaching delta: plain Policy 1
        let c = [cand(0, 6, false, 0), cand(1, 6, true, 9), cand(2, 5, true, 0)];
        assert_eq!(choose(Policy::QosRb, 6, &rr, &c), choose(Policy::Qos, 6, &rr, &c));
    }

    #[test]
    fn aged_beats_priority_seven() {
        let mut c = [cand(0, 0, false, 0), cand(1, 7, false, 0)];
        c[0].priority = 8;
        assert_eq!(choose(Policy::Qos, 6, &RrState::default(), &c), Some(0));
    }

    #[test]
    fn fr_fcfs_and_fcfs() {
        let c = [cand(0, 0, false, 0), cand(1, 0, true, 10)];
        assert_eq!(choose(Policy::FrFcfs, 6, &RrState::default(), &c), Some(1));
        assert_eq!(choose(Policy::Fcfs, 6, &RrState::default(), &c), Some(0));
        assert_eq!(choose(Policy::Fcfs, 6, &RrState::default(), &[]), None);
    }

    #[test]
    fn rr_rotates_queues() {
        let mut a = cand(0, 0, false, 0);
        a.queue = QueueClass::Dsp;
        let mut b = cand(1, 0, false, 5);
        b.queue = QueueClass::Gpu;
        let mut rr = RrState::default();
        let i = choose(Policy::Rr, 6, &rr, &[a, b]).unwrap();
        assert_eq!(i, 1);
        rr.served(&[a, b][i]);
        assert_eq!(choose(Policy::Rr, 6, &rr, &[a, b]), Some(0));
    }

    #[test]
    fn frame_qos_prefers_behind_media() {
        let mut a = cand(0, 0, false, 10);
        a.urgent_media = true;
        let b = cand(1, 0, false, 0);
        assert_eq!(choose(Policy::FrameQos, 6, &RrState::default(), &[a, b]), Some(0));
        a.urgent_media = false;
        assert_eq!(choose(Policy::FrameQos, 6, &RrState::default(), &[a, b]), Some(1));
    }

    fn txn(id: u64, class: QueueClass, created: u64) -> Transaction {
        Transaction {
            id,
            source: DmaId(0),
            class,
            kind: AccessKind::Read,
            address: 0,
            coord: Default::default(),
            size_bytes: 64,
            priority: PriorityLevel::LOWEST,
            aged: false,
            t_created: created,
            t_enqueued: None,
            t_issued: None,
            t_completed: None,
            ready_at: 0,
            hops: 0,
        }
    }

    #[test]
    fn shared_pool_of_42() {
        let mut c = Controller::new(ControllerConfig::default());
        for i in 0..42 {
            c.enqueue(txn(i, QueueClass::Media, 0), 0).unwrap();
        }
        assert!(c.enqueue(txn(42, QueueClass::Dsp, 0), 0).is_err());
        assert_eq!(c.queue(QueueClass::Media).len(), 42);
    }

    #[test]
    fn static_split_caps_each_queue() {
        let cfg = ControllerConfig { partition: Partition::Static, ..Default::default() };
        let mut c = Controller::new(cfg);
        let mut n = 0;
        while c.enqueue(txn(n, QueueClass::Media, 0), 0).is_ok() {
            n += 1;
        }
        assert_eq!(n, 8);
        assert!(c.can_accept(QueueClass::Cpu));
    }

    #[test]
    fn aging_threshold_is_inclusive() {
        let mut c = Controller::new(ControllerConfig::default());
        c.enqueue(txn(0, QueueClass::Dsp, 0), 0).unwrap();
        c.enqueue(txn(1, QueueClass::Dsp, 1), 1).unwrap();
        c.apply_aging(10_000);
        let aged: Vec<bool> = c.queue(QueueClass::Dsp).iter().map(|t| t.aged).collect();
        assert_eq!(aged, [true, false]);
        // off-boundary calls do nothing
        c.apply_aging(10_001);
        assert!(!c.queue(QueueClass::Dsp)[1].aged);
    }

    #[test]
    fn pending_row_hit_issues_immediately() {
        let t = DramTimingConfig::default();
        let map = AddressMap::new(&t).unwrap();
        let mut dram = DramChannel::new(&t);
        let mut first = txn(0, QueueClass::Dsp, 0);
        first.coord = map.decode(0);
        dram.issue(&first.coord, AccessKind::Read, 0).unwrap();
        let mut c = Controller::new(ControllerConfig::default());
        let mut hit = txn(1, QueueClass::Dsp, 0);
        hit.coord = map.decode(128);
        c.enqueue(hit, 100).unwrap();
        let got = c.select(&dram, 100).unwrap();
        assert_eq!(got.id, 1);
        assert_eq!(dram.classify(&got.coord), RowClass::Hit);
        assert_eq!(c.occupancy(), 0);
    }
}
