use super::{classify, DramCoord, DramError, DramTimingConfig, RowClass, BURST_BYTES};
use crate::types::AccessKind;

/// Row-buffer and timing-window state of one bank.
///
/// Each `earliest_*` stamp is the first cycle at which that command may be
/// issued. Stamps may lie in the future because a transaction's whole command
/// sequence is reserved when it is selected.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BankState {
    pub open_row: Option<u32>,
    pub earliest_activate: u64,
    pub earliest_read: u64,
    pub earliest_write: u64,
    pub earliest_precharge: u64,
}

#[derive(Debug, Clone, Default)]
struct RankState {
    /// Recent and reserved activate times, sorted.
    activates: Vec<u64>,
    /// (command cycle, data start) of reserved reads.
    reads: Vec<(u64, u64)>,
    /// (data start, data end) of recent writes.
    writes: Vec<(u64, u64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Precharge,
    Activate,
    Read,
    Write,
}

/// One DRAM command as placed on the command bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Command {
    pub cycle: u64,
    pub kind: CommandKind,
    pub rank: u8,
    pub bank: u8,
    pub row: u32,
}

/// Command times chosen for one transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IssuePlan {
    pub class: RowClass,
    pub precharge_at: Option<u64>,
    pub activate_at: Option<u64>,
    pub cas_at: u64,
    pub data_start: u64,
    pub data_end: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChannelStats {
    pub bytes: u64,
    pub reads: u64,
    pub writes: u64,
    pub row_hits: u64,
    pub row_misses: u64,
    pub row_closed: u64,
}

impl ChannelStats {
    pub fn accesses(&self) -> u64 {
        self.reads + self.writes
    }

    pub fn row_hit_rate(&self) -> f64 {
        if self.accesses() == 0 {
            0.0
        } else {
            self.row_hits as f64 / self.accesses() as f64
        }
    }
}

/// Banks, ranks and data bus of one channel.
#[derive(Debug, Clone)]
pub struct DramChannel {
    t: DramTimingConfig,
    banks: Vec<BankState>,
    ranks: Vec<RankState>,
    /// Reserved data-bus intervals `[start, end)`.
    bus: Vec<(u64, u64)>,
    stats: ChannelStats,
    log: Option<Vec<Command>>,
}

impl DramChannel {
    pub fn new(timing: &DramTimingConfig) -> Self {
        DramChannel {
            t: timing.clone(),
            banks: vec![BankState::default(); (timing.ranks * timing.banks) as usize],
            ranks: vec![RankState::default(); timing.ranks as usize],
            bus: Vec::new(),
            stats: ChannelStats::default(),
            log: None,
        }
    }

    /// Keeps every issued command for post-hoc protocol checking.
    pub fn with_command_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn commands(&self) -> &[Command] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn stats(&self) -> &ChannelStats {
        &self.stats
    }

    pub fn timing(&self) -> &DramTimingConfig {
        &self.t
    }

    pub fn bank(&self, coord: &DramCoord) -> &BankState {
        &self.banks[coord.bank_index(self.t.banks)]
    }

    pub fn classify(&self, coord: &DramCoord) -> RowClass {
        classify(self.bank(coord).open_row, coord.row)
    }

    /// Drops history that can no longer constrain commands at or after `now`.
    pub fn retire(&mut self, now: u64) {
        let horizon = now.saturating_sub(self.t.t_faw.max(self.t.t_rrd) as u64);
        let wtr = self.t.t_wtr as u64;
        for rank in &mut self.ranks {
            if rank.activates.first().is_some_and(|&a| a < horizon) {
                rank.activates.retain(|&a| a >= horizon);
            }
            rank.reads.retain(|&(_, ds)| ds >= now);
            rank.writes.retain(|&(_, end)| end + wtr > now);
        }
        self.bus.retain(|&(_, end)| end > now);
    }

    /// Returns the command schedule if the transaction can start this cycle
    /// with no idle gap between its commands.
    pub fn plan(&self, coord: &DramCoord, kind: AccessKind, now: u64) -> Option<IssuePlan> {
        let t = &self.t;
        let bank = self.bank(coord);
        let class = classify(bank.open_row, coord.row);
        let (precharge_at, activate_at, cas_at) = match class {
            RowClass::Hit => (None, None, now),
            RowClass::Closed => (None, Some(now), now + t.t_rcd as u64),
            RowClass::Miss => (
                Some(now),
                Some(now + t.t_rp as u64),
                now + (t.t_rp + t.t_rcd) as u64,
            ),
        };
        let data_start = cas_at + t.cl as u64;
        let data_end = data_start + t.t_burst as u64;

        if !self.bus_free(data_start, data_end) {
            return None;
        }
        if precharge_at.is_some_and(|p| p < bank.earliest_precharge) {
            return None;
        }
        let cas_floor = match kind {
            AccessKind::Read => bank.earliest_read,
            AccessKind::Write => bank.earliest_write,
        };
        if cas_at < cas_floor {
            return None;
        }
        let rank = &self.ranks[coord.rank as usize];
        if let Some(a) = activate_at {
            if a < bank.earliest_activate || !activate_fits(&rank.activates, a, t) {
                return None;
            }
        }
        let wtr = t.t_wtr as u64;
        let turnaround_ok = match kind {
            AccessKind::Read => rank
                .writes
                .iter()
                .all(|&(ws, we)| ws >= data_start || cas_at >= we + wtr),
            AccessKind::Write => rank
                .reads
                .iter()
                .all(|&(rc, rs)| rs <= data_start || rc >= data_end + wtr),
        };
        if !turnaround_ok {
            return None;
        }
        Some(IssuePlan { class, precharge_at, activate_at, cas_at, data_start, data_end })
    }

    /// Whether the data bus could take a burst for a transaction of `class`
    /// issued at `now`. A cheap necessary condition for [`Self::plan`].
    pub fn bus_free_for(&self, class: RowClass, now: u64) -> bool {
        let t = &self.t;
        let lead = match class {
            RowClass::Hit => 0,
            RowClass::Closed => t.t_rcd,
            RowClass::Miss => t.t_rp + t.t_rcd,
        } as u64;
        let start = now + lead + t.cl as u64;
        self.bus_free(start, start + t.t_burst as u64)
    }

    fn bus_free(&self, start: u64, end: u64) -> bool {
        self.bus.iter().all(|&(s, e)| end <= s || start >= e)
    }

    /// Reserves the command sequence of a transaction. Returns the cycle its
    /// data burst completes.
    pub fn issue(
        &mut self,
        coord: &DramCoord,
        kind: AccessKind,
        now: u64,
    ) -> Result<IssuePlan, DramError> {
        let plan = self.plan(coord, kind, now).ok_or(DramError::IllegalIssue {
            cycle: now,
            reason: "transaction not ready",
        })?;
        let t = self.t.clone();
        let idx = coord.bank_index(t.banks);
        let rank = &mut self.ranks[coord.rank as usize];
        let bank = &mut self.banks[idx];
        let mut log = |cycle, kind| {
            if let Some(log) = self.log.as_mut() {
                log.push(Command { cycle, kind, rank: coord.rank, bank: coord.bank, row: coord.row });
            }
        };
        if let Some(p) = plan.precharge_at {
            bank.open_row = None;
            bank.earliest_activate = bank.earliest_activate.max(p + t.t_rp as u64);
            log(p, CommandKind::Precharge);
        }
        if let Some(a) = plan.activate_at {
            bank.open_row = Some(coord.row);
            let ready = a + t.t_rcd as u64;
            bank.earliest_read = bank.earliest_read.max(ready);
            bank.earliest_write = bank.earliest_write.max(ready);
            let pos = rank.activates.partition_point(|&x| x <= a);
            rank.activates.insert(pos, a);
            log(a, CommandKind::Activate);
        }
        match kind {
            AccessKind::Read => {
                bank.earliest_precharge =
                    bank.earliest_precharge.max(plan.cas_at + t.t_rtp as u64);
                rank.reads.push((plan.cas_at, plan.data_start));
                self.stats.reads += 1;
                log(plan.cas_at, CommandKind::Read);
            }
            AccessKind::Write => {
                bank.earliest_precharge =
                    bank.earliest_precharge.max(plan.data_end + t.t_wr as u64);
                rank.writes.push((plan.data_start, plan.data_end));
                self.stats.writes += 1;
                log(plan.cas_at, CommandKind::Write);
            }
        }
        self.bus.push((plan.data_start, plan.data_end));
        self.stats.bytes += BURST_BYTES;
        match plan.class {
            RowClass::Hit => self.stats.row_hits += 1,
            RowClass::Miss => self.stats.row_misses += 1,
            RowClass::Closed => self.stats.row_closed += 1,
        }
        Ok(plan)
    }
}

/// tRRD against every known activate, and at most four activates in any
/// tFAW window once `at` is added.
fn activate_fits(sorted: &[u64], at: u64, t: &DramTimingConfig) -> bool {
    let rrd = t.t_rrd as u64;
    if sorted.iter().any(|&x| x.abs_diff(at) < rrd) {
        return false;
    }
    let faw = t.t_faw as u64;
    let pos = sorted.partition_point(|&x| x <= at);
    // windows of five consecutive activates that contain `at`
    let get = |i: usize| -> u64 {
        match i.cmp(&pos) {
            std::cmp::Ordering::Less => sorted[i],
            std::cmp::Ordering::Equal => at,
            std::cmp::Ordering::Greater => sorted[i - 1],
        }
    };
    let n = sorted.len() + 1;
    let lo = pos.saturating_sub(4);
    (lo..=pos).filter(|&s| s + 4 < n).all(|s| get(s + 4) - get(s) >= faw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coord(rank: u8, bank: u8, row: u32) -> DramCoord {
        DramCoord { channel: 0, rank, bank, row, column: 0 }
    }

    #[test]
    fn latencies_match_classification() {
        let t = DramTimingConfig::default();
        let mut ch = DramChannel::new(&t);
        let p = ch.issue(&coord(0, 0, 5), AccessKind::Read, 0).unwrap();
        assert_eq!(p.class, RowClass::Closed);
        assert_eq!(p.data_end, 78);
        let p = ch.issue(&coord(0, 0, 5), AccessKind::Read, 100).unwrap();
        assert_eq!(p.class, RowClass::Hit);
        assert_eq!(p.data_end - 100, 44);
        let p = ch.issue(&coord(0, 0, 9), AccessKind::Read, 200).unwrap();
        assert_eq!(p.class, RowClass::Miss);
        assert_eq!(p.data_end - 200, 112);
        assert_eq!(ch.stats().row_hits, 1);
    }

    #[test]
    fn faw_window() {
        let t = DramTimingConfig::default();
        let mut ch = DramChannel::new(&t);
        for (i, at) in [0u64, 19, 38, 57].into_iter().enumerate() {
            let p = ch.issue(&coord(0, i as u8, 1), AccessKind::Read, at);
            assert!(p.is_ok(), "activate {i} at {at}");
        }
        // fifth activate on the same rank: never before 75
        for at in 58..75 {
            assert!(ch.plan(&coord(0, 4, 1), AccessKind::Read, at).is_none(), "cycle {at}");
        }
        // with the default tRRD of 19 the first legal slot is 57 + 19
        assert!(ch.plan(&coord(0, 4, 1), AccessKind::Read, 75).is_none());
        assert!(ch.plan(&coord(0, 4, 1), AccessKind::Read, 76).is_some());

        // tFAW alone binds at exactly 75
        let t = DramTimingConfig { t_rrd: 1, ..Default::default() };
        let mut ch = DramChannel::new(&t);
        for (i, at) in [0u64, 19, 38, 57].into_iter().enumerate() {
            ch.issue(&coord(0, i as u8, 1), AccessKind::Read, at).unwrap();
        }
        assert!(ch.plan(&coord(0, 4, 1), AccessKind::Read, 74).is_none());
        assert!(ch.plan(&coord(0, 4, 1), AccessKind::Read, 75).is_some());
    }

    #[test]
    fn rrd_window() {
        let t = DramTimingConfig::default();
        let mut ch = DramChannel::new(&t);
        ch.issue(&coord(0, 0, 1), AccessKind::Read, 0).unwrap();
        assert!(ch.plan(&coord(0, 1, 1), AccessKind::Read, 18).is_none());
        assert!(ch.plan(&coord(0, 1, 1), AccessKind::Read, 19).is_some());
        // other rank is unconstrained
        assert!(ch.plan(&coord(1, 1, 1), AccessKind::Read, 8).is_some());
    }

    #[test]
    fn back_to_back_hits_are_burst_apart() {
        let t = DramTimingConfig::default();
        let mut ch = DramChannel::new(&t);
        ch.issue(&coord(0, 0, 3), AccessKind::Read, 0).unwrap();
        let mut now = 34;
        let a = loop {
            if let Ok(p) = ch.issue(&coord(0, 0, 3), AccessKind::Read, now) {
                break p;
            }
            now += 1;
        };
        let b = loop {
            now += 1;
            if let Ok(p) = ch.issue(&coord(0, 0, 3), AccessKind::Read, now) {
                break p;
            }
        };
        assert_eq!(b.data_end - a.data_end, t.t_burst as u64);
    }

    #[test]
    fn write_to_read_turnaround() {
        let t = DramTimingConfig::default();
        let mut ch = DramChannel::new(&t);
        ch.issue(&coord(0, 0, 3), AccessKind::Read, 0).unwrap();
        // the read burst occupies 70..78, so 42 is the first bus-legal write
        let w = ch.issue(&coord(0, 0, 3), AccessKind::Write, 42).unwrap();
        // a read whose data would follow the write must wait tWTR after it
        let first_ok = (43..400).find(|&c| ch.plan(&coord(0, 0, 3), AccessKind::Read, c).is_some()).unwrap();
        assert_eq!(first_ok, w.data_end + t.t_wtr as u64);
    }

    #[test]
    fn illegal_issue_is_reported() {
        let t = DramTimingConfig::default();
        let mut ch = DramChannel::new(&t);
        ch.issue(&coord(0, 0, 1), AccessKind::Read, 0).unwrap();
        let err = ch.issue(&coord(0, 1, 1), AccessKind::Read, 5).unwrap_err();
        assert!(matches!(err, DramError::IllegalIssue { cycle: 5, .. }));
    }
}
