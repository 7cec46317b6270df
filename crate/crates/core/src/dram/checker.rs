//! Post-hoc protocol checker.
//!
//! Replays a channel's command log in time order and reports every timing
//! window that was not honored. It shares no code with the scheduler-side
//! readiness test in [`super::DramChannel::plan`].

use super::{Command, CommandKind, DramTimingConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub cycle: u64,
    pub rule: &'static str,
    pub rank: u8,
    pub bank: u8,
}

#[derive(Default, Clone)]
struct Bank {
    open: Option<u32>,
    last_pre: Option<u64>,
    last_act: Option<u64>,
    last_read: Option<u64>,
    last_write_end: Option<u64>,
}

pub fn check(commands: &[Command], t: &DramTimingConfig) -> Vec<Violation> {
    let mut cmds = commands.to_vec();
    cmds.sort_by_key(|c| c.cycle);

    let mut out = Vec::new();
    let mut banks = vec![Bank::default(); (t.ranks * t.banks) as usize];
    let mut rank_acts: Vec<Vec<u64>> = vec![Vec::new(); t.ranks as usize];
    let mut bursts: Vec<(u64, u64, CommandKind, u8)> = Vec::new();

    let (cl, burst) = (t.cl as u64, t.t_burst as u64);
    for c in &cmds {
        let b = &mut banks[c.rank as usize * t.banks as usize + c.bank as usize];
        let mut fail = |rule| out.push(Violation { cycle: c.cycle, rule, rank: c.rank, bank: c.bank });
        match c.kind {
            CommandKind::Precharge => {
                if b.last_read.is_some_and(|r| c.cycle < r + t.t_rtp as u64) {
                    fail("tRTP");
                }
                if b.last_write_end.is_some_and(|w| c.cycle < w + t.t_wr as u64) {
                    fail("tWR");
                }
                if b.last_act.is_some_and(|a| c.cycle < a + t.t_rcd as u64) {
                    fail("PRE before tRCD");
                }
                b.open = None;
                b.last_pre = Some(c.cycle);
            }
            CommandKind::Activate => {
                if b.open.is_some() {
                    fail("ACT to open bank");
                }
                if b.last_pre.is_some_and(|p| c.cycle < p + t.t_rp as u64) {
                    fail("tRP");
                }
                let acts = &mut rank_acts[c.rank as usize];
                if acts.last().is_some_and(|&a| c.cycle < a + t.t_rrd as u64) {
                    fail("tRRD");
                }
                if acts.len() >= 4 && c.cycle < acts[acts.len() - 4] + t.t_faw as u64 {
                    fail("tFAW");
                }
                acts.push(c.cycle);
                b.open = Some(c.row);
                b.last_act = Some(c.cycle);
            }
            CommandKind::Read | CommandKind::Write => {
                if b.open != Some(c.row) {
                    fail("CAS to wrong row");
                }
                if b.last_act.is_some_and(|a| c.cycle < a + t.t_rcd as u64) {
                    fail("tRCD");
                }
                let start = c.cycle + cl;
                if c.kind == CommandKind::Read {
                    b.last_read = Some(c.cycle);
                } else {
                    b.last_write_end = Some(start + burst);
                }
                bursts.push((start, start + burst, c.kind, c.rank));
            }
        }
    }

    bursts.sort_by_key(|b| b.0);
    for w in bursts.windows(2) {
        if w[1].0 < w[0].1 {
            out.push(Violation { cycle: w[1].0, rule: "data bus overlap", rank: w[1].3, bank: 0 });
        }
    }
    // write-to-read: a read whose data follows a write's data on the same rank
    // must be commanded at least tWTR after the write data ends
    for rank in 0..t.ranks as u8 {
        let mut last_write_end: Option<u64> = None;
        for &(start, end, kind, r) in bursts.iter().filter(|b| b.3 == rank) {
            match kind {
                CommandKind::Write => last_write_end = Some(last_write_end.map_or(end, |e| e.max(end))),
                _ => {
                    let cmd = start - cl;
                    if last_write_end.is_some_and(|e| cmd < e + t.t_wtr as u64) {
                        out.push(Violation { cycle: cmd, rule: "tWTR", rank: r, bank: 0 });
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmd(cycle: u64, kind: CommandKind, bank: u8, row: u32) -> Command {
        Command { cycle, kind, rank: 0, bank, row }
    }

    #[test]
    fn flags_rrd_and_faw() {
        let t = DramTimingConfig::default();
        let log = vec![
            cmd(0, CommandKind::Activate, 0, 1),
            cmd(18, CommandKind::Activate, 1, 1),
        ];
        let v = check(&log, &t);
        assert!(v.iter().any(|v| v.rule == "tRRD"));

        let log: Vec<_> = [0u64, 19, 38, 57, 74]
            .iter()
            .enumerate()
            .map(|(i, &c)| cmd(c, CommandKind::Activate, i as u8, 1))
            .collect();
        let v = check(&log, &t);
        assert!(v.iter().any(|v| v.rule == "tFAW"));
    }

    #[test]
    fn clean_sequence_passes() {
        let t = DramTimingConfig::default();
        let log = vec![
            cmd(0, CommandKind::Activate, 0, 1),
            cmd(34, CommandKind::Read, 0, 1),
            cmd(48, CommandKind::Precharge, 0, 1),
            cmd(82, CommandKind::Activate, 0, 2),
            cmd(116, CommandKind::Read, 0, 2),
        ];
        assert!(check(&log, &t).is_empty());
    }

    #[test]
    fn flags_missing_precharge_gap() {
        let t = DramTimingConfig::default();
        let log = vec![
            cmd(0, CommandKind::Activate, 0, 1),
            cmd(34, CommandKind::Read, 0, 1),
            cmd(40, CommandKind::Precharge, 0, 1),
        ];
        assert!(check(&log, &t).iter().any(|v| v.rule == "tRTP"));
    }
}
