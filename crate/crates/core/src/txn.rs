use crate::dram::DramCoord;
use crate::types::{AccessKind, DmaId, PriorityLevel, QueueClass};

/// One memory request travelling from a DMA to DRAM.
#[derive(Debug, Clone, PartialEq)]
pub struct Transaction {
    pub id: u64,
    pub source: DmaId,
    pub class: QueueClass,
    pub kind: AccessKind,
    pub address: u64,
    pub coord: DramCoord,
    pub size_bytes: u32,
    pub priority: PriorityLevel,
    /// Set by the aging sweep; outranks every priority level.
    pub aged: bool,
    pub t_created: u64,
    pub t_enqueued: Option<u64>,
    pub t_issued: Option<u64>,
    pub t_completed: Option<u64>,
    /// First cycle at which the transaction may leave its current NoC queue.
    pub ready_at: u64,
    pub hops: u8,
}

impl Transaction {
    /// Ordering key used for "oldest first" decisions.
    pub fn age_key(&self) -> (u64, u64) {
        (self.t_created, self.id)
    }

    /// Priority with aging folded in: aged transactions rank above level 7.
    pub fn effective_priority(&self) -> u8 {
        if self.aged {
            PriorityLevel::HIGHEST.get() + 1
        } else {
            self.priority.get()
        }
    }

    /// Wait from creation to DRAM issue, when issued.
    pub fn wait(&self) -> Option<u64> {
        self.t_issued.map(|t| t - self.t_created)
    }
}
