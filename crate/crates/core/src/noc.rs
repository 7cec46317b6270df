//! On-chip interconnect modeled as a tree of arbiters per memory channel.
//!
//! Each arbiter grants at most one head-of-queue transaction per cycle. A
//! granted transaction moves one hop and becomes eligible downstream on the
//! next cycle.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::Controller;
use crate::txn::Transaction;
use crate::types::{DmaId, QueueClass};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("arbiter `{0}` declared twice")]
    Duplicate(String),
    #[error("arbiter `{0}` references unknown parent `{1}`")]
    UnknownParent(String, String),
    #[error("topology needs exactly one root arbiter, found {0}")]
    Roots(usize),
    #[error("arbiter `{0}` is part of a cycle")]
    Cycle(String),
    #[error("DMA {0} attaches to unknown arbiter `{1}`")]
    UnknownAttachment(DmaId, String),
}

/// Arbitration discipline used by every arbiter of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NocMode {
    /// Oldest head first.
    Fcfs,
    /// Ports served in turn, priorities ignored.
    RoundRobin,
    /// Highest (aged, priority) head first, round-robin among ties.
    Priority,
    /// Media heads with a raised priority first, otherwise oldest.
    FrameQos,
}

/// Bounded FIFO feeding one arbiter input.
#[derive(Debug, Clone)]
pub struct PortQueue {
    items: VecDeque<Transaction>,
    depth: usize,
}

impl PortQueue {
    pub fn new(depth: usize) -> Self {
        PortQueue { items: VecDeque::with_capacity(depth), depth }
    }

    pub fn has_space(&self) -> bool {
        self.items.len() < self.depth
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn head(&self) -> Option<&Transaction> {
        self.items.front()
    }

    pub fn push(&mut self, txn: Transaction) -> Result<(), Transaction> {
        if self.has_space() {
            self.items.push_back(txn);
            Ok(())
        } else {
            Err(txn)
        }
    }

    pub fn pop(&mut self) -> Option<Transaction> {
        self.items.pop_front()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transaction> {
        self.items.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Transaction> {
        self.items.iter_mut()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeOutput {
    Node { node: usize, port: usize },
    Controller,
}

#[derive(Debug, Clone)]
pub struct ArbiterNode {
    pub name: String,
    pub inputs: Vec<PortQueue>,
    pub rr_pointer: usize,
    pub output: NodeOutput,
}

fn is_urgent_media(t: &Transaction) -> bool {
    t.class == QueueClass::Media && t.priority.get() > 0
}

impl ArbiterNode {
    pub fn new(name: impl Into<String>, ports: usize, depth: usize, output: NodeOutput) -> Self {
        ArbiterNode {
            name: name.into(),
            inputs: (0..ports).map(|_| PortQueue::new(depth)).collect(),
            rr_pointer: ports.saturating_sub(1),
            output,
        }
    }

    /// Picks the input port to grant this cycle. Only heads that are eligible
    /// at `now` and accepted downstream compete.
    pub fn arbitrate(&self, mode: NocMode, now: u64, accept: impl Fn(&Transaction) -> bool) -> Option<usize> {
        let n = self.inputs.len();
        let rr_rank = |i: usize| (i + n - self.rr_pointer - 1) % n;
        let heads = self
            .inputs
            .iter()
            .enumerate()
            .filter_map(|(i, q)| q.head().map(|h| (i, h)))
            .filter(|(_, h)| h.ready_at <= now && accept(h));
        match mode {
            NocMode::Priority => heads
                .min_by_key(|(i, h)| (std::cmp::Reverse(h.effective_priority()), rr_rank(*i)))
                .map(|(i, _)| i),
            NocMode::RoundRobin => heads.min_by_key(|(i, _)| rr_rank(*i)).map(|(i, _)| i),
            NocMode::Fcfs => heads.min_by_key(|(_, h)| h.age_key()).map(|(i, _)| i),
            NocMode::FrameQos => heads
                .min_by_key(|(_, h)| (!is_urgent_media(h), h.age_key()))
                .map(|(i, _)| i),
        }
    }
}

/// Arbiter declaration: a name and the arbiter it feeds (`None` for the root).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArbiterSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
}

/// Arbiter tree shared by every channel: each DMA attaches to one arbiter.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub port_depth: usize,
    pub arbiters: Vec<ArbiterSpec>,
    /// Arbiter name per DMA, indexed by [`DmaId`].
    pub attachments: Vec<String>,
}

/// One channel's arbiter tree, stored leaves first.
#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<ArbiterNode>,
    dma_port: Vec<(usize, usize)>,
}

impl Network {
    pub fn build(topo: &Topology) -> Result<Self, TopologyError> {
        let specs = &topo.arbiters;
        let index_of = |name: &str| specs.iter().position(|a| a.name == name);
        for (i, a) in specs.iter().enumerate() {
            if specs[..i].iter().any(|b| b.name == a.name) {
                return Err(TopologyError::Duplicate(a.name.clone()));
            }
        }
        let mut parent = Vec::with_capacity(specs.len());
        for a in specs {
            parent.push(match &a.parent {
                None => None,
                Some(p) => Some(index_of(p).ok_or_else(|| TopologyError::UnknownParent(a.name.clone(), p.clone()))?),
            });
        }
        let roots = parent.iter().filter(|p| p.is_none()).count();
        if roots != 1 {
            return Err(TopologyError::Roots(roots));
        }
        let mut depth = vec![0usize; specs.len()];
        for i in 0..specs.len() {
            let (mut cur, mut d) = (i, 0);
            while let Some(p) = parent[cur] {
                d += 1;
                if d > specs.len() {
                    return Err(TopologyError::Cycle(specs[i].name.clone()));
                }
                cur = p;
            }
            depth[i] = d;
        }
        let mut dma_arbiter = Vec::with_capacity(topo.attachments.len());
        for (d, name) in topo.attachments.iter().enumerate() {
            dma_arbiter.push(
                index_of(name).ok_or_else(|| TopologyError::UnknownAttachment(DmaId(d as u16), name.clone()))?,
            );
        }

        // leaves first: deeper arbiters earlier, declaration order among equals
        let mut order: Vec<usize> = (0..specs.len()).collect();
        order.sort_by_key(|&i| (std::cmp::Reverse(depth[i]), i));
        let slot_of = |spec: usize| order.iter().position(|&o| o == spec).unwrap_or(0);

        // ports: child arbiters in declaration order, then attached DMAs
        let mut ports: Vec<Vec<Option<usize>>> = vec![Vec::new(); specs.len()];
        let mut child_port = vec![0usize; specs.len()];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                child_port[i] = ports[p].len();
                ports[p].push(Some(i));
            }
        }
        let mut dma_port = vec![(0, 0); dma_arbiter.len()];
        for (d, &a) in dma_arbiter.iter().enumerate() {
            dma_port[d] = (slot_of(a), ports[a].len());
            ports[a].push(None);
        }

        let nodes = order
            .iter()
            .map(|&i| {
                let output = match parent[i] {
                    Some(p) => NodeOutput::Node { node: slot_of(p), port: child_port[i] },
                    None => NodeOutput::Controller,
                };
                ArbiterNode::new(specs[i].name.clone(), ports[i].len(), topo.port_depth, output)
            })
            .collect();
        Ok(Network { nodes, dma_port })
    }

    pub fn nodes(&self) -> &[ArbiterNode] {
        &self.nodes
    }

    pub fn has_space(&self, dma: DmaId) -> bool {
        let (n, p) = self.dma_port[dma.index()];
        self.nodes[n].inputs[p].has_space()
    }

    /// Places a freshly created transaction in its DMA's leaf queue.
    pub fn inject(&mut self, mut txn: Transaction) -> Result<(), Transaction> {
        let (n, p) = self.dma_port[txn.source.index()];
        txn.ready_at = txn.t_created + 1;
        self.nodes[n].inputs[p].push(txn)
    }

    /// One arbitration round, leaves first.
    pub fn step(&mut self, mode: NocMode, now: u64, controller: &mut Controller) {
        for i in 0..self.nodes.len() {
            let output = self.nodes[i].output;
            let grant = match output {
                NodeOutput::Node { node, port } => {
                    if !self.nodes[node].inputs[port].has_space() {
                        continue;
                    }
                    self.nodes[i].arbitrate(mode, now, |_| true)
                }
                NodeOutput::Controller => self.nodes[i].arbitrate(mode, now, |t| controller.can_accept(t.class)),
            };
            let Some(g) = grant else { continue };
            self.forward(i, g, now, controller);
        }
    }

    /// Moves the head of `port` at `node` one hop downstream.
    pub fn forward(&mut self, node: usize, port: usize, now: u64, controller: &mut Controller) -> bool {
        let output = self.nodes[node].output;
        let accepted = match output {
            NodeOutput::Node { node: d, port: p } => self.nodes[d].inputs[p].has_space(),
            NodeOutput::Controller => self.nodes[node].inputs[port]
                .head()
                .is_some_and(|h| controller.can_accept(h.class)),
        };
        if !accepted {
            return false;
        }
        let Some(mut txn) = self.nodes[node].inputs[port].pop() else { return false };
        self.nodes[node].rr_pointer = port;
        txn.hops += 1;
        txn.ready_at = now + 1;
        match output {
            NodeOutput::Node { node: d, port: p } => {
                // space was checked above
                let _ = self.nodes[d].inputs[p].push(txn);
            }
            NodeOutput::Controller => {
                let _ = controller.enqueue(txn, now);
            }
        }
        true
    }

    pub fn resident(&self) -> usize {
        self.nodes.iter().flat_map(|n| n.inputs.iter()).map(PortQueue::len).sum()
    }

    pub fn for_each_resident_mut(&mut self, mut f: impl FnMut(&mut Transaction)) {
        for q in self.nodes.iter_mut().flat_map(|n| n.inputs.iter_mut()) {
            q.iter_mut().for_each(&mut f);
        }
    }

    pub fn for_each_resident(&self, mut f: impl FnMut(&Transaction)) {
        for q in self.nodes.iter().flat_map(|n| n.inputs.iter()) {
            q.iter().for_each(&mut f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::{ControllerConfig, Partition, Policy};
    use crate::dram::DramCoord;
    use crate::types::{AccessKind, PriorityLevel};

    fn txn(id: u64, source: u16, priority: u8, created: u64) -> Transaction {
        Transaction {
            id,
            source: DmaId(source),
            class: QueueClass::Media,
            kind: AccessKind::Read,
            address: 0,
            coord: DramCoord::default(),
            size_bytes: 64,
            priority: PriorityLevel::new(priority).unwrap(),
            aged: false,
            t_created: created,
            t_enqueued: None,
            t_issued: None,
            t_completed: None,
            ready_at: 0,
            hops: 0,
        }
    }

    fn node_with(heads: &[u8]) -> ArbiterNode {
        let mut n = ArbiterNode::new("t", heads.len(), 8, NodeOutput::Controller);
        for (i, &p) in heads.iter().enumerate() {
            n.inputs[i].push(txn(i as u64, i as u16, p, 0)).unwrap();
        }
        n
    }

    #[test]
    fn highest_priority_wins() {
        let n = node_with(&[2, 5, 3]);
        assert_eq!(n.arbitrate(NocMode::Priority, 0, |_| true), Some(1));
    }

    #[test]
    fn ties_alternate() {
        let mut n = node_with(&[4, 4]);
        n.inputs[0].push(txn(10, 0, 4, 0)).unwrap();
        n.inputs[1].push(txn(11, 1, 4, 0)).unwrap();
        n.rr_pointer = 0;
        let g = n.arbitrate(NocMode::Priority, 0, |_| true).unwrap();
        assert_eq!(g, 1);
        n.inputs[g].pop();
        n.rr_pointer = g;
        assert_eq!(n.arbitrate(NocMode::Priority, 0, |_| true), Some(0));
    }

    #[test]
    fn empty_node_grants_nothing() {
        let n = ArbiterNode::new("t", 3, 8, NodeOutput::Controller);
        for mode in [NocMode::Priority, NocMode::Fcfs, NocMode::RoundRobin, NocMode::FrameQos] {
            assert_eq!(n.arbitrate(mode, 0, |_| true), None);
        }
    }

    #[test]
    fn aged_outranks_priority() {
        let mut n = node_with(&[7, 0]);
        n.inputs[1].iter_mut().for_each(|t| t.aged = true);
        assert_eq!(n.arbitrate(NocMode::Priority, 0, |_| true), Some(1));
    }

    #[test]
    fn round_robin_ignores_priority() {
        let mut n = node_with(&[0, 7, 0]);
        n.rr_pointer = 1;
        assert_eq!(n.arbitrate(NocMode::RoundRobin, 0, |_| true), Some(2));
    }

    #[test]
    fn fcfs_grants_oldest() {
        let mut n = ArbiterNode::new("t", 2, 8, NodeOutput::Controller);
        n.inputs[0].push(txn(0, 0, 7, 20)).unwrap();
        n.inputs[1].push(txn(1, 1, 0, 10)).unwrap();
        assert_eq!(n.arbitrate(NocMode::Fcfs, 0, |_| true), Some(1));
    }

    fn controller() -> Controller {
        Controller::new(ControllerConfig {
            policy: Policy::Qos,
            noc_policy: None,
            aging_period: 10_000,
            delta: 6,
            capacity: 42,
            partition: Partition::Shared,
        })
    }

    fn two_level() -> Topology {
        Topology {
            port_depth: 1,
            arbiters: vec![
                ArbiterSpec { name: "root".into(), parent: None },
                ArbiterSpec { name: "media".into(), parent: Some("root".into()) },
            ],
            attachments: vec!["media".into(), "media".into()],
        }
    }

    #[test]
    fn two_hops_reach_controller_after_two_cycles() {
        let mut net = Network::build(&two_level()).unwrap();
        let mut ctrl = controller();
        net.inject(txn(0, 0, 0, 5)).unwrap();
        for now in 5..10 {
            net.step(NocMode::Priority, now, &mut ctrl);
            if ctrl.occupancy() > 0 {
                assert_eq!(now, 7);
                let t = ctrl.queue(QueueClass::Media).front().unwrap();
                assert_eq!(t.t_enqueued, Some(7));
                assert_eq!(t.hops, 2);
                return;
            }
        }
        panic!("never arrived");
    }

    #[test]
    fn full_downstream_withholds_grant() {
        let mut net = Network::build(&two_level()).unwrap();
        let mut ctrl = controller();
        net.inject(txn(0, 0, 0, 0)).unwrap();
        net.inject(txn(1, 1, 0, 0)).unwrap();
        // root port depth is 1: after the first hop, the second transaction
        // must wait at the leaf
        net.step(NocMode::Priority, 1, &mut ctrl);
        assert_eq!(net.resident(), 2);
        let media = net.nodes().iter().position(|n| n.name == "media").unwrap();
        assert_eq!(net.nodes()[media].inputs.iter().map(PortQueue::len).sum::<usize>(), 1);
        net.step(NocMode::Priority, 1, &mut ctrl);
        assert_eq!(net.nodes()[media].inputs.iter().map(PortQueue::len).sum::<usize>(), 1);
    }

    #[test]
    fn one_grant_per_cycle() {
        let mut net = Network::build(&Topology {
            port_depth: 8,
            arbiters: vec![ArbiterSpec { name: "root".into(), parent: None }],
            attachments: vec!["root".into(), "root".into()],
        })
        .unwrap();
        let mut ctrl = controller();
        net.inject(txn(0, 0, 0, 0)).unwrap();
        net.inject(txn(1, 1, 0, 0)).unwrap();
        net.step(NocMode::Priority, 1, &mut ctrl);
        assert_eq!(ctrl.occupancy(), 1);
        assert_eq!(net.resident(), 1);
    }

    #[test]
    fn topology_errors() {
        let bad = Topology {
            port_depth: 8,
            arbiters: vec![
                ArbiterSpec { name: "a".into(), parent: Some("b".into()) },
                ArbiterSpec { name: "b".into(), parent: Some("a".into()) },
            ],
            attachments: vec![],
        };
        assert!(matches!(Network::build(&bad), Err(TopologyError::Roots(0))));
        let bad = Topology {
            port_depth: 8,
            arbiters: vec![ArbiterSpec { name: "root".into(), parent: None }],
            attachments: vec!["nowhere".into()],
        };
        assert!(matches!(Network::build(&bad), Err(TopologyError::UnknownAttachment(..))));
    }
}
