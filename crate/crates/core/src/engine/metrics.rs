//! Trajectories, realized utilities and per-run metrics.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TampaError};
use crate::graph::{Edge, EdgeWeighting, NodeId, PatrolGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Start,
    Inspect,
    Arrive,
    Split,
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecordKind::Start => "start",
            RecordKind::Inspect => "inspect",
            RecordKind::Arrive => "arrive",
            RecordKind::Split => "split",
        })
    }
}

/// The patroller is at `node` at minute `t`. `utility` is what the
/// transition ending here earned; `action` is the target being pursued.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: u32,
    pub node: NodeId,
    pub kind: RecordKind,
    pub action: NodeId,
    pub utility: f64,
    pub trigger: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<Record>,
}

impl Trajectory {
    pub fn push(&mut self, record: Record) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.t <= last.t {
                return Err(TampaError::InvalidState(format!(
                    "record at {} does not follow {}",
                    record.t, last.t
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Node occupied during minute `m`: the latest record at or before it.
    pub fn node_at(&self, m: u32) -> Option<NodeId> {
        let i = self.records.partition_point(|r| r.t <= m);
        i.checked_sub(1).map(|i| self.records[i].node)
    }
}

/// Sum of the utilities between consecutive records.
pub fn global_cost(trajectory: &Trajectory) -> f64 {
    trajectory.records.iter().skip(1).map(|r| r.utility).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transition {
    Inspect(NodeId),
    Traverse(NodeId, NodeId),
}

/// Utility of one inspect epoch or one traversed edge.
///
/// Inspecting `v` credits every outgoing edge's count scaled by
/// `min(1, zeta / length)`. Traversing an edge pays `lambda` times its
/// travel time and credits its count.
pub fn realized_utility(
    graph: &PatrolGraph,
    transition: Transition,
    complaints: &BTreeMap<Edge, usize>,
    travel: &EdgeWeighting,
    lambda: f64,
    zeta: f64,
) -> Result<f64> {
    let count = |e: Edge| {
        complaints
            .get(&e)
            .map(|&c| c as f64)
            .ok_or(TampaError::MissingEdge(e.0, e.1))
    };
    match transition {
        Transition::Inspect(v) => {
            let mut total = 0.0;
            for &u in graph.successors(v)? {
                let l = graph.length(v, u)?;
                total += count((v, u))? * (zeta / l).min(1.0);
            }
            Ok((1.0 - lambda) * total)
        }
        Transition::Traverse(a, b) => {
            if !graph.has_edge(a, b) {
                return Err(TampaError::MissingEdge(a, b));
            }
            let mu = travel.get((a, b)).ok_or(TampaError::MissingEdge(a, b))?;
            Ok(-lambda * mu + (1.0 - lambda) * count((a, b))?)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub t: u32,
    pub node: NodeId,
    pub origin: NodeId,
    pub dest: NodeId,
    pub ratio: f64,
}

/// Share of the minutes in `[start, end)` spent at each node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisitPeriod {
    pub start: u32,
    pub end: u32,
    pub fractions: BTreeMap<NodeId, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub global_cost: f64,
    /// Running total of utilities at every minute `0..=horizon`.
    pub cumulative_q: Vec<f64>,
    pub visits: Vec<VisitPeriod>,
    pub trigger_times: Vec<u32>,
    pub triggers: usize,
    pub split_nodes: usize,
    pub splits: Vec<SplitRecord>,
    pub detector_calls: u64,
    pub node_count: usize,
}

impl RunMetrics {
    pub fn collect(
        trajectory: &Trajectory,
        horizon: u32,
        period_starts: &[u32],
        trigger_times: Vec<u32>,
        splits: Vec<SplitRecord>,
        detector_calls: u64,
        node_count: usize,
    ) -> Self {
        let mut cumulative_q = Vec::with_capacity(horizon as usize + 1);
        let mut running = 0.0;
        let mut next = 1;
        for m in 0..=horizon {
            while next < trajectory.records.len() && trajectory.records[next].t <= m {
                running += trajectory.records[next].utility;
                next += 1;
            }
            cumulative_q.push(running);
        }

        let mut bounds: Vec<u32> = std::iter::once(0)
            .chain(period_starts.iter().copied().filter(|&s| s > 0 && s < horizon))
            .collect();
        bounds.push(horizon);
        let visits = bounds
            .windows(2)
            .map(|w| visit_period(trajectory, w[0], w[1]))
            .collect();

        let split_nodes = splits.iter().map(|s| s.node).collect::<BTreeSet<_>>().len();
        RunMetrics {
            global_cost: global_cost(trajectory),
            cumulative_q,
            visits,
            triggers: trigger_times.len(),
            trigger_times,
            split_nodes,
            splits,
            detector_calls,
            node_count,
        }
    }

    /// Share of the period's minutes spent within `max_hops` of `center`.
    pub fn proximity(&self, period: usize, hops: &HopDistances, max_hops: f64) -> f64 {
        self.visits.get(period).map_or(0.0, |p| {
            p.fractions
                .iter()
                .filter(|(v, _)| hops.get(**v).is_some_and(|h| h <= max_hops + 1e-12))
                .fold(0.0, |acc, (_, f)| acc + f)
        })
    }
}

fn visit_period(trajectory: &Trajectory, start: u32, end: u32) -> VisitPeriod {
    let mut minutes: BTreeMap<NodeId, u32> = BTreeMap::new();
    for m in start..end {
        if let Some(v) = trajectory.node_at(m) {
            *minutes.entry(v).or_default() += 1;
        }
    }
    let total: u32 = minutes.values().sum();
    VisitPeriod {
        start,
        end,
        fractions: minutes
            .into_iter()
            .map(|(v, n)| (v, f64::from(n) / f64::from(total.max(1))))
            .collect(),
    }
}

/// Hop counts from one node of the original graph. A node created by a
/// split sits halfway between its endpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct HopDistances {
    hops: BTreeMap<NodeId, f64>,
}

impl HopDistances {
    pub fn from_center(graph: &PatrolGraph, center: NodeId, splits: &[SplitRecord]) -> Result<Self> {
        if !graph.contains(center) {
            return Err(TampaError::UnknownNode(center));
        }
        let mut hops = BTreeMap::from([(center, 0.0)]);
        let mut queue = VecDeque::from([center]);
        while let Some(v) = queue.pop_front() {
            let h = hops[&v];
            for &u in graph.successors(v)? {
                if let std::collections::btree_map::Entry::Vacant(slot) = hops.entry(u) {
                    slot.insert(h + 1.0);
                    queue.push_back(u);
                }
            }
        }
        for s in splits {
            if let (Some(a), Some(b)) = (hops.get(&s.origin), hops.get(&s.dest)) {
                let mid = 0.5 * (a + b);
                hops.insert(s.node, mid);
            }
        }
        Ok(HopDistances { hops })
    }

    pub fn get(&self, v: NodeId) -> Option<f64> {
        self.hops.get(&v).copied()
    }
}
