//! Planning-window MDP and its exact finite-horizon solution.
//!
//! States are graph nodes; from node `s` in slot `k` the patroller may move
//! to any node whose predicted shortest-path time is at most `tau`
//! (including staying put). Transitions are deterministic, so backward
//! induction over `|K|` slots is exact.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::complaints::ComplaintPmf;
use crate::error::{Result, TampaError};
use crate::graph::{Edge, EdgeWeighting, NodeId, PatrolGraph, Route, ShortestPaths};

const FEASIBILITY_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanningWindow {
    pub start: u32,
    pub tau: u32,
    pub slots: usize,
}

impl PlanningWindow {
    pub fn new(start: u32, tau: u32, slots: usize) -> Result<Self> {
        if tau == 0 {
            return Err(TampaError::validation("planner.tau", "must be at least 1"));
        }
        if slots == 0 {
            return Err(TampaError::validation("planner.num_slots", "must be at least 1"));
        }
        Ok(PlanningWindow { start, tau, slots })
    }

    /// Window truncated so that it ends by `horizon`; `None` if not even one
    /// slot fits.
    pub fn fitted(start: u32, tau: u32, slots: usize, horizon: u32) -> Option<Self> {
        if tau == 0 || start >= horizon {
            return None;
        }
        let fit = ((horizon - start) / tau) as usize;
        let slots = slots.min(fit);
        (slots > 0).then_some(PlanningWindow { start, tau, slots })
    }

    pub fn slot_time(&self, k: usize) -> u32 {
        self.start + k as u32 * self.tau
    }

    /// `H = |K| * tau`.
    pub fn length(&self) -> u32 {
        self.slots as u32 * self.tau
    }

    pub fn end(&self) -> u32 {
        self.start + self.length()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Inspecting threshold; median edge length when absent.
    #[serde(default)]
    pub zeta: Option<f64>,
    /// Slot length; the scenario's value when absent.
    #[serde(default)]
    pub tau: Option<u32>,
    #[serde(default = "default_num_slots")]
    pub num_slots: usize,
}

fn default_lambda() -> f64 {
    0.5
}
fn default_num_slots() -> usize {
    6
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            lambda: default_lambda(),
            zeta: None,
            tau: None,
            num_slots: default_num_slots(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(TampaError::validation("planner.lambda", "must lie in [0, 1]"));
        }
        if let Some(z) = self.zeta {
            if !(z.is_finite() && z > 0.0) {
                return Err(TampaError::validation("planner.zeta", "must be positive"));
            }
        }
        if self.tau == Some(0) {
            return Err(TampaError::validation("planner.tau", "must be at least 1"));
        }
        if self.num_slots == 0 {
            return Err(TampaError::validation("planner.num_slots", "must be at least 1"));
        }
        Ok(())
    }
}

/// The MDP of one planning window.
#[derive(Clone, Debug)]
pub struct MdpInstance<'g> {
    graph: &'g PatrolGraph,
    start: NodeId,
    tau: u32,
    lambda: f64,
    zeta: f64,
    /// Per-minute expected complaints of each edge.
    means: BTreeMap<Edge, f64>,
    paths: Vec<ShortestPaths>,
}

impl<'g> MdpInstance<'g> {
    /// `slot_weights` holds one predicted weighting per slot; `pmfs` must
    /// cover every edge.
    pub fn new(
        graph: &'g PatrolGraph,
        start: NodeId,
        tau: u32,
        slot_weights: &[EdgeWeighting],
        pmfs: &BTreeMap<Edge, ComplaintPmf>,
        lambda: f64,
        zeta: f64,
    ) -> Result<Self> {
        if !graph.contains(start) {
            return Err(TampaError::UnknownNode(start));
        }
        if slot_weights.is_empty() || tau == 0 {
            return Err(TampaError::InvalidState("window needs at least one slot".into()));
        }
        if !(0.0..=1.0).contains(&lambda) || zeta.is_nan() || zeta <= 0.0 {
            return Err(TampaError::InvalidState(format!(
                "lambda {lambda} or zeta {zeta} out of range"
            )));
        }
        let means = graph
            .edges()
            .map(|e| {
                pmfs.get(&e).map(|p| (e, p.mean())).ok_or_else(|| {
                    TampaError::InvalidState(format!("no complaint pmf for edge ({}, {})", e.0, e.1))
                })
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        let paths = slot_weights
            .iter()
            .map(|w| ShortestPaths::compute(graph, w))
            .collect::<Result<Vec<_>>>()?;
        Ok(MdpInstance {
            graph,
            start,
            tau,
            lambda,
            zeta,
            means,
            paths,
        })
    }

    pub fn slots(&self) -> usize {
        self.paths.len()
    }

    pub fn start(&self) -> NodeId {
        self.start
    }

    pub fn graph(&self) -> &PatrolGraph {
        self.graph
    }

    fn slot(&self, k: usize) -> Result<&ShortestPaths> {
        self.paths
            .get(k)
            .ok_or_else(|| TampaError::InvalidState(format!("slot {k} outside the window")))
    }

    /// Nodes reachable from `s` within `tau` under slot-`k` predictions.
    pub fn action_set(&self, s: NodeId, k: usize) -> Result<BTreeSet<NodeId>> {
        let sp = self.slot(k)?;
        if !self.graph.contains(s) {
            return Err(TampaError::UnknownNode(s));
        }
        let limit = f64::from(self.tau) + FEASIBILITY_SLACK;
        let mut out = BTreeSet::new();
        for a in self.graph.nodes() {
            if sp.distance(s, a)? <= limit {
                out.insert(a);
            }
        }
        Ok(out)
    }

    /// Predicted shortest route for action `a`, checked for feasibility.
    pub fn route(&self, s: NodeId, a: NodeId, k: usize) -> Result<Route> {
        let sp = self.slot(k)?;
        let infeasible = || TampaError::InfeasibleAction {
            state: s,
            action: a,
            slot: k,
        };
        let route = sp.route(s, a)?.ok_or_else(infeasible)?;
        if route.dist > f64::from(self.tau) + FEASIBILITY_SLACK {
            return Err(infeasible());
        }
        Ok(route)
    }

    pub fn routing_cost(&self, s: NodeId, a: NodeId, k: usize) -> Result<f64> {
        let r = self.route(s, a, k)?;
        Ok(if s == a { 0.0 } else { r.dist })
    }

    /// Expected slot complaint of edge `e`: cumulative over `k + 1` slots.
    fn slot_complaints(&self, e: Edge, k: usize) -> f64 {
        (k + 1) as f64 * f64::from(self.tau) * self.means[&e]
    }

    pub fn complaint_cost(&self, s: NodeId, a: NodeId, k: usize) -> Result<f64> {
        let route = self.route(s, a, k)?;
        if s == a {
            let mut total = 0.0;
            for &u in self.graph.successors(s)? {
                let l = self.graph.length(s, u)?;
                total += self.slot_complaints((s, u), k) * (self.zeta / l).min(1.0);
            }
            Ok(total)
        } else {
            Ok(route.edges().into_iter().map(|e| self.slot_complaints(e, k)).sum())
        }
    }

    pub fn reward(&self, s: NodeId, a: NodeId, k: usize) -> Result<f64> {
        let tt = self.routing_cost(s, a, k)?;
        let c = self.complaint_cost(s, a, k)?;
        Ok(-self.lambda * tt + (1.0 - self.lambda) * c)
    }

    /// Largest number of edges any single step's complaint cost sums over.
    pub fn max_edges_per_step(&self) -> Result<usize> {
        let mut best = 0;
        for k in 0..self.slots() {
            for s in self.graph.nodes() {
                for a in self.action_set(s, k)? {
                    let count = if a == s {
                        self.graph.successors(s)?.len()
                    } else {
                        self.route(s, a, k)?.edges().len()
                    };
                    best = best.max(count);
                }
            }
        }
        Ok(best)
    }

    /// Backward induction; ties go to the smallest node id.
    pub fn solve(&self) -> Result<Plan> {
        let ids: Vec<NodeId> = self.graph.nodes().collect();
        let n = ids.len();
        let slots = self.slots();
        let pos = |v: NodeId| ids.binary_search(&v).expect("node of this graph");

        let mut value = vec![vec![0.0; n]; slots + 1];
        let mut policy = vec![vec![0usize; n]; slots];
        for k in (0..slots).rev() {
            for (i, &s) in ids.iter().enumerate() {
                let mut best: Option<(f64, usize)> = None;
                for a in self.action_set(s, k)? {
                    let j = pos(a);
                    let v = self.reward(s, a, k)? + value[k + 1][j];
                    if best.is_none_or(|(bv, _)| v > bv) {
                        best = Some((v, j));
                    }
                }
                let (v, j) = best.expect("staying is always feasible");
                value[k][i] = v;
                policy[k][i] = j;
            }
        }

        let mut actions = Vec::with_capacity(slots);
        let mut at = pos(self.start);
        for row in &policy {
            at = row[at];
            actions.push(ids[at]);
        }
        Ok(Plan {
            first_action: actions[0],
            value: value[0][pos(self.start)],
            actions,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub actions: Vec<NodeId>,
    pub value: f64,
    pub first_action: NodeId,
}

pub fn solve_window(inst: &MdpInstance<'_>) -> Result<Plan> {
    inst.solve()
}

/// Start of the next window after executing the first action.
///
/// Staying advances by `tau`. Moving advances by the realized travel times
/// of the route's edges, summed, rounded to whole minutes and at least one.
pub fn next_window_start(start: u32, tau: u32, realized_hops: &[f64]) -> u32 {
    if realized_hops.is_empty() {
        return start + tau;
    }
    let total: f64 = realized_hops.iter().sum();
    start + (total.round() as u32).max(1)
}
