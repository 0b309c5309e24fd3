//! Scenario files: road network, clock, traffic and complaint generator.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::complaints::DEFAULT_C_MAX;
use crate::error::{Result, TampaError};
use crate::graph::{Edge, NodeId, PatrolGraph, Point};
use crate::traffic::{ComplaintProcessParams, ShiftEvent, TrafficParams};

pub const FLATBUSH12_JSON: &str = include_str!("../scenarios/flatbush12.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

/// One directed edge; every edge needs its reverse with the same length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub from: u32,
    pub to: u32,
    pub length: f64,
    /// Minimum travel time in minutes.
    pub mtt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hotspot {
    pub node: u32,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeWeightSpec {
    pub from: u32,
    pub to: u32,
    pub weight: f64,
}

/// Complaint weights for every directed edge.
///
/// Explicit `edges` entries win; otherwise an edge leaving a hotspot node
/// takes the largest such hotspot weight; otherwise `background`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightProfile {
    #[serde(default)]
    pub background: f64,
    #[serde(default)]
    pub hotspots: Vec<Hotspot>,
    #[serde(default)]
    pub edges: Vec<EdgeWeightSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSpec {
    pub t: u32,
    pub weights: WeightProfile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplaintSpec {
    #[serde(default = "default_noise_mean")]
    pub noise_mean: f64,
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
    #[serde(default = "default_cap")]
    pub cap: usize,
    pub weights: WeightProfile,
    #[serde(default)]
    pub shifts: Vec<ShiftSpec>,
}

fn default_noise_mean() -> f64 {
    0.5
}
fn default_noise_std() -> f64 {
    0.2
}
fn default_cap() -> usize {
    DEFAULT_C_MAX
}

/// The on-disk form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<EdgeSpec>,
    pub start: u32,
    /// Simulated minutes `|T|`.
    pub horizon: u32,
    /// Slot length in minutes.
    pub tau: u32,
    #[serde(default)]
    pub traffic: TrafficParams,
    pub complaints: ComplaintSpec,
}

/// A validated scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub graph: PatrolGraph,
    pub mtt: BTreeMap<Edge, f64>,
    pub start: NodeId,
    pub horizon: u32,
    pub tau: u32,
    pub traffic: TrafficParams,
    pub complaints: ComplaintProcessParams,
    source: ScenarioFile,
}

fn invalid(field: impl Into<String>, msg: impl Into<String>) -> TampaError {
    TampaError::validation(field, msg)
}

fn finite_nonneg(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

impl ScenarioFile {
    pub fn validate(self) -> Result<Scenario> {
        let mut graph = PatrolGraph::new();
        for (i, n) in self.nodes.iter().enumerate() {
            graph
                .add_node(NodeId(n.id), Point::new(n.x, n.y))
                .map_err(|e| invalid(format!("nodes[{i}]"), e.to_string()))?;
        }
        if graph.node_count() == 0 {
            return Err(invalid("nodes", "at least one node is required"));
        }

        let mut directed: BTreeMap<Edge, (usize, &EdgeSpec)> = BTreeMap::new();
        for (i, e) in self.edges.iter().enumerate() {
            let field = format!("edges[{i}] ({} -> {})", e.from, e.to);
            let key = (NodeId(e.from), NodeId(e.to));
            if e.from == e.to {
                return Err(invalid(field, "self-loops are not allowed"));
            }
            for v in [key.0, key.1] {
                if !graph.contains(v) {
                    return Err(invalid(field, format!("unknown node {v}")));
                }
            }
            if !(e.length.is_finite() && e.length > 0.0) {
                return Err(invalid(field, "length must be positive"));
            }
            if !(e.mtt.is_finite() && e.mtt > 0.0) {
                return Err(invalid(field, "mtt must be positive"));
            }
            if directed.insert(key, (i, e)).is_some() {
                return Err(invalid(field, "duplicate edge"));
            }
        }
        let mut mtt = BTreeMap::new();
        for (&(a, b), &(i, e)) in &directed {
            let field = format!("edges[{i}] ({a} -> {b})");
            let Some(&(_, rev)) = directed.get(&(b, a)) else {
                return Err(invalid(field, format!("missing reverse edge {b} -> {a}")));
            };
            if rev.length != e.length {
                return Err(invalid(
                    field,
                    format!("length {} differs from reverse length {}", e.length, rev.length),
                ));
            }
            if a < b {
                graph.add_edge_pair(a, b, e.length)?;
            }
            mtt.insert((a, b), e.mtt);
        }

        let start = NodeId(self.start);
        if !graph.contains(start) {
            return Err(invalid("start", format!("unknown node {start}")));
        }
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be at least 1"));
        }
        if self.tau == 0 || self.tau > self.horizon {
            return Err(invalid("tau", "must lie in [1, horizon]"));
        }

        let t = &self.traffic;
        if !(t.base.is_finite() && t.base > 0.0) {
            return Err(invalid("traffic.base", "must be positive"));
        }
        if !(0.0..1.0).contains(&t.diurnal_amplitude) {
            return Err(invalid("traffic.diurnal_amplitude", "must lie in [0, 1)"));
        }
        if !(t.diurnal_period.is_finite() && t.diurnal_period > 0.0) {
            return Err(invalid("traffic.diurnal_period", "must be positive"));
        }
        if !finite_nonneg(t.noise_std) {
            return Err(invalid("traffic.noise_std", "must be non-negative"));
        }

        let c = &self.complaints;
        if !c.noise_mean.is_finite() {
            return Err(invalid("complaints.noise_mean", "must be finite"));
        }
        if !(c.noise_std.is_finite() && c.noise_std > 0.0) {
            return Err(invalid("complaints.noise_std", "must be positive"));
        }
        if c.cap == 0 {
            return Err(invalid("complaints.cap", "must be at least 1"));
        }
        let weights = resolve_weights(&graph, &c.weights, "complaints.weights")?;
        let mut shifts = Vec::new();
        let mut last = 0;
        for (i, s) in c.shifts.iter().enumerate() {
            let field = format!("complaints.shifts[{i}]");
            if s.t == 0 || s.t >= self.horizon {
                return Err(invalid(format!("{field}.t"), "must lie strictly inside the horizon"));
            }
            if s.t <= last {
                return Err(invalid(format!("{field}.t"), "shift times must increase"));
            }
            last = s.t;
            shifts.push(ShiftEvent {
                t: s.t,
                weights: resolve_weights(&graph, &s.weights, &format!("{field}.weights"))?,
            });
        }

        Ok(Scenario {
            name: self.name.clone(),
            mtt,
            start,
            horizon: self.horizon,
            tau: self.tau,
            traffic: self.traffic.clone(),
            complaints: ComplaintProcessParams {
                weights,
                noise_mean: c.noise_mean,
                noise_std: c.noise_std,
                cap: c.cap,
                shifts,
            },
            graph,
            source: self,
        })
    }
}

fn resolve_weights(graph: &PatrolGraph, profile: &WeightProfile, field: &str) -> Result<BTreeMap<Edge, f64>> {
    if !finite_nonneg(profile.background) {
        return Err(invalid(format!("{field}.background"), "must be non-negative"));
    }
    let mut hot: BTreeMap<NodeId, f64> = BTreeMap::new();
    for (i, h) in profile.hotspots.iter().enumerate() {
        let f = format!("{field}.hotspots[{i}]");
        if !graph.contains(NodeId(h.node)) {
            return Err(invalid(f, format!("unknown node {}", h.node)));
        }
        if !finite_nonneg(h.weight) {
            return Err(invalid(f, "weight must be non-negative"));
        }
        let w = hot.entry(NodeId(h.node)).or_insert(0.0);
        *w = w.max(h.weight);
    }
    let mut out: BTreeMap<Edge, f64> = graph
        .edges()
        .map(|e| (e, hot.get(&e.0).copied().unwrap_or(profile.background)))
        .collect();
    let mut seen = BTreeSet::new();
    for (i, s) in profile.edges.iter().enumerate() {
        let f = format!("{field}.edges[{i}] ({} -> {})", s.from, s.to);
        let e = (NodeId(s.from), NodeId(s.to));
        if !graph.has_edge(e.0, e.1) {
            return Err(invalid(f, "no such edge"));
        }
        if !finite_nonneg(s.weight) {
            return Err(invalid(f, "weight must be non-negative"));
        }
        if !seen.insert(e) {
            return Err(invalid(f, "duplicate weight override"));
        }
        out.insert(e, s.weight);
    }
    Ok(out)
}

impl Scenario {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| TampaError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        file.validate()
    }

    pub fn flatbush12() -> Self {
        Self::from_json(FLATBUSH12_JSON, "flatbush12").expect("bundled scenario is valid")
    }

    /// The file this scenario was built from.
    pub fn source(&self) -> &ScenarioFile {
        &self.source
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.source).expect("scenario serializes")
    }

    pub fn edge_pairs(&self) -> usize {
        self.graph.edge_count() / 2
    }

    /// Minutes of the first shift event, if any.
    pub fn first_shift(&self) -> Option<u32> {
        self.complaints.shifts.first().map(|s| s.t)
    }

    /// A copy with the shift events removed.
    pub fn without_shifts(&self) -> Self {
        let mut file = self.source.clone();
        file.complaints.shifts.clear();
        file.validate().expect("dropping shifts keeps a scenario valid")
    }
}

/// Reads a scenario file; the bundled name `flatbush12` works without a file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    if !path.exists() && path.as_os_str() == "flatbush12" {
        return Ok(Scenario::flatbush12());
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| TampaError::validation("scenario", format!("cannot read {}: {e}", path.display())))?;
    Scenario::from_json(&text, &path.display().to_string())
}
