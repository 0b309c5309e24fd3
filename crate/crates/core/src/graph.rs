//! Patrol graph, time-weighted shortest paths and edge splitting.
//!
//! A [`PatrolGraph`] is a directed graph whose edges always come in
//! reciprocal pairs with equal lengths. Splitting an edge inserts a node on
//! both directions at the same physical point, so a patroller interrupted
//! mid-edge can continue or turn around.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TampaError};

/// Splits closer than this to either endpoint are rejected.
pub const SPLIT_EPSILON: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

/// Directed edge `(from, to)`.
pub type Edge = (NodeId, NodeId);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn lerp(self, other: Point, ratio: f64) -> Point {
        Point {
            x: (1.0 - ratio) * self.x + ratio * other.x,
            y: (1.0 - ratio) * self.y + ratio * other.y,
        }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// One edge split: `node` was inserted on `(origin, dest)` at `ratio` of the
/// way from `origin`. The reverse direction `(dest, origin)` is split at the
/// same point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSplit {
    pub origin: NodeId,
    pub dest: NodeId,
    pub node: NodeId,
    pub ratio: f64,
}

impl EdgeSplit {
    /// `(parent, child, fraction of parent)` for the four directed edges the
    /// split creates.
    pub fn parts(&self) -> [(Edge, Edge, f64); 4] {
        let (o, d, n, g) = (self.origin, self.dest, self.node, self.ratio);
        [
            ((o, d), (o, n), g),
            ((o, d), (n, d), 1.0 - g),
            ((d, o), (d, n), 1.0 - g),
            ((d, o), (n, o), g),
        ]
    }

    /// Replaces the two parent entries of `map` by the four children, each
    /// derived from its parent with `derive(parent_value, fraction)`.
    pub fn apply<V, F>(&self, map: &mut BTreeMap<Edge, V>, derive: F)
    where
        F: Fn(&V, f64) -> V,
    {
        let mut created = Vec::with_capacity(4);
        for (parent, child, fraction) in self.parts() {
            if let Some(v) = map.get(&parent) {
                created.push((child, derive(v, fraction)));
            }
        }
        map.remove(&(self.origin, self.dest));
        map.remove(&(self.dest, self.origin));
        map.extend(created);
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PatrolGraph {
    coords: BTreeMap<NodeId, Point>,
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
    lengths: BTreeMap<Edge, f64>,
    next_id: u32,
}

impl PatrolGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: NodeId, at: Point) -> Result<()> {
        if self.coords.contains_key(&id) {
            return Err(TampaError::validation(
                format!("nodes[{id}]"),
                "duplicate node id",
            ));
        }
        if !(at.x.is_finite() && at.y.is_finite()) {
            return Err(TampaError::validation(
                format!("nodes[{id}]"),
                "coordinates must be finite",
            ));
        }
        self.coords.insert(id, at);
        self.adjacency.entry(id).or_default();
        self.next_id = self.next_id.max(id.0 + 1);
        Ok(())
    }

    /// Adds `(a, b)` and `(b, a)` with the same length.
    pub fn add_edge_pair(&mut self, a: NodeId, b: NodeId, length: f64) -> Result<()> {
        let field = || format!("edges[{a}-{b}]");
        if a == b {
            return Err(TampaError::validation(field(), "self-loops are not allowed"));
        }
        for v in [a, b] {
            if !self.coords.contains_key(&v) {
                return Err(TampaError::validation(field(), format!("unknown node {v}")));
            }
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(TampaError::validation(
                field(),
                format!("length must be positive, got {length}"),
            ));
        }
        for (from, to) in [(a, b), (b, a)] {
            if let Some(&existing) = self.lengths.get(&(from, to)) {
                if existing != length {
                    return Err(TampaError::validation(
                        field(),
                        format!("asymmetric length: {existing} vs {length}"),
                    ));
                }
            }
        }
        self.insert_edge(a, b, length);
        self.insert_edge(b, a, length);
        Ok(())
    }

    fn insert_edge(&mut self, from: NodeId, to: NodeId, length: f64) {
        self.adjacency.entry(from).or_default().insert(to);
        self.lengths.insert((from, to), length);
    }

    fn remove_edge(&mut self, from: NodeId, to: NodeId) {
        if let Some(set) = self.adjacency.get_mut(&from) {
            set.remove(&to);
        }
        self.lengths.remove(&(from, to));
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.coords.contains_key(&v)
    }

    pub fn has_edge(&self, from: NodeId, to: NodeId) -> bool {
        self.lengths.contains_key(&(from, to))
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    /// Number of directed edges.
    pub fn edge_count(&self) -> usize {
        self.lengths.len()
    }

    /// Node ids in ascending order.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.coords.keys().copied()
    }

    /// Directed edges in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.lengths.keys().copied()
    }

    pub fn coords(&self, v: NodeId) -> Result<Point> {
        self.coords.get(&v).copied().ok_or(TampaError::UnknownNode(v))
    }

    pub fn length(&self, from: NodeId, to: NodeId) -> Result<f64> {
        self.lengths
            .get(&(from, to))
            .copied()
            .ok_or(TampaError::MissingEdge(from, to))
    }

    pub fn lengths(&self) -> &BTreeMap<Edge, f64> {
        &self.lengths
    }

    /// The id the next split node will receive.
    pub fn next_node_id(&self) -> NodeId {
        NodeId(self.next_id)
    }

    /// Out-neighbours of `v`, excluding `v` itself.
    pub fn successors(&self, v: NodeId) -> Result<&BTreeSet<NodeId>> {
        self.adjacency.get(&v).ok_or(TampaError::UnknownNode(v))
    }

    /// `N(v)`: out-neighbours of `v` together with `v`.
    pub fn neighbors(&self, v: NodeId) -> Result<BTreeSet<NodeId>> {
        let mut set = self.successors(v)?.clone();
        set.insert(v);
        Ok(set)
    }

    pub fn median_edge_length(&self) -> Option<f64> {
        if self.lengths.is_empty() {
            return None;
        }
        let mut v: Vec<f64> = self.lengths.values().copied().collect();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        })
    }

    /// Inserts a node on `(o, d)` at `ratio` of the way from `o` and returns
    /// the new graph together with the split description. Both directions of
    /// the pair are rerouted through the new node.
    pub fn split_edge(&self, o: NodeId, d: NodeId, ratio: f64) -> Result<(PatrolGraph, EdgeSplit)> {
        if !self.has_edge(o, d) {
            return Err(TampaError::MissingEdge(o, d));
        }
        if !(ratio.is_finite() && ratio > SPLIT_EPSILON && ratio < 1.0 - SPLIT_EPSILON) {
            return Err(TampaError::InvalidRatio(ratio));
        }
        let length = self.length(o, d)?;
        let at = self.coords(o)?.lerp(self.coords(d)?, ratio);
        let node = self.next_node_id();

        let mut g = self.clone();
        g.coords.insert(node, at);
        g.adjacency.entry(node).or_default();
        g.next_id = node.0 + 1;
        g.remove_edge(o, d);
        g.remove_edge(d, o);
        g.insert_edge(o, node, length * ratio);
        g.insert_edge(node, o, length * ratio);
        g.insert_edge(node, d, length * (1.0 - ratio));
        g.insert_edge(d, node, length * (1.0 - ratio));
        Ok((
            g,
            EdgeSplit {
                origin: o,
                dest: d,
                node,
                ratio,
            },
        ))
    }

    /// Dense index of `v` in [`PatrolGraph::nodes`] order.
    pub fn index_of(&self, v: NodeId) -> Option<usize> {
        self.coords.keys().position(|&u| u == v)
    }
}

/// Per-edge travel times for one decision slot.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EdgeWeighting(BTreeMap<Edge, f64>);

impl EdgeWeighting {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_map(map: BTreeMap<Edge, f64>) -> Self {
        EdgeWeighting(map)
    }

    pub fn uniform(graph: &PatrolGraph, w: f64) -> Self {
        EdgeWeighting(graph.edges().map(|e| (e, w)).collect())
    }

    pub fn get(&self, e: Edge) -> Option<f64> {
        self.0.get(&e).copied()
    }

    pub fn set(&mut self, e: Edge, w: f64) {
        self.0.insert(e, w);
    }

    pub fn as_map(&self) -> &BTreeMap<Edge, f64> {
        &self.0
    }

    /// Travel times on the split halves are proportional to the split ratio.
    pub fn split(&self, split: &EdgeSplit) -> EdgeWeighting {
        let mut map = self.0.clone();
        split.apply(&mut map, |w, f| w * f);
        EdgeWeighting(map)
    }
}

/// A route found by [`shortest_path`]: the node sequence and its total weight.
#[derive(Clone, Debug, PartialEq)]
pub struct Route {
    pub nodes: Vec<NodeId>,
    pub dist: f64,
}

impl Route {
    pub fn edges(&self) -> Vec<Edge> {
        self.nodes.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn is_stay(&self) -> bool {
        self.nodes.len() <= 1
    }
}

#[derive(PartialEq)]
struct Frontier {
    dist: f64,
    idx: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All-pairs shortest paths of one graph under one weighting.
///
/// Distances are computed with Dijkstra towards every target on the reversed
/// graph. Paths are rebuilt greedily from the source, always stepping to the
/// smallest successor that stays on a shortest path, which yields the
/// lexicographically smallest optimal node sequence.
#[derive(Clone, Debug)]
pub struct ShortestPaths {
    ids: Vec<NodeId>,
    succ: Vec<Vec<(usize, f64)>>,
    /// `to_target[j][i]` = distance from node `i` to node `j`.
    to_target: Vec<Vec<f64>>,
}

impl ShortestPaths {
    pub fn compute(graph: &PatrolGraph, weights: &EdgeWeighting) -> Result<Self> {
        let ids: Vec<NodeId> = graph.nodes().collect();
        let index: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let n = ids.len();
        let mut succ = vec![Vec::new(); n];
        let mut pred = vec![Vec::new(); n];
        for (from, to) in graph.edges() {
            let w = weights.get((from, to)).ok_or_else(|| {
                TampaError::InvalidState(format!("no travel time for edge ({from}, {to})"))
            })?;
            if !(w.is_finite() && w > 0.0) {
                return Err(TampaError::InvalidState(format!(
                    "travel time on ({from}, {to}) must be positive, got {w}"
                )));
            }
            let (i, j) = (index[&from], index[&to]);
            succ[i].push((j, w));
            pred[j].push((i, w));
        }
        let to_target = (0..n).map(|t| dijkstra(&pred, t)).collect();
        Ok(ShortestPaths {
            ids,
            succ,
            to_target,
        })
    }

    fn idx(&self, v: NodeId) -> Result<usize> {
        self.ids
            .binary_search(&v)
            .map_err(|_| TampaError::UnknownNode(v))
    }

    /// `d*(i, j)`; infinite when `j` is unreachable.
    pub fn distance(&self, i: NodeId, j: NodeId) -> Result<f64> {
        let (a, b) = (self.idx(i)?, self.idx(j)?);
        Ok(self.to_target[b][a])
    }

    /// `p*(i, j)`, or `None` if `j` is unreachable from `i`.
    pub fn route(&self, i: NodeId, j: NodeId) -> Result<Option<Route>> {
        let (a, b) = (self.idx(i)?, self.idx(j)?);
        let dt = &self.to_target[b];
        if !dt[a].is_finite() {
            return Ok(None);
        }
        let mut nodes = vec![i];
        let mut dist = 0.0;
        let mut x = a;
        while x != b {
            let tol = 1e-9 * dt[x].max(1.0);
            // succ lists are built from ascending edges, so the first match is
            // the smallest node id.
            let &(y, w) = self.succ[x]
                .iter()
                .find(|&&(y, w)| (w + dt[y] - dt[x]).abs() <= tol)
                .expect("finite distance implies an optimal successor");
            dist += w;
            nodes.push(self.ids[y]);
            x = y;
        }
        Ok(Some(Route { nodes, dist }))
    }
}

fn dijkstra(pred: &[Vec<(usize, f64)>], target: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; pred.len()];
    let mut heap = BinaryHeap::new();
    dist[target] = 0.0;
    heap.push(Frontier {
        dist: 0.0,
        idx: target,
    });
    while let Some(Frontier { dist: d, idx }) = heap.pop() {
        if d > dist[idx] {
            continue;
        }
        for &(p, w) in &pred[idx] {
            let nd = d + w;
            if nd < dist[p] {
                dist[p] = nd;
                heap.push(Frontier { dist: nd, idx: p });
            }
        }
    }
    dist
}

/// Time-weighted shortest path from `i` to `j`. `Ok(None)` means unreachable.
pub fn shortest_path(
    graph: &PatrolGraph,
    weights: &EdgeWeighting,
    i: NodeId,
    j: NodeId,
) -> Result<Option<Route>> {
    if !graph.contains(i) {
        return Err(TampaError::UnknownNode(i));
    }
    if !graph.contains(j) {
        return Err(TampaError::UnknownNode(j));
    }
    ShortestPaths::compute(graph, weights)?.route(i, j)
}

/// Where the patroller is when a shift is detected mid-edge.
#[derive(Clone, Copy, Debug)]
pub struct CommuteContext {
    pub origin: NodeId,
    pub dest: NodeId,
    /// Current minute `t`.
    pub now: u32,
    /// Minute the patroller left `origin`.
    pub depart: u32,
    /// Scheduled arrival at `dest`.
    pub eta: u32,
    pub tau: u32,
}

#[derive(Clone, Debug)]
pub struct Adaptation {
    pub graph: PatrolGraph,
    pub patroller_node: NodeId,
    /// Splits in the order they were applied.
    pub splits: Vec<EdgeSplit>,
}

/// Splits the commuting edge at the elapsed-time ratio and the neighbouring
/// edges of both endpoints at the remaining-slot ratios.
///
/// `travel_times` must cover the edges of `graph` and hold the travel times
/// at the departure minute; they set the neighbour ratios. Neighbour splits
/// whose ratio falls outside the open unit interval are skipped. When the
/// commuting ratio is degenerate the patroller is placed on the nearer
/// endpoint and the commuting edge is left intact.
pub fn adapt_graph_on_commute(
    graph: &PatrolGraph,
    travel_times: &EdgeWeighting,
    ctx: CommuteContext,
) -> Result<Adaptation> {
    let CommuteContext {
        origin,
        dest,
        now,
        depart,
        eta,
        tau,
    } = ctx;
    if origin == dest || !(depart < now && now < eta) {
        return Err(TampaError::InvalidState(format!(
            "not commuting: origin {origin}, dest {dest}, depart {depart}, now {now}, eta {eta}"
        )));
    }
    if !graph.has_edge(origin, dest) {
        return Err(TampaError::MissingEdge(origin, dest));
    }

    let origin_side: Vec<NodeId> = graph
        .successors(origin)?
        .iter()
        .copied()
        .filter(|&u| u != dest)
        .collect();
    let dest_side: Vec<NodeId> = graph
        .successors(dest)?
        .iter()
        .copied()
        .filter(|&u| u != origin)
        .collect();

    let elapsed = f64::from(now - depart);
    let remaining = f64::from(eta - now);
    let tau = f64::from(tau);
    let mut neighbour_splits = Vec::new();
    for &u in &origin_side {
        let mu = travel_time(travel_times, origin, u)?;
        neighbour_splits.push((origin, u, (tau - elapsed) / mu));
    }
    for &u in &dest_side {
        let mu = travel_time(travel_times, dest, u)?;
        neighbour_splits.push((dest, u, (tau - remaining) / mu));
    }

    let mut g = graph.clone();
    let mut splits = Vec::new();
    let ratio = elapsed / (elapsed + remaining);
    let patroller_node = if ratio <= SPLIT_EPSILON {
        origin
    } else if ratio >= 1.0 - SPLIT_EPSILON {
        dest
    } else {
        let (next, split) = g.split_edge(origin, dest, ratio)?;
        g = next;
        splits.push(split);
        split.node
    };

    for (o, d, ratio) in neighbour_splits {
        if ratio > SPLIT_EPSILON && ratio < 1.0 - SPLIT_EPSILON {
            let (next, split) = g.split_edge(o, d, ratio)?;
            g = next;
            splits.push(split);
        }
    }

    Ok(Adaptation {
        graph: g,
        patroller_node,
        splits,
    })
}

fn travel_time(weights: &EdgeWeighting, from: NodeId, to: NodeId) -> Result<f64> {
    weights
        .get((from, to))
        .filter(|w| *w > 0.0)
        .ok_or_else(|| TampaError::InvalidState(format!("no travel time for edge ({from}, {to})")))
}
