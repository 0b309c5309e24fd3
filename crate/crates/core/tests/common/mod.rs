#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use tampa::complaints::ComplaintPmf;
use tampa::graph::{Edge, EdgeWeighting, NodeId, PatrolGraph, Point};

pub const C_MAX: usize = 30;

/// Connected random graph on nodes `1..=n`: a random spanning tree plus
/// extra pairs. Integral graphs use small integer lengths, the others use
/// Euclidean lengths.
pub fn random_graph<R: Rng>(rng: &mut R, n: u32, integral: bool) -> PatrolGraph {
    let mut g = PatrolGraph::new();
    let mut at = BTreeMap::new();
    for v in 1..=n {
        let p = if integral {
            Point::new(f64::from(rng.random_range(0..50)), f64::from(rng.random_range(0..50)))
        } else {
            Point::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0))
        };
        g.add_node(NodeId(v), p).unwrap();
        at.insert(v, p);
    }
    let length = |rng: &mut R, a: u32, b: u32| {
        if integral {
            f64::from(rng.random_range(1..=10))
        } else {
            at[&a].distance(at[&b]).max(1e-3)
        }
    };
    for v in 2..=n {
        let u = rng.random_range(1..v);
        let l = length(rng, u, v);
        g.add_edge_pair(NodeId(u), NodeId(v), l).unwrap();
    }
    for a in 1..=n {
        for b in a + 1..=n {
            if !g.has_edge(NodeId(a), NodeId(b)) && rng.random_bool(0.35) {
                let l = length(rng, a, b);
                g.add_edge_pair(NodeId(a), NodeId(b), l).unwrap();
            }
        }
    }
    g
}

pub fn random_weights<R: Rng>(rng: &mut R, g: &PatrolGraph, integral: bool) -> EdgeWeighting {
    EdgeWeighting::from_map(
        g.edges()
            .map(|e| {
                let w = if integral {
                    f64::from(rng.random_range(1..=6))
                } else {
                    rng.random_range(0.5..6.0)
                };
                (e, w)
            })
            .collect(),
    )
}

pub fn random_pmf<R: Rng>(rng: &mut R, integral: bool) -> ComplaintPmf {
    if integral {
        ComplaintPmf::delta(rng.random_range(0..=5), C_MAX)
    } else {
        let hi = rng.random_range(1..=C_MAX);
        let w: Vec<f64> = (0..=C_MAX)
            .map(|n| if n <= hi { rng.random::<f64>() } else { 0.0 })
            .collect();
        ComplaintPmf::from_weights(&w).unwrap()
    }
}

pub fn random_pmfs<R: Rng>(rng: &mut R, g: &PatrolGraph, integral: bool) -> BTreeMap<Edge, ComplaintPmf> {
    g.edges().map(|e| (e, random_pmf(rng, integral))).collect()
}

/// All-pairs shortest distances by Floyd-Warshall.
#[allow(clippy::needless_range_loop)]
pub fn floyd(g: &PatrolGraph, w: &EdgeWeighting) -> BTreeMap<(NodeId, NodeId), f64> {
    let ids: Vec<NodeId> = g.nodes().collect();
    let n = ids.len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for i in 0..n {
        d[i][i] = 0.0;
    }
    for (i, &a) in ids.iter().enumerate() {
        for (j, &b) in ids.iter().enumerate() {
            if let Some(x) = w.get((a, b)) {
                d[i][j] = d[i][j].min(x);
            }
        }
    }
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][m] + d[m][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for (i, &a) in ids.iter().enumerate() {
        for (j, &b) in ids.iter().enumerate() {
            out.insert((a, b), d[i][j]);
        }
    }
    out
}

/// Every simple path from `from` to `to` with its forward-summed weight,
/// in lexicographic order of node sequences.
pub fn simple_paths(g: &PatrolGraph, w: &EdgeWeighting, from: NodeId, to: NodeId) -> Vec<(Vec<NodeId>, f64)> {
    fn walk(
        g: &PatrolGraph,
        w: &EdgeWeighting,
        to: NodeId,
        path: &mut Vec<NodeId>,
        len: f64,
        out: &mut Vec<(Vec<NodeId>, f64)>,
    ) {
        let at = *path.last().unwrap();
        if at == to {
            out.push((path.clone(), len));
            return;
        }
        for &u in g.successors(at).unwrap() {
            if !path.contains(&u) {
                path.push(u);
                walk(g, w, to, path, len + w.get((at, u)).unwrap(), out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(g, w, to, &mut vec![from], 0.0, &mut out);
    out
}

/// Lexicographically smallest shortest path.
pub fn oracle_route(g: &PatrolGraph, w: &EdgeWeighting, from: NodeId, to: NodeId) -> Option<(Vec<NodeId>, f64)> {
    let paths = simple_paths(g, w, from, to);
    let best = paths.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    paths
        .into_iter()
        .find(|(_, l)| (l - best).abs() <= 1e-9 * best.max(1.0))
}

pub fn mean(p: &ComplaintPmf) -> f64 {
    p.probs().iter().enumerate().map(|(n, x)| n as f64 * x).sum()
}

/// Independent statement of one window's data and rewards.
pub struct Window<'a> {
    pub graph: &'a PatrolGraph,
    pub start: NodeId,
    pub tau: u32,
    pub slots: &'a [EdgeWeighting],
    pub pmfs: &'a BTreeMap<Edge, ComplaintPmf>,
    pub lambda: f64,
    pub zeta: f64,
}

pub struct Step {
    pub route: Vec<NodeId>,
    pub travel: f64,
    pub complaints: f64,
    pub reward: f64,
}

impl Window<'_> {
    pub fn k(&self) -> usize {
        self.slots.len()
    }

    pub fn actions(&self, s: NodeId, k: usize) -> Vec<NodeId> {
        let d = floyd(self.graph, &self.slots[k]);
        self.graph
            .nodes()
            .filter(|&a| d[&(s, a)] <= f64::from(self.tau) + 1e-9)
            .collect()
    }

    pub fn step(&self, s: NodeId, a: NodeId, k: usize) -> Step {
        let slot = |e: Edge| (k + 1) as f64 * f64::from(self.tau) * mean(&self.pmfs[&e]);
        let (route, dist) = oracle_route(self.graph, &self.slots[k], s, a).unwrap();
        let (travel, complaints) = if s == a {
            let mut c = 0.0;
            for &u in self.graph.successors(s).unwrap() {
                let l = self.graph.length(s, u).unwrap();
                c += slot((s, u)) * (self.zeta / l).min(1.0);
            }
            (0.0, c)
        } else {
            let c = route.windows(2).map(|p| slot((p[0], p[1]))).sum();
            (dist, c)
        };
        Step {
            route,
            travel,
            complaints,
            reward: -self.lambda * travel + (1.0 - self.lambda) * complaints,
        }
    }

    /// Enumerates every feasible action sequence in lexicographic order and
    /// keeps the first maximiser of the right-folded value.
    pub fn brute_force(&self) -> (f64, Vec<NodeId>) {
        let mut best: Option<(f64, Vec<NodeId>)> = None;
        let mut seq = Vec::new();
        self.enumerate(self.start, 0, &mut seq, &mut best);
        best.unwrap()
    }

    fn enumerate(&self, s: NodeId, k: usize, seq: &mut Vec<NodeId>, best: &mut Option<(f64, Vec<NodeId>)>) {
        if k == self.k() {
            let v = self.value_of(seq);
            if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                *best = Some((v, seq.clone()));
            }
            return;
        }
        for a in self.actions(s, k) {
            seq.push(a);
            self.enumerate(a, k + 1, seq, best);
            seq.pop();
        }
    }

    /// `R_0 + (R_1 + (... + (R_{K-1} + 0)))`.
    pub fn value_of(&self, seq: &[NodeId]) -> f64 {
        let mut states = vec![self.start];
        states.extend_from_slice(seq);
        let mut v = 0.0;
        for k in (0..seq.len()).rev() {
            v += self.step(states[k], states[k + 1], k).reward;
        }
        v
    }

    /// Largest number of edges one step's complaint term sums over.
    pub fn e_max(&self) -> usize {
        let mut best = 0;
        for k in 0..self.k() {
            for s in self.graph.nodes() {
                for a in self.actions(s, k) {
                    let n = if a == s {
                        self.graph.successors(s).unwrap().len()
                    } else {
                        self.step(s, a, k).route.len() - 1
                    };
                    best = best.max(n);
                }
            }
        }
        best
    }
}

/// Owned data of one random window.
pub struct Instance {
    pub graph: PatrolGraph,
    pub start: NodeId,
    pub tau: u32,
    pub slots: Vec<EdgeWeighting>,
    pub pmfs: BTreeMap<Edge, ComplaintPmf>,
    pub lambda: f64,
    pub zeta: f64,
}

impl Instance {
    pub fn random<R: Rng>(rng: &mut R, max_nodes: u32, max_slots: usize, integral: bool) -> Self {
        let n = rng.random_range(1..=max_nodes);
        let graph = random_graph(rng, n, integral);
        let k = rng.random_range(1..=max_slots);
        let slots = (0..k).map(|_| random_weights(rng, &graph, integral)).collect();
        let pmfs = random_pmfs(rng, &graph, integral);
        let (lambda, zeta) = if integral {
            (
                [0.0, 0.25, 0.5, 0.75, 1.0][rng.random_range(0..5)],
                [1.0, 2.0, 3.0, 5.0, 8.0, 20.0][rng.random_range(0..6)],
            )
        } else {
            (rng.random_range(0.0..=1.0), rng.random_range(1.0..100.0))
        };
        Instance {
            start: NodeId(rng.random_range(1..=n)),
            tau: rng.random_range(3..=8),
            graph,
            slots,
            pmfs,
            lambda,
            zeta,
        }
    }

    pub fn window(&self) -> Window<'_> {
        Window {
            graph: &self.graph,
            start: self.start,
            tau: self.tau,
            slots: &self.slots,
            pmfs: &self.pmfs,
            lambda: self.lambda,
            zeta: self.zeta,
        }
    }

    pub fn mdp(&self) -> tampa::planner::MdpInstance<'_> {
        tampa::planner::MdpInstance::new(
            &self.graph,
            self.start,
            self.tau,
            &self.slots,
            &self.pmfs,
            self.lambda,
            self.zeta,
        )
        .unwrap()
    }
}

/// Hop distances from `center`; nodes added by splits take the mean of their
/// endpoints.
pub fn hops_from(g: &PatrolGraph, center: NodeId) -> BTreeMap<NodeId, f64> {
    let mut hops = BTreeMap::from([(center, 0.0)]);
    let mut frontier = vec![center];
    let mut h = 0.0;
    while !frontier.is_empty() {
        h += 1.0;
        let mut next = Vec::new();
        for v in frontier {
            for &u in g.successors(v).unwrap() {
                if let std::collections::btree_map::Entry::Vacant(slot) = hops.entry(u) {
                    slot.insert(h);
                    next.push(u);
                }
            }
        }
        frontier = next;
    }
    hops
}
