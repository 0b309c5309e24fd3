//! Ground truth shared by every strategy run under one seed.
//!
//! Travel times and complaint counts are generated on the scenario's edges.
//! Edges created by splits read their values through a lineage back to the
//! original edge: travel times scale by the length fraction and counts are
//! partitioned between sibling sub-edges by keyed binomial draws.

use std::collections::BTreeMap;

use rand_distr::{Binomial, Distribution};

use crate::error::{Result, TampaError};
use crate::graph::{Edge, EdgeSplit, EdgeWeighting, NodeId, PatrolGraph};
use crate::rng::{self, edge_key, TAG_COMPLAINTS, TAG_THINNING};
use crate::scenario::Scenario;
use crate::traffic::{generate_complaints, generate_travel_times, TravelTimeField};

#[derive(Clone, Copy, Debug)]
struct Derivation {
    parent: Edge,
    node: NodeId,
    /// Whether this is the child that starts where the parent starts.
    first: bool,
    /// Share of the parent's counts given to the first child.
    first_share: f64,
    root: Edge,
    /// Fraction of the root edge this edge spans.
    scale: f64,
}

#[derive(Clone, Debug)]
pub struct Observation {
    pub t: u32,
    pub counts: BTreeMap<Edge, usize>,
    pub travel: EdgeWeighting,
}

#[derive(Clone, Debug)]
pub struct Environment {
    seed: u64,
    field: TravelTimeField,
    root_counts: Vec<BTreeMap<Edge, usize>>,
    lineage: BTreeMap<Edge, Derivation>,
}

impl Environment {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self> {
        let field = generate_travel_times(&scenario.mtt, &scenario.traffic, scenario.horizon, seed)?;
        let root_counts = (0..=scenario.horizon)
            .map(|t| {
                let mut rng = rng::stream(seed, &[TAG_COMPLAINTS, u64::from(t)]);
                generate_complaints(&scenario.complaints, t, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Environment {
            seed,
            field,
            root_counts,
            lineage: BTreeMap::new(),
        })
    }

    pub fn horizon(&self) -> u32 {
        self.field.horizon()
    }

    pub fn apply_split(&mut self, split: &EdgeSplit) {
        let parts = split.parts();
        for &(parent, child, fraction) in &parts {
            let first_share = parts
                .iter()
                .find(|(p, c, _)| *p == parent && c.0 == parent.0)
                .map(|&(_, _, f)| f)
                .expect("each parent has a child sharing its origin");
            let (root, scale) = match self.lineage.get(&parent) {
                Some(d) => (d.root, d.scale * fraction),
                None => (parent, fraction),
            };
            self.lineage.insert(
                child,
                Derivation {
                    parent,
                    node: split.node,
                    first: child.0 == parent.0,
                    first_share,
                    root,
                    scale,
                },
            );
        }
    }

    fn out_of_range(&self, t: u32) -> TampaError {
        TampaError::WindowOutOfRange {
            start: t,
            end: t,
            horizon: self.horizon(),
        }
    }

    /// Realized travel time of `e` for a departure at minute `t`.
    pub fn travel_time(&self, e: Edge, t: u32) -> Result<f64> {
        let (root, scale) = self.lineage.get(&e).map_or((e, 1.0), |d| (d.root, d.scale));
        let mu = self.field.get(root, t).ok_or_else(|| {
            if t > self.horizon() {
                self.out_of_range(t)
            } else {
                TampaError::MissingEdge(e.0, e.1)
            }
        })?;
        Ok(scale * mu)
    }

    /// Complaints on `e` during minute `t`.
    pub fn count(&self, e: Edge, t: u32) -> Result<usize> {
        match self.lineage.get(&e) {
            None => self
                .root_counts
                .get(t as usize)
                .ok_or_else(|| self.out_of_range(t))?
                .get(&e)
                .copied()
                .ok_or(TampaError::MissingEdge(e.0, e.1)),
            Some(d) => {
                let total = self.count(d.parent, t)?;
                let mut rng = rng::stream(
                    self.seed,
                    &[TAG_THINNING, u64::from(t), edge_key(d.parent), u64::from(d.node.0)],
                );
                let first = Binomial::new(total as u64, d.first_share)
                    .map_err(|err| TampaError::InvalidState(err.to_string()))?
                    .sample(&mut rng) as usize;
                Ok(if d.first { first } else { total - first })
            }
        }
    }

    pub fn travel_times(&self, graph: &PatrolGraph, t: u32) -> Result<EdgeWeighting> {
        graph
            .edges()
            .map(|e| self.travel_time(e, t).map(|mu| (e, mu)))
            .collect::<Result<BTreeMap<_, _>>>()
            .map(EdgeWeighting::from_map)
    }

    pub fn observe(&self, graph: &PatrolGraph, t: u32) -> Result<Observation> {
        let counts = graph
            .edges()
            .map(|e| self.count(e, t).map(|c| (e, c)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Observation {
            t,
            counts,
            travel: self.travel_times(graph, t)?,
        })
    }
}
