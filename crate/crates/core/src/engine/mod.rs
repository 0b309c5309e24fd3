//! Closed-loop patrol simulation.
//!
//! Every minute the environment reveals the complaint count and travel time
//! of every edge. The adaptive strategy folds the counts into its estimators
//! and shift monitor; when the monitor fires it restarts planning, splitting
//! the edge under the patroller if it is mid-commute. The stationary and
//! random strategies see the same world but never learn or adapt.

pub mod environment;
pub mod metrics;
pub mod report;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::complaints::{ComplaintPmf, EmpiricalEstimator};
use crate::detector::{DivergenceReport, ShiftConfig, ShiftMonitor};
use crate::error::{Result, TampaError};
use crate::graph::{adapt_graph_on_commute, CommuteContext, Edge, EdgeWeighting, NodeId, PatrolGraph};
use crate::planner::{MdpInstance, PlannerConfig, PlanningWindow};
use crate::rng::{self, TAG_RANDOM_POLICY};
use crate::scenario::Scenario;
use crate::traffic::{persistence_predictor, PersistencePredictor, Predictor};

pub use environment::{Environment, Observation};
pub use metrics::{
    global_cost, realized_utility, HopDistances, Record, RecordKind, RunMetrics, SplitRecord,
    Trajectory, Transition, VisitPeriod,
};
pub use report::{compare_strategies, paired_t_test, ComparisonReport, Execution, PairedTest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Tampa,
    Stationary,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Tampa, Strategy::Stationary, Strategy::Random];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Tampa => "tampa",
            Strategy::Stationary => "stationary",
            Strategy::Random => "random",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = TampaError;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| TampaError::validation("strategy", format!("unknown strategy '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    /// Exact generator pmf at minute 0.
    #[default]
    Generator,
    Uniform,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    #[default]
    Persistence,
    /// Reads the true travel times at each slot start.
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default)]
    pub prior: PriorKind,
    #[serde(default = "default_prior_weight")]
    pub prior_weight: u32,
}

fn default_prior_weight() -> u32 {
    50
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            prior: PriorKind::default(),
            prior_weight: default_prior_weight(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub detector: ShiftConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub predictor: PredictorKind,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.planner.validate()?;
        self.detector.validate()?;
        if self.estimator.prior_weight == 0 {
            return Err(TampaError::validation("estimator.prior_weight", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub strategy: Strategy,
    pub seed: u64,
    pub trajectory: Trajectory,
    pub metrics: RunMetrics,
    /// Monitor reports that fired.
    pub detections: Vec<DivergenceReport>,
}

#[derive(Clone, Debug)]
enum Status {
    /// At a node with a decision due.
    Idle(NodeId),
    /// At an intermediate node of a multi-hop move.
    Relay {
        node: NodeId,
        clock: f64,
        remaining: VecDeque<NodeId>,
        target: NodeId,
    },
    Inspecting {
        node: NodeId,
        until: u32,
        utility: f64,
    },
    Commuting {
        origin: NodeId,
        dest: NodeId,
        depart: u32,
        eta: u32,
        clock: f64,
        travel: f64,
        utility: f64,
        remaining: VecDeque<NodeId>,
        target: NodeId,
    },
    /// Waiting for the next decision at `until`; its record is written.
    Holding { node: NodeId, until: u32 },
    /// No planning window fits before the horizon.
    Done,
}

struct Simulation<'s> {
    scenario: &'s Scenario,
    strategy: Strategy,
    predictor_kind: PredictorKind,
    lambda: f64,
    zeta: f64,
    tau: u32,
    slots: usize,
    env: Environment,
    graph: PatrolGraph,
    estimators: BTreeMap<Edge, EmpiricalEstimator>,
    monitor: Option<ShiftMonitor>,
    predictor: PersistencePredictor,
    policy_rng: ChaCha8Rng,
    status: Status,
    trajectory: Trajectory,
    trigger_times: Vec<u32>,
    detections: Vec<DivergenceReport>,
    splits: Vec<SplitRecord>,
}

/// Initial complaint estimates for every scenario edge.
pub fn initial_priors(scenario: &Scenario, kind: PriorKind) -> BTreeMap<Edge, ComplaintPmf> {
    let cap = scenario.complaints.cap;
    let mut by_weight: Vec<(f64, ComplaintPmf)> = Vec::new();
    scenario
        .graph
        .edges()
        .map(|e| {
            let pmf = match kind {
                PriorKind::Uniform => ComplaintPmf::uniform(0, cap, cap),
                PriorKind::Generator => {
                    let w = scenario.complaints.weights_at(0).get(&e).copied().unwrap_or(0.0);
                    match by_weight.iter().find(|(k, _)| *k == w) {
                        Some((_, p)) => p.clone(),
                        None => {
                            let p = scenario.complaints.pmf(e, 0);
                            by_weight.push((w, p.clone()));
                            p
                        }
                    }
                }
            };
            (e, pmf)
        })
        .collect()
}

impl<'s> Simulation<'s> {
    fn new(scenario: &'s Scenario, config: &RunConfig, strategy: Strategy, seed: u64) -> Result<Self> {
        config.validate()?;
        let env = Environment::new(scenario, seed)?;
        let estimators = initial_priors(scenario, config.estimator.prior)
            .into_iter()
            .map(|(e, p)| EmpiricalEstimator::new(p, config.estimator.prior_weight).map(|est| (e, est)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let monitor = (strategy == Strategy::Tampa).then(|| ShiftMonitor::new(config.detector, &estimators, 0));
        let zeta = match config.planner.zeta {
            Some(z) => z,
            None => scenario
                .graph
                .median_edge_length()
                .ok_or_else(|| TampaError::validation("planner.zeta", "graph has no edges to take a median of"))?,
        };
        let mut trajectory = Trajectory::default();
        trajectory.push(Record {
            t: 0,
            node: scenario.start,
            kind: RecordKind::Start,
            action: scenario.start,
            utility: 0.0,
            trigger: false,
        })?;
        Ok(Simulation {
            scenario,
            strategy,
            predictor_kind: config.predictor,
            lambda: config.planner.lambda,
            zeta,
            tau: config.planner.tau.unwrap_or(scenario.tau),
            slots: config.planner.num_slots,
            env,
            graph: scenario.graph.clone(),
            estimators,
            monitor,
            predictor: persistence_predictor(&BTreeMap::new(), &scenario.mtt),
            policy_rng: rng::stream(seed, &[TAG_RANDOM_POLICY]),
            status: Status::Idle(scenario.start),
            trajectory,
            trigger_times: Vec::new(),
            detections: Vec::new(),
            splits: Vec::new(),
        })
    }

    fn learning(&self) -> bool {
        self.strategy == Strategy::Tampa
    }

    fn run(mut self, seed: u64) -> Result<RunOutcome> {
        let horizon = self.scenario.horizon;
        for t in 0..=horizon {
            let obs = self.env.observe(&self.graph, t)?;
            for (&e, &mu) in obs.travel.as_map() {
                self.predictor.observe(e, mu);
            }
            if self.learning() {
                for (e, &c) in &obs.counts {
                    self.estimators
                        .get_mut(e)
                        .ok_or(TampaError::EdgeSetMismatch)?
                        .update(c);
                }
                if let Some(m) = self.monitor.as_mut() {
                    m.observe(&obs.counts)?;
                }
            }
            self.advance(t)?;
            let report = match self.monitor.as_mut() {
                Some(m) if t < horizon => m.check(t)?,
                _ => None,
            };
            match report {
                Some(r) if r.fired => self.on_shift(t, r, &obs)?,
                _ => self.proceed(t, &obs)?,
            }
        }

        let period_starts: Vec<u32> = self.scenario.complaints.shifts.iter().map(|s| s.t).collect();
        let metrics = RunMetrics::collect(
            &self.trajectory,
            horizon,
            &period_starts,
            self.trigger_times,
            self.splits,
            self.monitor.as_ref().map_or(0, ShiftMonitor::calls),
            self.graph.node_count(),
        );
        Ok(RunOutcome {
            strategy: self.strategy,
            seed,
            trajectory: self.trajectory,
            metrics,
            detections: self.detections,
        })
    }

    /// Completes whatever ends at minute `t`.
    fn advance(&mut self, t: u32) -> Result<()> {
        match &mut self.status {
            Status::Inspecting { node, until, utility } if *until == t => {
                let (node, utility) = (*node, *utility);
                self.trajectory.push(Record {
                    t,
                    node,
                    kind: RecordKind::Inspect,
                    action: node,
                    utility,
                    trigger: false,
                })?;
                self.status = Status::Idle(node);
            }
            Status::Commuting {
                dest,
                eta,
                clock,
                utility,
                remaining,
                target,
                ..
            } if *eta == t => {
                let record = Record {
                    t,
                    node: *dest,
                    kind: RecordKind::Arrive,
                    action: *target,
                    utility: *utility,
                    trigger: false,
                };
                self.status = if remaining.is_empty() {
                    Status::Idle(*dest)
                } else {
                    Status::Relay {
                        node: *dest,
                        clock: *clock,
                        remaining: std::mem::take(remaining),
                        target: *target,
                    }
                };
                self.trajectory.push(record)?;
            }
            Status::Holding { node, until } if *until == t => {
                self.status = Status::Idle(*node);
            }
            _ => {}
        }
        Ok(())
    }

    /// Normal progress at minute `t`: decide when idle, keep moving when
    /// passing through a node.
    fn proceed(&mut self, t: u32, obs: &Observation) -> Result<()> {
        match std::mem::replace(&mut self.status, Status::Done) {
            Status::Idle(v) => self.decide(t, v, obs),
            Status::Relay {
                node,
                clock,
                remaining,
                target,
            } => self.start_hop(t, node, clock, remaining, target, obs),
            other => {
                self.status = other;
                Ok(())
            }
        }
    }

    fn predict(&self, window: &PlanningWindow) -> Result<Vec<EdgeWeighting>> {
        match self.predictor_kind {
            PredictorKind::Persistence => self.predictor.predict(&self.graph, window),
            PredictorKind::Oracle => (0..window.slots)
                .map(|k| self.env.travel_times(&self.graph, window.slot_time(k)))
                .collect(),
        }
    }

    /// Opens a planning window at `t` and starts its first action.
    fn decide(&mut self, t: u32, v: NodeId, obs: &Observation) -> Result<()> {
        if let Some(m) = self.monitor.as_mut() {
            m.reset(&self.estimators, t);
        }
        let Some(window) = PlanningWindow::fitted(t, self.tau, self.slots, self.scenario.horizon) else {
            self.status = Status::Done;
            return Ok(());
        };
        let mut weights = self.predict(&window)?;
        if self.strategy == Strategy::Random {
            weights.truncate(1);
        }
        let pmfs: BTreeMap<Edge, ComplaintPmf> =
            self.estimators.iter().map(|(&e, est)| (e, est.pmf().clone())).collect();
        let inst = MdpInstance::new(&self.graph, v, self.tau, &weights, &pmfs, self.lambda, self.zeta)?;
        let action = match self.strategy {
            Strategy::Random => {
                let choices: Vec<NodeId> = inst.action_set(v, 0)?.into_iter().collect();
                choices[self.policy_rng.random_range(0..choices.len())]
            }
            Strategy::Tampa | Strategy::Stationary => inst.solve()?.first_action,
        };
        if action == v {
            let utility = realized_utility(
                &self.graph,
                Transition::Inspect(v),
                &obs.counts,
                &obs.travel,
                self.lambda,
                self.zeta,
            )?;
            self.status = Status::Inspecting {
                node: v,
                until: t + self.tau,
                utility,
            };
            Ok(())
        } else {
            let route = inst.route(v, action, 0)?;
            let remaining: VecDeque<NodeId> = route.nodes[1..].iter().copied().collect();
            self.start_hop(t, v, f64::from(t), remaining, action, obs)
        }
    }

    fn start_hop(
        &mut self,
        t: u32,
        from: NodeId,
        clock: f64,
        mut remaining: VecDeque<NodeId>,
        target: NodeId,
        obs: &Observation,
    ) -> Result<()> {
        let to = remaining
            .pop_front()
            .ok_or_else(|| TampaError::InvalidState("empty route".into()))?;
        let travel = obs.travel.get((from, to)).ok_or(TampaError::MissingEdge(from, to))?;
        let utility = realized_utility(
            &self.graph,
            Transition::Traverse(from, to),
            &obs.counts,
            &obs.travel,
            self.lambda,
            self.zeta,
        )?;
        let clock = clock + travel;
        let eta = (clock.round() as u32).max(t + 1);
        self.status = Status::Commuting {
            origin: from,
            dest: to,
            depart: t,
            eta,
            clock,
            travel,
            utility,
            remaining,
            target,
        };
        Ok(())
    }

    fn on_shift(&mut self, t: u32, report: DivergenceReport, obs: &Observation) -> Result<()> {
        self.trigger_times.push(t);
        // edges past the threshold restart from the post-change counts
        if let Some(m) = self.monitor.as_ref() {
            for d in report.distances.iter().filter(|d| d.distance >= report.q) {
                let e = (d.from, d.to);
                if let Some((recent, n)) = m.recent(e) {
                    self.estimators.get_mut(&e).ok_or(TampaError::EdgeSetMismatch)?.restart(recent, n)?;
                }
            }
        }
        self.detections.push(report);
        match std::mem::replace(&mut self.status, Status::Done) {
            Status::Idle(v) | Status::Relay { node: v, .. } => {
                if let Some(last) = self.trajectory.records.last_mut() {
                    last.trigger = true;
                }
                self.decide(t, v, obs)
            }
            Status::Inspecting { node, utility, .. } => {
                self.trajectory.push(Record {
                    t: t + 1,
                    node,
                    kind: RecordKind::Inspect,
                    action: node,
                    utility,
                    trigger: true,
                })?;
                self.hold(t, node);
                Ok(())
            }
            Status::Commuting {
                origin,
                dest,
                depart,
                eta,
                travel,
                target,
                ..
            } => self.split_commute(t, origin, dest, depart, eta, travel, target),
            other @ (Status::Holding { .. } | Status::Done) => {
                self.status = other;
                if let Some(m) = self.monitor.as_mut() {
                    m.reset(&self.estimators, t);
                }
                Ok(())
            }
        }
    }

    fn hold(&mut self, t: u32, node: NodeId) {
        self.status = Status::Holding { node, until: t + 1 };
        if let Some(m) = self.monitor.as_mut() {
            m.reset(&self.estimators, t);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn split_commute(
        &mut self,
        t: u32,
        origin: NodeId,
        dest: NodeId,
        depart: u32,
        eta: u32,
        travel: f64,
        target: NodeId,
    ) -> Result<()> {
        let travel_at_departure = self.env.travel_times(&self.graph, depart)?;
        let adaptation = adapt_graph_on_commute(
            &self.graph,
            &travel_at_departure,
            CommuteContext {
                origin,
                dest,
                now: t,
                depart,
                eta,
                tau: self.tau,
            },
        )?;
        for split in &adaptation.splits {
            split.apply(&mut self.estimators, |est, f| {
                est.thinned(f).expect("split fractions lie inside the unit interval")
            });
            self.env.apply_split(split);
            self.predictor.apply_split(split);
            self.splits.push(SplitRecord {
                t,
                node: split.node,
                origin: split.origin,
                dest: split.dest,
                ratio: split.ratio,
            });
        }
        self.graph = adaptation.graph;
        let node = adaptation.patroller_node;

        let elapsed = f64::from(t - depart) / f64::from(eta - depart);
        let credited = if node == origin {
            0.0
        } else {
            self.env.count((origin, node), depart)? as f64
        };
        let utility = -self.lambda * elapsed * travel + (1.0 - self.lambda) * credited;
        self.trajectory.push(Record {
            t: t + 1,
            node,
            kind: RecordKind::Split,
            action: target,
            utility,
            trigger: true,
        })?;
        self.hold(t, node);
        Ok(())
    }
}

pub fn run(scenario: &Scenario, config: &RunConfig, strategy: Strategy, seed: u64) -> Result<RunOutcome> {
    Simulation::new(scenario, config, strategy, seed)?.run(seed)
}

pub fn run_tampa(scenario: &Scenario, config: &RunConfig, seed: u64) -> Result<RunOutcome> {
    run(scenario, config, Strategy::Tampa, seed)
}

pub fn run_stationary(scenario: &Scenario, config: &RunConfig, seed: u64) -> Result<RunOutcome> {
    run(scenario, config, Strategy::Stationary, seed)
}

pub fn run_random(scenario: &Scenario, config: &RunConfig, seed: u64) -> Result<RunOutcome> {
    run(scenario, config, Strategy::Random, seed)
}
