//! Multi-seed strategy comparison.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::metrics::HopDistances;
use super::{run, RunConfig, RunOutcome, Strategy};
use crate::error::{Result, TampaError};
use crate::graph::NodeId;
use crate::parallel;
use crate::scenario::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Parallel,
    Sequential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub n: usize,
    pub mean_difference: f64,
    /// Absent when the differences have no spread.
    pub t_statistic: Option<f64>,
    /// Two-sided.
    pub p_value: f64,
}

/// Paired two-sided t-test on `a[i] - b[i]`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTest> {
    if a.len() != b.len() {
        return Err(TampaError::InvalidState(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = if n == 0 { 0.0 } else { diffs.iter().sum::<f64>() / n as f64 };
    if n < 2 {
        return Ok(PairedTest {
            n,
            mean_difference: mean,
            t_statistic: None,
            p_value: 1.0,
        });
    }
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Ok(PairedTest {
            n,
            mean_difference: mean,
            t_statistic: None,
            p_value: if mean == 0.0 { 1.0 } else { 0.0 },
        });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| TampaError::InvalidState(e.to_string()))?;
    Ok(PairedTest {
        n,
        mean_difference: mean,
        t_statistic: Some(t),
        p_value: (2.0 * dist.sf(t.abs())).min(1.0),
    })
}

/// `100 * (a - b) / |b|`; absent when `b` is zero.
pub fn improvement_pct(a: f64, b: f64) -> Option<f64> {
    (b != 0.0).then(|| 100.0 * (a - b) / b.abs())
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodInfo {
    pub start: u32,
    pub end: u32,
    /// Node whose outgoing edges carry the most complaint weight.
    pub hotspot: Option<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodVisits {
    pub start: u32,
    pub end: u32,
    pub mean_fractions: BTreeMap<NodeId, f64>,
    /// Mean share of minutes within one hop of the period's hotspot.
    pub near_hotspot: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub mean_q: f64,
    pub std_q: f64,
    pub q_by_seed: Vec<f64>,
    pub mean_triggers: f64,
    pub mean_split_nodes: f64,
    pub mean_cumulative_q: Vec<f64>,
    pub visits: Vec<PeriodVisits>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub a: Strategy,
    pub b: Strategy,
    pub improvement_pct: Option<f64>,
    pub test: PairedTest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub scenario: String,
    pub horizon: u32,
    pub seeds: Vec<u64>,
    pub periods: Vec<PeriodInfo>,
    pub strategies: Vec<StrategySummary>,
    pub pairwise: Vec<PairwiseComparison>,
}

impl ComparisonReport {
    pub fn summary(&self, s: Strategy) -> Option<&StrategySummary> {
        self.strategies.iter().find(|x| x.strategy == s)
    }

    pub fn pair(&self, a: Strategy, b: Strategy) -> Option<&PairwiseComparison> {
        self.pairwise.iter().find(|p| p.a == a && p.b == b)
    }
}

fn hotspot_at(scenario: &Scenario, t: u32) -> Option<NodeId> {
    let mut load: BTreeMap<NodeId, f64> = BTreeMap::new();
    for (e, w) in scenario.complaints.weights_at(t) {
        *load.entry(e.0).or_default() += w;
    }
    load.into_iter()
        .filter(|(_, w)| *w > 0.0)
        .fold(None, |best: Option<(NodeId, f64)>, (v, w)| match best {
            Some((_, bw)) if bw >= w => best,
            _ => Some((v, w)),
        })
        .map(|(v, _)| v)
}

/// Runs every `(strategy, seed)` pair; results come back strategy-major in
/// the given orders.
pub fn run_all(
    scenario: &Scenario,
    config: &RunConfig,
    strategies: &[Strategy],
    seeds: &[u64],
    execution: Execution,
) -> Result<Vec<RunOutcome>> {
    config.validate()?;
    let jobs: Vec<(Strategy, u64)> = strategies
        .iter()
        .flat_map(|&s| seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let work = |&(s, seed): &(Strategy, u64)| run(scenario, config, s, seed);
    let results = match execution {
        Execution::Parallel => parallel::map(&jobs, work),
        Execution::Sequential => parallel::map_seq(&jobs, work),
    };
    results.into_iter().collect()
}

pub fn compare_strategies(
    scenario: &Scenario,
    config: &RunConfig,
    strategies: &[Strategy],
    seeds: &[u64],
    execution: Execution,
) -> Result<ComparisonReport> {
    if strategies.is_empty() || seeds.is_empty() {
        return Err(TampaError::validation("seeds", "need at least one strategy and one seed"));
    }
    let outcomes = run_all(scenario, config, strategies, seeds, execution)?;
    summarize(scenario, strategies, seeds, &outcomes)
}

/// Builds the report from outcomes laid out as `run_all` returns them.
pub fn summarize(
    scenario: &Scenario,
    strategies: &[Strategy],
    seeds: &[u64],
    outcomes: &[RunOutcome],
) -> Result<ComparisonReport> {
    if outcomes.len() != strategies.len() * seeds.len() {
        return Err(TampaError::InvalidState("outcome count does not match the job grid".into()));
    }
    let first = outcomes.first().expect("non-empty grid");
    let periods: Vec<PeriodInfo> = first
        .metrics
        .visits
        .iter()
        .map(|p| PeriodInfo {
            start: p.start,
            end: p.end,
            hotspot: hotspot_at(scenario, p.start),
        })
        .collect();

    let mut summaries = Vec::new();
    for (si, &strategy) in strategies.iter().enumerate() {
        let runs = &outcomes[si * seeds.len()..(si + 1) * seeds.len()];
        let qs: Vec<f64> = runs.iter().map(|r| r.metrics.global_cost).collect();
        let len = first.metrics.cumulative_q.len();
        let mean_cumulative_q = (0..len)
            .map(|m| mean(&runs.iter().map(|r| r.metrics.cumulative_q[m]).collect::<Vec<_>>()))
            .collect();

        let mut visits = Vec::new();
        for (pi, info) in periods.iter().enumerate() {
            let mut fractions: BTreeMap<NodeId, f64> = BTreeMap::new();
            let mut near = Vec::new();
            for r in runs {
                let p = &r.metrics.visits[pi];
                for (&v, &f) in &p.fractions {
                    *fractions.entry(v).or_default() += f / runs.len() as f64;
                }
                if let Some(h) = info.hotspot {
                    let hops = HopDistances::from_center(&scenario.graph, h, &r.metrics.splits)?;
                    near.push(r.metrics.proximity(pi, &hops, 1.0));
                }
            }
            visits.push(PeriodVisits {
                start: info.start,
                end: info.end,
                mean_fractions: fractions,
                near_hotspot: info.hotspot.map(|_| mean(&near)),
            });
        }

        summaries.push(StrategySummary {
            strategy,
            mean_q: mean(&qs),
            std_q: std_dev(&qs),
            mean_triggers: mean(&runs.iter().map(|r| r.metrics.triggers as f64).collect::<Vec<_>>()),
            mean_split_nodes: mean(&runs.iter().map(|r| r.metrics.split_nodes as f64).collect::<Vec<_>>()),
            q_by_seed: qs,
            mean_cumulative_q,
            visits,
        });
    }

    let mut pairwise = Vec::new();
    for i in 0..summaries.len() {
        for j in i + 1..summaries.len() {
            let (a, b) = (&summaries[i], &summaries[j]);
            pairwise.push(PairwiseComparison {
                a: a.strategy,
                b: b.strategy,
                improvement_pct: improvement_pct(a.mean_q, b.mean_q),
                test: paired_t_test(&a.q_by_seed, &b.q_by_seed)?,
            });
        }
    }

    Ok(ComparisonReport {
        scenario: scenario.name.clone(),
        horizon: scenario.horizon,
        seeds: seeds.to_vec(),
        periods,
        strategies: summaries,
        pairwise,
    })
}
